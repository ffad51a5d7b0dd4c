use std::path::Path;
use std::process::{Command, Output};

fn diffnet(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffnet"))
        .args(args)
        .current_dir(dir)
        .env("DIFFNET_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn data_lines(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("# schema_version=1\n"), "{}", path.display());
    text.lines().skip(1).map(str::to_string).collect()
}

const SMALL: &str = "seed = 5\ntrials = 3\niters = 120\nnodes = 6\nm = 4\n\n[topology]\nkind = line\n\n[alg]\nname = drls, rdrls\n";

#[test]
fn complexity_table_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = diffnet(&["complexity", "--m", "16", "--nk", "10", "--out", "t", "--quiet"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let lines = data_lines(&dir.path().join("t/complexity.csv"));
    assert_eq!(lines[0], "alg,m,n_k,kappa,c_dcd,mults,adds,divs,sqrts");
    assert_eq!(lines.len(), 8);
    assert!(lines.contains(&"dlms,16,10,0,0,193,176,0,0".to_string()));
    assert!(lines.contains(&"drls,16,10,0,0,1232,928,16,0".to_string()));
    // Default DCD budget 2·4·16 + 16.
    assert!(lines.iter().any(|l| l.starts_with("dcd-rdrls,16,10,0,144,")));
}

#[test]
fn simulate_writes_outputs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.cfg"), SMALL).unwrap();
    for out in ["a", "b"] {
        let o = diffnet(&["simulate", "--config", "small.cfg", "--out", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["msd_net.csv", "msd_node.csv", "trials.csv", "xi_trace_rdrls.csv"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let net = data_lines(&dir.path().join("a/msd_net.csv"));
    assert_eq!(net[0], "iter,msd_db_drls,msd_db_rdrls");
    assert_eq!(net.len(), 1 + 121);
    assert!(net[1].starts_with("0,0,0"));
    let node = data_lines(&dir.path().join("a/msd_node.csv"));
    assert_eq!(node[0], "node,steady_msd_db_drls,steady_msd_db_rdrls");
    assert!(node[1].starts_with("1,") && node[6].starts_with("6,"));
}

#[test]
fn seed_and_trials_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.cfg"), SMALL).unwrap();
    let run = |out: &str, extra: &[&str]| {
        let mut args = vec!["simulate", "--config", "small.cfg", "--out", out, "--quiet"];
        args.extend_from_slice(extra);
        assert!(diffnet(&args, dir.path()).status.success());
        std::fs::read(dir.path().join(out).join("trials.csv")).unwrap()
    };
    let base = run("a", &[]);
    let reseeded = run("b", &["--seed", "6"]);
    assert_ne!(base, reseeded);
    let more = String::from_utf8(run("c", &["--trials", "5"])).unwrap();
    // Header comment, header, 5 trials per algorithm.
    assert_eq!(more.lines().count(), 2 + 10);
}

#[test]
fn theory_consumes_simulated_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "seed = 2\ntrials = 2\niters = 60\nnodes = 3\nm = 3\nregressor.mode = iid\n[topology]\nkind = line\n[alg]\nname = rdrls\n";
    std::fs::write(dir.path().join("t.cfg"), cfg).unwrap();
    let o = diffnet(&["simulate", "--config", "t.cfg", "--out", "."], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = diffnet(&["theory", "--config", "t.cfg", "--xi-trace", "xi_trace.csv", "--samples", "2000"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = data_lines(&dir.path().join("theory.csv"));
    assert_eq!(lines[0], "iter,node,msd_db,msd_net_db");
    assert_eq!(lines.len(), 1 + 61 * 3);
    assert!(lines[1].starts_with("0,1,"));
    for l in &lines[1..] {
        let v: f64 = l.split(',').nth(2).unwrap().parse().unwrap();
        assert!(v.is_finite());
    }
}

#[test]
fn spectrum_and_appendix_commands() {
    let dir = tempfile::tempdir().unwrap();
    let spec = "trials = 1\niters = 100\nnodes = 4\n[topology]\nkind = line\n[noise]\nkind = alpha\n[alg]\nname = rdrls\n";
    std::fs::write(dir.path().join("s.cfg"), spec).unwrap();
    let o = diffnet(&["spectrum", "--config", "s.cfg"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let psd = data_lines(&dir.path().join("psd.csv"));
    assert_eq!(psd[0], "freq,true_psd,node,est_psd");
    assert_eq!(psd.len(), 1 + 4 * 100);

    let app = "trials = 2\niters = 30\nnodes = 16\nm = 4\nregressor.mode = iid\n[topology]\nkind = line\n";
    std::fs::write(dir.path().join("a.cfg"), app).unwrap();
    let o = diffnet(&["check-appendix-a", "--config", "a.cfg"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pts = data_lines(&dir.path().join("appendix_a.csv"));
    assert_eq!(pts[0], "iter,node,lhs,rhs");
    assert_eq!(pts.len(), 1 + 30 * 4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| diffnet(args, dir.path()).status.code();
    assert_eq!(code(&["--help"]), Some(0));
    let o = diffnet(&["simulate", "--frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(code(&["simulate", "--config", "missing.cfg"]), Some(1));
    std::fs::write(dir.path().join("bad.cfg"), "trials = 0\n").unwrap();
    assert_eq!(code(&["simulate", "--config", "bad.cfg"]), Some(1));
    std::fs::write(dir.path().join("typo.cfg"), "trails = 3\n").unwrap();
    assert_eq!(code(&["simulate", "--config", "typo.cfg"]), Some(1));
    // Valid request whose output directory cannot be created: runtime failure.
    std::fs::write(dir.path().join("blocker"), "").unwrap();
    assert_eq!(code(&["complexity", "--m", "4", "--nk", "2", "--out", "blocker/x"]), Some(2));
}
