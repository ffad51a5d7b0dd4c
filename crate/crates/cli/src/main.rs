//! `diffnet` batch driver: simulations, spectrum estimation, the covariance model,
//! complexity tables and the sign-expectation diagnostic. Results are CSV files in
//! `--out`.
//!
//! Exit codes: 0 success, 1 configuration/usage error, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use diffnet::analysis::{
    appendix_a_check, complexity_table, relative_rms, BreveVariant, ComplexityRow, TheorySettings, XiTrace,
};
use diffnet::harness::{
    run_experiment, write_appendix, write_complexity, write_net_traces, write_psd, write_simulation, write_theory,
    KeyValues,
};
use diffnet::spectrum::run_spectrum;
use diffnet::{build_metropolis, Error, ExperimentConfig, SeedTree};

#[derive(Parser, Debug)]
#[command(name = "diffnet", version, about = "Robust diffusion RLS experiments under impulsive noise")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Experiment configuration (`key = value` with `[section]` headers).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Monte-Carlo trials; overrides `trials`.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Synthesized topology kind (random|line|complete); overrides `topology.kind`.
    #[arg(long, global = true)]
    topology: Option<String>,
    /// Connection radius of the random topology; overrides `topology.radius`.
    #[arg(long, global = true)]
    radius: Option<f64>,
    /// Only report warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every configured algorithm and write MSD curves and bound traces.
    Simulate,
    /// Distributed spectrum estimation with a rectangular basis.
    Spectrum,
    /// Evaluate the mean-square covariance model driven by a simulated bound trace.
    Theory {
        /// `xi_trace.csv` produced by `simulate`.
        #[arg(long)]
        xi_trace: PathBuf,
        /// Variant of the noise-term matrix (literal|normalized).
        #[arg(long, default_value = "normalized")]
        breve: String,
        /// Monte-Carlo samples for the model ingredients.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Per-node arithmetic cost of every algorithm.
    Complexity {
        #[arg(long)]
        m: u64,
        /// Neighborhood size, self included.
        #[arg(long)]
        nk: u64,
        /// Constrained-branch flag of the robust DCD rows.
        #[arg(long, default_value_t = 0)]
        kappa: u64,
        /// DCD additions per solve; defaults to `2·Nu·M + Mb`.
        #[arg(long)]
        c_dcd: Option<u64>,
        #[arg(long, default_value_t = 4)]
        nu: u64,
        #[arg(long, default_value_t = 16)]
        mb: u64,
    },
    /// Compare both sides of the sign-expectation decoupling along an R-dRLS run.
    CheckAppendixA,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.global.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}

fn load_config(g: &Global) -> diffnet::Result<ExperimentConfig> {
    let mut kv = match &g.config {
        Some(p) => {
            if !p.exists() {
                return Err(Error::Config(format!("config file {} does not exist", p.display())));
            }
            KeyValues::load(p)?
        }
        None => KeyValues::default(),
    };
    if let Some(s) = g.seed {
        kv.set("seed", s.to_string());
    }
    if let Some(t) = g.trials {
        kv.set("trials", t.to_string());
    }
    if let Some(t) = &g.topology {
        kv.set("topology.kind", t.clone());
    }
    if let Some(r) = g.radius {
        kv.set("topology.radius", r.to_string());
    }
    ExperimentConfig::from_kv(&kv)
}

fn out_dir(g: &Global) -> diffnet::Result<&Path> {
    std::fs::create_dir_all(&g.out)?;
    Ok(&g.out)
}

fn report(g: &Global, line: String) {
    if !g.quiet {
        println!("{line}");
    }
}

fn run(cli: &Cli) -> diffnet::Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Simulate => {
            let cfg = load_config(g)?;
            let res = run_experiment(&cfg)?;
            for p in write_simulation(out_dir(g)?, &res)? {
                log::info!("wrote {}", p.display());
            }
            let (a, b) = res.window;
            for r in &res.runs {
                report(g, format!("{}: steady-state network MSD {:.2} dB (iterations {a}..={b})", r.alg, r.steady_net));
            }
        }
        Command::Spectrum => {
            let cfg = load_config(g)?;
            let seeds = SeedTree::new(cfg.seed);
            let dir = out_dir(g)?;
            let single = cfg.algorithms.len() == 1;
            let mut traces = Vec::new();
            for &alg in &cfg.algorithms {
                let setup = cfg.spectrum_setup(alg)?;
                let res = run_spectrum(&setup, &seeds)?;
                let estimates: Vec<_> = (0..setup.scenario.n_nodes()).map(|k| res.mean_final(k)).collect();
                let name = if single { "psd.csv".to_string() } else { format!("psd_{alg}.csv") };
                write_psd(&dir.join(&name), &setup.basis, &setup.scenario.w_true, &estimates)?;
                let last = res.msd.len().saturating_sub(1);
                report(g, format!("{alg}: final network MSD {:.2} dB", res.msd.net_db(last)));
                traces.push((alg.to_string(), res.msd));
            }
            let named: Vec<_> = traces.iter().map(|(n, t)| (n.clone(), t)).collect();
            write_net_traces(&dir.join("msd_net.csv"), &named)?;
        }
        Command::Theory { xi_trace, breve, samples } => {
            let cfg = load_config(g)?;
            let breve: BreveVariant = breve.parse()?;
            let trace = XiTrace::read_csv(xi_trace)?;
            if trace.n_nodes != cfg.nodes {
                return Err(Error::Config(format!(
                    "trace has {} nodes but the configuration has {}",
                    trace.n_nodes, cfg.nodes
                )));
            }
            let settings = TheorySettings { n_samples: *samples, breve, ..TheorySettings::default() };
            let mut model = cfg.theory_model(settings)?;
            let rows = model.run(&trace)?;
            if model.clamped() > 0 {
                log::warn!("{} negative radicands were clamped to zero", model.clamped());
            }
            let path = out_dir(g)?.join("theory.csv");
            write_theory(&path, &rows)?;
            if let Some(last) = rows.last() {
                let net = last.iter().sum::<f64>() / last.len().max(1) as f64;
                report(g, format!("model network MSD at iteration {}: {:.2} dB", rows.len() - 1, diffnet::to_db(net)));
            }
        }
        Command::Complexity { m, nk, kappa, c_dcd, nu, mb } => {
            let c = c_dcd.unwrap_or(2 * nu * m + mb);
            let rows = ComplexityRow::ALL
                .into_iter()
                .map(|row| {
                    let c = if row.uses_dcd() { c } else { 0 };
                    complexity_table(row, *m, *nk, *kappa, c).map(|ops| (row, *m, *nk, *kappa, c, ops))
                })
                .collect::<diffnet::Result<Vec<_>>>()?;
            write_complexity(&out_dir(g)?.join("complexity.csv"), &rows)?;
            for (row, .., ops) in &rows {
                report(g, format!("{row:>16}: {} mult, {} add, {} div, {} sqrt", ops.mults, ops.adds, ops.divs, ops.sqrts));
            }
        }
        Command::CheckAppendixA => {
            let cfg = load_config(g)?;
            let scenario = cfg.build_scenario()?;
            let c = build_metropolis(&cfg.build_topology()?);
            let xi0 = cfg.initial_bounds(&scenario)?;
            let settings = cfg.appendix_settings();
            let points = appendix_a_check(&scenario, &c, &cfg.params, &xi0, &settings, &SeedTree::new(cfg.seed))?;
            write_appendix(&out_dir(g)?.join("appendix_a.csv"), &points)?;
            let after = 500.min(settings.n_iters / 4);
            for &k in &settings.nodes {
                if let Some(rms) = relative_rms(&points, k, after) {
                    report(g, format!("node {}: relative RMS gap {:.2}% after iteration {after}", k + 1, 100.0 * rms));
                }
            }
        }
    }
    Ok(())
}
