//! Versioned CSV outputs. Every file starts with a `# schema_version=N` comment;
//! node indices are 1-based.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use super::{AlgRun, RunResult};
use crate::analysis::{AppendixPoint, ComplexityRow, MsdTrace, OpCounts, XiTrace};
use crate::error::Result;
use crate::spectrum::BasisSet;
use crate::to_db;

pub const SCHEMA_VERSION: u32 = 1;

type CsvOut = csv::Writer<BufWriter<File>>;

fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Io(std::io::Error::other(e))
}

fn open(path: &Path, header: &[&str]) -> Result<CsvOut> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "# schema_version={SCHEMA_VERSION}")?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(header).map_err(csv_err)?;
    Ok(w)
}

fn row(w: &mut CsvOut, fields: &[String]) -> Result<()> {
    w.write_record(fields).map_err(csv_err)
}

fn close(w: CsvOut) -> Result<()> {
    w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))?.flush()?;
    Ok(())
}

fn columns<'a>(runs: &'a [AlgRun], base: &'a str) -> Vec<String> {
    if runs.len() == 1 {
        vec![base.to_string()]
    } else {
        runs.iter().map(|r| format!("{base}_{}", r.alg)).collect()
    }
}

/// `iter,msd_db` (one algorithm) or `iter,msd_db_<alg>,...`.
pub fn write_msd_net(path: &Path, runs: &[AlgRun]) -> Result<()> {
    let named: Vec<(String, &MsdTrace)> = runs.iter().map(|r| (r.alg.to_string(), &r.msd)).collect();
    write_net_traces(path, &named)
}

/// Network MSD of named traces; same column rule as [`write_msd_net`].
pub fn write_net_traces(path: &Path, traces: &[(String, &MsdTrace)]) -> Result<()> {
    let mut header = vec!["iter".to_string()];
    if traces.len() == 1 {
        header.push("msd_db".into());
    } else {
        header.extend(traces.iter().map(|(name, _)| format!("msd_db_{name}")));
    }
    let mut w = open(path, &header.iter().map(String::as_str).collect::<Vec<_>>())?;
    let len = traces.first().map_or(0, |t| t.1.len());
    for i in 0..len {
        let mut f = vec![i.to_string()];
        f.extend(traces.iter().map(|t| t.1.net_db(i).to_string()));
        row(&mut w, &f)?;
    }
    close(w)
}

/// `node,steady_msd_db` (one algorithm) or `node,steady_msd_db_<alg>,...`.
pub fn write_msd_node(path: &Path, runs: &[AlgRun]) -> Result<()> {
    let mut header = vec!["node".to_string()];
    header.extend(columns(runs, "steady_msd_db"));
    let mut w = open(path, &header.iter().map(String::as_str).collect::<Vec<_>>())?;
    let n = runs.first().map_or(0, |r| r.steady.len());
    for k in 0..n {
        let mut f = vec![(k + 1).to_string()];
        f.extend(runs.iter().map(|r| r.steady[k].to_string()));
        row(&mut w, &f)?;
    }
    close(w)
}

/// `iter,node,e_xi,e_zeta`.
pub fn write_xi_trace(path: &Path, trace: &XiTrace) -> Result<()> {
    let mut w = open(path, &["iter", "node", "e_xi", "e_zeta"])?;
    for i in 0..trace.len() {
        for k in 0..trace.n_nodes {
            row(&mut w, &[i.to_string(), (k + 1).to_string(), trace.xi(i, k).to_string(), trace.zeta(i, k).to_string()])?;
        }
    }
    close(w)
}

/// `alg,trial,seed,resets,steps,violations,max_ratio,final_max_xi`.
pub fn write_trials(path: &Path, runs: &[AlgRun]) -> Result<()> {
    let mut w = open(path, &["alg", "trial", "seed", "resets", "steps", "violations", "max_ratio", "final_max_xi"])?;
    for r in runs {
        for t in &r.trials {
            row(
                &mut w,
                &[
                    r.alg.to_string(),
                    t.trial.to_string(),
                    format!("{:#018x}", t.seed),
                    t.resets.to_string(),
                    t.steps.to_string(),
                    t.violations.to_string(),
                    t.max_ratio.to_string(),
                    t.final_max_xi.to_string(),
                ],
            )?;
        }
    }
    close(w)
}

/// `iter,node,msd_db,msd_net_db` from per-node linear MSD rows.
pub fn write_theory(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let mut w = open(path, &["iter", "node", "msd_db", "msd_net_db"])?;
    for (i, per) in rows.iter().enumerate() {
        let net = to_db(per.iter().sum::<f64>() / per.len().max(1) as f64);
        for (k, v) in per.iter().enumerate() {
            row(&mut w, &[i.to_string(), (k + 1).to_string(), to_db(*v).to_string(), net.to_string()])?;
        }
    }
    close(w)
}

/// `freq,true_psd,node,est_psd` on the basis grid.
pub fn write_psd(path: &Path, basis: &BasisSet, w_true: &DVector<f64>, estimates: &[DVector<f64>]) -> Result<()> {
    let mut w = open(path, &["freq", "true_psd", "node", "est_psd"])?;
    let truth = basis.psd_on_grid(w_true);
    for (k, est) in estimates.iter().enumerate() {
        for ((f, t), e) in basis.grid().iter().zip(&truth).zip(basis.psd_on_grid(est)) {
            row(&mut w, &[f.to_string(), t.to_string(), (k + 1).to_string(), e.to_string()])?;
        }
    }
    close(w)
}

/// `alg,m,n_k,kappa,c_dcd,mults,adds,divs,sqrts`.
pub fn write_complexity(path: &Path, rows: &[(ComplexityRow, u64, u64, u64, u64, OpCounts)]) -> Result<()> {
    let mut w = open(path, &["alg", "m", "n_k", "kappa", "c_dcd", "mults", "adds", "divs", "sqrts"])?;
    for (alg, m, nk, kappa, c, ops) in rows {
        row(
            &mut w,
            &[
                alg.to_string(),
                m.to_string(),
                nk.to_string(),
                kappa.to_string(),
                c.to_string(),
                ops.mults.to_string(),
                ops.adds.to_string(),
                ops.divs.to_string(),
                ops.sqrts.to_string(),
            ],
        )?;
    }
    close(w)
}

/// `iter,node,lhs,rhs`.
pub fn write_appendix(path: &Path, points: &[AppendixPoint]) -> Result<()> {
    let mut w = open(path, &["iter", "node", "lhs", "rhs"])?;
    for p in points {
        row(&mut w, &[p.iter.to_string(), (p.node + 1).to_string(), p.lhs.to_string(), p.rhs.to_string()])?;
    }
    close(w)
}

/// Writes `msd_net.csv`, `msd_node.csv`, `trials.csv` and, for each robust
/// algorithm, `xi_trace.csv` (single algorithm) or `xi_trace_<alg>.csv`.
pub fn write_simulation(dir: &Path, result: &RunResult) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    write_msd_net(&put("msd_net.csv".into()), &result.runs)?;
    write_msd_node(&put("msd_node.csv".into()), &result.runs)?;
    write_trials(&put("trials.csv".into()), &result.runs)?;
    let single = result.runs.len() == 1;
    for r in result.runs.iter().filter(|r| r.alg.is_robust()) {
        let name = if single { "xi_trace.csv".to_string() } else { format!("xi_trace_{}.csv", r.alg) };
        write_xi_trace(&put(name), &r.xi_trace())?;
    }
    Ok(written)
}
