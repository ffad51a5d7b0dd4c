//! Experiment configuration, trial orchestration and metrics.
//!
//! Trials run on a rayon pool (capped by `DIFFNET_THREADS`) and are reduced in
//! ascending trial order, so results do not depend on the number of workers.

mod config;
mod output;

pub use config::{parse_f64, KeyValues};
pub use output::{
    write_appendix, write_complexity, write_msd_net, write_msd_node, write_net_traces, write_psd, write_simulation, write_theory,
    write_trials, write_xi_trace, SCHEMA_VERSION,
};

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;

use crate::analysis::{AppendixSettings, MsdTrace, TheoryModel, TheoryNoise, TheorySettings, XiTrace};
use crate::diffusion::{xi_init, AlgParams, Algorithm, Network};
use crate::error::{Error, Result};
use crate::netgraph::{build_metropolis, CombinationMatrix, Topology};
use crate::rng::{SeedTree, Stream};
use crate::signals::{
    unit_target, Ar2Coeffs, ChangePoint, DataStream, ImpulseCluster, NodeProfile, NoiseModel, RegressorMode, Scenario,
};
use crate::spectrum::{build_rect_basis, sparse_target, Schedule, SpectrumScenario, SpectrumSetup};

/// Worker pool honoring `DIFFNET_THREADS`; `None` means the global rayon pool.
fn pool() -> Result<Option<rayon::ThreadPool>> {
    match std::env::var("DIFFNET_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("DIFFNET_THREADS must be a positive integer, got `{v}`")))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
            Ok(Some(pool))
        }
        Err(_) => Ok(None),
    }
}

/// Runs `f` for trials `0..n` in parallel and feeds results to `consume` in
/// ascending trial order. Work is processed in chunks to bound memory.
pub fn for_each_trial<T, F, C>(n: usize, seeds: &SeedTree, f: F, mut consume: C) -> Result<()>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
    C: FnMut(usize, T) -> Result<()>,
{
    let pool = pool()?;
    let chunk = 4 * pool.as_ref().map_or_else(rayon::current_num_threads, |p| p.current_num_threads()).max(1);
    let wrap = |trial: usize| f(trial).map_err(|e| Error::Trial { trial, seed: seeds.trial_seed(trial), source: Box::new(e) });
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let batch = || (start..end).into_par_iter().map(wrap).collect::<Vec<_>>();
        let out = match &pool {
            Some(p) => p.install(batch),
            None => batch(),
        };
        for (t, r) in (start..end).zip(out) {
            consume(t, r?)?;
        }
        start = end;
    }
    Ok(())
}

/// Collects all trial results in trial order.
pub fn run_trials<T, F>(n: usize, seeds: &SeedTree, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let mut out = Vec::with_capacity(n);
    for_each_trial(n, seeds, f, |_, t| {
        out.push(t);
        Ok(())
    })?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologySource {
    Random { radius: f64 },
    Line,
    Complete,
    File(PathBuf),
}

/// Per-node value: fixed, listed, or drawn uniformly from a range.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeValues {
    Fixed(f64),
    Uniform { min: f64, max: f64 },
    List(Vec<f64>),
}

impl NodeValues {
    fn realize<R: Rng + ?Sized>(&self, n: usize, rng: &mut R, what: &str) -> Result<Vec<f64>> {
        match self {
            Self::Fixed(v) => Ok(vec![*v; n]),
            Self::Uniform { min, max } => {
                if !(min <= max) {
                    return Err(Error::config(format!("{what}: empty range [{min}, {max}]")));
                }
                Ok((0..n).map(|_| if min == max { *min } else { rng.random_range(*min..*max) }).collect())
            }
            Self::List(v) if v.len() == n => Ok(v.clone()),
            Self::List(v) => Err(Error::config(format!("{what}: {} values listed for {n} nodes", v.len()))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Gaussian,
    ContaminatedGaussian,
    AlphaStable,
}

/// What the impulse variance multiplier `noise.hbar` refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImpulseReference {
    /// `σ²_g = hbar · σ²_θ,k`.
    Background,
    /// `σ²_g = hbar · σ²_y,k`.
    Signal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub pr: NodeValues,
    pub hbar: f64,
    pub reference: ImpulseReference,
    pub alpha: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChangeMode {
    Negate,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSpec {
    pub m: usize,
    pub n_freq: usize,
    pub active: usize,
    pub power: f64,
    pub schedule: Schedule,
    pub xi0: f64,
}

impl Default for SpectrumSpec {
    fn default() -> Self {
        Self { m: 50, n_freq: 100, active: 8, power: 0.7, schedule: Schedule::RoundRobin, xi0: 1.0 }
    }
}

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub iters: usize,
    pub nodes: usize,
    pub m: usize,
    pub topology: TopologySource,
    pub ar: Ar2Coeffs,
    pub regressor: RegressorMode,
    /// Regressor innovation variances `σ²_ε,k`.
    pub innovation: NodeValues,
    /// Background noise variances `σ²_θ,k`.
    pub background: NodeValues,
    pub noise: NoiseSpec,
    pub algorithms: Vec<Algorithm>,
    pub params: AlgParams,
    /// Overrides the data-driven `ξ_k(0)` for every node.
    pub xi0: Option<f64>,
    pub change: Option<(usize, ChangeMode)>,
    pub cluster: Option<ImpulseCluster>,
    /// Inclusive steady-state window; default: the last 200 iterations.
    pub steady: Option<(usize, usize)>,
    pub spectrum: SpectrumSpec,
}

impl Default for ExperimentConfig {
    /// Robust-vs-plain comparison under contaminated Gaussian noise with AR(2) inputs.
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 50,
            iters: 3000,
            nodes: 20,
            m: 16,
            topology: TopologySource::Random { radius: 0.4 },
            ar: Ar2Coeffs::default(),
            regressor: RegressorMode::Shift,
            innovation: NodeValues::Uniform { min: 0.2, max: 1.0 },
            background: NodeValues::Uniform { min: 0.2, max: 1.0 },
            noise: NoiseSpec {
                kind: NoiseKind::ContaminatedGaussian,
                pr: NodeValues::Uniform { min: 0.001, max: 0.05 },
                hbar: 1000.0,
                reference: ImpulseReference::Signal,
                alpha: 1.2,
                gamma: 2.0 / 15.0,
            },
            algorithms: vec![Algorithm::Drls, Algorithm::Rdrls],
            params: AlgParams::default(),
            xi0: None,
            change: None,
            cluster: None,
            steady: None,
            spectrum: SpectrumSpec::default(),
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "seed", "trials", "iters", "nodes", "m",
    "topology.kind", "topology.radius", "topology.path",
    "ar.a1", "ar.a2", "regressor.mode",
    "profile.eps", "profile.eps_min", "profile.eps_max",
    "profile.theta", "profile.theta_min", "profile.theta_max",
    "noise.kind", "noise.pr", "noise.pr_min", "noise.pr_max", "noise.hbar", "noise.ref", "noise.alpha", "noise.gamma",
    "alg.name", "alg.lambda", "alg.delta", "alg.beta", "alg.ec", "alg.mu", "alg.xi0",
    "nc.rho", "nc.tau", "nc.tth",
    "dcd.h", "dcd.mb", "dcd.nu", "dcd.shift",
    "change.iter", "change.mode",
    "cluster.start", "cluster.length", "cluster.scale",
    "steady.from", "steady.to", "steady.window",
    "spec.m", "spec.nc", "spec.active", "spec.power", "spec.schedule", "spec.xi0",
];

struct F64(f64);

impl std::str::FromStr for F64 {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        parse_f64(s).map(F64)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&KeyValues::load(path)?)
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        kv.check_known(&KNOWN_KEYS.iter().copied().collect::<BTreeSet<_>>())?;
        let d = Self::default();
        let f = |key: &str, default: f64| -> Result<f64> { Ok(kv.get::<F64>(key)?.map_or(default, |x| x.0)) };
        let node_values = |list: &str, lo: &str, hi: &str, default: &NodeValues| -> Result<NodeValues> {
            if let Some(v) = kv.list::<f64>(list)? {
                return Ok(if v.len() == 1 { NodeValues::Fixed(v[0]) } else { NodeValues::List(v) });
            }
            match (kv.get::<f64>(lo)?, kv.get::<f64>(hi)?) {
                (None, None) => Ok(default.clone()),
                (Some(a), Some(b)) => Ok(NodeValues::Uniform { min: a, max: b }),
                _ => Err(Error::config(format!("`{lo}` and `{hi}` must be given together"))),
            }
        };

        let topology = match kv.get_or::<String>("topology.kind", "random".into())?.as_str() {
            "random" => TopologySource::Random { radius: f("topology.radius", 0.4)? },
            "line" => TopologySource::Line,
            "complete" => TopologySource::Complete,
            "file" => {
                let p: String =
                    kv.get("topology.path")?.ok_or_else(|| Error::config("topology.kind = file needs topology.path"))?;
                let p = PathBuf::from(p);
                // Relative paths are resolved next to the config file.
                let p = if p.is_relative() { kv.path().parent().unwrap_or(Path::new(".")).join(p) } else { p };
                TopologySource::File(p)
            }
            other => return Err(Error::config(format!("unknown topology.kind `{other}` (random|line|complete|file)"))),
        };

        let kind = match kv.get_or::<String>("noise.kind", "cg".into())?.as_str() {
            "gaussian" => NoiseKind::Gaussian,
            "cg" => NoiseKind::ContaminatedGaussian,
            "alpha" => NoiseKind::AlphaStable,
            other => return Err(Error::config(format!("unknown noise.kind `{other}` (gaussian|cg|alpha)"))),
        };
        let reference = match kv.get_or::<String>("noise.ref", "signal".into())?.as_str() {
            "signal" => ImpulseReference::Signal,
            "background" => ImpulseReference::Background,
            other => return Err(Error::config(format!("unknown noise.ref `{other}` (signal|background)"))),
        };
        let noise = NoiseSpec {
            kind,
            pr: node_values("noise.pr", "noise.pr_min", "noise.pr_max", &d.noise.pr)?,
            hbar: f("noise.hbar", d.noise.hbar)?,
            reference,
            alpha: f("noise.alpha", d.noise.alpha)?,
            gamma: f("noise.gamma", d.noise.gamma)?,
        };

        let algorithms = match kv.list::<Algorithm>("alg.name")? {
            Some(v) if v.is_empty() => return Err(Error::config("alg.name lists no algorithm")),
            Some(v) => v,
            None => d.algorithms.clone(),
        };
        let mut params = d.params;
        params.rls.lambda = f("alg.lambda", params.rls.lambda)?;
        params.rls.delta = f("alg.delta", params.rls.delta)?;
        params.rls.beta = f("alg.beta", params.rls.beta)?;
        params.rls.e_c = f("alg.ec", params.rls.e_c)?;
        params.mu = f("alg.mu", params.mu)?;
        params.nc.rho = f("nc.rho", params.nc.rho)?;
        params.nc.tau = f("nc.tau", params.nc.tau)?;
        params.nc.t_th = f("nc.tth", params.nc.t_th)?;
        params.dcd.h = f("dcd.h", params.dcd.h)?;
        params.dcd.mb = kv.get_or("dcd.mb", params.dcd.mb)?;
        params.dcd.nu = kv.get_or("dcd.nu", params.dcd.nu)?;
        params.dcd_shift = kv.get_or("dcd.shift", params.dcd_shift)?;

        let iters = kv.get_or("iters", d.iters)?;
        let change = match kv.get::<usize>("change.iter")? {
            None => None,
            Some(at) => Some((
                at,
                match kv.get_or::<String>("change.mode", "negate".into())?.as_str() {
                    "negate" => ChangeMode::Negate,
                    "random" => ChangeMode::Random,
                    other => return Err(Error::config(format!("unknown change.mode `{other}` (negate|random)"))),
                },
            )),
        };
        let cluster = match kv.get::<usize>("cluster.start")? {
            None => None,
            Some(start) => Some(ImpulseCluster {
                start,
                length: kv.get_or("cluster.length", 200)?,
                scale: f("cluster.scale", 1000.0)?,
            }),
        };
        let steady = match (kv.get::<usize>("steady.from")?, kv.get::<usize>("steady.to")?, kv.get::<usize>("steady.window")?) {
            (Some(a), Some(b), None) => Some((a, b)),
            (None, None, Some(w)) => Some((iters.saturating_sub(w.max(1) - 1), iters)),
            (None, None, None) => None,
            _ => return Err(Error::config("give either steady.from and steady.to, or steady.window")),
        };
        let spectrum = SpectrumSpec {
            m: kv.get_or("spec.m", d.spectrum.m)?,
            n_freq: kv.get_or("spec.nc", d.spectrum.n_freq)?,
            active: kv.get_or("spec.active", d.spectrum.active)?,
            power: f("spec.power", d.spectrum.power)?,
            schedule: kv.get_or::<String>("spec.schedule", "round-robin".into())?.parse()?,
            xi0: f("spec.xi0", d.spectrum.xi0)?,
        };
        let cfg = Self {
            seed: kv.get_or("seed", d.seed)?,
            trials: kv.get_or("trials", d.trials)?,
            iters,
            nodes: kv.get_or("nodes", d.nodes)?,
            m: kv.get_or("m", d.m)?,
            topology,
            ar: Ar2Coeffs { a1: f("ar.a1", d.ar.a1)?, a2: f("ar.a2", d.ar.a2)? },
            regressor: kv.get_or::<String>("regressor.mode", "shift".into())?.parse()?,
            innovation: node_values("profile.eps", "profile.eps_min", "profile.eps_max", &d.innovation)?,
            background: node_values("profile.theta", "profile.theta_min", "profile.theta_max", &d.background)?,
            noise,
            algorithms,
            params,
            xi0: kv.get::<F64>("alg.xi0")?.map(|x| x.0),
            change,
            cluster,
            steady,
            spectrum,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials must be ≥ 1"));
        }
        if self.nodes == 0 || self.m == 0 {
            return Err(Error::config("nodes and m must be ≥ 1"));
        }
        if let TopologySource::File(p) = &self.topology {
            if !p.exists() {
                return Err(Error::config(format!("topology file {} does not exist", p.display())));
            }
        }
        if self.params.dcd_shift && self.regressor != RegressorMode::Shift {
            return Err(Error::config("dcd.shift = true requires regressor.mode = shift"));
        }
        if let Some((a, b)) = self.steady {
            if a > b || b > self.iters {
                return Err(Error::config(format!("steady-state window [{a}, {b}] outside 0..={}", self.iters)));
            }
        }
        Ok(())
    }

    /// Inclusive steady-state window actually used.
    pub fn steady_window(&self) -> (usize, usize) {
        self.steady.unwrap_or((self.iters.saturating_sub(199), self.iters))
    }

    fn seeds(&self) -> SeedTree {
        SeedTree::new(self.seed)
    }

    pub fn build_topology(&self) -> Result<Topology> {
        let topo = match &self.topology {
            TopologySource::Random { radius } => {
                Topology::random_geometric(self.nodes, *radius, &mut self.seeds().scenario(Stream::Topology))?
            }
            TopologySource::Line => Topology::line(self.nodes)?,
            TopologySource::Complete => Topology::complete(self.nodes)?,
            TopologySource::File(p) => Topology::load(p)?,
        };
        if topo.n_nodes() != self.nodes {
            return Err(Error::config(format!("topology has {} nodes but nodes = {}", topo.n_nodes(), self.nodes)));
        }
        Ok(topo)
    }

    /// Scenario shared by all trials (target, per-node profiles, events).
    pub fn build_scenario(&self) -> Result<Scenario> {
        let seeds = self.seeds();
        let n = self.nodes;
        let w_true = unit_target(self.m, &mut seeds.scenario(Stream::Target));
        let mut prof = seeds.scenario(Stream::Profile);
        let eps = self.innovation.realize(n, &mut prof, "profile.eps")?;
        let theta = self.background.realize(n, &mut prof, "profile.theta")?;
        let pr = self.noise.pr.realize(n, &mut seeds.scenario(Stream::Probability), "noise.pr")?;
        let mut scenario = Scenario {
            w_true: w_true.clone(),
            mode: self.regressor,
            ar: self.ar,
            nodes: eps
                .iter()
                .map(|&e| NodeProfile { innovation_var: e, noise: NoiseModel::Gaussian { var: 0.0 } })
                .collect(),
            change: self.change.map(|(iter, mode)| ChangePoint {
                iter,
                w_new: match mode {
                    ChangeMode::Negate => -&w_true,
                    ChangeMode::Random => unit_target(self.m, &mut seeds.scenario(Stream::Target)),
                },
            }),
            cluster: self.cluster,
        };
        for k in 0..n {
            let noise = match self.noise.kind {
                NoiseKind::Gaussian => NoiseModel::Gaussian { var: theta[k] },
                NoiseKind::ContaminatedGaussian => {
                    let hbar = match self.noise.reference {
                        ImpulseReference::Background => self.noise.hbar,
                        ImpulseReference::Signal => self.noise.hbar * scenario.sigma_y2(k) / theta[k],
                    };
                    NoiseModel::ContaminatedGaussian { var_theta: theta[k], pr: pr[k], hbar }
                }
                NoiseKind::AlphaStable => NoiseModel::AlphaStable { alpha: self.noise.alpha, gamma: self.noise.gamma },
            };
            scenario.nodes[k].noise = noise;
        }
        scenario.validate()?;
        Ok(scenario)
    }

    /// `ξ_k(0)`: the configured override, or `E_c σ²_d,k / (M σ²_u,k)`.
    pub fn initial_bounds(&self, scenario: &Scenario) -> Result<Vec<f64>> {
        (0..scenario.n_nodes())
            .map(|k| match self.xi0 {
                Some(x) => Ok(x),
                None => xi_init(self.params.rls.e_c, scenario.sigma_d2(k), scenario.sigma_u2(k), scenario.m()),
            })
            .collect()
    }

    /// Covariance model for the configured scenario (contaminated Gaussian noise only).
    pub fn theory_model(&self, settings: TheorySettings) -> Result<TheoryModel> {
        let scenario = self.build_scenario()?;
        let c = build_metropolis(&self.build_topology()?);
        let noise = scenario
            .nodes
            .iter()
            .map(|p| match p.noise {
                NoiseModel::ContaminatedGaussian { var_theta, pr, hbar } => Ok(TheoryNoise { pr, hbar, var_theta }),
                NoiseModel::Gaussian { var } => Ok(TheoryNoise { pr: 0.0, hbar: 0.0, var_theta: var }),
                NoiseModel::AlphaStable { .. } => Err(Error::config("the covariance model needs Gaussian or cg noise")),
            })
            .collect::<Result<Vec<_>>>()?;
        let r = (0..scenario.n_nodes()).map(|k| scenario.covariance(k)).collect();
        let settings = TheorySettings { beta: self.params.rls.beta, ..settings };
        TheoryModel::new(c, r, noise, &scenario.w_true, settings, &mut self.seeds().scenario(Stream::MonteCarlo))
    }

    /// Spectrum-estimation setup for algorithm `alg`.
    pub fn spectrum_setup(&self, alg: Algorithm) -> Result<SpectrumSetup> {
        let s = &self.spectrum;
        let basis = build_rect_basis(s.m, s.n_freq, 0.0, 1.0)?;
        let w = sparse_target(s.m, s.active, s.power, &mut self.seeds().scenario(Stream::Target))?;
        let noise = match self.noise.kind {
            NoiseKind::AlphaStable => NoiseModel::AlphaStable { alpha: self.noise.alpha, gamma: self.noise.gamma },
            _ => return Err(Error::config("spectrum estimation uses alpha-stable noise (noise.kind = alpha)")),
        };
        Ok(SpectrumSetup {
            basis,
            scenario: SpectrumScenario::uniform(w, self.nodes, noise),
            c: build_metropolis(&self.build_topology()?),
            alg,
            params: self.params,
            xi0: self.xi0.unwrap_or(s.xi0),
            schedule: s.schedule,
            n_iters: self.iters,
            n_trials: self.trials,
        })
    }

    pub fn appendix_settings(&self) -> AppendixSettings {
        AppendixSettings { n_trials: self.trials, n_iters: self.iters, ..AppendixSettings::default() }
    }
}

/// Per-trial bookkeeping of one algorithm run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialStats {
    pub trial: usize,
    pub seed: u64,
    pub resets: u64,
    /// Adaptation steps (nodes × iterations).
    pub steps: u64,
    /// Steps whose squared increment exceeded `ξ_k(i−1)(1 + 1e−9)`.
    pub violations: u64,
    /// Largest `increment / ξ_k(i−1)` seen.
    pub max_ratio: f64,
    /// `max_k ξ_k(i)` never increased.
    pub max_xi_nonincreasing: bool,
    pub final_max_xi: f64,
    /// Largest DCD addition count of a single step.
    pub max_adds: u64,
}

/// Raw per-trial output of [`simulate_trial`].
#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub msd: MsdTrace,
    /// Row-major `(iteration, node)` bounds, `i = 0..=T`.
    pub xi: Vec<f64>,
    pub zeta: Vec<f64>,
    pub stats: TrialStats,
}

/// Constraint tolerance applied to `‖ψ − w‖² ≤ ξ`.
pub const CONSTRAINT_TOL: f64 = 1e-9;

/// Runs one trial of `alg` and records squared deviations against the target in
/// force at each instant. `observe` sees the network after each step.
#[allow(clippy::too_many_arguments)]
pub fn simulate_trial(
    scenario: &Scenario,
    c: &CombinationMatrix,
    alg: Algorithm,
    params: &AlgParams,
    xi0: &[f64],
    n_iters: usize,
    seeds: &SeedTree,
    trial: usize,
    mut observe: impl FnMut(usize, &Network),
) -> Result<TrialOutput> {
    let n = scenario.n_nodes();
    let mut net = Network::new(alg, *params, c.clone(), scenario.m(), xi0)?;
    let mut data = DataStream::new(scenario, seeds, trial);
    let mut msd = MsdTrace::zeros(n_iters, n);
    let mut xi = Vec::with_capacity((n_iters + 1) * n);
    let mut zeta = Vec::with_capacity((n_iters + 1) * n);
    let mut stats = TrialStats {
        trial,
        seed: seeds.trial_seed(trial),
        resets: 0,
        steps: 0,
        violations: 0,
        max_ratio: 0.0,
        max_xi_nonincreasing: true,
        final_max_xi: net.max_xi(),
        max_adds: 0,
    };
    let mut record = |i: usize, net: &Network, msd: &mut MsdTrace| {
        let w_o = scenario.w_at(i);
        for (k, node) in net.nodes().iter().enumerate() {
            msd.set(i, k, (w_o - &node.w).norm_squared());
            xi.push(node.xi);
            zeta.push(node.zeta);
        }
    };
    record(0, &net, &mut msd);
    observe(0, &net);
    let mut prev_max = net.max_xi();
    for i in 1..=n_iters {
        data.advance(i);
        net.step(i, data.regressors(), data.measurements())?;
        for r in net.reports() {
            stats.steps += 1;
            if r.xi_prev.is_finite() {
                if r.increment_norm2 > r.xi_prev * (1.0 + CONSTRAINT_TOL) {
                    stats.violations += 1;
                }
                if r.xi_prev > 0.0 {
                    stats.max_ratio = stats.max_ratio.max(r.increment_norm2 / r.xi_prev);
                }
            }
            stats.max_adds = stats.max_adds.max(r.adds);
        }
        let max = net.max_xi();
        if max > prev_max {
            stats.max_xi_nonincreasing = false;
        }
        prev_max = max;
        record(i, &net, &mut msd);
        observe(i, &net);
    }
    stats.resets = net.resets();
    stats.final_max_xi = net.max_xi();
    Ok(TrialOutput { msd, xi, zeta, stats })
}

/// Ensemble result of one algorithm.
#[derive(Debug, Clone)]
pub struct AlgRun {
    pub alg: Algorithm,
    pub msd: MsdTrace,
    /// Ensemble mean of `ξ_k(i)` / `ζ_k(i)`, row-major `(iteration, node)`.
    pub e_xi: Vec<f64>,
    pub e_zeta: Vec<f64>,
    /// Per-node steady-state MSD (dB) over the configured window.
    pub steady: Vec<f64>,
    /// Network steady-state MSD (dB): linear mean over nodes and window.
    pub steady_net: f64,
    pub trials: Vec<TrialStats>,
    pub wall: Duration,
}

impl AlgRun {
    pub fn xi_trace(&self) -> XiTrace {
        XiTrace { n_nodes: self.msd.n_nodes(), e_xi: self.e_xi.clone(), e_zeta: self.e_zeta.clone() }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub topology: Topology,
    pub scenario: Scenario,
    pub xi0: Vec<f64>,
    pub window: (usize, usize),
    pub runs: Vec<AlgRun>,
}

impl RunResult {
    pub fn run(&self, alg: Algorithm) -> Option<&AlgRun> {
        self.runs.iter().find(|r| r.alg == alg)
    }
}

/// Per-node linear mean of a trace over an inclusive window, in dB.
pub fn steady_state_msd(trace: &MsdTrace, window: (usize, usize)) -> Result<Vec<f64>> {
    trace.steady_state(window.0, window.1)
}

/// Runs every configured algorithm on the same scenario and trial seeds.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult> {
    cfg.validate()?;
    let topology = cfg.build_topology()?;
    let c = build_metropolis(&topology);
    let scenario = cfg.build_scenario()?;
    let xi0 = cfg.initial_bounds(&scenario)?;
    let seeds = cfg.seeds();
    let window = cfg.steady_window();
    let n = cfg.nodes;
    let mut runs = Vec::with_capacity(cfg.algorithms.len());
    for &alg in &cfg.algorithms {
        let started = Instant::now();
        let mut msd = MsdTrace::zeros(cfg.iters, n);
        let mut e_xi = vec![0.0; (cfg.iters + 1) * n];
        let mut e_zeta = vec![0.0; (cfg.iters + 1) * n];
        let mut trials = Vec::with_capacity(cfg.trials);
        for_each_trial(
            cfg.trials,
            &seeds,
            |t| simulate_trial(&scenario, &c, alg, &cfg.params, &xi0, cfg.iters, &seeds, t, |_, _| {}),
            |_, out| {
                msd.accumulate(&out.msd);
                for (a, b) in e_xi.iter_mut().zip(&out.xi) {
                    *a += b;
                }
                for (a, b) in e_zeta.iter_mut().zip(&out.zeta) {
                    *a += b;
                }
                trials.push(out.stats);
                Ok(())
            },
        )?;
        msd.finish_mean();
        let t = cfg.trials as f64;
        e_xi.iter_mut().for_each(|x| *x /= t);
        e_zeta.iter_mut().for_each(|x| *x /= t);
        let steady = steady_state_msd(&msd, window)?;
        let steady_net = msd.window_net_db(window.0, window.1)?;
        let wall = started.elapsed();
        log::info!("{alg}: {} trials × {} iterations in {:.2?}, steady-state {steady_net:.2} dB", cfg.trials, cfg.iters, wall);
        runs.push(AlgRun { alg, msd, e_xi, e_zeta, steady, steady_net, trials, wall });
    }
    Ok(RunResult { topology, scenario, xi0, window, runs })
}
