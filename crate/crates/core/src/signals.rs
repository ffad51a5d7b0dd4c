//! Regressors, additive noise and measurements for the linear data model
//! `d_k(i) = u_{k,i}ᵀ w° + v_k(i)`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use statrs::function::erf::erf;

use crate::diffusion::sign0;
use crate::error::{Error, Result};
use crate::rng::{SeedTree, SimRng, Stream};

/// Samples discarded after a reset so the AR stream starts near stationarity.
pub const AR_WARMUP: usize = 100;

/// Coefficients of `u(i) = a1·u(i−1) + a2·u(i−2) + ε(i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar2Coeffs {
    pub a1: f64,
    pub a2: f64,
}

impl Default for Ar2Coeffs {
    fn default() -> Self {
        Self { a1: 1.6, a2: -0.81 }
    }
}

impl Ar2Coeffs {
    /// Stationarity triangle: both poles strictly inside the unit circle.
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a2 + self.a1 < 1.0 && self.a2 - self.a1 < 1.0
    }

    /// Autocovariance `γ(0..lags)` for unit innovation variance (Yule–Walker).
    pub fn autocov(&self, lags: usize) -> Vec<f64> {
        let Self { a1, a2 } = *self;
        let g0 = (1.0 - a2) / ((1.0 + a2) * ((1.0 - a2).powi(2) - a1 * a1));
        let mut g = Vec::with_capacity(lags.max(2));
        g.push(g0);
        g.push(a1 * g0 / (1.0 - a2));
        for k in 2..lags {
            let next = a1 * g[k - 1] + a2 * g[k - 2];
            g.push(next);
        }
        g.truncate(lags);
        g
    }
}

/// Scalar AR(2) generator with its two-sample memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Ar2Source {
    pub coeffs: Ar2Coeffs,
    pub innovation_var: f64,
    prev1: f64,
    prev2: f64,
}

impl Ar2Source {
    pub fn new(coeffs: Ar2Coeffs, innovation_var: f64) -> Self {
        Self { coeffs, innovation_var, prev1: 0.0, prev2: 0.0 }
    }

    /// Sets the history `(u(i−1), u(i−2))`.
    pub fn with_state(mut self, prev1: f64, prev2: f64) -> Self {
        self.prev1 = prev1;
        self.prev2 = prev2;
        self
    }

    /// Advances one sample with the supplied innovation.
    pub fn next(&mut self, innovation: f64) -> f64 {
        let u = self.coeffs.a1 * self.prev1 + self.coeffs.a2 * self.prev2 + innovation;
        self.prev2 = self.prev1;
        self.prev1 = u;
        u
    }

    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let eps: f64 = rng.sample(StandardNormal);
        self.next(eps * self.innovation_var.sqrt())
    }
}

/// Free-function form of [`Ar2Source::next`].
pub fn ar2_next(source: &mut Ar2Source, innovation: f64) -> f64 {
    source.next(innovation)
}

/// Symmetric Toeplitz matrix with first column `acov[..m]`.
pub fn toeplitz(acov: &[f64], m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |r, c| acov[r.abs_diff(c)])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressorMode {
    /// Delay line over a scalar AR(2) stream.
    Shift,
    /// Fresh white Gaussian vector every instant.
    Iid,
}

impl std::str::FromStr for RegressorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shift" => Ok(Self::Shift),
            "iid" => Ok(Self::Iid),
            other => Err(Error::config(format!("unknown regressor mode `{other}` (shift|iid)"))),
        }
    }
}

/// Per-node regressor stream.
#[derive(Debug, Clone)]
pub struct RegressorSource {
    mode: RegressorMode,
    ar: Ar2Source,
    u: DVector<f64>,
}

impl RegressorSource {
    pub fn new(mode: RegressorMode, m: usize, coeffs: Ar2Coeffs, innovation_var: f64) -> Self {
        Self { mode, ar: Ar2Source::new(coeffs, innovation_var), u: DVector::zeros(m) }
    }

    pub fn mode(&self) -> RegressorMode {
        self.mode
    }

    /// Clears history and, in shift mode, runs the warm-up and fills the delay line.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.ar = Ar2Source::new(self.ar.coeffs, self.ar.innovation_var);
        self.u.fill(0.0);
        if self.mode == RegressorMode::Shift {
            for _ in 0..AR_WARMUP + self.u.len() - 1 {
                self.push_sample(rng);
            }
        }
    }

    fn push_sample<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let x = self.ar.draw(rng);
        let m = self.u.len();
        for j in (1..m).rev() {
            self.u[j] = self.u[j - 1];
        }
        self.u[0] = x;
    }

    /// Produces `u_{k,i}`.
    pub fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &DVector<f64> {
        match self.mode {
            RegressorMode::Shift => self.push_sample(rng),
            RegressorMode::Iid => {
                let sd = self.ar.innovation_var.sqrt();
                for x in self.u.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *x = sd * z;
                }
            }
        }
        &self.u
    }

    /// Newest scalar sample `u_k(i)` (first regressor entry).
    pub fn newest(&self) -> f64 {
        self.u[0]
    }

    pub fn current(&self) -> &DVector<f64> {
        &self.u
    }

    /// Analytic covariance `R_k = E{u uᵀ}`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.u.len();
        match self.mode {
            RegressorMode::Shift => {
                let acov: Vec<f64> =
                    self.ar.coeffs.autocov(m).iter().map(|g| g * self.ar.innovation_var).collect();
                toeplitz(&acov, m)
            }
            RegressorMode::Iid => DMatrix::identity(m, m) * self.ar.innovation_var,
        }
    }
}

/// Additive measurement noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    Gaussian { var: f64 },
    /// Background `θ ~ N(0, var_theta)` plus Bernoulli(`pr`)-gated `g ~ N(0, hbar·var_theta)`.
    ContaminatedGaussian { var_theta: f64, pr: f64, hbar: f64 },
    /// Symmetric α-stable with characteristic function `exp(−γ|t|^α)`.
    AlphaStable { alpha: f64, gamma: f64 },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Gaussian { var } if !(var >= 0.0) => Err(Error::param(format!("noise variance {var} < 0"))),
            Self::ContaminatedGaussian { var_theta, pr, hbar } => {
                if !(var_theta >= 0.0) || !(0.0..=1.0).contains(&pr) || !(hbar >= 0.0) {
                    Err(Error::param(format!(
                        "contaminated Gaussian needs var ≥ 0, 0 ≤ pr ≤ 1, hbar ≥ 0 (got {var_theta}, {pr}, {hbar})"
                    )))
                } else {
                    Ok(())
                }
            }
            Self::AlphaStable { alpha, gamma } => {
                if !(alpha > 0.0 && alpha <= 2.0) || !(gamma > 0.0) {
                    Err(Error::param(format!("alpha-stable needs 0 < α ≤ 2, γ > 0 (got {alpha}, {gamma})")))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Gaussian { var } => var.sqrt() * rng.sample::<f64, _>(StandardNormal),
            Self::ContaminatedGaussian { var_theta, pr, hbar } => sample_cg(var_theta, pr, hbar, rng),
            Self::AlphaStable { alpha, gamma } => sample_alpha_stable(alpha, gamma, rng),
        }
    }

    /// `E{sign(a + v)}` in closed form where one exists (Gaussian and contaminated
    /// Gaussian noise); `None` for α-stable noise.
    pub fn sign_mean(&self, a: f64) -> Option<f64> {
        let gauss = |var: f64| if var > 0.0 { erf(a / (2.0 * var).sqrt()) } else { sign0(a) };
        match *self {
            Self::Gaussian { var } => Some(gauss(var)),
            Self::ContaminatedGaussian { var_theta, pr, hbar } => {
                Some((1.0 - pr) * gauss(var_theta) + pr * gauss(var_theta * (1.0 + hbar)))
            }
            Self::AlphaStable { .. } => None,
        }
    }

    /// Power of the background (non-impulsive) part. For α-stable noise this is the
    /// variance of the Gaussian member with the same dispersion, `2γ^{2/α}`.
    pub fn nominal_power(&self) -> f64 {
        match *self {
            Self::Gaussian { var } => var,
            Self::ContaminatedGaussian { var_theta, .. } => var_theta,
            Self::AlphaStable { alpha, gamma } => 2.0 * gamma.powf(2.0 / alpha),
        }
    }
}

/// Contaminated-Gaussian draw `θ + b·g`. All three variates are always consumed so
/// the background sequence does not depend on `pr`.
pub fn sample_cg<R: Rng + ?Sized>(var_theta: f64, pr: f64, hbar: f64, rng: &mut R) -> f64 {
    let theta: f64 = rng.sample(StandardNormal);
    let hit = rng.random::<f64>() < pr;
    let g: f64 = rng.sample(StandardNormal);
    let sd = var_theta.sqrt();
    let mut v = sd * theta;
    if hit {
        v += (hbar * var_theta).sqrt() * g;
    }
    v
}

/// Chambers–Mallows–Stuck draw of a symmetric α-stable variate with scale `γ^{1/α}`.
pub fn sample_alpha_stable<R: Rng + ?Sized>(alpha: f64, gamma: f64, rng: &mut R) -> f64 {
    let v = (rng.random::<f64>() - 0.5) * 2.0 * FRAC_PI_2;
    let w: f64 = rng.sample(Exp1);
    let x = if (alpha - 1.0).abs() < 1e-12 {
        v.tan()
    } else {
        (alpha * v).sin() / v.cos().powf(1.0 / alpha) * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
    };
    gamma.powf(1.0 / alpha) * x
}

/// `uᵀw° + v`.
pub fn measure(u: &DVector<f64>, w_true: &DVector<f64>, noise: f64) -> Result<f64> {
    if u.len() != w_true.len() {
        return Err(Error::Dimension { context: "measure", expected: w_true.len(), got: u.len() });
    }
    Ok(u.dot(w_true) + noise)
}

/// Burst of high-variance Gaussian noise on iterations `[start, start + length)`.
/// `scale` multiplies each node's signal power `σ²_y,k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpulseCluster {
    pub start: usize,
    pub length: usize,
    pub scale: f64,
}

impl ImpulseCluster {
    pub fn covers(&self, i: usize) -> bool {
        i >= self.start && i - self.start < self.length
    }

    /// Extra noise at iteration `i` for a node with signal power `sigma_y2`.
    pub fn sample<R: Rng + ?Sized>(&self, i: usize, sigma_y2: f64, rng: &mut R) -> f64 {
        if !self.covers(i) || self.scale == 0.0 {
            return 0.0;
        }
        (self.scale * sigma_y2).sqrt() * rng.sample::<f64, _>(StandardNormal)
    }
}

/// Abrupt replacement of the target vector at iteration `iter` (inclusive).
#[derive(Debug, Clone, PartialEq)]
pub struct ChangePoint {
    pub iter: usize,
    pub w_new: DVector<f64>,
}

/// Per-node signal statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeProfile {
    pub innovation_var: f64,
    pub noise: NoiseModel,
}

/// Everything that defines the data generated at each node.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub w_true: DVector<f64>,
    pub mode: RegressorMode,
    pub ar: Ar2Coeffs,
    pub nodes: Vec<NodeProfile>,
    pub change: Option<ChangePoint>,
    pub cluster: Option<ImpulseCluster>,
}

impl Scenario {
    pub fn m(&self) -> usize {
        self.w_true.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.w_true.is_empty() {
            return Err(Error::param("target dimension must be positive"));
        }
        if self.mode == RegressorMode::Shift && !self.ar.is_stable() {
            return Err(Error::param(format!("AR(2) coefficients {:?} are not stable", self.ar)));
        }
        for p in &self.nodes {
            p.noise.validate()?;
            if !(p.innovation_var > 0.0) {
                return Err(Error::param("regressor variance must be positive"));
            }
        }
        if let Some(c) = &self.change {
            if c.w_new.len() != self.m() {
                return Err(Error::Dimension { context: "change point", expected: self.m(), got: c.w_new.len() });
            }
        }
        Ok(())
    }

    /// Target in force at iteration `i`.
    pub fn w_at(&self, i: usize) -> &DVector<f64> {
        match &self.change {
            Some(c) if i >= c.iter => &c.w_new,
            _ => &self.w_true,
        }
    }

    pub fn regressor_source(&self, k: usize) -> RegressorSource {
        RegressorSource::new(self.mode, self.m(), self.ar, self.nodes[k].innovation_var)
    }

    /// `R_k`, computed analytically.
    pub fn covariance(&self, k: usize) -> DMatrix<f64> {
        self.regressor_source(k).covariance()
    }

    /// `σ²_u,k`: per-entry regressor variance.
    pub fn sigma_u2(&self, k: usize) -> f64 {
        match self.mode {
            RegressorMode::Shift => self.ar.autocov(1)[0] * self.nodes[k].innovation_var,
            RegressorMode::Iid => self.nodes[k].innovation_var,
        }
    }

    /// `σ²_y,k = w°ᵀ R_k w°`.
    pub fn sigma_y2(&self, k: usize) -> f64 {
        let r = self.covariance(k);
        (r * &self.w_true).dot(&self.w_true)
    }

    /// `σ²_d,k`: signal power plus the nominal (background) noise power.
    pub fn sigma_d2(&self, k: usize) -> f64 {
        self.sigma_y2(k) + self.nodes[k].noise.nominal_power()
    }
}

/// Random unit-norm target drawn from a zero-mean uniform distribution.
pub fn unit_target<R: Rng + ?Sized>(m: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let w = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let n = w.norm();
        if n > 0.0 {
            return w / n;
        }
    }
}

/// Per-trial generator of `(u_{k,i}, d_k(i))` for every node, with one substream per
/// node and purpose.
#[derive(Debug, Clone)]
pub struct DataStream<'a> {
    scenario: &'a Scenario,
    sources: Vec<RegressorSource>,
    reg_rngs: Vec<SimRng>,
    noise_rngs: Vec<SimRng>,
    impulse_rngs: Vec<SimRng>,
    sigma_y2: Vec<f64>,
    us: Vec<DVector<f64>>,
    ds: Vec<f64>,
    noise: Vec<f64>,
}

impl<'a> DataStream<'a> {
    pub fn new(scenario: &'a Scenario, seeds: &SeedTree, trial: usize) -> Self {
        let n = scenario.n_nodes();
        let node_rngs = |s: Stream| (0..n).map(|k| seeds.substream(trial, k as u32, s)).collect::<Vec<_>>();
        let mut reg_rngs = node_rngs(Stream::Regressor);
        let sources = (0..n)
            .map(|k| {
                let mut src = scenario.regressor_source(k);
                src.reset(&mut reg_rngs[k]);
                src
            })
            .collect();
        Self {
            scenario,
            sources,
            reg_rngs,
            noise_rngs: node_rngs(Stream::Noise),
            impulse_rngs: node_rngs(Stream::Impulse),
            sigma_y2: (0..n).map(|k| scenario.sigma_y2(k)).collect(),
            us: vec![DVector::zeros(scenario.m()); n],
            ds: vec![0.0; n],
            noise: vec![0.0; n],
        }
    }

    /// Draws instant `i` for all nodes.
    pub fn advance(&mut self, i: usize) {
        let w = self.scenario.w_at(i);
        for k in 0..self.sources.len() {
            self.us[k].copy_from(self.sources[k].next(&mut self.reg_rngs[k]));
            let mut v = self.scenario.nodes[k].noise.sample(&mut self.noise_rngs[k]);
            if let Some(cl) = &self.scenario.cluster {
                v += cl.sample(i, self.sigma_y2[k], &mut self.impulse_rngs[k]);
            }
            self.noise[k] = v;
            self.ds[k] = self.us[k].dot(w) + v;
        }
    }

    pub fn regressors(&self) -> &[DVector<f64>] {
        &self.us
    }

    pub fn measurements(&self) -> &[f64] {
        &self.ds
    }

    /// Noise samples of the latest instant.
    pub fn noise(&self) -> &[f64] {
        &self.noise
    }
}
