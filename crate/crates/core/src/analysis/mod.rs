//! Mean-square behavior: ensemble MSD traces, the covariance evolution model of
//! the robust diffusion RLS and its Monte-Carlo ingredients, the diagnostic for the
//! normalized-gain approximation, and per-node operation counts.

mod appendix;
mod complexity;
mod theory;

pub use appendix::{appendix_a_check, relative_rms, two_point_sides, AppendixPoint, AppendixSettings};
pub use complexity::{complexity_table, ComplexityRow, OpCounts};
pub use theory::{BreveVariant, TheoryModel, TheoryNoise, TheorySettings, XiTrace};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::to_db;

/// Ensemble-averaged squared deviations, stored in the linear domain.
#[derive(Debug, Clone, PartialEq)]
pub struct MsdTrace {
    n_nodes: usize,
    n_trials: usize,
    /// Row-major `(iteration, node)`.
    lin: Vec<f64>,
}

impl MsdTrace {
    pub fn zeros(n_iters: usize, n_nodes: usize) -> Self {
        Self { n_nodes, n_trials: 0, lin: vec![0.0; (n_iters + 1) * n_nodes] }
    }

    /// Builds a trace from per-iteration, per-node linear values of one trial.
    pub fn from_linear(n_nodes: usize, lin: Vec<f64>, n_trials: usize) -> Self {
        assert_eq!(lin.len() % n_nodes, 0);
        Self { n_nodes, n_trials, lin }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Number of recorded instants, counting `i = 0`.
    pub fn len(&self) -> usize {
        self.lin.len() / self.n_nodes
    }

    pub fn is_empty(&self) -> bool {
        self.lin.is_empty()
    }

    pub fn n_trials(&self) -> usize {
        self.n_trials
    }

    pub fn set(&mut self, i: usize, k: usize, value: f64) {
        self.lin[i * self.n_nodes + k] = value;
    }

    pub fn node_lin(&self, i: usize, k: usize) -> f64 {
        self.lin[i * self.n_nodes + k]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.lin[i * self.n_nodes..(i + 1) * self.n_nodes]
    }

    /// Node average of the linear MSD.
    pub fn net_lin(&self, i: usize) -> f64 {
        self.row(i).iter().sum::<f64>() / self.n_nodes as f64
    }

    pub fn net_db(&self, i: usize) -> f64 {
        to_db(self.net_lin(i))
    }

    pub fn node_db(&self, i: usize, k: usize) -> f64 {
        to_db(self.node_lin(i, k))
    }

    pub fn net_db_series(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.net_db(i)).collect()
    }

    /// Adds another trial's raw squared deviations (same shape).
    pub fn accumulate(&mut self, other: &MsdTrace) {
        assert_eq!(self.lin.len(), other.lin.len());
        for (a, b) in self.lin.iter_mut().zip(&other.lin) {
            *a += b;
        }
        self.n_trials += other.n_trials.max(1);
    }

    /// Divides accumulated sums by the trial count.
    pub fn finish_mean(&mut self) {
        if self.n_trials > 0 {
            let t = self.n_trials as f64;
            self.lin.iter_mut().for_each(|x| *x /= t);
        }
    }

    /// Linear mean of the network MSD over `[from, to]` (inclusive), in dB.
    pub fn window_net_db(&self, from: usize, to: usize) -> Result<f64> {
        let (from, to) = self.check_window(from, to)?;
        let mean = (from..=to).map(|i| self.net_lin(i)).sum::<f64>() / (to - from + 1) as f64;
        Ok(to_db(mean))
    }

    fn check_window(&self, from: usize, to: usize) -> Result<(usize, usize)> {
        if from > to || to >= self.len() {
            return Err(Error::param(format!(
                "steady-state window [{from}, {to}] is empty or outside 0..{}",
                self.len().saturating_sub(1)
            )));
        }
        Ok((from, to))
    }

    /// Per-node linear mean over `[from, to]`, in dB.
    pub fn steady_state(&self, from: usize, to: usize) -> Result<Vec<f64>> {
        let (from, to) = self.check_window(from, to)?;
        let span = (to - from + 1) as f64;
        Ok((0..self.n_nodes)
            .map(|k| to_db((from..=to).map(|i| self.node_lin(i, k)).sum::<f64>() / span))
            .collect())
    }
}

/// Factor used to sample `u ~ N(0, R)` and to apply `R⁻¹` to such samples:
/// with `R = LLᵀ` and `u = Lz`, `R⁻¹u = L⁻ᵀz`.
#[derive(Debug, Clone)]
pub struct GaussianFactor {
    chol: Cholesky<f64, Dyn>,
    l: DMatrix<f64>,
}

impl GaussianFactor {
    pub fn new(r: &DMatrix<f64>) -> Result<Self> {
        if r.nrows() != r.ncols() {
            return Err(Error::Dimension { context: "covariance", expected: r.nrows(), got: r.ncols() });
        }
        let chol = Cholesky::new(r.clone()).ok_or_else(|| Error::Matrix("covariance is not positive definite".into()))?;
        let l = chol.l();
        Ok(Self { chol, l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Draws `z`, returns `(u, R⁻¹u)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (DVector<f64>, DVector<f64>) {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let u = &self.l * &z;
        let x = self.l.tr_solve_upper_triangular(&z).expect("Cholesky factor is nonsingular");
        (u, x)
    }

    /// `R⁻¹ v` for an arbitrary vector.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }
}

/// Monte-Carlo estimate of `χ = E{1/√(uᵀR⁻²u)}`, `u ~ N(0, R)`. Returns the mean
/// and its standard error.
pub fn estimate_chi<R: Rng + ?Sized>(r: &DMatrix<f64>, n_samples: usize, rng: &mut R) -> Result<(f64, f64)> {
    if n_samples < 2 {
        return Err(Error::param("χ estimate needs at least two samples"));
    }
    let f = GaussianFactor::new(r)?;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n_samples {
        let (_, x) = f.draw(rng);
        let v = 1.0 / x.norm();
        s += v;
        s2 += v * v;
    }
    let n = n_samples as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Gain of the sign-error path under contaminated Gaussian noise,
/// `√(2/π)·[p_r/√(t + (ħ+1)σ²_θ) + (1−p_r)/√(t + σ²_θ)]` with `t = Tr(W_k R_k)`.
pub fn varpi(w_k: &DMatrix<f64>, r_k: &DMatrix<f64>, pr: f64, hbar: f64, sigma_theta2: f64) -> Result<f64> {
    if !(sigma_theta2 > 0.0) {
        return Err(Error::param("ϖ needs a positive background noise variance"));
    }
    let t = (w_k * r_k).trace().max(0.0);
    Ok(varpi_from_trace(t, pr, hbar, sigma_theta2))
}

pub(crate) fn varpi_from_trace(t: f64, pr: f64, hbar: f64, sigma_theta2: f64) -> f64 {
    (2.0 / std::f64::consts::PI).sqrt()
        * (pr / (t + (hbar + 1.0) * sigma_theta2).sqrt() + (1.0 - pr) / (t + sigma_theta2).sqrt())
}

/// Monte-Carlo mean of `R⁻¹uuᵀR⁻¹ / ρ(u)` for `u ~ N(0, R)`, where `ρ = √(uᵀR⁻²u)`
/// ([`BreveVariant::Literal`]) or `uᵀR⁻²u` ([`BreveVariant::Normalized`]).
pub fn breve_base<R: Rng + ?Sized>(
    r: &DMatrix<f64>,
    n_samples: usize,
    variant: BreveVariant,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if n_samples == 0 {
        return Err(Error::param("R̆ estimate needs samples"));
    }
    let f = GaussianFactor::new(r)?;
    let m = f.dim();
    let mut acc = DMatrix::zeros(m, m);
    for _ in 0..n_samples {
        let (_, x) = f.draw(rng);
        let q = x.norm_squared();
        let w = match variant {
            BreveVariant::Literal => 1.0 / q.sqrt(),
            BreveVariant::Normalized => 1.0 / q,
        };
        acc.ger(w, &x, &x, 1.0);
    }
    acc /= n_samples as f64;
    crate::diffusion::symmetrize(&mut acc);
    Ok(acc)
}

/// `ω² · breve_base(R)`.
pub fn breve_r<R: Rng + ?Sized>(
    r: &DMatrix<f64>,
    omega2: f64,
    n_samples: usize,
    variant: BreveVariant,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if !(omega2 >= 0.0) {
        return Err(Error::param(format!("ω² must be ≥ 0, got {omega2}")));
    }
    Ok(breve_base(r, n_samples, variant, rng)? * omega2)
}

/// Per-node `Tr(W_kk)` and their mean, from an `NM×NM` covariance.
pub fn msd_from_w(w: &DMatrix<f64>, n_nodes: usize) -> Result<(Vec<f64>, f64)> {
    if n_nodes == 0 || w.nrows() % n_nodes != 0 || w.nrows() != w.ncols() {
        return Err(Error::Dimension { context: "msd_from_w", expected: n_nodes, got: w.nrows() });
    }
    let m = w.nrows() / n_nodes;
    let per: Vec<f64> = (0..n_nodes).map(|k| w.view((k * m, k * m), (m, m)).trace()).collect();
    let net = per.iter().sum::<f64>() / n_nodes as f64;
    Ok((per, net))
}
