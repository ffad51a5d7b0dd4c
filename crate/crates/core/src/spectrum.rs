//! Distributed spectrum estimation: each node scans one frequency per instant and the
//! network estimates the power carried by each basis function of the PSD model.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;

use crate::analysis::MsdTrace;
use crate::diffusion::{AlgParams, Algorithm, Network};
use crate::error::{Error, Result};
use crate::harness::run_trials;
use crate::netgraph::CombinationMatrix;
use crate::rng::{SeedTree, Stream};
use crate::signals::NoiseModel;

/// Nonoverlapping unit-amplitude rectangular basis over `[f_min, f_max]`, sampled on
/// the grid `f_ι = f_min + ι·(f_max − f_min)/N_c`, `ι = 1..N_c`.
///
/// Basis `m` (1-based) covers `(f_min + (m−1)Δ, f_min + mΔ]` with `Δ = (f_max − f_min)/M`;
/// `f_min` itself belongs to the first basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    m: usize,
    f_min: f64,
    f_max: f64,
    grid: Vec<f64>,
    /// 0-based basis index per grid frequency.
    bins: Vec<usize>,
}

pub fn build_rect_basis(m: usize, n_freq: usize, f_min: f64, f_max: f64) -> Result<BasisSet> {
    if m == 0 || n_freq < m {
        return Err(Error::param(format!("need 1 ≤ M ≤ N_c, got M={m}, N_c={n_freq}")));
    }
    if !(f_max > f_min) || !f_min.is_finite() || !f_max.is_finite() {
        return Err(Error::param(format!("invalid band [{f_min}, {f_max}]")));
    }
    let step = (f_max - f_min) / n_freq as f64;
    let grid = (1..=n_freq).map(|i| f_min + i as f64 * step).collect();
    // Integer bucketing of the grid avoids rounding at bin edges: ι ↦ ⌈ιM/N_c⌉.
    let bins = (1..=n_freq).map(|i| (i * m).div_ceil(n_freq) - 1).collect();
    Ok(BasisSet { m, f_min, f_max, grid, bins })
}

impl BasisSet {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_freq(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// 0-based basis index hit by grid frequency `iota` (0-based).
    pub fn bin_of_grid(&self, iota: usize) -> usize {
        self.bins[iota]
    }

    /// 0-based basis index containing `f`.
    pub fn bin_of(&self, f: f64) -> Result<usize> {
        if !(f >= self.f_min && f <= self.f_max) {
            return Err(Error::param(format!("frequency {f} outside [{}, {}]", self.f_min, self.f_max)));
        }
        let x = (f - self.f_min) / (self.f_max - self.f_min) * self.m as f64;
        let b = (x - 1e-9).ceil().max(1.0) as usize;
        Ok(b.min(self.m) - 1)
    }

    /// `q(f)`.
    pub fn q(&self, f: f64) -> Result<DVector<f64>> {
        let mut q = DVector::zeros(self.m);
        q[self.bin_of(f)?] = 1.0;
        Ok(q)
    }

    /// `N_c × M` matrix whose row `ι` is `q(f_ι)ᵀ`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(self.n_freq(), self.m);
        for (r, &b) in self.bins.iter().enumerate() {
            q[(r, b)] = 1.0;
        }
        q
    }

    /// `q(f_ι)ᵀw` for every grid frequency.
    pub fn psd_on_grid(&self, w: &DVector<f64>) -> Vec<f64> {
        self.bins.iter().map(|&b| w[b]).collect()
    }
}

/// `φ(f) = q(f)ᵀw`.
pub fn psd_true(basis: &BasisSet, w: &DVector<f64>, f: f64) -> Result<f64> {
    if w.len() != basis.m {
        return Err(Error::Dimension { context: "basis weights", expected: basis.m, got: w.len() });
    }
    Ok(w[basis.bin_of(f)?])
}

/// Sparse transmit-power vector with `active` entries equal to `power`, at indices
/// drawn without replacement.
pub fn sparse_target<R: Rng + ?Sized>(m: usize, active: usize, power: f64, rng: &mut R) -> Result<DVector<f64>> {
    if active > m {
        return Err(Error::param(format!("{active} active bins exceed M={m}")));
    }
    let mut w = DVector::zeros(m);
    for idx in sample(rng, m, active) {
        w[idx] = power;
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumScenario {
    pub w_true: DVector<f64>,
    /// Constant channel magnitude `|H_k|` per node.
    pub gains: Vec<f64>,
    /// Received noise power `σ²_r,k`, assumed known and removed from measurements.
    pub rx_noise_power: Vec<f64>,
    pub noise: Vec<NoiseModel>,
}

impl SpectrumScenario {
    pub fn uniform(w_true: DVector<f64>, n_nodes: usize, noise: NoiseModel) -> Self {
        Self { w_true, gains: vec![1.0; n_nodes], rx_noise_power: vec![0.0; n_nodes], noise: vec![noise; n_nodes] }
    }

    pub fn n_nodes(&self) -> usize {
        self.gains.len()
    }

    pub fn validate(&self, basis: &BasisSet) -> Result<()> {
        let n = self.gains.len();
        if self.rx_noise_power.len() != n || self.noise.len() != n {
            return Err(Error::Dimension { context: "spectrum node data", expected: n, got: self.noise.len() });
        }
        if self.w_true.len() != basis.m {
            return Err(Error::Dimension { context: "spectrum target", expected: basis.m, got: self.w_true.len() });
        }
        if self.w_true.iter().any(|&x| x < 0.0) {
            return Err(Error::param("transmit powers must be nonnegative"));
        }
        self.noise.iter().try_for_each(NoiseModel::validate)
    }
}

/// `(|H_k|·q(f_ι), d^ι_k(i))` for node `k` at grid index `iota` (0-based). The
/// received noise power is added and then removed.
pub fn spectrum_measure<R: Rng + ?Sized>(
    scenario: &SpectrumScenario,
    basis: &BasisSet,
    k: usize,
    iota: usize,
    rng: &mut R,
) -> (DVector<f64>, f64) {
    let mut u = DVector::zeros(basis.m);
    let b = basis.bin_of_grid(iota);
    u[b] = scenario.gains[k];
    let sr = scenario.rx_noise_power[k];
    let d = u[b] * scenario.w_true[b] + sr + scenario.noise[k].sample(rng) - sr;
    (u, d)
}

/// Which grid frequency each node scans at each instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    /// `ι = (i − 1) mod N_c`.
    #[default]
    RoundRobin,
    /// Independent uniform draw per node and instant.
    Random,
}

impl FromStr for Schedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "round-robin" | "roundrobin" => Ok(Self::RoundRobin),
            "random" => Ok(Self::Random),
            other => Err(Error::config(format!("unknown schedule `{other}` (round-robin|random)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectrumSetup {
    pub basis: BasisSet,
    pub scenario: SpectrumScenario,
    pub c: CombinationMatrix,
    pub alg: Algorithm,
    pub params: AlgParams,
    pub xi0: f64,
    pub schedule: Schedule,
    pub n_iters: usize,
    pub n_trials: usize,
}

#[derive(Debug, Clone)]
pub struct SpectrumResult {
    pub msd: MsdTrace,
    /// Final estimates, indexed `[trial][node]`.
    pub finals: Vec<Vec<DVector<f64>>>,
}

impl SpectrumResult {
    /// Trial-averaged final estimate of node `k`.
    pub fn mean_final(&self, k: usize) -> DVector<f64> {
        let mut acc = DVector::zeros(self.finals[0][k].len());
        for t in &self.finals {
            acc += &t[k];
        }
        acc / self.finals.len() as f64
    }
}

pub fn run_spectrum(setup: &SpectrumSetup, seeds: &SeedTree) -> Result<SpectrumResult> {
    setup.scenario.validate(&setup.basis)?;
    let n = setup.scenario.n_nodes();
    if setup.c.n_nodes() != n {
        return Err(Error::Dimension { context: "combination matrix", expected: n, got: setup.c.n_nodes() });
    }
    if setup.n_trials == 0 {
        return Err(Error::config("need at least one trial"));
    }
    let per_trial = run_trials(setup.n_trials, seeds, |trial| spectrum_trial(setup, seeds, trial))?;
    let mut msd = MsdTrace::zeros(setup.n_iters, n);
    let mut finals = Vec::with_capacity(per_trial.len());
    for (trace, fin) in per_trial {
        msd.accumulate(&trace);
        finals.push(fin);
    }
    msd.finish_mean();
    Ok(SpectrumResult { msd, finals })
}

fn spectrum_trial(setup: &SpectrumSetup, seeds: &SeedTree, trial: usize) -> Result<(MsdTrace, Vec<DVector<f64>>)> {
    let sc = &setup.scenario;
    let n = sc.n_nodes();
    let m = setup.basis.m;
    let mut net = Network::new(setup.alg, setup.params, setup.c.clone(), m, &vec![setup.xi0; n])?;
    let mut noise_rngs: Vec<_> = (0..n).map(|k| seeds.substream(trial, k as u32, Stream::Noise)).collect();
    let mut sched_rngs: Vec<_> = (0..n).map(|k| seeds.substream(trial, k as u32, Stream::Schedule)).collect();
    let mut trace = MsdTrace::zeros(setup.n_iters, n);
    let record = |trace: &mut MsdTrace, net: &Network, i: usize| {
        for k in 0..n {
            trace.set(i, k, (&sc.w_true - &net.node(k).w).norm_squared());
        }
    };
    record(&mut trace, &net, 0);
    let mut us = vec![DVector::zeros(m); n];
    let mut ds = vec![0.0; n];
    let nf = setup.basis.n_freq();
    for i in 1..=setup.n_iters {
        for k in 0..n {
            let iota = match setup.schedule {
                Schedule::RoundRobin => (i - 1) % nf,
                Schedule::Random => sched_rngs[k].random_range(0..nf),
            };
            let (u, d) = spectrum_measure(sc, &setup.basis, k, iota, &mut noise_rngs[k]);
            us[k] = u;
            ds[k] = d;
        }
        net.step(i, &us, &ds)?;
        record(&mut trace, &net, i);
    }
    let finals = net.nodes().iter().map(|s| s.w.clone()).collect();
    Ok((trace, finals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{build_metropolis, Topology};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_basis_bucketing() {
        let b = build_rect_basis(2, 4, 0.0, 1.0).unwrap();
        assert_eq!(b.grid(), &[0.25, 0.5, 0.75, 1.0]);
        assert_eq!((0..4).map(|i| b.bin_of_grid(i)).collect::<Vec<_>>(), vec![0, 0, 1, 1]);
        for (i, &f) in b.grid().iter().enumerate() {
            assert_eq!(b.bin_of(f).unwrap(), b.bin_of_grid(i));
        }
        assert_eq!(b.bin_of(0.0).unwrap(), 0);
        assert!(b.bin_of(1.01).is_err());
        assert!(build_rect_basis(5, 4, 0.0, 1.0).is_err());
    }

    #[test]
    fn two_per_bin_at_reference_scale() {
        let b = build_rect_basis(50, 100, 0.0, 1.0).unwrap();
        let q = b.matrix();
        for r in 0..100 {
            assert_eq!(q.row(r).sum(), 1.0);
        }
        for c in 0..50 {
            assert_eq!(q.column(c).sum(), 2.0);
        }
        // Round-robin average regressor covariance QᵀQ/N_c is diagonal.
        let cov = q.transpose() * &q / 100.0;
        assert_eq!(cov, DMatrix::identity(50, 50) * 0.02);
    }

    #[test]
    fn psd_and_measurements() {
        let b = build_rect_basis(4, 8, 0.0, 1.0).unwrap();
        let mut w = DVector::zeros(4);
        w[1] = 0.7;
        assert_eq!(psd_true(&b, &w, 0.3).unwrap(), 0.7);
        assert_eq!(psd_true(&b, &w, 0.9).unwrap(), 0.0);
        assert_eq!(psd_true(&b, &DVector::zeros(4), 0.3).unwrap(), 0.0);
        assert_eq!(b.psd_on_grid(&w), (b.matrix() * &w).iter().copied().collect::<Vec<_>>());

        let quiet = NoiseModel::Gaussian { var: 0.0 };
        let mut sc = SpectrumScenario::uniform(w.clone(), 2, quiet);
        sc.rx_noise_power = vec![0.3, 0.3];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (u, d) = spectrum_measure(&sc, &b, 0, 2, &mut rng);
        assert_eq!(u[1], 1.0);
        assert!((d - 0.7).abs() < 1e-15);
        assert_eq!(spectrum_measure(&sc, &b, 0, 7, &mut rng).1, 0.0);
        sc.gains[1] = 0.0;
        sc.noise[1] = NoiseModel::Gaussian { var: 1.0 };
        let (u, d) = spectrum_measure(&sc, &b, 1, 2, &mut ChaCha8Rng::seed_from_u64(5));
        let v = NoiseModel::Gaussian { var: 1.0 }.sample(&mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(u.norm(), 0.0);
        assert!((d - v).abs() < 1e-15);
    }

    #[test]
    fn sparse_target_has_requested_support() {
        let w = sparse_target(50, 8, 0.7, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(w.iter().filter(|&&x| x == 0.7).count(), 8);
        assert_eq!(w.iter().filter(|&&x| x == 0.0).count(), 42);
    }

    #[test]
    fn noiseless_drls_recovers_support() {
        let b = build_rect_basis(10, 20, 0.0, 1.0).unwrap();
        let w = sparse_target(10, 3, 0.7, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let setup = SpectrumSetup {
            basis: b,
            scenario: SpectrumScenario::uniform(w.clone(), 3, NoiseModel::Gaussian { var: 0.0 }),
            c: build_metropolis(&Topology::line(3).unwrap()),
            alg: Algorithm::Drls,
            params: AlgParams::default(),
            xi0: 1.0,
            schedule: Schedule::RoundRobin,
            n_iters: 1500,
            n_trials: 1,
        };
        let res = run_spectrum(&setup, &SeedTree::new(3)).unwrap();
        for k in 0..3 {
            assert!((&res.finals[0][k] - &w).amax() < 1e-6, "{}", res.finals[0][k]);
        }
        assert!(res.msd.net_db(1500) < -100.0);
    }
}
