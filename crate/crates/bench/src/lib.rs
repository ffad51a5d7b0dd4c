//! Deterministic fixtures shared by the kernel benchmarks.

use diffnet::analysis::TheorySettings;
use diffnet::diffusion::{AlgParams, Network};
use diffnet::harness::KeyValues;
use diffnet::{build_metropolis, Algorithm, ExperimentConfig, TheoryModel, Topology};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vector(m: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(m, |_, _| StandardNormal.sample(rng))
}

/// Well-conditioned SPD matrix `AᵀA/m + I` with a right-hand side.
pub fn spd_system(m: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut r = rng(seed);
    let a = DMatrix::from_fn(m, m, |_, _| StandardNormal.sample(&mut r));
    let phi = a.transpose() * &a / m as f64 + DMatrix::identity(m, m);
    (phi, gaussian_vector(m, &mut r))
}

/// Network on a random geometric graph plus one instant of regressors and
/// measurements.
pub struct NetworkFixture {
    pub net: Network,
    pub us: Vec<DVector<f64>>,
    pub ds: Vec<f64>,
}

pub fn network(alg: Algorithm, n: usize, m: usize, seed: u64) -> NetworkFixture {
    let mut r = rng(seed);
    let topo = Topology::random_geometric(n, 0.4, &mut r).expect("valid topology");
    let c = build_metropolis(&topo);
    let net = Network::new(alg, AlgParams::default(), c, m, &vec![1.0; n]).expect("valid network");
    let us = (0..n).map(|_| gaussian_vector(m, &mut r)).collect();
    let ds = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
    NetworkFixture { net, us, ds }
}

/// Covariance model of an `n`-node, `m`-tap iid scenario with contaminated noise.
pub fn theory_model(n: usize, m: usize) -> TheoryModel {
    let mut kv = KeyValues::default();
    kv.set("nodes", n.to_string());
    kv.set("m", m.to_string());
    kv.set("regressor.mode", "iid");
    let cfg = ExperimentConfig::from_kv(&kv).expect("valid config");
    cfg.theory_model(TheorySettings { n_samples: 2000, ..TheorySettings::default() }).expect("valid model")
}
