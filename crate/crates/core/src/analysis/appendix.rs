//! Diagnostic for the decoupling approximation
//! `E{w̃ᵀR⁻¹u/√(uᵀR⁻²u)·sign(e)} ≈ χ·E{w̃ᵀR⁻¹u·sign(e)}`.
//!
//! The trajectory `w_{k,i−1}` comes from an ordinary robust diffusion run. At every
//! instant and selected node both sides are evaluated on `inner` fresh draws of
//! `(u, v)` that do not feed back into the run, then averaged over trials. For
//! Gaussian and contaminated-Gaussian noise the expectation over `v` is taken in
//! closed form, `E{sign(uᵀw̃ + v) | u}`, which removes the sign noise from both sides.

use nalgebra::DVector;

use super::{estimate_chi, GaussianFactor};
use crate::diffusion::{sign0, AlgParams, Algorithm, Network};
use crate::error::{Error, Result};
use crate::harness::for_each_trial;
use crate::netgraph::CombinationMatrix;
use crate::rng::{SeedTree, SimRng, Stream, SCENARIO_NODE};
use crate::signals::{DataStream, RegressorMode, Scenario};

#[derive(Debug, Clone, PartialEq)]
pub struct AppendixSettings {
    pub n_trials: usize,
    pub n_iters: usize,
    /// 0-based node indices to monitor.
    pub nodes: Vec<usize>,
    /// Fresh `(u, v)` draws per trial, instant and node.
    pub inner: usize,
    pub chi_samples: usize,
}

impl Default for AppendixSettings {
    fn default() -> Self {
        Self { n_trials: 200, n_iters: 2000, nodes: vec![0, 5, 10, 15], inner: 32, chi_samples: 100_000 }
    }
}

/// Both sides at one `(iteration, node)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppendixPoint {
    pub iter: usize,
    pub node: usize,
    pub lhs: f64,
    pub rhs: f64,
}

/// Runs the diagnostic with the R-dRLS algorithm. Requires iid regressors.
pub fn appendix_a_check(
    scenario: &Scenario,
    c: &CombinationMatrix,
    params: &AlgParams,
    xi0: &[f64],
    settings: &AppendixSettings,
    seeds: &SeedTree,
) -> Result<Vec<AppendixPoint>> {
    if scenario.mode != RegressorMode::Iid {
        return Err(Error::config("the decoupling diagnostic assumes iid regressors (regressor.mode = iid)"));
    }
    scenario.validate()?;
    let n = scenario.n_nodes();
    if c.n_nodes() != n {
        return Err(Error::Dimension { context: "combination matrix", expected: n, got: c.n_nodes() });
    }
    if let Some(&k) = settings.nodes.iter().find(|&&k| k >= n) {
        return Err(Error::NodeIndex { index: k, n });
    }
    if settings.n_trials == 0 || settings.inner == 0 {
        return Err(Error::config("diagnostic needs at least one trial and one inner draw"));
    }
    let factors: Vec<GaussianFactor> =
        settings.nodes.iter().map(|&k| GaussianFactor::new(&scenario.covariance(k))).collect::<Result<_>>()?;
    let mut chi_rng = seeds.scenario(Stream::MonteCarlo);
    let chis: Vec<f64> = settings
        .nodes
        .iter()
        .map(|&k| estimate_chi(&scenario.covariance(k), settings.chi_samples.max(2), &mut chi_rng).map(|r| r.0))
        .collect::<Result<_>>()?;

    let width = settings.nodes.len();
    let mut sums = vec![(0.0, 0.0); settings.n_iters * width];
    for_each_trial(
        settings.n_trials,
        seeds,
        |trial| run_trial(scenario, c, params, xi0, settings, seeds, trial, &factors, &chis),
        |_, t| {
            for (s, v) in sums.iter_mut().zip(&t) {
                s.0 += v.0;
                s.1 += v.1;
            }
            Ok(())
        },
    )?;
    let denom = (settings.n_trials * settings.inner) as f64;
    Ok(sums
        .iter()
        .enumerate()
        .map(|(idx, &(l, r))| AppendixPoint {
            iter: idx / width + 1,
            node: settings.nodes[idx % width],
            lhs: l / denom,
            rhs: r / denom,
        })
        .collect())
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    scenario: &Scenario,
    c: &CombinationMatrix,
    params: &AlgParams,
    xi0: &[f64],
    settings: &AppendixSettings,
    seeds: &SeedTree,
    trial: usize,
    factors: &[GaussianFactor],
    chis: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let mut net = Network::new(Algorithm::Rdrls, *params, c.clone(), scenario.m(), xi0)?;
    let mut data = DataStream::new(scenario, seeds, trial);
    let mut mc: SimRng = seeds.substream(trial, SCENARIO_NODE, Stream::MonteCarlo);
    let mut out = Vec::with_capacity(settings.n_iters * settings.nodes.len());
    for i in 1..=settings.n_iters {
        let w_o = scenario.w_at(i);
        for (slot, &k) in settings.nodes.iter().enumerate() {
            let wt: DVector<f64> = w_o - &net.node(k).w;
            let noise = scenario.nodes[k].noise;
            let (mut l, mut r) = (0.0, 0.0);
            for _ in 0..settings.inner {
                let (u, x) = factors[slot].draw(&mut mc);
                let a = u.dot(&wt);
                let s = match noise.sign_mean(a) {
                    Some(s) => s,
                    None => sign0(a + noise.sample(&mut mc)),
                };
                let proj = wt.dot(&x);
                l += proj / x.norm() * s;
                r += chis[slot] * proj * s;
            }
            out.push((l, r));
        }
        data.advance(i);
        net.step(i, data.regressors(), data.measurements())?;
    }
    Ok(out)
}

/// `√(Σ(lhs − rhs)² / Σ rhs²)` over points of `node` with `iter > after`.
pub fn relative_rms(points: &[AppendixPoint], node: usize, after: usize) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for p in points.iter().filter(|p| p.node == node && p.iter > after) {
        num += (p.lhs - p.rhs).powi(2);
        den += p.rhs * p.rhs;
    }
    (den > 0.0).then(|| (num / den).sqrt())
}

/// Deterministic single-draw check used by tests: both sides for fixed `u`, with the
/// expectation over `v` taken exactly for a two-point noise `v = ±a`.
pub fn two_point_sides(wt: &DVector<f64>, u: &DVector<f64>, r_inv_u: &DVector<f64>, chi: f64, a: f64) -> (f64, f64) {
    let ea = u.dot(wt);
    let es = 0.5 * (sign0(ea + a) + sign0(ea - a));
    let proj = wt.dot(r_inv_u);
    (proj / r_inv_u.norm() * es, chi * proj * es)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{build_metropolis, Topology};
    use crate::signals::{Ar2Coeffs, NodeProfile, NoiseModel};

    fn scenario(noise: NoiseModel) -> Scenario {
        let mut w = DVector::zeros(4);
        w[0] = 1.0;
        Scenario {
            w_true: w,
            mode: RegressorMode::Iid,
            ar: Ar2Coeffs::default(),
            nodes: vec![NodeProfile { innovation_var: 1.0, noise }; 3],
            change: None,
            cluster: None,
        }
    }

    #[test]
    fn two_point_closed_check() {
        let wt = DVector::from_vec(vec![0.5, -0.25]);
        let u = DVector::from_vec(vec![1.0, 2.0]);
        // ea = 0: the ±a branches cancel.
        assert_eq!(two_point_sides(&wt, &u, &u, 1.3, 1.0), (0.0, 0.0));
        // ea = 0.5 with a = 0.1: sign is +1 on both branches.
        let u = DVector::from_vec(vec![1.0, 0.0]);
        let (l, r) = two_point_sides(&wt, &u, &u, 1.3, 0.1);
        assert!((l - 0.5).abs() < 1e-15 && (r - 0.65).abs() < 1e-15);
    }

    #[test]
    fn noiseless_converged_is_zero() {
        // With zero noise the estimates converge and both sides decay towards zero.
        let sc = scenario(NoiseModel::Gaussian { var: 0.0 });
        let c = build_metropolis(&Topology::line(3).unwrap());
        let s = AppendixSettings { n_trials: 2, n_iters: 300, nodes: vec![0, 2], inner: 4, chi_samples: 1000 };
        let pts = appendix_a_check(&sc, &c, &AlgParams::default(), &[1.0; 3], &s, &SeedTree::new(1)).unwrap();
        assert_eq!(pts.len(), 600);
        for (first, last) in pts[..2].iter().zip(&pts[598..]) {
            assert_eq!(first.node, last.node);
            assert!(last.lhs.abs() < 1e-3 * first.lhs.abs().max(1e-3), "{first:?} {last:?}");
            assert!(last.rhs.abs() < 1e-3 * first.rhs.abs().max(1e-3), "{first:?} {last:?}");
        }
    }

    #[test]
    fn rejects_shift_mode() {
        let mut sc = scenario(NoiseModel::Gaussian { var: 0.1 });
        sc.mode = RegressorMode::Shift;
        let c = build_metropolis(&Topology::line(3).unwrap());
        let err = appendix_a_check(&sc, &c, &AlgParams::default(), &[1.0; 3], &AppendixSettings::default(), &SeedTree::new(1));
        assert!(err.unwrap_err().is_config());
    }

    #[test]
    fn rms_metric() {
        let p = |iter, lhs, rhs| AppendixPoint { iter, node: 0, lhs, rhs };
        let pts = [p(1, 100.0, 0.0), p(2, 1.1, 1.0), p(3, 0.9, 1.0)];
        assert!((relative_rms(&pts, 0, 1).unwrap() - 0.1).abs() < 1e-12);
        assert!(relative_rms(&pts, 1, 0).is_none());
    }
}
