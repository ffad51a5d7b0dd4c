//! Robust diffusion recursive-least-squares estimation over multi-agent networks.
//!
//! Nodes of an undirected network each observe `d_k(i) = u_{k,i}ᵀ w° + v_k(i)` and
//! cooperate to estimate `w°` with adapt-then-combine diffusion. The measurement noise
//! may be impulsive (contaminated Gaussian or symmetric α-stable); the robust variant
//! caps each node's update energy with a bound that decays over time and is itself
//! diffused across neighborhoods.
//!
//! Module map:
//! - [`netgraph`]: topologies and Metropolis combination weights.
//! - [`signals`]: AR(2)/white regressors, noise models, measurements.
//! - [`diffusion`]: dLMS, dSE-LMS, dRLS, robust dRLS with bound diffusion and the
//!   non-stationarity control, plus the two-phase network engine.
//! - [`dcd`]: dichotomous coordinate-descent solver and the DCD-based RLS variants.
//! - [`analysis`]: mean-square evolution model, its Monte-Carlo ingredients, the
//!   sign-expectation diagnostic, and per-node complexity counts.
//! - [`spectrum`]: distributed spectrum estimation with a rectangular basis.
//! - [`harness`]: configuration, trial orchestration, metrics and CSV output.

pub mod analysis;
pub mod dcd;
pub mod diffusion;
pub mod error;
pub mod harness;
pub mod netgraph;
pub mod rng;
pub mod signals;
pub mod spectrum;

pub use analysis::{MsdTrace, TheoryModel};
pub use dcd::{DcdParams, DcdWorkspace};
pub use diffusion::{Algorithm, NcParams, NodeState, RdrlsParams};
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, RunResult};
pub use netgraph::{build_metropolis, CombinationMatrix, Topology};
pub use rng::SeedTree;
pub use signals::{NoiseModel, RegressorMode, Scenario};

/// Power ratio in decibels. Zero and negative inputs map to [`DB_FLOOR`].
pub fn to_db(x: f64) -> f64 {
    if x > 0.0 {
        (10.0 * x.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// Floor used when a mean-square quantity is exactly zero.
pub const DB_FLOOR: f64 = -200.0;
