//! Adaptation and combination kernels for diffusion LMS/RLS and the robust RLS
//! with bound diffusion.
//!
//! Each instant runs in two phases: every node adapts from its previous combined
//! estimate, then every node averages its neighbors' intermediate estimates (and,
//! for the robust variants, their local bounds). [`Network`] drives both phases.

mod engine;
mod nc;

pub use engine::{Network, NodeReport, NodeState};
pub use nc::{NcDecision, NcParams, NcState};

use nalgebra::{DMatrix, DVector};

use crate::dcd::DcdParams;
use crate::error::{Error, Result};
use crate::netgraph::CombinationMatrix;

/// Diffusion algorithm selected for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Dlms,
    Dselms,
    Drls,
    Rdrls,
    RdrlsNc,
    DcdDrls,
    DcdRdrls,
    DcdRdrlsNc,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Self::Dlms,
        Self::Dselms,
        Self::Drls,
        Self::Rdrls,
        Self::RdrlsNc,
        Self::DcdDrls,
        Self::DcdRdrls,
        Self::DcdRdrlsNc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Dlms => "dlms",
            Self::Dselms => "dselms",
            Self::Drls => "drls",
            Self::Rdrls => "rdrls",
            Self::RdrlsNc => "rdrls-nc",
            Self::DcdDrls => "dcd-drls",
            Self::DcdRdrls => "dcd-rdrls",
            Self::DcdRdrlsNc => "dcd-rdrls-nc",
        }
    }

    /// Carries a diffused update bound ξ.
    pub fn is_robust(self) -> bool {
        matches!(self, Self::Rdrls | Self::RdrlsNc | Self::DcdRdrls | Self::DcdRdrlsNc)
    }

    pub fn uses_nc(self) -> bool {
        matches!(self, Self::RdrlsNc | Self::DcdRdrlsNc)
    }

    pub fn uses_dcd(self) -> bool {
        matches!(self, Self::DcdDrls | Self::DcdRdrls | Self::DcdRdrlsNc)
    }

    /// Keeps an explicit inverse correlation matrix `P`.
    pub fn uses_inverse(self) -> bool {
        matches!(self, Self::Drls | Self::Rdrls | Self::RdrlsNc)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|a| a.name()).collect();
                Error::config(format!("unknown algorithm `{s}` (expected one of {})", names.join("|")))
            })
    }
}

/// Parameters of the RLS family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdrlsParams {
    pub lambda: f64,
    pub delta: f64,
    pub beta: f64,
    pub e_c: f64,
}

impl Default for RdrlsParams {
    fn default() -> Self {
        Self { lambda: 0.985, delta: 0.01, beta: 0.97, e_c: 1.0 }
    }
}

impl RdrlsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::param(format!("forgetting factor must be in (0, 1], got {}", self.lambda)));
        }
        if !(self.delta > 0.0) {
            return Err(Error::param(format!("regularization must be positive, got {}", self.delta)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::param(format!("bound memory factor must be in (0, 1), got {}", self.beta)));
        }
        if !(self.e_c > 0.0) {
            return Err(Error::param(format!("bound scale must be positive, got {}", self.e_c)));
        }
        Ok(())
    }
}

/// Everything a [`Network`] needs besides the combination weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgParams {
    pub rls: RdrlsParams,
    /// LMS step size.
    pub mu: f64,
    pub nc: NcParams,
    pub dcd: DcdParams,
    /// Use the O(M) correlation update (shift-structured regressors only).
    pub dcd_shift: bool,
}

impl Default for AlgParams {
    fn default() -> Self {
        Self { rls: RdrlsParams::default(), mu: 0.015, nc: NcParams::default(), dcd: DcdParams::default(), dcd_shift: false }
    }
}

/// Matrix-inversion-lemma update of `P = Φ⁻¹` and the gain `g = P_next u`.
pub fn rls_gain(p: &DMatrix<f64>, u: &DVector<f64>, lambda: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let mut next = p.clone();
    let mut g = DVector::zeros(u.len());
    let mut pu = DVector::zeros(u.len());
    rls_gain_in_place(&mut next, u, lambda, &mut pu, &mut g)?;
    Ok((next, g))
}

/// In-place form of [`rls_gain`]; `pu` is scratch.
pub fn rls_gain_in_place(
    p: &mut DMatrix<f64>,
    u: &DVector<f64>,
    lambda: f64,
    pu: &mut DVector<f64>,
    g: &mut DVector<f64>,
) -> Result<()> {
    let m = u.len();
    if p.nrows() != m || p.ncols() != m {
        return Err(Error::Dimension { context: "rls_gain", expected: m, got: p.nrows() });
    }
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("regressor"));
    }
    pu.gemv(1.0, p, u, 0.0);
    let denom = lambda + u.dot(pu);
    if !denom.is_finite() || denom <= 0.0 {
        return Err(Error::NonFinite("RLS gain denominator"));
    }
    // P is symmetric, so uᵀP = (Pu)ᵀ.
    p.ger(-1.0 / denom, pu, pu, 1.0);
    *p /= lambda;
    symmetrize(p);
    g.gemv(1.0, p, u, 0.0);
    Ok(())
}

/// `A ← (A + Aᵀ)/2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let m = a.nrows();
    for c in 0..m {
        for r in (c + 1)..m {
            let v = 0.5 * (a[(r, c)] + a[(c, r)]);
            a[(r, c)] = v;
            a[(c, r)] = v;
        }
    }
}

/// Scale applied to the RLS increment so its squared norm stays within `xi_prev`:
/// `min(√ξ / (‖g‖|e|), 1)`, with 1 when the increment is zero.
pub fn rdrls_scale(g_norm: f64, e: f64, xi_prev: f64) -> f64 {
    let den = g_norm * e.abs();
    if den == 0.0 {
        return 1.0;
    }
    let s = xi_prev.sqrt() / den;
    if s < 1.0 {
        s
    } else {
        1.0
    }
}

/// Robust adaptation `ψ = w_prev + scale·g·e`; returns `(ψ, scale)`.
pub fn rdrls_adapt(w_prev: &DVector<f64>, g: &DVector<f64>, e: f64, xi_prev: f64) -> (DVector<f64>, f64) {
    let scale = rdrls_scale(g.norm(), e, xi_prev);
    let mut psi = w_prev.clone();
    psi.axpy(scale * e, g, 1.0);
    (psi, scale)
}

/// Local bound `ζ = βξ_prev + (1−β)·min(‖g‖²e², ξ_prev)`.
pub fn bound_local(xi_prev: f64, g_norm2_e2: f64, beta: f64) -> f64 {
    if xi_prev == f64::INFINITY {
        return f64::INFINITY;
    }
    let z = beta * xi_prev + (1.0 - beta) * g_norm2_e2.min(xi_prev);
    // Guard the ζ ≤ ξ_prev guarantee against rounding.
    z.min(xi_prev)
}

/// Diffused bound `ξ_k = Σ_{m∈N_k} c_{m,k} ζ_m`, clamped to the neighbor range so
/// rounding can never lift it above the largest contribution.
pub fn bound_combine(zetas: &[f64], c: &CombinationMatrix, k: usize) -> f64 {
    let mut acc = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(m, w) in c.column(k) {
        let z = zetas[m];
        acc += w * z;
        lo = lo.min(z);
        hi = hi.max(z);
    }
    acc.clamp(lo, hi)
}

/// `w_k = Σ_{m∈N_k} c_{m,k} ψ_m`, written into `out`.
pub fn combine_into(psis: &[DVector<f64>], c: &CombinationMatrix, k: usize, out: &mut DVector<f64>) {
    out.fill(0.0);
    for &(m, w) in c.column(k) {
        out.axpy(w, &psis[m], 1.0);
    }
}

pub fn combine(psis: &[DVector<f64>], c: &CombinationMatrix, k: usize) -> DVector<f64> {
    let mut out = DVector::zeros(psis[k].len());
    combine_into(psis, c, k, &mut out);
    out
}

pub fn dlms_adapt(w_prev: &DVector<f64>, u: &DVector<f64>, e: f64, mu: f64) -> DVector<f64> {
    let mut psi = w_prev.clone();
    psi.axpy(mu * e, u, 1.0);
    psi
}

/// Sign with `sign(0) = 0`.
pub fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn dselms_adapt(w_prev: &DVector<f64>, u: &DVector<f64>, e: f64, mu: f64) -> DVector<f64> {
    dlms_adapt(w_prev, u, sign0(e), mu)
}

/// Initial bound `ξ(0) = E_c σ²_d / (M σ²_u)`.
pub fn xi_init(e_c: f64, sigma_d2: f64, sigma_u2: f64, m: usize) -> Result<f64> {
    if !(sigma_u2 > 0.0) || m == 0 {
        return Err(Error::param(format!("bound initialization needs σ²_u > 0 and M > 0 (got {sigma_u2}, {m})")));
    }
    Ok(e_c * sigma_d2 / (m as f64 * sigma_u2))
}
