//! Non-stationarity control: detects an abrupt change of the target from a
//! trimmed, smoothed statistic of normalized a-priori errors and re-opens the
//! update bound.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NcParams {
    /// Window multiplier ϱ: `V_t = round(ϱ M)`.
    pub rho: f64,
    /// Smoothing factor τ of the trimmed error power.
    pub tau: f64,
    /// Detection threshold.
    pub t_th: f64,
}

impl Default for NcParams {
    fn default() -> Self {
        Self { rho: 3.0, tau: 0.96, t_th: 15.0 }
    }
}

impl NcParams {
    /// `(V_t, V_d)` for dimension `m`, with `V_d = floor(0.75 V_t)`.
    pub fn windows(&self, m: usize) -> Result<(usize, usize)> {
        if !(self.rho > 0.0) {
            return Err(Error::param(format!("NC window multiplier must be positive, got {}", self.rho)));
        }
        if !(self.tau >= 0.0 && self.tau < 1.0) {
            return Err(Error::param(format!("NC smoothing factor must be in [0, 1), got {}", self.tau)));
        }
        let vt = (self.rho * m as f64).round() as usize;
        let vd = (0.75 * vt as f64).floor() as usize;
        if vd == 0 || vd >= vt {
            return Err(Error::param(format!("NC windows need 0 < V_d < V_t, got V_t={vt}, V_d={vd}")));
        }
        Ok((vt, vd))
    }
}

/// Outcome of an NC check at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NcDecision {
    /// Change detected: `ζ ← ξ(0)` and the correlation state is re-initialized.
    Reset,
    /// Error statistic grew: `ζ ← ξ_prev + (Θ_new − Θ_old)`.
    Raise(f64),
    /// Keep the default local bound update.
    Keep,
}

/// Per-node NC memory.
#[derive(Debug, Clone, PartialEq)]
pub struct NcState {
    ring: Vec<f64>,
    head: usize,
    len: usize,
    sorted: Vec<f64>,
    pub sigma_e2: f64,
    pub theta_old: f64,
    pub theta_new: f64,
}

impl NcState {
    pub fn new(vt: usize) -> Self {
        Self {
            ring: vec![0.0; vt],
            head: 0,
            len: 0,
            sorted: Vec::with_capacity(vt),
            sigma_e2: 0.0,
            theta_old: 0.0,
            theta_new: 0.0,
        }
    }

    /// Records `e²/‖u‖²`; instants with a zero regressor are skipped.
    pub fn record(&mut self, e: f64, u_norm2: f64) {
        if u_norm2 > 0.0 {
            self.ring[self.head] = e * e / u_norm2;
            self.head = (self.head + 1) % self.ring.len();
            self.len = (self.len + 1).min(self.ring.len());
        }
    }

    pub fn is_full(&self) -> bool {
        self.len == self.ring.len()
    }

    /// Refreshes `σ²_e ← τσ²_e + (1−τ)·(sum of the V_t − V_d smallest ring entries)`.
    pub fn refresh(&mut self, vd: usize, tau: f64) {
        self.sorted.clear();
        self.sorted.extend_from_slice(&self.ring[..self.len]);
        self.sorted.sort_by(f64::total_cmp);
        let keep = self.len.saturating_sub(vd);
        let s: f64 = self.sorted[..keep].iter().sum();
        self.sigma_e2 = tau * self.sigma_e2 + (1.0 - tau) * s;
    }

    /// Decides the branch given the diffused statistic `theta_new`, then moves
    /// `Θ_old ← Θ_new`. A zero previous bound makes the ratio infinite and forces a reset.
    pub fn decide(&mut self, theta_new: f64, xi_prev: f64, t_th: f64) -> NcDecision {
        self.theta_new = theta_new;
        let diff = theta_new - self.theta_old;
        let ratio = if xi_prev > 0.0 {
            diff / xi_prev
        } else {
            log::warn!("NC check with a zero bound; forcing re-initialization");
            f64::INFINITY
        };
        let out = if ratio > t_th {
            NcDecision::Reset
        } else if diff > 0.0 {
            NcDecision::Raise(diff)
        } else {
            NcDecision::Keep
        };
        self.theta_old = theta_new;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_sizes() {
        assert_eq!(NcParams::default().windows(16).unwrap(), (48, 36));
        assert_eq!(NcParams { rho: 2.0, ..Default::default() }.windows(16).unwrap(), (32, 24));
        assert!(NcParams { rho: 0.05, ..Default::default() }.windows(16).is_err());
    }

    #[test]
    fn trimmed_statistic_discards_outliers() {
        let mut s = NcState::new(4);
        for (e, n) in [(1.0, 1.0), (100.0, 1.0), (2.0, 1.0), (0.0, 0.0), (1.0, 4.0)] {
            s.record(e, n);
        }
        assert!(s.is_full());
        // Ring {1, 10000, 4, 0.25}; keep the 4 − 2 smallest: 0.25 + 1.
        s.refresh(2, 0.5);
        assert!((s.sigma_e2 - 0.625).abs() < 1e-15);
    }

    #[test]
    fn branches() {
        let mut s = NcState::new(4);
        assert_eq!(s.decide(1.0, 0.01, 15.0), NcDecision::Reset);
        assert_eq!(s.decide(1.5, 1.0, 15.0), NcDecision::Raise(0.5));
        assert_eq!(s.decide(1.2, 1.0, 15.0), NcDecision::Keep);
        assert_eq!(s.theta_old, 1.2);
        assert_eq!(s.decide(1.2, 0.0, 15.0), NcDecision::Reset);
    }
}
