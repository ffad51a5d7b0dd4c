use nalgebra::{DMatrix, DVector};

use super::nc::{NcDecision, NcState};
use super::{bound_combine, bound_local, rdrls_scale, rls_gain_in_place, sign0, AlgParams, Algorithm};
use crate::dcd::{bound_update_dcd, dcd_drls_step, dcd_rdrls_step, DcdWorkspace};
use crate::error::{Error, Result};
use crate::netgraph::CombinationMatrix;

/// Adaptive state of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    /// Combined estimate `w_{k,i}`.
    pub w: DVector<f64>,
    /// Intermediate estimate `ψ_{k,i}` of the latest instant.
    pub psi: DVector<f64>,
    /// Inverse correlation `P_{k,i}` (RLS variants only).
    pub p: Option<DMatrix<f64>>,
    /// DCD solver state (DCD variants only).
    pub dcd: Option<DcdWorkspace>,
    /// Diffused bound `ξ_k(i)`; `+∞` disables the constraint.
    pub xi: f64,
    /// Local bound `ζ_k(i)` sent to neighbors.
    pub zeta: f64,
    /// `ξ_k(0)`, restored by the non-stationarity control.
    pub xi0: f64,
    pub nc: Option<NcState>,
}

/// What happened at one node during the latest instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NodeReport {
    /// A-priori error `e_k(i)`.
    pub e: f64,
    /// `‖ψ_{k,i} − w_{k,i−1}‖²` (equals `‖Δŵ‖²` for DCD variants).
    pub increment_norm2: f64,
    /// `ξ_k(i−1)` used by the constraint.
    pub xi_prev: f64,
    /// DCD variants: the constraint forced a rescaled re-solve.
    pub kappa: bool,
    /// The non-stationarity control re-initialized this node.
    pub reset: bool,
    /// Solver additions spent (DCD variants).
    pub adds: u64,
}

/// A diffusion network running one algorithm.
#[derive(Debug, Clone)]
pub struct Network {
    alg: Algorithm,
    params: AlgParams,
    c: CombinationMatrix,
    nodes: Vec<NodeState>,
    windows: Option<(usize, usize)>,
    reports: Vec<NodeReport>,
    zetas: Vec<f64>,
    next_w: Vec<DVector<f64>>,
    pu: DVector<f64>,
    g: DVector<f64>,
    resets: u64,
}

impl Network {
    /// Zero initial estimates, `P = δ⁻¹I` / `Φ = δI`, and per-node `ξ(0)`.
    pub fn new(alg: Algorithm, params: AlgParams, c: CombinationMatrix, m: usize, xi0: &[f64]) -> Result<Self> {
        let n = c.n_nodes();
        if xi0.len() != n {
            return Err(Error::Dimension { context: "initial bounds", expected: n, got: xi0.len() });
        }
        if m == 0 {
            return Err(Error::param("estimate dimension must be positive"));
        }
        if alg.uses_inverse() || alg.uses_dcd() {
            params.rls.validate()?;
        }
        if matches!(alg, Algorithm::Dlms | Algorithm::Dselms) && !(params.mu > 0.0) {
            return Err(Error::param(format!("LMS step size must be positive, got {}", params.mu)));
        }
        if alg.uses_dcd() {
            params.dcd.validate()?;
        }
        let windows = if alg.uses_nc() { Some(params.nc.windows(m)?) } else { None };
        if alg.is_robust() {
            if let Some(x) = xi0.iter().find(|x| !(**x >= 0.0)) {
                return Err(Error::param(format!("initial bound must be ≥ 0, got {x}")));
            }
        }
        let nodes = xi0
            .iter()
            .map(|&x0| {
                let x0 = if alg.is_robust() { x0 } else { f64::INFINITY };
                NodeState {
                    w: DVector::zeros(m),
                    psi: DVector::zeros(m),
                    p: alg.uses_inverse().then(|| DMatrix::identity(m, m) / params.rls.delta),
                    dcd: alg.uses_dcd().then(|| DcdWorkspace::new(m, params.rls.delta)),
                    xi: x0,
                    zeta: x0,
                    xi0: x0,
                    nc: windows.map(|(vt, _)| NcState::new(vt)),
                }
            })
            .collect();
        Ok(Self {
            alg,
            params,
            c,
            nodes,
            windows,
            reports: vec![NodeReport::default(); n],
            zetas: vec![0.0; n],
            next_w: vec![DVector::zeros(m); n],
            pu: DVector::zeros(m),
            g: DVector::zeros(m),
            resets: 0,
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.alg
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> &NodeState {
        &self.nodes[k]
    }

    pub fn combination(&self) -> &CombinationMatrix {
        &self.c
    }

    /// Per-node reports of the latest [`step`](Self::step).
    pub fn reports(&self) -> &[NodeReport] {
        &self.reports
    }

    /// NC re-initializations so far, summed over nodes.
    pub fn resets(&self) -> u64 {
        self.resets
    }

    pub fn max_xi(&self) -> f64 {
        self.nodes.iter().map(|n| n.xi).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Runs instant `i ≥ 1` with regressors `us[k]` and measurements `ds[k]`.
    pub fn step(&mut self, i: usize, us: &[DVector<f64>], ds: &[f64]) -> Result<()> {
        let n = self.nodes.len();
        if us.len() != n || ds.len() != n {
            return Err(Error::Dimension { context: "network step", expected: n, got: us.len().min(ds.len()) });
        }
        for k in 0..n {
            self.adapt(k, &us[k], ds[k])?;
        }
        if let Some((vt, vd)) = self.windows {
            if i > 0 && i % vt == 0 {
                self.nc_check(vd);
            }
        }
        for k in 0..n {
            let mut out = std::mem::take(&mut self.next_w[k]);
            combine_into_nodes(&self.nodes, &self.c, k, &mut out);
            self.next_w[k] = out;
            if self.alg.is_robust() {
                self.nodes[k].xi = bound_combine(&self.zetas, &self.c, k);
            }
        }
        for (node, w) in self.nodes.iter_mut().zip(self.next_w.iter_mut()) {
            std::mem::swap(&mut node.w, w);
        }
        Ok(())
    }

    fn adapt(&mut self, k: usize, u: &DVector<f64>, d: f64) -> Result<()> {
        let p = &self.params;
        let node = &mut self.nodes[k];
        if u.len() != node.w.len() {
            return Err(Error::Dimension { context: "regressor", expected: node.w.len(), got: u.len() });
        }
        let e = d - u.dot(&node.w);
        if !e.is_finite() {
            return Err(Error::NonFinite("a-priori error"));
        }
        let xi_prev = node.xi;
        let mut report = NodeReport { e, xi_prev, ..Default::default() };
        node.psi.copy_from(&node.w);
        let mut zeta = xi_prev;
        // The increment is measured on the update vector itself: forming ψ − w after
        // the fact would add the rounding of ψ, which dominates once ξ is tiny.
        report.increment_norm2 = match self.alg {
            Algorithm::Dlms | Algorithm::Dselms => {
                let step = if self.alg == Algorithm::Dlms { p.mu * e } else { p.mu * sign0(e) };
                node.psi.axpy(step, u, 1.0);
                step * step * u.norm_squared()
            }
            Algorithm::Drls | Algorithm::Rdrls | Algorithm::RdrlsNc => {
                let pm = node.p.as_mut().expect("RLS node keeps P");
                rls_gain_in_place(pm, u, p.rls.lambda, &mut self.pu, &mut self.g)?;
                let g_norm2 = self.g.norm_squared();
                let scale = if self.alg == Algorithm::Drls {
                    1.0
                } else {
                    zeta = bound_local(xi_prev, g_norm2 * e * e, p.rls.beta);
                    rdrls_scale(g_norm2.sqrt(), e, xi_prev)
                };
                node.psi.axpy(scale * e, &self.g, 1.0);
                (scale * e).powi(2) * g_norm2
            }
            Algorithm::DcdDrls | Algorithm::DcdRdrls | Algorithm::DcdRdrlsNc => {
                let ws = node.dcd.as_mut().expect("DCD node keeps a workspace");
                if self.alg == Algorithm::DcdDrls {
                    dcd_drls_step(ws, u, e, p.rls.lambda, &p.dcd, p.dcd_shift)?;
                } else {
                    report.kappa = dcd_rdrls_step(ws, u, e, p.rls.lambda, &p.dcd, p.dcd_shift, xi_prev)?;
                    zeta = bound_update_dcd(xi_prev, ws.dw.norm_squared(), p.rls.beta);
                }
                report.adds = ws.last_adds;
                node.psi += &ws.dw;
                ws.dw.norm_squared()
            }
        };
        if let Some(nc) = node.nc.as_mut() {
            nc.record(e, u.norm_squared());
        }
        node.zeta = zeta;
        self.zetas[k] = zeta;
        self.reports[k] = report;
        Ok(())
    }

    fn nc_check(&mut self, vd: usize) {
        let (vt, tau, t_th) = (self.windows.map_or(0, |w| w.0), self.params.nc.tau, self.params.nc.t_th);
        for node in &mut self.nodes {
            let nc = node.nc.as_mut().expect("NC node keeps NC state");
            if nc.is_full() {
                nc.refresh(vd, tau);
            }
        }
        let sigmas: Vec<f64> = self.nodes.iter().map(|n| n.nc.as_ref().map_or(0.0, |s| s.sigma_e2)).collect();
        let denom = (vt - vd) as f64;
        for k in 0..self.nodes.len() {
            let theta_new: f64 = self.c.column(k).iter().map(|&(m, w)| w * sigmas[m]).sum::<f64>() / denom;
            let node = &mut self.nodes[k];
            let nc = node.nc.as_mut().expect("NC node keeps NC state");
            if !nc.is_full() {
                continue;
            }
            let xi_prev = self.reports[k].xi_prev;
            match nc.decide(theta_new, xi_prev, t_th) {
                NcDecision::Reset => {
                    node.zeta = node.xi0;
                    if let Some(pm) = node.p.as_mut() {
                        pm.fill(0.0);
                        pm.fill_diagonal(1.0 / self.params.rls.delta);
                    }
                    if let Some(ws) = node.dcd.as_mut() {
                        ws.reset(self.params.rls.delta);
                    }
                    self.reports[k].reset = true;
                    self.resets += 1;
                }
                NcDecision::Raise(d) => node.zeta = xi_prev + d,
                NcDecision::Keep => {}
            }
            self.zetas[k] = node.zeta;
        }
    }
}

fn combine_into_nodes(nodes: &[NodeState], c: &CombinationMatrix, k: usize, out: &mut DVector<f64>) {
    out.resize_vertically_mut(nodes[k].psi.len(), 0.0);
    out.fill(0.0);
    for &(m, w) in c.column(k) {
        out.axpy(w, &nodes[m].psi, 1.0);
    }
}
