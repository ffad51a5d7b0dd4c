//! Semi-analytic evolution of the network deviation covariance.
//!
//! The model propagates `W_i = E{w̃_i w̃_iᵀ}` (size `NM×NM`) driven by ensemble
//! averages `E{ξ_k(i)}`, `E{ζ_k(i)}` taken from simulation. Per step, with
//! `a_k = χ_k ϖ_k Ω_k`:
//!
//! ```text
//! X_mk = W_mk (1 − a_m)(1 − a_k)            m ≠ k
//! X_kk = W_kk (1 − 2 a_k) + Ω_k² B_k
//! W_i  = 𝒞ᵀ X 𝒞,  𝒞 = C ⊗ I_M
//! ```
//!
//! which is the block form of `𝒞ᵀ[W − WD − DW + D(W − W̆)D + R̆]𝒞`, `D = diag(a) ⊗ I`.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{breve_base, estimate_chi, msd_from_w, varpi_from_trace};
use crate::error::{Error, Result};
use crate::netgraph::CombinationMatrix;

/// Normalization of the per-node second-order term `R̆_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BreveVariant {
    /// Divide by `√(uᵀR⁻²u)`.
    Literal,
    /// Divide by `uᵀR⁻²u`, so that `Tr R̆_k = Ω_k²`, the squared norm of the
    /// normalized increment.
    #[default]
    Normalized,
}

impl std::str::FromStr for BreveVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(Self::Literal),
            "normalized" => Ok(Self::Normalized),
            other => Err(Error::config(format!("unknown R̆ variant `{other}` (literal|normalized)"))),
        }
    }
}

/// Contaminated-Gaussian parameters of one node, as seen by the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryNoise {
    pub pr: f64,
    pub hbar: f64,
    pub var_theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheorySettings {
    /// Monte-Carlo samples for χ_k and R̆_k.
    pub n_samples: usize,
    pub breve: BreveVariant,
    pub beta: f64,
}

impl Default for TheorySettings {
    fn default() -> Self {
        Self { n_samples: 100_000, breve: BreveVariant::default(), beta: 0.97 }
    }
}

/// Ensemble averages `E{ξ_k(i)}`, `E{ζ_k(i)}` for `i = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct XiTrace {
    pub n_nodes: usize,
    /// Row-major `(iteration, node)`.
    pub e_xi: Vec<f64>,
    pub e_zeta: Vec<f64>,
}

impl XiTrace {
    pub fn new(n_nodes: usize) -> Self {
        Self { n_nodes, e_xi: Vec::new(), e_zeta: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.e_xi.len() / self.n_nodes.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.e_xi.is_empty()
    }

    pub fn xi(&self, i: usize, k: usize) -> f64 {
        self.e_xi[i * self.n_nodes + k]
    }

    pub fn zeta(&self, i: usize, k: usize) -> f64 {
        self.e_zeta[i * self.n_nodes + k]
    }

    /// Parses the `iter,node,e_xi,e_zeta` CSV (1-based nodes, `#` comments allowed).
    pub fn read_csv(path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| err(0, e.to_string()))?;
        let header = rdr.headers().map_err(|e| err(0, e.to_string()))?.clone();
        if header.iter().collect::<Vec<_>>() != ["iter", "node", "e_xi", "e_zeta"] {
            return Err(err(1, format!("expected header `iter,node,e_xi,e_zeta`, got `{}`", header.iter().collect::<Vec<_>>().join(","))));
        }
        let mut rows: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let field = |i: usize| rec.get(i).unwrap_or("");
            let int = |i: usize| field(i).parse::<usize>().map_err(|_| err(line, format!("bad integer `{}`", field(i))));
            let num = |i: usize| field(i).parse::<f64>().map_err(|_| err(line, format!("bad number `{}`", field(i))));
            let (iter, node) = (int(0)?, int(1)?);
            if node == 0 {
                return Err(err(line, "nodes are 1-based".into()));
            }
            rows.insert((iter, node - 1), (num(2)?, num(3)?));
        }
        let n_nodes = rows.keys().map(|&(_, k)| k + 1).max().unwrap_or(0);
        let n_iters = rows.keys().map(|&(i, _)| i + 1).max().unwrap_or(0);
        if n_nodes == 0 || rows.len() != n_nodes * n_iters {
            return Err(err(0, format!("trace is not a full iteration × node grid ({} rows)", rows.len())));
        }
        let mut out = XiTrace::new(n_nodes);
        for (_, (x, z)) in rows {
            out.e_xi.push(x);
            out.e_zeta.push(z);
        }
        Ok(out)
    }
}

/// Deviation-covariance model for the robust diffusion RLS.
#[derive(Debug, Clone)]
pub struct TheoryModel {
    c: CombinationMatrix,
    m: usize,
    r: Vec<DMatrix<f64>>,
    noise: Vec<TheoryNoise>,
    chi: Vec<f64>,
    breve: Vec<DMatrix<f64>>,
    beta: f64,
    w: DMatrix<f64>,
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    clamped: u64,
}

impl TheoryModel {
    /// Estimates χ_k and the R̆_k bases once, and starts from zero estimates at every
    /// node: `W_0 = (11ᵀ) ⊗ w°w°ᵀ`.
    pub fn new<R: Rng + ?Sized>(
        c: CombinationMatrix,
        r: Vec<DMatrix<f64>>,
        noise: Vec<TheoryNoise>,
        w_true: &DVector<f64>,
        settings: TheorySettings,
        rng: &mut R,
    ) -> Result<Self> {
        let n = c.n_nodes();
        let m = w_true.len();
        if m < 2 {
            // E{1/|R⁻¹u|} diverges for a scalar Gaussian regressor.
            return Err(Error::param("the covariance model needs M ≥ 2"));
        }
        if r.len() != n || noise.len() != n {
            return Err(Error::Dimension { context: "theory node data", expected: n, got: r.len().min(noise.len()) });
        }
        if let Some(bad) = r.iter().find(|rk| rk.nrows() != m || rk.ncols() != m) {
            return Err(Error::Dimension { context: "theory covariance", expected: m, got: bad.nrows() });
        }
        if !(settings.beta > 0.0 && settings.beta < 1.0) {
            return Err(Error::param(format!("β must be in (0, 1), got {}", settings.beta)));
        }
        if let Some(nz) = noise.iter().find(|z| !(z.var_theta > 0.0) || !(0.0..=1.0).contains(&z.pr)) {
            return Err(Error::param(format!("invalid theory noise parameters {nz:?}")));
        }
        let mut chi = Vec::with_capacity(n);
        let mut breve = Vec::with_capacity(n);
        for rk in &r {
            chi.push(estimate_chi(rk, settings.n_samples.max(2), rng)?.0);
            breve.push(breve_base(rk, settings.n_samples.max(1), settings.breve, rng)?);
        }
        let nm = n * m;
        let wwt = w_true * w_true.transpose();
        let mut w = DMatrix::zeros(nm, nm);
        for a in 0..n {
            for b in 0..n {
                w.view_mut((a * m, b * m), (m, m)).copy_from(&wwt);
            }
        }
        Ok(Self {
            c,
            m,
            r,
            noise,
            chi,
            breve,
            beta: settings.beta,
            w,
            x: DMatrix::zeros(nm, nm),
            y: DMatrix::zeros(nm, nm),
            clamped: 0,
        })
    }

    /// Replaces the current covariance.
    pub fn set_w(&mut self, w: DMatrix<f64>) -> Result<()> {
        if w.shape() != self.w.shape() {
            return Err(Error::Dimension { context: "theory covariance W", expected: self.w.nrows(), got: w.nrows() });
        }
        self.w = w;
        Ok(())
    }

    /// Overrides the Monte-Carlo ingredients (tests and reuse across runs).
    pub fn set_ingredients(&mut self, chi: Vec<f64>, breve: Vec<DMatrix<f64>>) -> Result<()> {
        let n = self.c.n_nodes();
        if chi.len() != n || breve.len() != n {
            return Err(Error::Dimension { context: "theory ingredients", expected: n, got: chi.len() });
        }
        self.chi = chi;
        self.breve = breve;
        Ok(())
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn chi(&self) -> &[f64] {
        &self.chi
    }

    pub fn n_nodes(&self) -> usize {
        self.c.n_nodes()
    }

    /// Times a negative `Ω²` radicand was clamped to zero.
    pub fn clamped(&self) -> u64 {
        self.clamped
    }

    /// `Ω_k = √((E{ζ_k(i)} − βE{ξ_k(i−1)})/(1−β))`, negative radicands clamped.
    pub fn omega(&mut self, e_zeta: f64, e_xi_prev: f64) -> f64 {
        let rad = (e_zeta - self.beta * e_xi_prev) / (1.0 - self.beta);
        if rad < 0.0 {
            if self.clamped == 0 {
                log::warn!("negative Ω² radicand {rad:.3e} clamped to zero (further occurrences counted silently)");
            }
            self.clamped += 1;
            0.0
        } else {
            rad.sqrt()
        }
    }

    /// One step given per-node `E{ζ_k(i)}` and `E{ξ_k(i−1)}`.
    pub fn step(&mut self, e_zeta: &[f64], e_xi_prev: &[f64]) -> Result<()> {
        let n = self.c.n_nodes();
        if e_zeta.len() != n || e_xi_prev.len() != n {
            return Err(Error::Dimension { context: "theory step", expected: n, got: e_zeta.len() });
        }
        let omegas: Vec<f64> = (0..n).map(|k| self.omega(e_zeta[k], e_xi_prev[k])).collect();
        self.step_with_omega(&omegas)
    }

    /// One step with explicit `Ω_k` values.
    pub fn step_with_omega(&mut self, omegas: &[f64]) -> Result<()> {
        let (n, m) = (self.c.n_nodes(), self.m);
        if omegas.len() != n {
            return Err(Error::Dimension { context: "theory step", expected: n, got: omegas.len() });
        }
        let a: Vec<f64> = (0..n)
            .map(|k| {
                let wk = self.w.view((k * m, k * m), (m, m));
                let t = (wk * &self.r[k]).trace().max(0.0);
                let nz = self.noise[k];
                self.chi[k] * varpi_from_trace(t, nz.pr, nz.hbar, nz.var_theta) * omegas[k]
            })
            .collect();
        for bk in 0..n {
            for bm in 0..n {
                let mut dst = self.x.view_mut((bm * m, bk * m), (m, m));
                let src = self.w.view((bm * m, bk * m), (m, m));
                if bm == bk {
                    dst.copy_from(&src);
                    dst *= 1.0 - 2.0 * a[bk];
                    let w2 = omegas[bk] * omegas[bk];
                    dst.zip_apply(&self.breve[bk], |a, b| *a += w2 * b);
                } else {
                    dst.copy_from(&src);
                    dst *= (1.0 - a[bm]) * (1.0 - a[bk]);
                }
            }
        }
        // Y = 𝒞ᵀ X: block row p gathers block rows m ∈ N_p.
        self.y.fill(0.0);
        for p in 0..n {
            for &(mm, cw) in self.c.column(p) {
                let src = self.x.rows(mm * m, m).clone_owned();
                self.y.rows_mut(p * m, m).zip_apply(&src, |a, b| *a += cw * b);
            }
        }
        // W = Y 𝒞: block column q gathers block columns k ∈ N_q.
        self.w.fill(0.0);
        for q in 0..n {
            for &(k, cw) in self.c.column(q) {
                let src = self.y.columns(k * m, m).clone_owned();
                self.w.columns_mut(q * m, m).zip_apply(&src, |a, b| *a += cw * b);
            }
        }
        crate::diffusion::symmetrize(&mut self.w);
        if self.w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("theory covariance"));
        }
        Ok(())
    }

    /// Per-node and network MSD of the current covariance (linear).
    pub fn msd(&self) -> (Vec<f64>, f64) {
        msd_from_w(&self.w, self.c.n_nodes()).expect("model covariance has NM×NM shape")
    }

    /// Runs the model over a whole ξ/ζ trace. Returns per-node linear MSD rows for
    /// `i = 0..trace.len()−1`.
    pub fn run(&mut self, trace: &XiTrace) -> Result<Vec<Vec<f64>>> {
        let n = self.c.n_nodes();
        if trace.n_nodes != n {
            return Err(Error::Dimension { context: "ξ/ζ trace nodes", expected: n, got: trace.n_nodes });
        }
        let mut out = Vec::with_capacity(trace.len());
        out.push(self.msd().0);
        let mut zeta = vec![0.0; n];
        let mut xi_prev = vec![0.0; n];
        for i in 1..trace.len() {
            for k in 0..n {
                zeta[k] = trace.zeta(i, k);
                xi_prev[k] = trace.xi(i - 1, k);
            }
            self.step(&zeta, &xi_prev)?;
            out.push(self.msd().0);
        }
        Ok(out)
    }
}
