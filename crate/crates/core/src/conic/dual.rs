use serde::{Deserialize, Serialize};

use super::cone::{ConeBlock, ConeSpec};
use super::program::{AffineMap, ConicProgram, Expr, ProgramBuilder};
use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

/// Multipliers for a conic program: λ per equality row, μ per inequality
/// row, s per primal variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPoint {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub s: Vec<f64>,
}

impl DualPoint {
    pub fn zeros(p: &ConicProgram) -> Self {
        DualPoint {
            lambda: vec![0.0; p.n_eq()],
            mu: vec![0.0; p.n_ineq()],
            s: vec![0.0; p.n_vars()],
        }
    }
}

/// max λᵀb(γ,L) + μᵀd(γ,L)  s.t.  h + Aᵀλ + Cᵀμ − s = 0,  μ ≥ 0,  s ∈ K*
///
/// The cones in use are self-dual, so K* reuses K's blocks; slack entries
/// under free blocks are pinned to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualProgram {
    pub h: Vec<f64>,
    pub a: SparseMatrix,
    pub b: AffineMap,
    pub c: SparseMatrix,
    pub d: AffineMap,
    pub dual_cone: ConeSpec,
    pub zero_s: Vec<usize>,
    pub n_gamma: usize,
    pub n_status: usize,
}

pub fn dualize(p: &ConicProgram) -> Result<DualProgram> {
    p.check()?;
    Ok(DualProgram {
        h: p.h.clone(),
        a: p.a.clone(),
        b: p.b.clone(),
        c: p.c.clone(),
        d: p.d.clone(),
        dual_cone: p.cone.clone(),
        zero_s: p.cone.free_indices(),
        n_gamma: p.n_gamma,
        n_status: p.n_status,
    })
}

impl DualProgram {
    pub fn n_lambda(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_mu(&self) -> usize {
        self.c.nrows()
    }
    pub fn n_s(&self) -> usize {
        self.h.len()
    }

    fn check_point(&self, y: &DualPoint) -> Result<()> {
        if y.lambda.len() != self.n_lambda() || y.mu.len() != self.n_mu() || y.s.len() != self.n_s() {
            return Err(Error::Dimension(format!(
                "dual point has lengths {}/{}/{}, expected {}/{}/{}",
                y.lambda.len(),
                y.mu.len(),
                y.s.len(),
                self.n_lambda(),
                self.n_mu(),
                self.n_s()
            )));
        }
        Ok(())
    }

    pub fn objective(&self, y: &DualPoint, gamma: &[f64], status: &[f64]) -> f64 {
        dot(&y.lambda, &self.b.eval(gamma, status)) + dot(&y.mu, &self.d.eval(gamma, status))
    }

    /// h + Aᵀλ + Cᵀμ − s
    pub fn stationarity(&self, y: &DualPoint) -> Vec<f64> {
        let at = self.a.tr_mul_vec(&y.lambda);
        let ct = self.c.tr_mul_vec(&y.mu);
        (0..self.n_s())
            .map(|j| self.h[j] + at[j] + ct[j] - y.s[j])
            .collect()
    }

    /// Largest violation among stationarity, μ ≥ 0, s ∈ K* and the pinned
    /// slacks.
    pub fn infeasibility(&self, y: &DualPoint) -> Result<f64> {
        self.check_point(y)?;
        let stat = self.stationarity(y).iter().fold(0.0_f64, |m, r| m.max(r.abs()));
        let mu = y.mu.iter().fold(0.0_f64, |m, v| m.max(-v));
        let zero = self.zero_s.iter().fold(0.0_f64, |m, &j| m.max(y.s[j].abs()));
        Ok(stat.max(mu).max(zero).max(self.dual_cone.violation(&y.s)))
    }

    /// ∂/∂γ and ∂/∂L of the dual objective at fixed multipliers.
    pub fn parameter_gradient(&self, y: &DualPoint) -> (Vec<f64>, Vec<f64>) {
        let mut g = self.b.gamma_tr_mul(&y.lambda);
        let mut l = self.b.status_tr_mul(&y.lambda);
        for (a, b) in g.iter_mut().zip(self.d.gamma_tr_mul(&y.mu)) {
            *a += b;
        }
        for (a, b) in l.iter_mut().zip(self.d.status_tr_mul(&y.mu)) {
            *a += b;
        }
        (g, l)
    }

    /// The dual at fixed (γ, L), written as a minimization
    /// min −(bᵀλ + dᵀμ) over variables [λ | μ | s].
    pub fn as_primal(&self, gamma: &[f64], status: &[f64]) -> Result<ConicProgram> {
        if gamma.len() != self.n_gamma || status.len() != self.n_status {
            return Err(Error::Dimension("parameter lengths do not match the dual program".into()));
        }
        let b = self.b.eval(gamma, status);
        let d = self.d.eval(gamma, status);
        let mut bld = ProgramBuilder::new(0, 0);
        let lam: Vec<usize> = (0..self.n_lambda()).map(|i| bld.free(format!("lambda[{i}]"))).collect();
        let mu = if self.n_mu() > 0 {
            bld.block(
                ConeBlock::Nonneg(self.n_mu()),
                (0..self.n_mu()).map(|i| format!("mu[{i}]")).collect(),
            )
        } else {
            Vec::new()
        };
        let mut s = Vec::with_capacity(self.n_s());
        for (blk, r) in self.dual_cone.iter_ranges() {
            let names = r.clone().map(|j| format!("s[{j}]")).collect();
            s.extend(bld.block(blk, names));
        }
        for (i, v) in lam.iter().enumerate() {
            bld.cost(*v, -b[i]);
        }
        for (i, v) in mu.iter().enumerate() {
            bld.cost(*v, -d[i]);
        }
        let mut rows: Vec<Expr> = (0..self.n_s())
            .map(|j| Expr::new().constant(self.h[j]).term(s[j], -1.0))
            .collect();
        for (i, j, v) in self.a.triplets() {
            rows[j].terms.push((lam[i], v));
        }
        for (i, j, v) in self.c.triplets() {
            rows[j].terms.push((mu[i], v));
        }
        for (j, e) in rows.into_iter().enumerate() {
            bld.eq(format!("stationarity[{j}]"), e);
        }
        for &j in &self.zero_s {
            bld.eq(format!("s_zero[{j}]"), Expr::var(s[j]));
        }
        bld.build()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
