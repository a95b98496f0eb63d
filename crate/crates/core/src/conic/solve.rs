use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use serde::{Deserialize, Serialize};

use super::cone::{rotated_to_soc, ConeBlock};
use super::dual::{dot, dualize, DualPoint};
use super::program::ConicProgram;
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;
const MAX_ITER: u32 = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    NumericalFailure,
}

/// Scaled residuals: each is divided by 1 + the largest magnitude of the
/// data it is measured against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub dual: Option<DualPoint>,
    pub objective: f64,
    pub dual_objective: f64,
    pub iterations: u32,
    pub residuals: Residuals,
    pub diagnostic: String,
}

impl SolverSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Residuals of a candidate primal/dual pair against `p` at (γ, L).
pub fn residuals(p: &ConicProgram, x: &[f64], y: &DualPoint, gamma: &[f64], status: &[f64]) -> Residuals {
    let b = p.b.eval(gamma, status);
    let d = p.d.eval(gamma, status);
    let rhs_scale = 1.0 + inf_norm(&b).max(inf_norm(&d));
    let primal = p.primal_residual(x, gamma, status) / rhs_scale;
    let dp = dualize(p).expect("well-formed program");
    let dual = dp.infeasibility(y).unwrap_or(f64::INFINITY) / (1.0 + inf_norm(&p.h));
    let pobj = p.objective(x);
    let dobj = dot(&y.lambda, &b) + dot(&y.mu, &d);
    let gap = (pobj - dobj).abs() / (1.0 + pobj.abs());
    Residuals { primal, dual, gap }
}

/// Solve `p` at parameters (γ, L) with the embedded interior-point backend.
/// Errors only on malformed input; solver outcomes are reported by status.
pub fn solve_conic(p: &ConicProgram, gamma: &[f64], status: &[f64], tol: f64) -> Result<SolverSolution> {
    p.check_params(gamma, status)?;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let n = p.n_vars();
    let m_eq = p.n_eq();
    let m_in = p.n_ineq();
    let b = p.b.eval(gamma, status);
    let d = p.d.eval(gamma, status);

    // Rows: [A; C; nonneg blocks; soc blocks], with slack in Zero, Nonneg, SOC.
    let mut ti = Vec::new();
    let mut tj = Vec::new();
    let mut tv = Vec::new();
    let mut rhs = Vec::with_capacity(m_eq + m_in + n);
    for (r, c, v) in p.a.triplets() {
        ti.push(r);
        tj.push(c);
        tv.push(v);
    }
    rhs.extend(b.iter().map(|v| -v));
    for (r, c, v) in p.c.triplets() {
        ti.push(m_eq + r);
        tj.push(c);
        tv.push(v);
    }
    rhs.extend(d.iter().map(|v| -v));
    let mut row = m_eq + m_in;
    let mut n_nonneg = m_in;
    let mut socs = Vec::new();
    let mut block_rows: Vec<(ConeBlock, std::ops::Range<usize>, usize)> = Vec::new();
    for (blk, r) in p.cone.iter_ranges() {
        if let ConeBlock::Nonneg(k) = blk {
            for (o, j) in r.clone().enumerate() {
                ti.push(row + o);
                tj.push(j);
                tv.push(-1.0);
            }
            block_rows.push((blk, r, row));
            row += k;
            n_nonneg += k;
            rhs.extend(std::iter::repeat(0.0).take(k));
        }
    }
    for (blk, r) in p.cone.iter_ranges() {
        match blk {
            ConeBlock::Soc(_) => {
                for (o, j) in r.clone().enumerate() {
                    ti.push(row + o);
                    tj.push(j);
                    tv.push(-1.0);
                }
            }
            ConeBlock::RotatedSoc(k) => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let (u, v) = (r.start, r.start + 1);
                for (rr, cc, vv) in [(0, u, s), (0, v, s), (1, u, s), (1, v, -s)] {
                    ti.push(row + rr);
                    tj.push(cc);
                    tv.push(-vv);
                }
                for o in 2..k {
                    ti.push(row + o);
                    tj.push(r.start + o);
                    tv.push(-1.0);
                }
            }
            _ => continue,
        }
        let k = blk.dim();
        socs.push(k);
        block_rows.push((blk, r, row));
        row += k;
        rhs.extend(std::iter::repeat(0.0).take(k));
    }
    let m = row;
    let a_cl = CscMatrix::new_from_triplets(m, n, ti, tj, tv);
    let p_cl = CscMatrix::zeros((n, n));
    let mut cones = Vec::new();
    if m_eq > 0 {
        cones.push(SupportedConeT::ZeroConeT(m_eq));
    }
    if n_nonneg > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(n_nonneg));
    }
    cones.extend(socs.into_iter().map(SupportedConeT::SecondOrderConeT));

    let inner = (0.1 * tol).max(1e-10);
    let settings = DefaultSettings {
        verbose: false,
        max_iter: MAX_ITER,
        tol_gap_abs: inner,
        tol_gap_rel: inner,
        tol_feas: inner,
        tol_ktratio: inner.min(1e-6),
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(&p_cl, &p.h, &a_cl, &rhs, &cones, settings)
        .map_err(|e| Error::Solver(format!("backend rejected the problem: {e:?}")))?;
    solver.solve();
    let sol = &solver.solution;

    let x = sol.x.clone();
    let z = &sol.z;
    let mut s_dual = vec![0.0; n];
    for (blk, r, start) in &block_rows {
        let zb = &z[*start..*start + blk.dim()];
        let sb = match blk {
            ConeBlock::RotatedSoc(_) => rotated_to_soc(zb),
            _ => zb.to_vec(),
        };
        s_dual[r.clone()].copy_from_slice(&sb);
    }
    let y = DualPoint {
        lambda: z[..m_eq].to_vec(),
        mu: z[m_eq..m_eq + m_in].to_vec(),
        s: s_dual,
    };
    let res = residuals(p, &x, &y, gamma, status);
    let objective = p.objective(&x);
    let dual_objective = dot(&y.lambda, &b) + dot(&y.mu, &d);
    let ok = res.primal <= tol && res.gap <= tol;
    let (st, diagnostic) = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved if ok => (SolveStatus::Optimal, String::new()),
        SolverStatus::Solved | SolverStatus::AlmostSolved => (
            SolveStatus::NumericalFailure,
            format!("backend reported {:?} but residuals {:?} miss {tol:e}", sol.status, res),
        ),
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            (SolveStatus::Infeasible, String::new())
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            (SolveStatus::Unbounded, String::new())
        }
        SolverStatus::MaxIterations | SolverStatus::MaxTime => (
            SolveStatus::IterationLimit,
            format!("stopped after {} iterations, residuals {:?}", sol.iterations, res),
        ),
        other => (
            SolveStatus::NumericalFailure,
            format!("backend status {other:?} after {} iterations, residuals {:?}", sol.iterations, res),
        ),
    };
    let optimal = st == SolveStatus::Optimal;
    Ok(SolverSolution {
        status: st,
        x,
        dual: optimal.then_some(y),
        objective: if optimal { objective } else { f64::NAN },
        dual_objective: if optimal { dual_objective } else { f64::NAN },
        iterations: sol.iterations,
        residuals: res,
        diagnostic,
    })
}

/// Primal optimum minus the dual objective of `y`. A dual-feasible point
/// gives a lower bound, so the margin is nonnegative up to solver tolerance.
/// Returns +∞ when the primal is infeasible.
pub fn weak_duality_check(
    p: &ConicProgram,
    y: &DualPoint,
    gamma: &[f64],
    status: &[f64],
    tol: f64,
) -> Result<f64> {
    p.check_params(gamma, status)?;
    let dp = dualize(p)?;
    let infeas = dp.infeasibility(y)?;
    if infeas > tol * (1.0 + inf_norm(&p.h)) {
        return Err(Error::Domain(format!("dual point infeasible by {infeas:e}")));
    }
    let sol = solve_conic(p, gamma, status, DEFAULT_TOL)?;
    match sol.status {
        SolveStatus::Optimal => Ok(sol.objective - dp.objective(y, gamma, status)),
        SolveStatus::Infeasible => Ok(f64::INFINITY),
        other => Err(Error::Solver(format!("primal solve ended with {other:?}: {}", sol.diagnostic))),
    }
}
