//! Local solver for smooth nonconvex programs
//!
//! ```text
//! min f(x)  s.t.  g_lo ≤ g(x) ≤ g_hi,  x_lo ≤ x ≤ x_hi
//! ```
//!
//! by a primal-dual log-barrier method: inequality rows get slacks, the
//! Newton system is factored with Bunch–Kaufman and regularized until its
//! inertia is right, and steps are accepted on an ℓ1 merit function.
//! Dense linear algebra throughout; the target size is a few hundred
//! variables.

mod ldl;

pub use ldl::{Inertia, Ldl};

use serde::{Deserialize, Serialize};

/// Problem callbacks. Matrices are dense and row-major.
pub trait Nlp {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>);
    /// Equal entries mark equality rows.
    fn con_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    fn constraints(&self, x: &[f64], out: &mut [f64]);
    /// m × n Jacobian.
    fn jacobian(&self, x: &[f64], out: &mut [f64]);
    /// n × n Hessian of σ f + Σ y_i g_i (full symmetric).
    fn hessian(&self, x: &[f64], sigma: f64, y: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlpOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub mu_init: f64,
    /// Relative push of the start point into the bound interior.
    pub bound_push: f64,
    /// Relative widening of every finite bound, so feasible sets with an
    /// empty interior (a load forced to zero by a generator limit) still
    /// have a barrier path.
    pub bound_relax: f64,
    pub acceptable_tol: f64,
    pub acceptable_iter: usize,
}

impl Default for NlpOptions {
    fn default() -> Self {
        NlpOptions {
            tol: 1e-8,
            max_iter: 500,
            mu_init: 0.1,
            bound_push: 1e-2,
            bound_relax: 1e-8,
            acceptable_tol: 1e-6,
            acceptable_iter: 15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NlpStatus {
    Solved,
    /// Every error stayed under `acceptable_tol` for `acceptable_iter`
    /// consecutive iterations without reaching `tol`.
    Acceptable,
    IterationLimit,
    /// Step search failed or the Newton system could not be regularized.
    Stalled,
    /// The iterates diverged or produced non-finite values.
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlpSolution {
    pub status: NlpStatus,
    pub x: Vec<f64>,
    /// Constraint multipliers, sign convention ∇f + Jᵀy − z_lo + z_hi = 0.
    pub y: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Max constraint or bound violation.
    pub primal_residual: f64,
    /// Scaled stationarity of the Lagrangian.
    pub dual_residual: f64,
}

const KAPPA_EPS: f64 = 10.0;
const KAPPA_SIGMA: f64 = 1e10;
const S_MAX: f64 = 100.0;
const ARMIJO: f64 = 1e-4;
const GAMMA_THETA: f64 = 1e-5;
const GAMMA_PHI: f64 = 1e-8;
const DELTA: f64 = 1.0;
const S_THETA: f64 = 1.1;
const S_PHI: f64 = 2.3;

struct Layout {
    n: usize,
    m: usize,
    /// Constraint rows with slacks and the slack's bounds.
    ineq: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Right-hand side of equality rows (0 for rows with slacks).
    rhs: Vec<f64>,
}

impl Layout {
    fn nw(&self) -> usize {
        self.n + self.ineq.len()
    }
}

struct State {
    w: Vec<f64>,
    y: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
}

struct Eval {
    f: f64,
    grad: Vec<f64>,
    /// c(w) = g(x) − rhs (equalities) or g(x) − s (slacked rows).
    c: Vec<f64>,
    jac: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn push_inside(v: f64, lo: f64, hi: f64, k: f64) -> f64 {
    let p_lo = k * lo.abs().max(1.0);
    let p_hi = k * hi.abs().max(1.0);
    let (mut a, mut b) = (lo + p_lo, hi - p_hi);
    if lo.is_finite() && hi.is_finite() {
        let width = k * (hi - lo);
        a = lo + p_lo.min(width);
        b = hi - p_hi.min(width);
        if a > b {
            return 0.5 * (lo + hi);
        }
    }
    if lo.is_finite() && v < a {
        a
    } else if hi.is_finite() && v > b {
        b
    } else {
        v
    }
}

fn evaluate(p: &dyn Nlp, lay: &Layout, w: &[f64], g: &mut [f64]) -> Eval {
    let (n, m) = (lay.n, lay.m);
    let x = &w[..n];
    let mut grad = vec![0.0; lay.nw()];
    p.gradient(x, &mut grad[..n]);
    p.constraints(x, g);
    let mut c: Vec<f64> = g.iter().zip(&lay.rhs).map(|(v, r)| v - r).collect();
    for (k, &row) in lay.ineq.iter().enumerate() {
        c[row] -= w[n + k];
    }
    let mut jx = vec![0.0; m * n];
    p.jacobian(x, &mut jx);
    let nw = lay.nw();
    let mut jac = vec![0.0; m * nw];
    for r in 0..m {
        jac[r * nw..r * nw + n].copy_from_slice(&jx[r * n..(r + 1) * n]);
    }
    for (k, &row) in lay.ineq.iter().enumerate() {
        jac[row * nw + n + k] = -1.0;
    }
    Eval {
        f: p.objective(x),
        grad,
        c,
        jac,
    }
}

fn jt_mul(jac: &[f64], m: usize, nw: usize, y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; nw];
    for r in 0..m {
        let yr = y[r];
        if yr != 0.0 {
            for (o, j) in out.iter_mut().zip(&jac[r * nw..(r + 1) * nw]) {
                *o += yr * j;
            }
        }
    }
    out
}

/// Stationarity, feasibility and complementarity errors at barrier μ
/// (μ = 0 for the overall optimality error).
fn errors(lay: &Layout, st: &State, ev: &Eval, mu: f64) -> (f64, f64, f64) {
    let nw = lay.nw();
    let mut r = jt_mul(&ev.jac, lay.m, nw, &st.y);
    for i in 0..nw {
        r[i] += ev.grad[i] - st.zl[i] + st.zu[i];
    }
    let nz: f64 = st.zl.iter().chain(&st.zu).map(|v| v.abs()).sum::<f64>();
    let n_b = st.zl.iter().chain(&st.zu).filter(|v| **v != 0.0).count().max(1);
    let s_d = (S_MAX.max((st.y.iter().map(|v| v.abs()).sum::<f64>() + nz) / (lay.m + n_b) as f64)) / S_MAX;
    let s_c = (S_MAX.max(nz / n_b as f64)) / S_MAX;
    let mut comp: f64 = 0.0;
    for i in 0..nw {
        if lay.lo[i].is_finite() {
            comp = comp.max(((st.w[i] - lay.lo[i]) * st.zl[i] - mu).abs());
        }
        if lay.hi[i].is_finite() {
            comp = comp.max(((lay.hi[i] - st.w[i]) * st.zu[i] - mu).abs());
        }
    }
    (inf_norm(&r) / s_d, inf_norm(&ev.c), comp / s_c)
}

fn barrier(lay: &Layout, w: &[f64], f: f64, mu: f64) -> f64 {
    let mut phi = f;
    for i in 0..lay.nw() {
        if lay.lo[i].is_finite() {
            phi -= mu * (w[i] - lay.lo[i]).ln();
        }
        if lay.hi[i].is_finite() {
            phi -= mu * (lay.hi[i] - w[i]).ln();
        }
    }
    phi
}

/// Largest step in (0, 1] keeping `v + α d` at least a fraction (1 − τ) of
/// its distance to the bounds.
fn max_step(v: &[f64], d: &[f64], lo: &[f64], hi: &[f64], tau: f64) -> f64 {
    let mut a: f64 = 1.0;
    for i in 0..v.len() {
        if d[i] < 0.0 && lo[i].is_finite() {
            a = a.min(-tau * (v[i] - lo[i]) / d[i]);
        }
        if d[i] > 0.0 && hi[i].is_finite() {
            a = a.min(tau * (hi[i] - v[i]) / d[i]);
        }
    }
    a
}

pub fn solve(p: &dyn Nlp, x0: &[f64], opts: &NlpOptions) -> NlpSolution {
    let (n, m) = (p.n(), p.m());
    assert_eq!(x0.len(), n, "start point has the wrong length");
    let (xl, xu) = p.var_bounds();
    let (gl, gu) = p.con_bounds();
    let mut ineq = Vec::new();
    let mut rhs = vec![0.0; m];
    let (mut lo, mut hi) = (xl.clone(), xu.clone());
    for r in 0..m {
        if gl[r] == gu[r] {
            rhs[r] = gl[r];
        } else {
            ineq.push(r);
            lo.push(gl[r]);
            hi.push(gu[r]);
        }
    }
    for v in lo.iter_mut().filter(|v| v.is_finite()) {
        *v -= opts.bound_relax * v.abs().max(1.0);
    }
    for v in hi.iter_mut().filter(|v| v.is_finite()) {
        *v += opts.bound_relax * v.abs().max(1.0);
    }
    let lay = Layout {
        n,
        m,
        ineq,
        lo,
        hi,
        rhs,
    };
    let nw = lay.nw();
    let mut g = vec![0.0; m];

    let mut w: Vec<f64> = (0..n).map(|i| push_inside(x0[i], lay.lo[i], lay.hi[i], opts.bound_push)).collect();
    p.constraints(&w, &mut g);
    for (k, &row) in lay.ineq.iter().enumerate() {
        w.push(push_inside(g[row], lay.lo[n + k], lay.hi[n + k], opts.bound_push));
    }
    let mut st = State {
        zl: lay.lo.iter().map(|l| if l.is_finite() { 1.0 } else { 0.0 }).collect(),
        zu: lay.hi.iter().map(|h| if h.is_finite() { 1.0 } else { 0.0 }).collect(),
        w,
        y: vec![0.0; m],
    };
    let mut mu = opts.mu_init;
    let mut filter: Vec<(f64, f64)> = Vec::new();
    let mut filter_mu = f64::NAN;
    let (mut theta_max, mut theta_min) = (f64::NAN, f64::NAN);
    let mut delta_last: f64 = 0.0;
    let mut h = vec![0.0; n * n];
    let dim = nw + m;

    let finish = |status: NlpStatus, st: &State, ev: &Eval, it: usize| {
        let (ed, ep, _) = errors(&lay, st, ev, 0.0);
        let bound_viol = (0..n).fold(0.0f64, |a, i| a.max(lay.lo[i] - st.w[i]).max(st.w[i] - lay.hi[i]));
        NlpSolution {
            status,
            x: st.w[..n].to_vec(),
            y: st.y.clone(),
            objective: ev.f,
            iterations: it,
            primal_residual: ep.max(bound_viol),
            dual_residual: ed,
        }
    };

    let mut ev = evaluate(p, &lay, &st.w, &mut g);
    let mut acceptable_run = 0;
    for it in 0..opts.max_iter {
        if !ev.f.is_finite() || ev.c.iter().any(|v| !v.is_finite()) {
            return finish(NlpStatus::NumericalFailure, &st, &ev, it);
        }
        let (ed, ep, ec) = errors(&lay, &st, &ev, 0.0);
        let err = ed.max(ep).max(ec);
        if err <= opts.tol {
            return finish(NlpStatus::Solved, &st, &ev, it);
        }
        acceptable_run = if err <= opts.acceptable_tol { acceptable_run + 1 } else { 0 };
        if opts.acceptable_iter > 0 && acceptable_run >= opts.acceptable_iter {
            return finish(NlpStatus::Acceptable, &st, &ev, it);
        }
        loop {
            let (a, b, c) = errors(&lay, &st, &ev, mu);
            if a.max(b).max(c) > KAPPA_EPS * mu || mu <= opts.tol / 10.0 {
                break;
            }
            mu = (opts.tol / 10.0).max((0.2 * mu).min(mu.powf(1.5)));
        }

        // Newton system.
        p.hessian(&st.w[..n], 1.0, &st.y, &mut h);
        let mut sigma = vec![0.0; nw];
        let mut grad_phi = ev.grad.clone();
        for i in 0..nw {
            if lay.lo[i].is_finite() {
                let d = st.w[i] - lay.lo[i];
                sigma[i] += st.zl[i] / d;
                grad_phi[i] -= mu / d;
            }
            if lay.hi[i].is_finite() {
                let d = lay.hi[i] - st.w[i];
                sigma[i] += st.zu[i] / d;
                grad_phi[i] += mu / d;
            }
        }
        let jty = jt_mul(&ev.jac, m, nw, &st.y);
        let mut r: Vec<f64> = (0..nw).map(|i| -(grad_phi[i] + jty[i])).collect();
        r.extend(ev.c.iter().map(|v| -v));

        let assemble = |dw: f64, dc: f64| {
            let mut k = vec![0.0; dim * dim];
            for i in 0..n {
                for j in 0..=i {
                    k[i * dim + j] = h[i * n + j];
                }
            }
            for i in 0..nw {
                k[i * dim + i] += sigma[i] + dw;
            }
            for row in 0..m {
                for j in 0..nw {
                    k[(nw + row) * dim + j] = ev.jac[row * nw + j];
                }
                k[(nw + row) * dim + nw + row] = -dc;
            }
            k
        };
        let mut delta_w = 0.0;
        let mut delta_c = 0.0;
        let mut tries = 0;
        let fact = loop {
            let f = Ldl::factor(dim, assemble(delta_w, delta_c), 1e-13);
            let inr = f.inertia();
            if inr.positive == nw && inr.negative == m && inr.zero == 0 {
                break Some(f);
            }
            tries += 1;
            if tries > 40 {
                break None;
            }
            if inr.zero > 0 && delta_c == 0.0 {
                delta_c = 1e-8 * mu.powf(0.25);
            }
            delta_w = if delta_w == 0.0 {
                if delta_last == 0.0 {
                    1e-4
                } else {
                    (delta_last / 3.0).max(1e-20)
                }
            } else if delta_last == 0.0 {
                100.0 * delta_w
            } else {
                8.0 * delta_w
            };
            if delta_w > 1e40 {
                break None;
            }
        };
        let Some(fact) = fact else {
            return finish(NlpStatus::Stalled, &st, &ev, it);
        };
        if delta_w > 0.0 {
            delta_last = delta_w;
        }
        let mut d = r.clone();
        fact.solve(&mut d);
        // One refinement sweep against the assembled system.
        {
            let kfull = assemble(delta_w, delta_c);
            let mut res = r.clone();
            for i in 0..dim {
                for j in 0..dim {
                    let kij = if i >= j { kfull[i * dim + j] } else { kfull[j * dim + i] };
                    res[i] -= kij * d[j];
                }
            }
            fact.solve(&mut res);
            for (a, b) in d.iter_mut().zip(&res) {
                *a += b;
            }
        }
        let tau = (1.0 - mu).max(0.99);
        let a_max = max_step(&st.w, &d[..nw], &lay.lo, &lay.hi, tau);

        // Filter line search: a trial point is taken if it cuts either the
        // constraint violation θ or the barrier objective φ enough and is
        // not dominated by an earlier iterate. When the iterate is nearly
        // feasible and d is a descent direction for φ, an Armijo decrease in
        // φ is required instead. One second-order correction is tried when
        // the full step is rejected.
        if filter_mu != mu {
            filter.clear();
            filter_mu = mu;
        }
        let theta0: f64 = ev.c.iter().map(|v| v.abs()).sum();
        if theta_max.is_nan() {
            theta_max = 1e4 * theta0.max(1.0);
            theta_min = 1e-4 * theta0.max(1.0);
        }
        let phi0 = barrier(&lay, &st.w, ev.f, mu);
        let slope = dot(&grad_phi, &d[..nw]);
        let switching = |alpha: f64| slope < 0.0 && alpha * (-slope).powf(S_PHI) > DELTA * theta0.powf(S_THETA);
        let filter_ok = |theta: f64, phi: f64| theta <= theta_max && filter.iter().all(|&(t, f)| theta < t || phi < f);
        // Returns Some(is_f_type) when the trial point is acceptable.
        let acceptable = |alpha: f64, w: &[f64], tev: &Eval| -> Option<bool> {
            let theta: f64 = tev.c.iter().map(|v| v.abs()).sum();
            let phi = barrier(&lay, w, tev.f, mu);
            if !(theta.is_finite() && phi.is_finite()) || !filter_ok(theta, phi) {
                return None;
            }
            if theta0 <= theta_min && switching(alpha) {
                (phi <= phi0 + ARMIJO * alpha * slope).then_some(true)
            } else {
                (theta <= (1.0 - GAMMA_THETA) * theta0 || phi <= phi0 - GAMMA_PHI * theta0).then_some(false)
            }
        };
        let mut alpha = a_max;
        let mut accepted = None;
        let mut trial_w = vec![0.0; nw];
        for k in 0..40 {
            for i in 0..nw {
                trial_w[i] = st.w[i] + alpha * d[i];
            }
            let tev = evaluate(p, &lay, &trial_w, &mut g);
            if let Some(f_type) = acceptable(alpha, &trial_w, &tev) {
                accepted = Some((tev, f_type));
                break;
            }
            let theta: f64 = tev.c.iter().map(|v| v.abs()).sum();
            if k == 0 && theta.is_finite() && theta >= theta0 {
                let mut ds = r.clone();
                for i in 0..m {
                    ds[nw + i] = -(alpha * ev.c[i] + tev.c[i]);
                }
                fact.solve(&mut ds);
                let a_soc = max_step(&st.w, &ds[..nw], &lay.lo, &lay.hi, tau);
                let w_soc: Vec<f64> = (0..nw).map(|i| st.w[i] + a_soc * ds[i]).collect();
                let sev = evaluate(p, &lay, &w_soc, &mut g);
                if let Some(f_type) = acceptable(alpha, &w_soc, &sev) {
                    d = ds;
                    alpha = a_soc;
                    trial_w = w_soc;
                    accepted = Some((sev, f_type));
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                break;
            }
        }
        let accepted = accepted.map(|(tev, f_type)| {
            if !f_type {
                filter.push(((1.0 - GAMMA_THETA) * theta0, phi0 - GAMMA_PHI * theta0));
            }
            tev
        });
        let Some(tev) = accepted else {
            if mu > opts.tol / 10.0 && it + 1 < opts.max_iter {
                // Tiny forced step; a smaller barrier often unblocks.
                mu = (opts.tol / 10.0).max(0.2 * mu);
                continue;
            }
            return finish(NlpStatus::Stalled, &st, &ev, it);
        };
        let (dw, dy) = d.split_at(nw);
        let mut dzl = vec![0.0; nw];
        let mut dzu = vec![0.0; nw];
        for i in 0..nw {
            if lay.lo[i].is_finite() {
                let s = st.w[i] - lay.lo[i];
                dzl[i] = (mu - st.zl[i] * s - st.zl[i] * dw[i]) / s;
            }
            if lay.hi[i].is_finite() {
                let s = lay.hi[i] - st.w[i];
                dzu[i] = (mu - st.zu[i] * s + st.zu[i] * dw[i]) / s;
            }
        }
        let zeros = vec![0.0; nw];
        let inf = vec![f64::INFINITY; nw];
        let a_z = max_step(&st.zl, &dzl, &zeros, &inf, tau).min(max_step(&st.zu, &dzu, &zeros, &inf, tau));
        st.w.copy_from_slice(&trial_w);
        for i in 0..m {
            st.y[i] += alpha * dy[i];
        }
        for i in 0..nw {
            st.zl[i] += a_z * dzl[i];
            st.zu[i] += a_z * dzu[i];
            // Keep the bound multipliers within a factor of the central path.
            if lay.lo[i].is_finite() {
                let s = st.w[i] - lay.lo[i];
                st.zl[i] = st.zl[i].clamp(mu / (KAPPA_SIGMA * s), KAPPA_SIGMA * mu / s);
            }
            if lay.hi[i].is_finite() {
                let s = lay.hi[i] - st.w[i];
                st.zu[i] = st.zu[i].clamp(mu / (KAPPA_SIGMA * s), KAPPA_SIGMA * mu / s);
            }
        }
        ev = tev;
        if log::log_enabled!(log::Level::Trace) {
            let (ed, ep, ec) = errors(&lay, &st, &ev, 0.0);
            log::trace!("it {it} mu {mu:.1e} f {:.6e} dual {ed:.2e} primal {ep:.2e} comp {ec:.2e} alpha {alpha:.2e} a_z {a_z:.2e} reg {delta_w:.1e}", ev.f);
        }
    }
    finish(NlpStatus::IterationLimit, &st, &ev, opts.max_iter)
}
