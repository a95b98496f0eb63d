//! Model III: AC redispatch with fixed binary line statuses.

use super::{BusVoltages, Dispatch, ModelTag, RedispatchResult};
use crate::conic::SolveStatus;
use crate::error::{Error, Result};
use crate::formulation::{effective_status, energized_buses, BranchCoeffs};
use crate::network::NetworkCase;
use crate::nlp::{self, Nlp, NlpOptions, NlpStatus};
use crate::scenario::ScenarioInput;

/// Target for the NLP's scaled optimality error.
pub const AC_TOL: f64 = 1e-7;

/// Optional warm start: per-bus voltage magnitude and angle.
#[derive(Debug, Clone, PartialEq)]
pub struct AcStart {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
}

struct Flow {
    col: usize,
    k: [f64; 3],
    self_bus: usize,
}

struct OnLine {
    i: usize,
    j: usize,
    flows: [Flow; 4],
    thermal2: f64,
}

struct Angle {
    i: usize,
    j: usize,
    lo: f64,
    hi: f64,
}

/// The AC program over live buses. Constraint order: 4 flow definitions
/// per energized line, 2 thermal rows per energized line, 2 balance rows
/// per live bus, 1 angle row per line with both ends live.
struct AcModel {
    n: usize,
    vcol: Vec<Option<usize>>,
    tcol: Vec<Option<usize>>,
    xcol: Vec<Option<usize>>,
    scol: Vec<Option<usize>>,
    pg: Vec<usize>,
    qg: Vec<usize>,
    lines: Vec<OnLine>,
    angles: Vec<Angle>,
    live_buses: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    p_d: Vec<f64>,
    q_d: Vec<f64>,
    shunts: Vec<(usize, f64, f64)>,
    bus_gens: Vec<Vec<usize>>,
    /// Generators left out of the program report zero output.
    gen_live: Vec<bool>,
    bus_flows: Vec<Vec<(usize, usize)>>,
    bus_loads: Vec<Vec<usize>>,
    bus_shunts: Vec<Vec<usize>>,
}

impl AcModel {
    fn new(case: &NetworkCase, sc: &ScenarioInput, on: &[bool]) -> AcModel {
        let nb = case.n_buses();
        let mut live = energized_buses(case, on);
        // A generator bus with no line, no demand and no shunt has both
        // outputs pinned at zero. That is feasible whenever zero lies in the
        // reactive range, and it leaves the barrier no interior, so such
        // buses are left out of the program.
        for i in 0..nb {
            let connected = (0..case.n_lines()).any(|l| on[l] && {
                let (a, b) = case.line_ends(l);
                a == i || b == i
            });
            let demand = case.bus_loads(i).iter().any(|&d| sc.p_d[d] != 0.0 || sc.q_d[d] != 0.0);
            let (q_lo, q_hi) = case
                .bus_gens(i)
                .iter()
                .fold((0.0, 0.0), |(a, b), &g| (a + case.gens()[g].q_min, b + case.gens()[g].q_max));
            if live[i] && !connected && !demand && case.bus_shunts(i).is_empty() && q_lo <= 0.0 && 0.0 <= q_hi {
                live[i] = false;
            }
        }
        let comp = case.components(on);
        // Reference: lowest-id generator bus of each energized component.
        let mut reference: Vec<Option<usize>> = vec![None; nb];
        for g in 0..case.n_gens() {
            let b = case.gen_bus(g);
            let c = comp[b];
            match reference[c] {
                Some(r) if case.buses()[r].id <= case.buses()[b].id => {}
                _ => reference[c] = Some(b),
            }
        }
        let mut n = 0;
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        let mut col = |a: f64, b: f64| {
            lo.push(a);
            hi.push(b);
            n += 1;
            n - 1
        };
        let mut vcol = vec![None; nb];
        let mut tcol = vec![None; nb];
        for i in 0..nb {
            if live[i] {
                let b = &case.buses()[i];
                vcol[i] = Some(col(b.v_min, b.v_max));
                if reference[comp[i]] != Some(i) {
                    tcol[i] = Some(col(f64::NEG_INFINITY, f64::INFINITY));
                }
            }
        }
        let xcol: Vec<Option<usize>> = (0..case.n_loads())
            .map(|d| live[case.load_bus(d)].then(|| col(0.0, 1.0)))
            .collect();
        let scol: Vec<Option<usize>> = (0..case.n_shunts())
            .map(|s| live[case.shunt_bus(s)].then(|| col(0.0, 1.0)))
            .collect();
        let pg: Vec<usize> = case.gens().iter().map(|g| col(0.0, g.p_max)).collect();
        let qg: Vec<usize> = case.gens().iter().map(|g| col(g.q_min, g.q_max)).collect();
        let mut lines = Vec::new();
        let mut angles = Vec::new();
        let mut bus_flows = vec![Vec::new(); nb];
        let td = case.theta_delta_max();
        for (l, line) in case.lines().iter().enumerate() {
            let (i, j) = case.line_ends(l);
            if !(live[i] && live[j]) {
                continue;
            }
            let slack = if on[l] { 0.0 } else { td };
            angles.push(Angle {
                i,
                j,
                lo: line.theta_min - slack,
                hi: line.theta_max + slack,
            });
            if !on[l] {
                continue;
            }
            let c = BranchCoeffs::of(line);
            let mut mk = |k: [f64; 3], self_bus: usize| Flow {
                col: col(f64::NEG_INFINITY, f64::INFINITY),
                k,
                self_bus,
            };
            let flows = [mk(c.p_fr, i), mk(c.q_fr, i), mk(c.p_to, j), mk(c.q_to, j)];
            let idx = lines.len();
            bus_flows[i].push((idx, 0));
            bus_flows[j].push((idx, 2));
            lines.push(OnLine {
                i,
                j,
                flows,
                thermal2: line.thermal * line.thermal,
            });
        }
        AcModel {
            n,
            vcol,
            tcol,
            xcol,
            scol,
            pg,
            qg,
            lines,
            angles,
            live_buses: (0..nb).filter(|&i| live[i]).collect(),
            gen_live: (0..case.n_gens()).map(|g| live[case.gen_bus(g)]).collect(),
            lo,
            hi,
            p_d: sc.p_d.clone(),
            q_d: sc.q_d.clone(),
            shunts: (0..case.n_shunts())
                .map(|s| (case.shunt_bus(s), case.shunts()[s].gs, case.shunts()[s].bs))
                .collect(),
            bus_gens: (0..nb).map(|i| case.bus_gens(i).to_vec()).collect(),
            bus_flows,
            bus_loads: (0..nb).map(|i| case.bus_loads(i).to_vec()).collect(),
            bus_shunts: (0..nb).map(|i| case.bus_shunts(i).to_vec()).collect(),
        }
    }

    fn v(&self, x: &[f64], i: usize) -> f64 {
        self.vcol[i].map_or(0.0, |c| x[c])
    }

    fn th(&self, x: &[f64], i: usize) -> f64 {
        self.tcol[i].map_or(0.0, |c| x[c])
    }

    fn n_flow_rows(&self) -> usize {
        4 * self.lines.len()
    }

    fn thermal_row(&self, l: usize, side: usize) -> usize {
        self.n_flow_rows() + 2 * l + side
    }

    fn balance_row(&self, k: usize) -> usize {
        6 * self.lines.len() + 2 * k
    }

    fn angle_row(&self, a: usize) -> usize {
        6 * self.lines.len() + 2 * self.live_buses.len() + a
    }

    /// Value, gradient and Hessian of one flow expression over the local
    /// coordinates (V_i, V_j, θ_i, θ_j).
    fn flow_local(&self, x: &[f64], line: &OnLine, f: &Flow) -> (f64, [f64; 4], [[f64; 4]; 4]) {
        let (vi, vj) = (self.v(x, line.i), self.v(x, line.j));
        let d = self.th(x, line.i) - self.th(x, line.j);
        let (s, c) = d.sin_cos();
        let [a, b, e] = f.k;
        let vs = if f.self_bus == line.i { 0 } else { 1 };
        let vself = if vs == 0 { vi } else { vj };
        let val = a * vself * vself + b * vi * vj * c + e * vi * vj * s;
        let mut g = [
            b * vj * c + e * vj * s,
            b * vi * c + e * vi * s,
            -b * vi * vj * s + e * vi * vj * c,
            b * vi * vj * s - e * vi * vj * c,
        ];
        g[vs] += 2.0 * a * vself;
        let mut h = [[0.0; 4]; 4];
        h[vs][vs] = 2.0 * a;
        h[0][1] = b * c + e * s;
        h[0][2] = -b * vj * s + e * vj * c;
        h[0][3] = b * vj * s - e * vj * c;
        h[1][2] = -b * vi * s + e * vi * c;
        h[1][3] = b * vi * s - e * vi * c;
        h[2][2] = -b * vi * vj * c - e * vi * vj * s;
        h[2][3] = b * vi * vj * c + e * vi * vj * s;
        h[3][3] = h[2][2];
        for r in 0..4 {
            for q in 0..r {
                h[r][q] = h[q][r];
            }
        }
        (val, g, h)
    }

    fn local_cols(&self, line: &OnLine) -> [Option<usize>; 4] {
        [self.vcol[line.i], self.vcol[line.j], self.tcol[line.i], self.tcol[line.j]]
    }

    fn flat_start(&self, case: &NetworkCase, warm: Option<&AcStart>) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for i in 0..case.n_buses() {
            if let Some(c) = self.vcol[i] {
                let v = warm.map_or(1.0, |w| w.v[i]);
                x[c] = v.clamp(self.lo[c], self.hi[c]);
            }
            if let Some(c) = self.tcol[i] {
                x[c] = warm.map_or(0.0, |w| w.theta[i]);
            }
        }
        for c in self.xcol.iter().flatten() {
            x[*c] = 1.0;
        }
        for c in self.scol.iter().flatten() {
            x[*c] = 0.5;
        }
        let live_p: f64 = (0..self.p_d.len()).filter(|&d| self.xcol[d].is_some()).map(|d| self.p_d[d]).sum();
        let live_q: f64 = (0..self.q_d.len()).filter(|&d| self.xcol[d].is_some()).map(|d| self.q_d[d]).sum();
        let pmax: f64 = case.gens().iter().map(|g| g.p_max).sum();
        let qmax: f64 = case.gens().iter().map(|g| g.q_max.max(0.0)).sum();
        for (g, gen) in case.gens().iter().enumerate() {
            let share = if pmax > 0.0 { gen.p_max / pmax } else { 0.0 };
            x[self.pg[g]] = (live_p * share).clamp(0.0, gen.p_max);
            let qs = if qmax > 0.0 { gen.q_max.max(0.0) / qmax } else { 0.0 };
            x[self.qg[g]] = (live_q * qs).clamp(gen.q_min, gen.q_max);
        }
        for line in &self.lines {
            for f in &line.flows {
                x[f.col] = self.flow_local(&x, line, f).0;
            }
        }
        x
    }
}

impl Nlp for AcModel {
    fn n(&self) -> usize {
        self.n
    }

    fn m(&self) -> usize {
        6 * self.lines.len() + 2 * self.live_buses.len() + self.angles.len()
    }

    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lo.clone(), self.hi.clone())
    }

    fn con_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.m();
        let mut lo = vec![0.0; m];
        let mut hi = vec![0.0; m];
        for (l, line) in self.lines.iter().enumerate() {
            for side in 0..2 {
                let r = self.thermal_row(l, side);
                lo[r] = f64::NEG_INFINITY;
                hi[r] = line.thermal2;
            }
        }
        for (a, ang) in self.angles.iter().enumerate() {
            let r = self.angle_row(a);
            lo[r] = ang.lo;
            hi[r] = ang.hi;
        }
        (lo, hi)
    }

    fn objective(&self, x: &[f64]) -> f64 {
        (0..self.p_d.len())
            .map(|d| self.xcol[d].map_or(self.p_d[d], |c| (1.0 - x[c]) * self.p_d[d]))
            .sum()
    }

    fn gradient(&self, _: &[f64], g: &mut [f64]) {
        g.fill(0.0);
        for (d, c) in self.xcol.iter().enumerate() {
            if let Some(c) = c {
                g[*c] = -self.p_d[d];
            }
        }
    }

    fn constraints(&self, x: &[f64], out: &mut [f64]) {
        for (l, line) in self.lines.iter().enumerate() {
            for (k, f) in line.flows.iter().enumerate() {
                out[4 * l + k] = x[f.col] - self.flow_local(x, line, f).0;
            }
            for side in 0..2 {
                let (p, q) = (x[line.flows[2 * side].col], x[line.flows[2 * side + 1].col]);
                out[self.thermal_row(l, side)] = p * p + q * q;
            }
        }
        for (k, &i) in self.live_buses.iter().enumerate() {
            let (mut p, mut q) = (0.0, 0.0);
            for &g in &self.bus_gens[i] {
                p += x[self.pg[g]];
                q += x[self.qg[g]];
            }
            for &(l, side) in &self.bus_flows[i] {
                p -= x[self.lines[l].flows[side].col];
                q -= x[self.lines[l].flows[side + 1].col];
            }
            for &d in &self.bus_loads[i] {
                let xd = x[self.xcol[d].expect("live load")];
                p -= xd * self.p_d[d];
                q -= xd * self.q_d[d];
            }
            let v2 = self.v(x, i).powi(2);
            for &s in &self.bus_shunts[i] {
                let (_, gs, bs) = self.shunts[s];
                let xs = x[self.scol[s].expect("live shunt")];
                p -= gs * v2 * xs;
                q += bs * v2 * xs;
            }
            let r = self.balance_row(k);
            out[r] = p;
            out[r + 1] = q;
        }
        for (a, ang) in self.angles.iter().enumerate() {
            out[self.angle_row(a)] = self.th(x, ang.i) - self.th(x, ang.j);
        }
    }

    fn jacobian(&self, x: &[f64], jac: &mut [f64]) {
        let n = self.n;
        jac.fill(0.0);
        for (l, line) in self.lines.iter().enumerate() {
            let cols = self.local_cols(line);
            for (k, f) in line.flows.iter().enumerate() {
                let r = 4 * l + k;
                jac[r * n + f.col] = 1.0;
                let (_, g, _) = self.flow_local(x, line, f);
                for (c, gv) in cols.iter().zip(g) {
                    if let Some(c) = c {
                        jac[r * n + c] -= gv;
                    }
                }
            }
            for side in 0..2 {
                let r = self.thermal_row(l, side);
                for f in &line.flows[2 * side..2 * side + 2] {
                    jac[r * n + f.col] = 2.0 * x[f.col];
                }
            }
        }
        for (k, &i) in self.live_buses.iter().enumerate() {
            let rp = self.balance_row(k);
            let rq = rp + 1;
            for &g in &self.bus_gens[i] {
                jac[rp * n + self.pg[g]] += 1.0;
                jac[rq * n + self.qg[g]] += 1.0;
            }
            for &(l, side) in &self.bus_flows[i] {
                jac[rp * n + self.lines[l].flows[side].col] -= 1.0;
                jac[rq * n + self.lines[l].flows[side + 1].col] -= 1.0;
            }
            for &d in &self.bus_loads[i] {
                let c = self.xcol[d].expect("live load");
                jac[rp * n + c] -= self.p_d[d];
                jac[rq * n + c] -= self.q_d[d];
            }
            let vc = self.vcol[i].expect("live bus");
            let v = x[vc];
            for &s in &self.bus_shunts[i] {
                let (_, gs, bs) = self.shunts[s];
                let sc = self.scol[s].expect("live shunt");
                let xs = x[sc];
                jac[rp * n + vc] -= 2.0 * gs * v * xs;
                jac[rp * n + sc] -= gs * v * v;
                jac[rq * n + vc] += 2.0 * bs * v * xs;
                jac[rq * n + sc] += bs * v * v;
            }
        }
        for (a, ang) in self.angles.iter().enumerate() {
            let r = self.angle_row(a);
            if let Some(c) = self.tcol[ang.i] {
                jac[r * n + c] += 1.0;
            }
            if let Some(c) = self.tcol[ang.j] {
                jac[r * n + c] -= 1.0;
            }
        }
    }

    fn hessian(&self, x: &[f64], _sigma: f64, y: &[f64], h: &mut [f64]) {
        // The objective is linear.
        let n = self.n;
        h.fill(0.0);
        for (l, line) in self.lines.iter().enumerate() {
            let cols = self.local_cols(line);
            for (k, f) in line.flows.iter().enumerate() {
                let yk = y[4 * l + k];
                if yk == 0.0 {
                    continue;
                }
                let (_, _, hl) = self.flow_local(x, line, f);
                for (a, ca) in cols.iter().enumerate() {
                    let Some(ca) = ca else { continue };
                    for (b, cb) in cols.iter().enumerate() {
                        let Some(cb) = cb else { continue };
                        h[ca * n + cb] -= yk * hl[a][b];
                    }
                }
            }
            for side in 0..2 {
                let ys = y[self.thermal_row(l, side)];
                for f in &line.flows[2 * side..2 * side + 2] {
                    h[f.col * n + f.col] += 2.0 * ys;
                }
            }
        }
        for (k, &i) in self.live_buses.iter().enumerate() {
            let (yp, yq) = (y[self.balance_row(k)], y[self.balance_row(k) + 1]);
            let vc = self.vcol[i].expect("live bus");
            let v = x[vc];
            for &s in &self.bus_shunts[i] {
                let (_, gs, bs) = self.shunts[s];
                let sc = self.scol[s].expect("live shunt");
                let xs = x[sc];
                let w = -gs * yp + bs * yq;
                h[vc * n + vc] += 2.0 * w * xs;
                h[vc * n + sc] += 2.0 * w * v;
                h[sc * n + vc] += 2.0 * w * v;
            }
        }
    }
}

/// Model III. `z` is the binary status vector; lines in generator-free
/// islands are treated as off and the loads there are shed.
pub fn solve_ac_redispatch(
    case: &NetworkCase,
    sc: &ScenarioInput,
    z: &[bool],
    start: Option<&AcStart>,
) -> Result<RedispatchResult> {
    sc.check_dims(case)?;
    if z.len() != case.n_lines() {
        return Err(Error::Dimension(format!("{} statuses for {} lines", z.len(), case.n_lines())));
    }
    if let Some(w) = start {
        if w.v.len() != case.n_buses() || w.theta.len() != case.n_buses() {
            return Err(Error::Dimension("warm start must cover every bus".into()));
        }
    }
    let on = effective_status(case, z);
    let model = AcModel::new(case, sc, &on);
    let x0 = model.flat_start(case, start);
    let opts = NlpOptions {
        tol: AC_TOL,
        ..NlpOptions::default()
    };
    let sol = nlp::solve(&model, &x0, &opts);
    let status = match sol.status {
        NlpStatus::Solved | NlpStatus::Acceptable => SolveStatus::Optimal,
        NlpStatus::IterationLimit => SolveStatus::IterationLimit,
        NlpStatus::Stalled | NlpStatus::NumericalFailure => SolveStatus::NumericalFailure,
    };
    if status != SolveStatus::Optimal {
        log::debug!(
            "AC redispatch ended {:?} after {} iterations (primal {:e}, dual {:e})",
            sol.status,
            sol.iterations,
            sol.primal_residual,
            sol.dual_residual
        );
    }
    let ok = status == SolveStatus::Optimal;
    let x = &sol.x;
    let val = |c: usize| if ok { x[c] } else { f64::NAN };
    let x_d: Vec<f64> = model
        .xcol
        .iter()
        .map(|c| c.map_or(0.0, |c| val(c).clamp(0.0, 1.0)))
        .collect();
    let shed = if ok {
        x_d.iter().zip(&sc.p_d).map(|(x, p)| (1.0 - x) * p).sum()
    } else {
        f64::NAN
    };
    let nb = case.n_buses();
    Ok(RedispatchResult {
        model_tag: ModelTag::III,
        shed,
        x_d,
        dispatch: Dispatch {
            pg: model.pg.iter().zip(&model.gen_live).map(|(&c, &l)| if l { val(c) } else { 0.0 }).collect(),
            qg: model.qg.iter().zip(&model.gen_live).map(|(&c, &l)| if l { val(c) } else { 0.0 }).collect(),
        },
        status,
        voltages: ok.then(|| BusVoltages {
            v: (0..nb).map(|i| model.vcol[i].map_or(0.0, |c| x[c])).collect(),
            theta: (0..nb).map(|i| model.th(x, i)).collect(),
        }),
    })
}
