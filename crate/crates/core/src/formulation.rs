//! Network constraints shared by the switching and redispatch programs.

use crate::conic::{ConeBlock, Expr, ProgramBuilder};
use crate::error::{Error, Result};
use crate::network::{End, Line, NetworkCase};

/// Branch flow coefficients on (W_self, W^R, W^I), where W_self is the
/// squared voltage at the end the flow leaves from and
/// W^R + jW^I = V_i V_j e^{j(θ_i − θ_j)} with i the from bus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchCoeffs {
    pub p_fr: [f64; 3],
    pub q_fr: [f64; 3],
    pub p_to: [f64; 3],
    pub q_to: [f64; 3],
}

impl BranchCoeffs {
    pub fn of(l: &Line) -> Self {
        let (g, b, tr, ti) = (l.g, l.b, l.tap_re, l.tap_im);
        let tm2 = l.tap_mag * l.tap_mag;
        BranchCoeffs {
            p_fr: [(g + l.g_fr) / tm2, (-g * tr + b * ti) / tm2, (-b * tr - g * ti) / tm2],
            q_fr: [-(b + l.b_fr) / tm2, (b * tr + g * ti) / tm2, (-g * tr + b * ti) / tm2],
            p_to: [g + l.g_to, (-g * tr - b * ti) / tm2, -(-b * tr + g * ti) / tm2],
            q_to: [-(b + l.b_to), -(-b * tr + g * ti) / tm2, -(-g * tr - b * ti) / tm2],
        }
    }

    pub fn end(&self, end: End) -> ([f64; 3], [f64; 3]) {
        match end {
            End::From => (self.p_fr, self.q_fr),
            End::To => (self.p_to, self.q_to),
        }
    }
}

/// How the status of one line enters a program.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Status {
    /// Decision column.
    Var(usize),
    /// Parameter L_l.
    Param,
    /// Known value. 0 and 1 get specialized, better-conditioned rows.
    Fixed(f64),
}

pub(crate) fn z_expr(st: Status, line: usize, coef: f64) -> Expr {
    match st {
        Status::Var(col) => Expr::new().term(col, coef),
        Status::Param => Expr::new().status(line, coef),
        Status::Fixed(v) => Expr::new().constant(coef * v),
    }
}

/// Which constraint blocks to include.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SocOptions {
    pub angle_limits: bool,
    /// Scale the thermal cone by the line status.
    pub gated_thermal: bool,
    /// McCormick envelope with a shunt fraction x_s; otherwise 0 ≤ W^S ≤ W_ii.
    pub mccormick_shunt: bool,
}

impl SocOptions {
    pub const FULL: SocOptions = SocOptions {
        angle_limits: true,
        gated_thermal: true,
        mccormick_shunt: true,
    };
    pub const SIMPLIFIED: SocOptions = SocOptions {
        angle_limits: false,
        gated_thermal: false,
        mccormick_shunt: false,
    };
}

/// Column indices of the network variables.
#[derive(Debug, Clone, Default)]
pub struct NetworkVars {
    pub w: Vec<usize>,
    pub w_fr: Vec<usize>,
    pub w_to: Vec<usize>,
    pub w_r: Vec<usize>,
    pub w_i: Vec<usize>,
    pub p_fr: Vec<usize>,
    pub q_fr: Vec<usize>,
    pub p_to: Vec<usize>,
    pub q_to: Vec<usize>,
    pub pg: Vec<usize>,
    pub qg: Vec<usize>,
    pub ws: Vec<usize>,
    pub xs: Vec<Option<usize>>,
}

pub(crate) fn add_network(
    bld: &mut ProgramBuilder,
    case: &NetworkCase,
    status: &[Status],
    dead: &[bool],
    opts: SocOptions,
) -> Result<NetworkVars> {
    let mut v = NetworkVars::default();
    for bus in case.buses() {
        let name = format!("W[{}]", bus.id);
        v.w.push(bld.bounded(name, bus.v_min * bus.v_min, bus.v_max * bus.v_max));
    }
    for g in case.gens() {
        let k = v.pg.len();
        v.pg.push(bld.bounded(format!("Pg[{k}]"), 0.0, g.p_max));
        v.qg.push(bld.bounded(format!("Qg[{k}]"), g.q_min, g.q_max));
    }
    for k in 0..case.n_shunts() {
        let bus = case.shunt_bus(k);
        let ws = bld.free(format!("Ws[{k}]"));
        let wii = v.w[bus];
        let vmax2 = case.buses()[bus].v_max.powi(2);
        if dead[bus] {
            bld.eq(format!("Ws[{k}]=0"), Expr::var(ws));
            v.xs.push(None);
            v.ws.push(ws);
            continue;
        }
        bld.le(format!("Ws[{k}]>=0"), Expr::var(ws).scaled(-1.0));
        bld.le(format!("Ws[{k}]<=W"), Expr::var(ws).term(wii, -1.0));
        if opts.mccormick_shunt {
            let xs = bld.bounded(format!("xs[{k}]"), 0.0, 1.0);
            bld.le(
                format!("Ws[{k}]>=mc"),
                Expr::var(ws).scaled(-1.0).term(xs, vmax2).constant(-vmax2).term(wii, 1.0),
            );
            bld.le(format!("Ws[{k}]<=mc"), Expr::var(ws).term(xs, -vmax2));
            v.xs.push(Some(xs));
        } else {
            v.xs.push(None);
        }
        v.ws.push(ws);
    }
    for (l, line) in case.lines().iter().enumerate() {
        let (f, t) = case.line_ends(l);
        let wb = case.w_bounds(l);
        if !wb.is_bounded() {
            return Err(Error::semantic(
                format!("line {}", line.id),
                "lifted voltage box is unbounded (missing angle limits)",
            ));
        }
        let tag = line.id;
        let st = status[l];
        let z = |coef: f64| z_expr(st, l, coef);
        let wfr = bld.free(format!("Wfr[{tag}]"));
        let wto = bld.free(format!("Wto[{tag}]"));
        let wr = bld.free(format!("WR[{tag}]"));
        let wi = bld.free(format!("WI[{tag}]"));
        let c = BranchCoeffs::of(line);
        let flow = |self_w: usize, k: [f64; 3]| Expr::new().term(self_w, k[0]).term(wr, k[1]).term(wi, k[2]);
        let mut ends = Vec::new();
        for (side, self_w, (kp, kq)) in [("fr", wfr, (c.p_fr, c.q_fr)), ("to", wto, (c.p_to, c.q_to))] {
            let p = bld.free(format!("P{side}[{tag}]"));
            let q = bld.free(format!("Q{side}[{tag}]"));
            bld.eq(format!("P{side}[{tag}]def"), Expr::var(p).add(&flow(self_w, kp), -1.0));
            bld.eq(format!("Q{side}[{tag}]def"), Expr::var(q).add(&flow(self_w, kq), -1.0));
            ends.push((side, p, q));
        }
        v.w_fr.push(wfr);
        v.w_to.push(wto);
        v.w_r.push(wr);
        v.w_i.push(wi);
        v.p_fr.push(ends[0].1);
        v.q_fr.push(ends[0].2);
        v.p_to.push(ends[1].1);
        v.q_to.push(ends[1].2);

        if st == Status::Fixed(0.0) {
            // Every lifted term of an open line is zero; flows follow.
            for (x, nm) in [(wfr, "Wfr"), (wto, "Wto"), (wr, "WR"), (wi, "WI")] {
                bld.eq(format!("{nm}[{tag}]=0"), Expr::var(x));
            }
            continue;
        }
        let closed = st == Status::Fixed(1.0);
        let bf = &case.buses()[f];
        let bt = &case.buses()[t];
        for (wl, wbus, b, side) in [(wfr, v.w[f], bf, "fr"), (wto, v.w[t], bt, "to")] {
            let (lo, hi) = (b.v_min * b.v_min, b.v_max * b.v_max);
            if closed {
                bld.eq(format!("W{side}[{tag}]=link"), Expr::var(wl).term(wbus, -1.0));
                continue;
            }
            bld.le(format!("W{side}[{tag}]>=zlo"), Expr::var(wl).scaled(-1.0).add(&z(lo), 1.0));
            bld.le(format!("W{side}[{tag}]<=zhi"), Expr::var(wl).add(&z(hi), -1.0));
            // W_bus − hi(1−z) ≤ W_side ≤ W_bus − lo(1−z)
            bld.le(
                format!("W{side}[{tag}]<=link"),
                Expr::var(wl).term(wbus, -1.0).constant(lo).add(&z(lo), -1.0),
            );
            bld.le(
                format!("W{side}[{tag}]>=link"),
                Expr::var(wl).scaled(-1.0).term(wbus, 1.0).constant(-hi).add(&z(hi), 1.0),
            );
        }
        for (x, lo, hi, nm) in [(wr, wb.wr_min, wb.wr_max, "WR"), (wi, wb.wi_min, wb.wi_max, "WI")] {
            bld.le(format!("{nm}[{tag}]>=zlo"), Expr::var(x).scaled(-1.0).add(&z(lo), 1.0));
            bld.le(format!("{nm}[{tag}]<=zhi"), Expr::var(x).add(&z(hi), -1.0));
        }
        if opts.angle_limits {
            bld.le(format!("angle[{tag}]<=max"), Expr::var(wi).term(wr, -line.theta_max.tan()));
            bld.le(format!("angle[{tag}]>=min"), Expr::var(wi).scaled(-1.0).term(wr, line.theta_min.tan()));
        }
        bld.cone_constraint(
            &format!("Wcone[{tag}]"),
            ConeBlock::RotatedSoc(4),
            vec![Expr::var(wfr).scaled(0.5), Expr::var(wto), Expr::var(wr), Expr::var(wi)],
        );
        let half_t2 = 0.5 * line.thermal * line.thermal;
        for (side, p, q) in &ends {
            let u = if opts.gated_thermal {
                z(half_t2)
            } else {
                Expr::new().constant(half_t2)
            };
            bld.cone_constraint(
                &format!("thermal_{side}[{tag}]"),
                ConeBlock::RotatedSoc(4),
                vec![u, Expr::new().constant(1.0), Expr::var(*p), Expr::var(*q)],
            );
        }
    }
    Ok(v)
}

/// Nodal balance rows. `load_p[i]`, `load_q[i]` are the demand drawn at bus i.
pub(crate) fn add_balance(
    bld: &mut ProgramBuilder,
    case: &NetworkCase,
    v: &NetworkVars,
    dead: &[bool],
    load_p: &[Expr],
    load_q: &[Expr],
) {
    for (i, bus) in case.buses().iter().enumerate() {
        if dead[i] {
            continue;
        }
        let mut p = Expr::new().add(&load_p[i], -1.0);
        let mut q = Expr::new().add(&load_q[i], -1.0);
        for &g in case.bus_gens(i) {
            p = p.term(v.pg[g], 1.0);
            q = q.term(v.qg[g], 1.0);
        }
        for &s in case.bus_shunts(i) {
            let sh = &case.shunts()[s];
            p = p.term(v.ws[s], -sh.gs);
            q = q.term(v.ws[s], sh.bs);
        }
        for &(l, end) in case.bus_lines(i) {
            let (pv, qv) = match end {
                End::From => (v.p_fr[l], v.q_fr[l]),
                End::To => (v.p_to[l], v.q_to[l]),
            };
            p = p.term(pv, -1.0);
            q = q.term(qv, -1.0);
        }
        bld.eq(format!("balP[{}]", bus.id), p);
        bld.eq(format!("balQ[{}]", bus.id), q);
    }
}

/// Whether each bus shares a component with a generator, over lines whose
/// `on` flag is set.
pub(crate) fn energized_buses(case: &NetworkCase, on: &[bool]) -> Vec<bool> {
    let comp = case.components(on);
    let n_comp = comp.iter().copied().max().map_or(0, |m| m + 1);
    let mut has_gen = vec![false; n_comp];
    for g in 0..case.n_gens() {
        has_gen[comp[case.gen_bus(g)]] = true;
    }
    comp.iter().map(|c| has_gen[*c]).collect()
}

/// Line statuses with lines inside generator-free islands switched off.
/// Such islands cannot serve load, and keeping their lines in a program
/// only leaves constraints with no strict interior.
pub fn effective_status(case: &NetworkCase, z: &[bool]) -> Vec<bool> {
    let live = energized_buses(case, z);
    (0..case.n_lines())
        .map(|l| z[l] && live[case.line_ends(l).0])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Copy, Debug)]
    struct C(f64, f64);
    impl C {
        fn mul(self, o: C) -> C {
            C(self.0 * o.0 - self.1 * o.1, self.0 * o.1 + self.1 * o.0)
        }
        fn add(self, o: C) -> C {
            C(self.0 + o.0, self.1 + o.1)
        }
        fn conj(self) -> C {
            C(self.0, -self.1)
        }
        fn scale(self, k: f64) -> C {
            C(self.0 * k, self.1 * k)
        }
        fn inv(self) -> C {
            let d = self.0 * self.0 + self.1 * self.1;
            C(self.0 / d, -self.1 / d)
        }
        fn polar(r: f64, a: f64) -> C {
            C(r * a.cos(), r * a.sin())
        }
    }

    /// Complex power at both ends of a π-model branch with a complex tap at
    /// the from side.
    fn complex_flows(l: &Line, vi: C, vj: C) -> (C, C) {
        let y = C(l.g, l.b);
        let t = C(l.tap_re, l.tap_im);
        let tm2 = l.tap_mag * l.tap_mag;
        let i_fr = y.add(C(l.g_fr, l.b_fr)).scale(1.0 / tm2).mul(vi).add(y.mul(t.conj().inv()).mul(vj).scale(-1.0));
        let i_to = y.add(C(l.g_to, l.b_to)).mul(vj).add(y.mul(t.inv()).mul(vi).scale(-1.0));
        (vi.mul(i_fr.conj()), vj.mul(i_to.conj()))
    }

    fn test_line(tap: f64, shift: f64) -> Line {
        let (r, x) = (0.02, 0.15);
        let z2 = r * r + x * x;
        Line {
            id: 1,
            from_bus: 1,
            to_bus: 2,
            g: r / z2,
            b: -x / z2,
            g_fr: 0.01,
            g_to: 0.02,
            b_fr: 0.05,
            b_to: 0.04,
            tap_mag: tap,
            tap_re: tap * shift.cos(),
            tap_im: tap * shift.sin(),
            thermal: 1.0,
            theta_min: -0.5,
            theta_max: 0.5,
            risk: 1.0,
        }
    }

    #[test]
    fn coefficients_match_complex_power() {
        for (tap, shift) in [(1.0, 0.0), (1.05, 0.0), (0.97, 0.1), (1.0, -0.2)] {
            let l = test_line(tap, shift);
            let k = BranchCoeffs::of(&l);
            for (vm_i, vm_j, ti, tj) in [(1.02, 0.98, 0.1, -0.05), (0.95, 1.05, -0.3, 0.2)] {
                let (sf, st) = complex_flows(&l, C::polar(vm_i, ti), C::polar(vm_j, tj));
                let wr = vm_i * vm_j * (ti - tj).cos();
                let wi = vm_i * vm_j * (ti - tj).sin();
                let ev = |c: [f64; 3], w: f64| c[0] * w + c[1] * wr + c[2] * wi;
                assert!((ev(k.p_fr, vm_i * vm_i) - sf.0).abs() < 1e-12);
                assert!((ev(k.q_fr, vm_i * vm_i) - sf.1).abs() < 1e-12);
                assert!((ev(k.p_to, vm_j * vm_j) - st.0).abs() < 1e-12);
                assert!((ev(k.q_to, vm_j * vm_j) - st.1).abs() < 1e-12);
            }
        }
    }
}
