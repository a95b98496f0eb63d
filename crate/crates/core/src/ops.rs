//! Optimal power shutoff: the mixed-integer SOC switching problem and its
//! branch-and-bound solver, plus training-data generation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::{solve_conic, ConicProgram, Expr, ProgramBuilder, SolveStatus};
use crate::error::{Error, Result};
use crate::formulation::{add_balance, add_network, energized_buses, NetworkVars, SocOptions, Status};
use crate::network::NetworkCase;
use crate::scenario::{GammaBox, ScenarioInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branching {
    /// Most fractional status first, ties broken by larger line risk.
    MostFractional,
    /// Lowest-index fractional status.
    FirstFractional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BnbConfig {
    pub max_nodes: usize,
    pub abs_gap: f64,
    pub rel_gap: f64,
    pub branching: Branching,
}

impl Default for BnbConfig {
    fn default() -> Self {
        BnbConfig {
            max_nodes: 20_000,
            abs_gap: 1e-7,
            rel_gap: 1e-6,
            branching: Branching::MostFractional,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct OpsConfig {
    pub relax_binaries: bool,
    pub bnb: BnbConfig,
}

/// Column layout of the switching program. `z[l]` is `None` when the
/// status of line l is fixed (to `fixed[l]`); `x_d[d]` is `None` for loads
/// in generator-free islands, which are fixed at 0.
#[derive(Debug, Clone)]
pub struct OpsVariables {
    pub z: Vec<Option<usize>>,
    pub fixed: Vec<f64>,
    pub x_d: Vec<Option<usize>>,
    /// Inequality rows `lo − z ≤ 0` and `z − hi ≤ 0` of each free status.
    pub z_rows: Vec<Option<(usize, usize)>>,
    pub net: NetworkVars,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingDecision {
    pub z: Vec<f64>,
    pub x_d: Vec<f64>,
    pub objective: f64,
    pub served_load: f64,
    pub risk: f64,
    pub certified: bool,
    pub nodes: usize,
    pub bound: f64,
}

/// Scenario totals used to normalize the two objective terms.
fn totals(case: &NetworkCase, sc: &ScenarioInput) -> Result<(Vec<f64>, f64, f64)> {
    let risks = sc.line_risks(case);
    let p_tot: f64 = sc.p_d.iter().sum();
    let r_tot: f64 = risks.iter().sum();
    if p_tot <= 0.0 || r_tot <= 0.0 {
        return Err(Error::Domain(format!(
            "scenario totals must be positive (load {p_tot}, risk {r_tot})"
        )));
    }
    Ok((risks, p_tot, r_tot))
}

/// Objective in maximization form.
pub fn ops_objective(case: &NetworkCase, sc: &ScenarioInput, z: &[f64], x_d: &[f64]) -> Result<(f64, f64, f64)> {
    let (risks, p_tot, r_tot) = totals(case, sc)?;
    let served: f64 = x_d.iter().zip(&sc.p_d).map(|(x, p)| x * p).sum();
    let risk: f64 = z.iter().zip(&risks).map(|(z, r)| z * r).sum();
    let obj = (1.0 - sc.alpha) * served / p_tot - sc.alpha * risk / r_tot;
    Ok((obj, served, risk))
}

/// The switching program in minimization form (negated objective). The
/// integrality markers are carried by [`OpsVariables::z`].
pub fn build_soc_ops(case: &NetworkCase, sc: &ScenarioInput) -> Result<(ConicProgram, OpsVariables)> {
    let nl = case.n_lines();
    build_with_bounds(case, sc, &vec![0.0; nl], &vec![1.0; nl])
}

/// Statuses with `lo == hi` are substituted as constants; the rest are
/// variables boxed by `[lo, hi]`. Lines that cannot reach a generator are
/// fixed off, which does not change the optimum.
fn build_with_bounds(
    case: &NetworkCase,
    sc: &ScenarioInput,
    lo: &[f64],
    hi: &[f64],
) -> Result<(ConicProgram, OpsVariables)> {
    let can_be_on: Vec<bool> = hi.iter().map(|h| *h > 0.0).collect();
    let dead: Vec<bool> = energized_buses(case, &can_be_on).iter().map(|e| !e).collect();
    let mut lo = lo.to_vec();
    let mut hi = hi.to_vec();
    for l in 0..case.n_lines() {
        if dead[case.line_ends(l).0] {
            lo[l] = 0.0;
            hi[l] = 0.0;
        }
    }
    sc.check_dims(case)?;
    if !(0.0..=1.0).contains(&sc.alpha) {
        return Err(Error::Domain(format!("alpha must lie in [0, 1], got {}", sc.alpha)));
    }
    let (risks, p_tot, r_tot) = totals(case, sc)?;
    let mut bld = ProgramBuilder::new(0, 0);
    let mut z = Vec::new();
    let mut z_rows = Vec::new();
    let mut status = Vec::new();
    for (l, line) in case.lines().iter().enumerate() {
        if lo[l] == hi[l] {
            z.push(None);
            z_rows.push(None);
            status.push(Status::Fixed(lo[l]));
        } else {
            let name = format!("z[{}]", line.id);
            let v = bld.free(name.clone());
            let r_lo = bld.le(format!("{name}>=lo"), Expr::new().term(v, -1.0).constant(lo[l]));
            let r_hi = bld.le(format!("{name}<=hi"), Expr::var(v).constant(-hi[l]));
            bld.cost(v, sc.alpha * risks[l] / r_tot);
            z.push(Some(v));
            z_rows.push(Some((r_lo, r_hi)));
            status.push(Status::Var(v));
        }
    }
    let x_d: Vec<Option<usize>> = (0..case.n_loads())
        .map(|d| {
            if dead[case.load_bus(d)] {
                return None;
            }
            let v = bld.bounded(format!("x[{d}]"), 0.0, 1.0);
            bld.cost(v, -(1.0 - sc.alpha) * sc.p_d[d] / p_tot);
            Some(v)
        })
        .collect();
    let net = add_network(&mut bld, case, &status, &dead, SocOptions::FULL)?;
    let mut load_p = vec![Expr::new(); case.n_buses()];
    let mut load_q = vec![Expr::new(); case.n_buses()];
    for (d, x) in x_d.iter().enumerate() {
        if let Some(x) = *x {
            let i = case.load_bus(d);
            load_p[i] = std::mem::take(&mut load_p[i]).term(x, sc.p_d[d]);
            load_q[i] = std::mem::take(&mut load_q[i]).term(x, sc.q_d[d]);
        }
    }
    add_balance(&mut bld, case, &net, &dead, &load_p, &load_q);
    let p = bld.build()?;
    Ok((
        p,
        OpsVariables {
            z,
            fixed: lo,
            x_d,
            z_rows,
            net,
        },
    ))
}

struct NodeSolution {
    bound: f64,
    z: Vec<f64>,
    x_d: Vec<f64>,
    /// Lower bounds on the subtree with status l forced to 1 (first) or
    /// to 0 (second), from the multipliers of the status box rows.
    /// Statuses fixed by the build (dead islands) only admit 0.
    forced: Vec<(f64, f64)>,
}

fn solve_node(case: &NetworkCase, sc: &ScenarioInput, lo: &[f64], hi: &[f64]) -> Result<Option<NodeSolution>> {
    let (q, vars) = build_with_bounds(case, sc, lo, hi)?;
    let mut sol = solve_conic(&q, &[], &[], NODE_TOL)?;
    if matches!(sol.status, SolveStatus::NumericalFailure | SolveStatus::IterationLimit) {
        sol = solve_conic(&q, &[], &[], NODE_TOL_LOOSE)?;
    }
    // Constant risk of the fixed statuses, left out of the program's cost.
    let (risks, _, r_tot) = totals(case, sc)?;
    let fixed_risk: f64 = (0..lo.len())
        .filter(|&l| vars.z[l].is_none())
        .map(|l| sc.alpha * risks[l] * vars.fixed[l] / r_tot)
        .sum();
    match sol.status {
        SolveStatus::Optimal => Ok(Some(NodeSolution {
            bound: sol.objective.min(sol.dual_objective) + fixed_risk,
            forced: {
                let base = sol.dual_objective.min(sol.objective) + fixed_risk;
                let mu = sol.dual.as_ref().map(|y| &y.mu[..]).unwrap_or(&[]);
                vars.z_rows
                    .iter()
                    .map(|r| match r {
                        Some((a, b)) if !mu.is_empty() => (base + mu[*a].max(0.0), base + mu[*b].max(0.0)),
                        Some(_) => (base, base),
                        None => (f64::INFINITY, base),
                    })
                    .collect()
            },
            z: vars
                .z
                .iter()
                .enumerate()
                .map(|(l, c)| c.map_or(vars.fixed[l], |i| sol.x[i].clamp(0.0, 1.0)))
                .collect(),
            x_d: vars
                .x_d
                .iter()
                .map(|c| c.map_or(0.0, |i| sol.x[i].clamp(0.0, 1.0)))
                .collect(),
        })),
        SolveStatus::Infeasible => Ok(None),
        other => Err(Error::Solver(format!("node relaxation ended with {other:?}: {}", sol.diagnostic))),
    }
}

const INT_TOL: f64 = 1e-6;
/// Conic tolerance for node relaxations, and the fallback for nodes whose
/// feasible set has no interior (the backend then stalls near 1e-6).
const NODE_TOL: f64 = 1e-7;
const NODE_TOL_LOOSE: f64 = 1e-5;

struct Node {
    bound: f64,
    id: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    // Max-heap: smallest bound first, then oldest node.
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound.total_cmp(&self.bound).then(o.id.cmp(&self.id))
    }
}

fn decision(case: &NetworkCase, sc: &ScenarioInput, z: Vec<f64>, x_d: Vec<f64>) -> Result<SwitchingDecision> {
    let (objective, served_load, risk) = ops_objective(case, sc, &z, &x_d)?;
    Ok(SwitchingDecision {
        z,
        x_d,
        objective,
        served_load,
        risk,
        certified: true,
        nodes: 0,
        bound: objective,
    })
}

/// Solve with every status fixed to the given binary vector.
fn fixed_topology(case: &NetworkCase, sc: &ScenarioInput, z: &[f64]) -> Result<Option<SwitchingDecision>> {
    Ok(match solve_node(case, sc, z, z)? {
        Some(n) => Some(decision(case, sc, n.z, n.x_d)?),
        None => None,
    })
}

/// Continuous relaxation of the switching problem.
pub fn solve_soc_ops_relaxed(case: &NetworkCase, sc: &ScenarioInput) -> Result<SwitchingDecision> {
    let nl = case.n_lines();
    let root = solve_node(case, sc, &vec![0.0; nl], &vec![1.0; nl])?
        .ok_or_else(|| Error::Infeasible("switching relaxation is infeasible".into()))?;
    let mut d = decision(case, sc, root.z, root.x_d)?;
    d.bound = -root.bound;
    Ok(d)
}

/// Solve with statuses fixed (used as an oracle and as the leaf evaluator).
/// Lines in generator-free islands are reported off.
pub fn solve_soc_ops_fixed(case: &NetworkCase, sc: &ScenarioInput, z: &[bool]) -> Result<Option<SwitchingDecision>> {
    sc.check_dims(case)?;
    if z.len() != case.n_lines() {
        return Err(Error::Dimension(format!("{} statuses for {} lines", z.len(), case.n_lines())));
    }
    let zf: Vec<f64> = z.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    fixed_topology(case, sc, &zf)
}

/// Fractional diving from a relaxation: repeatedly fix the status nearest
/// to integrality and re-solve. Returns the integral end point, if any.
fn dive(case: &NetworkCase, sc: &ScenarioInput, start: &NodeSolution) -> Result<Option<SwitchingDecision>> {
    let nl = case.n_lines();
    let mut lo = vec![0.0; nl];
    let mut hi = vec![1.0; nl];
    let mut z = start.z.clone();
    loop {
        for l in 0..nl {
            if lo[l] != hi[l] && (z[l] - z[l].round()).abs() <= INT_TOL {
                lo[l] = z[l].round();
                hi[l] = lo[l];
            }
        }
        let next = (0..nl)
            .filter(|&l| lo[l] != hi[l])
            .min_by(|&a, &b| (z[a] - z[a].round()).abs().total_cmp(&(z[b] - z[b].round()).abs()));
        let Some(l) = next else {
            return fixed_topology(case, sc, &lo);
        };
        lo[l] = z[l].round();
        hi[l] = lo[l];
        match solve_node(case, sc, &lo, &hi) {
            Ok(Some(n)) => z = n.z,
            Ok(None) => return Ok(None),
            Err(e) => {
                log::debug!("dive abandoned: {e}");
                return Ok(None);
            }
        }
    }
}

/// Best-first branch-and-bound over the line statuses.
pub fn solve_soc_ops_global(case: &NetworkCase, sc: &ScenarioInput, cfg: &OpsConfig) -> Result<SwitchingDecision> {
    if cfg.relax_binaries {
        return solve_soc_ops_relaxed(case, sc);
    }
    let bnb = cfg.bnb;
    if bnb.abs_gap < 0.0 || bnb.rel_gap < 0.0 {
        return Err(Error::Domain("branch-and-bound gaps must be nonnegative".into()));
    }
    sc.check_dims(case)?;
    let risks = sc.line_risks(case);
    let nl = case.n_lines();

    let root = solve_node(case, sc, &vec![0.0; nl], &vec![1.0; nl])?
        .ok_or_else(|| Error::Infeasible("switching relaxation is infeasible at the root".into()))?;

    // Minimization form throughout: value = −objective.
    let mut incumbent: Option<SwitchingDecision> = None;
    let mut best = f64::INFINITY;
    let rounded: Vec<f64> = root.z.iter().map(|z| if *z >= 0.5 { 1.0 } else { 0.0 }).collect();
    if let Some(d) = fixed_topology(case, sc, &rounded)? {
        best = -d.objective;
        incumbent = Some(d);
    }
    if let Some(d) = dive(case, sc, &root)? {
        if -d.objective < best {
            best = -d.objective;
            incumbent = Some(d);
        }
    }

    let mut heap = BinaryHeap::new();
    let mut next_id = 0;
    heap.push(Node {
        bound: root.bound,
        id: next_id,
        lo: vec![0.0; nl],
        hi: vec![1.0; nl],
    });
    next_id += 1;
    let mut nodes = 0;
    let mut cached_root = Some(root);
    let tol = |best: f64| bnb.abs_gap.max(bnb.rel_gap * best.abs());
    let mut global_bound;
    loop {
        global_bound = heap.peek().map_or(best, |n| n.bound.min(best));
        let Some(node) = heap.pop() else { break };
        if node.bound >= best - tol(best) {
            global_bound = node.bound.min(best);
            heap.clear();
            break;
        }
        if nodes >= bnb.max_nodes {
            heap.push(node);
            break;
        }
        nodes += 1;
        let sol = match cached_root.take() {
            Some(r) => Some(r),
            None => solve_node(case, sc, &node.lo, &node.hi)?,
        };
        let Some(sol) = sol else { continue };
        if sol.bound >= best - tol(best) {
            continue;
        }
        // Reduced-cost fixing: a direction whose Lagrangian bound already
        // reaches the incumbent cannot hold a better solution.
        let mut lo = node.lo.clone();
        let mut hi = node.hi.clone();
        let mut tightened = false;
        if best.is_finite() {
            let cut = best - tol(best);
            for (l, &(up, down)) in sol.forced.iter().enumerate() {
                if lo[l] == hi[l] {
                    continue;
                }
                if up >= cut && down >= cut {
                    tightened = false;
                    lo.clear();
                    break;
                }
                if up >= cut {
                    hi[l] = 0.0;
                    tightened = true;
                } else if down >= cut {
                    lo[l] = 1.0;
                    tightened = true;
                }
            }
            if lo.is_empty() {
                continue;
            }
        }
        let frac: Vec<(usize, f64)> = sol
            .z
            .iter()
            .enumerate()
            .filter(|&(l, _)| lo[l] != hi[l])
            .map(|(l, z)| (l, (z - z.round()).abs()))
            .filter(|(_, f)| *f > INT_TOL)
            .collect();
        if frac.is_empty() {
            if tightened {
                heap.push(Node {
                    bound: sol.bound,
                    id: next_id,
                    lo,
                    hi,
                });
                next_id += 1;
                continue;
            }
            let z: Vec<f64> = sol.z.iter().map(|z| z.round()).collect();
            if let Some(d) = fixed_topology(case, sc, &z)? {
                if -d.objective < best {
                    best = -d.objective;
                    incumbent = Some(d);
                }
            }
            continue;
        }
        let pick = match bnb.branching {
            Branching::FirstFractional => frac[0].0,
            Branching::MostFractional => {
                frac.iter()
                    .max_by(|a, b| {
                        a.1.total_cmp(&b.1)
                            .then(risks[a.0].total_cmp(&risks[b.0]))
                            .then(b.0.cmp(&a.0))
                    })
                    .unwrap()
                    .0
            }
        };
        for val in [0.0, 1.0] {
            let mut lo = lo.clone();
            let mut hi = hi.clone();
            lo[pick] = val;
            hi[pick] = val;
            heap.push(Node {
                bound: sol.bound,
                id: next_id,
                lo,
                hi,
            });
            next_id += 1;
        }
    }
    let certified = heap.is_empty();
    let mut d = incumbent.ok_or_else(|| Error::Infeasible("no integer-feasible switching found".into()))?;
    d.certified = certified;
    d.nodes = nodes;
    d.bound = -global_bound;
    if !certified {
        log::warn!("branch-and-bound stopped after {nodes} nodes without closing the gap");
    }
    Ok(d)
}

/// One labelled training pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub gamma: ScenarioInput,
    pub z: Vec<u8>,
    pub objective: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub samples: Vec<TrainingSample>,
    pub draws: usize,
    pub rejected: usize,
}

impl TrainingSet {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("sample serializes"));
            out.push('\n');
        }
        out
    }
}

pub fn parse_jsonl(text: &str) -> Result<Vec<TrainingSample>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Syntax {
                line: i + 1,
                column: e.column(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Per-draw generator seeded from the master seed and the draw index.
pub(crate) fn draw_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ index as u64)
}

/// Draw scenarios uniformly from the verification box (α from
/// `alpha_range`) and label each with the globally optimal switching.
/// Draws whose solve fails or is not certified are re-drawn, up to 10·n.
pub fn generate_training_set(
    case: &NetworkCase,
    n: usize,
    alpha_range: (f64, f64),
    seed: u64,
    cfg: &OpsConfig,
) -> Result<TrainingSet> {
    if n == 0 {
        return Err(Error::Domain("training set size must be at least 1".into()));
    }
    if !(0.0 <= alpha_range.0 && alpha_range.0 <= alpha_range.1 && alpha_range.1 <= 1.0) {
        return Err(Error::Domain(format!("invalid alpha range {alpha_range:?}")));
    }
    let mut gbox = GammaBox::for_case(case);
    let a = gbox.dim() - 1;
    gbox.lo[a] = alpha_range.0;
    gbox.hi[a] = alpha_range.1;
    let budget = 10 * n;
    let mut samples = Vec::with_capacity(n);
    let mut draws = 0;
    while samples.len() < n && draws < budget {
        let batch = (n - samples.len()).min(budget - draws);
        let results: Vec<Option<TrainingSample>> = (draws..draws + batch)
            .into_par_iter()
            .map(|idx| {
                let mut rng = draw_rng(seed, idx);
                let g = gbox.sample(&mut rng);
                let sc = ScenarioInput::from_vec(&g, case.n_loads(), case.n_lines()).ok()?;
                match solve_soc_ops_global(case, &sc, cfg) {
                    Ok(d) if d.certified => Some(TrainingSample {
                        z: d.z.iter().map(|z| *z as u8).collect(),
                        objective: d.objective,
                        alpha: sc.alpha,
                        gamma: sc,
                    }),
                    Ok(_) => None,
                    Err(e) => {
                        log::debug!("draw {idx} rejected: {e}");
                        None
                    }
                }
            })
            .collect();
        draws += batch;
        samples.extend(results.into_iter().flatten());
    }
    let rejected = draws - samples.len();
    if rejected > 0 {
        log::info!("training data: {rejected} of {draws} draws rejected");
    }
    if samples.len() < n {
        return Err(Error::BudgetExhausted {
            draws,
            accepted: samples.len(),
        });
    }
    Ok(TrainingSet {
        samples,
        draws,
        rejected,
    })
}
