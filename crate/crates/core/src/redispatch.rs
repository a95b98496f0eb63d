//! Defender problems: minimum load shed for a given line status vector.
//! Models I and II are the SOC convexification with fractional or binary
//! statuses; Model III is the nonconvex AC redispatch.

mod ac;

pub use ac::{solve_ac_redispatch, AcStart, AC_TOL};

use serde::{Deserialize, Serialize};

use crate::conic::{solve_conic, ConicProgram, Expr, ProgramBuilder, SolveStatus, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::formulation::{add_balance, add_network, effective_status, energized_buses, NetworkVars, SocOptions, Status};
use crate::network::NetworkCase;
use crate::scenario::ScenarioInput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelTag {
    I,
    II,
    III,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Dispatch {
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
}

/// Per-bus voltage magnitudes and angles (AC model only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusVoltages {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedispatchResult {
    pub model_tag: ModelTag,
    /// Σ (1 − x_d) P_d in p.u.
    pub shed: f64,
    pub x_d: Vec<f64>,
    pub dispatch: Dispatch,
    pub status: SolveStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voltages: Option<BusVoltages>,
}

impl RedispatchResult {
    pub fn is_ok(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Columns of the SOC redispatch program. Active shed is a variable
/// σ_d ∈ [0, P_d]; served reactive demand q_d lies between 0 and Q_d.
/// Loads in generator-free islands have σ_d = P_d and no q_d.
#[derive(Debug, Clone)]
pub struct SocRedispatchVars {
    pub sigma: Vec<usize>,
    pub q_served: Vec<Option<usize>>,
    pub net: NetworkVars,
}

fn build_inner(
    case: &NetworkCase,
    status: &[Status],
    dead: &[bool],
    opts: SocOptions,
) -> Result<(ConicProgram, SocRedispatchVars)> {
    let nd = case.n_loads();
    let mut bld = ProgramBuilder::new(ScenarioInput::dim(nd, case.n_lines()), case.n_lines());
    let mut sigma = Vec::with_capacity(nd);
    let mut q_served = Vec::with_capacity(nd);
    for (d, load) in case.loads().iter().enumerate() {
        let s = bld.free(format!("shed[{d}]"));
        bld.cost(s, 1.0);
        sigma.push(s);
        if dead[case.load_bus(d)] {
            bld.eq(format!("shed[{d}]=P"), Expr::var(s).gamma(d, -1.0));
            q_served.push(None);
            continue;
        }
        bld.le(format!("shed[{d}]>=0"), Expr::var(s).scaled(-1.0));
        bld.le(format!("shed[{d}]<=P"), Expr::var(s).gamma(d, -1.0));
        if load.q_base == 0.0 {
            q_served.push(None);
            continue;
        }
        let q = bld.free(format!("q[{d}]"));
        let qd = Expr::new().gamma(nd + d, 1.0);
        if load.q_base > 0.0 {
            bld.le(format!("q[{d}]>=0"), Expr::var(q).scaled(-1.0));
            bld.le(format!("q[{d}]<=Q"), Expr::var(q).add(&qd, -1.0));
        } else {
            bld.le(format!("q[{d}]<=0"), Expr::var(q));
            bld.le(format!("q[{d}]>=Q"), Expr::var(q).scaled(-1.0).add(&qd, 1.0));
        }
        q_served.push(Some(q));
    }
    let net = add_network(&mut bld, case, status, dead, opts)?;
    let mut load_p = vec![Expr::new(); case.n_buses()];
    let mut load_q = vec![Expr::new(); case.n_buses()];
    for d in 0..nd {
        let i = case.load_bus(d);
        if dead[i] {
            continue;
        }
        load_p[i] = std::mem::take(&mut load_p[i]).gamma(d, 1.0).term(sigma[d], -1.0);
        if let Some(q) = q_served[d] {
            load_q[i] = std::mem::take(&mut load_q[i]).term(q, 1.0);
        }
    }
    add_balance(&mut bld, case, &net, &dead, &load_p, &load_q);
    Ok((
        bld.build()?,
        SocRedispatchVars {
            sigma,
            q_served,
            net,
        },
    ))
}

/// The SOC redispatch program with every line status a parameter, so that
/// b(γ, L) and d(γ, L) are affine in the scenario and the statuses.
pub fn build_soc_redispatch(case: &NetworkCase, opts: SocOptions) -> Result<(ConicProgram, SocRedispatchVars)> {
    let status = vec![Status::Param; case.n_lines()];
    let dead: Vec<bool> = energized_buses(case, &vec![true; case.n_lines()]).iter().map(|e| !e).collect();
    build_inner(case, &status, &dead, opts)
}

fn check_inputs(case: &NetworkCase, sc: &ScenarioInput, z: &[f64]) -> Result<()> {
    sc.check_dims(case)?;
    if z.len() != case.n_lines() {
        return Err(Error::Dimension(format!("{} statuses for {} lines", z.len(), case.n_lines())));
    }
    if let Some(v) = z.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("line status {v} outside [0, 1]")));
    }
    Ok(())
}

/// Solve the SOC redispatch at statuses `z`. Binary `z` gives Model II:
/// statuses are substituted as constants and generator-free islands are
/// removed. Otherwise Model I, with the fractional entries as parameters.
pub fn solve_soc_redispatch(
    case: &NetworkCase,
    sc: &ScenarioInput,
    z: &[f64],
    opts: SocOptions,
    tol: f64,
) -> Result<RedispatchResult> {
    check_inputs(case, sc, z)?;
    let binary = z.iter().all(|v| *v == 0.0 || *v == 1.0);
    let (status, dead, tag) = if binary {
        let on: Vec<bool> = z.iter().map(|v| *v == 1.0).collect();
        let eff = effective_status(case, &on);
        let dead: Vec<bool> = energized_buses(case, &eff).iter().map(|e| !e).collect();
        let status: Vec<Status> = eff.iter().map(|&o| Status::Fixed(if o { 1.0 } else { 0.0 })).collect();
        (status, dead, ModelTag::II)
    } else {
        let on: Vec<bool> = z.iter().map(|v| *v > 0.0).collect();
        let dead: Vec<bool> = energized_buses(case, &on).iter().map(|e| !e).collect();
        let status: Vec<Status> = z
            .iter()
            .map(|&v| if v == 0.0 || v == 1.0 { Status::Fixed(v) } else { Status::Param })
            .collect();
        (status, dead, ModelTag::I)
    };
    let (p, vars) = build_inner(case, &status, &dead, opts)?;
    let gamma = sc.to_vec();
    let mut sol = solve_conic(&p, &gamma, z, tol)?;
    if matches!(sol.status, SolveStatus::NumericalFailure | SolveStatus::IterationLimit) && tol < 1e-6 {
        log::debug!("redispatch retried at 1e-6: {}", sol.diagnostic);
        sol = solve_conic(&p, &gamma, z, 1e-6)?;
    }
    let ok = sol.status == SolveStatus::Optimal;
    let x_d = vars
        .sigma
        .iter()
        .enumerate()
        .map(|(d, &s)| {
            if !ok {
                f64::NAN
            } else if sc.p_d[d] > 0.0 {
                (1.0 - sol.x[s] / sc.p_d[d]).clamp(0.0, 1.0)
            } else if dead[case.load_bus(d)] {
                0.0
            } else {
                1.0
            }
        })
        .collect();
    let pick = |cols: &[usize]| cols.iter().map(|&c| if ok { sol.x[c] } else { f64::NAN }).collect();
    Ok(RedispatchResult {
        model_tag: tag,
        shed: if ok { sol.objective } else { f64::NAN },
        x_d,
        dispatch: Dispatch {
            pg: pick(&vars.net.pg),
            qg: pick(&vars.net.qg),
        },
        status: sol.status,
        voltages: None,
    })
}

/// Model I or II at the default conic tolerance.
pub fn solve_model_soc(case: &NetworkCase, sc: &ScenarioInput, z: &[f64], opts: SocOptions) -> Result<RedispatchResult> {
    solve_soc_redispatch(case, sc, z, opts, DEFAULT_TOL)
}

/// shed_III − shed_II; nonnegative up to solver tolerance when both
/// come from the same case, scenario and statuses.
pub fn shed_gap(model_ii: &RedispatchResult, model_iii: &RedispatchResult) -> Result<f64> {
    if model_ii.model_tag != ModelTag::II || model_iii.model_tag != ModelTag::III {
        return Err(Error::Domain(format!(
            "shed gap needs Model II and Model III results, got {:?} and {:?}",
            model_ii.model_tag, model_iii.model_tag
        )));
    }
    if model_ii.x_d.len() != model_iii.x_d.len() {
        return Err(Error::Dimension(format!(
            "results cover {} and {} loads",
            model_ii.x_d.len(),
            model_iii.x_d.len()
        )));
    }
    Ok(model_iii.shed - model_ii.shed)
}
