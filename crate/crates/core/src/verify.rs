//! Worst-case load-shed search over a trained switching proxy, followed by
//! the restoration pipeline (Model I → snap → Models II and III).
//!
//! The single-level problem maximizes λᵀb(γ,L) + μᵀd(γ,L) over dual
//! feasible (λ, μ, s), the γ box and L = NN(γ). For fixed (γ, L) the inner
//! maximum over the multipliers is a conic program, solved exactly; the
//! outer search runs projected gradient ascent on γ with the gradient
//! B_γᵀλ + D_γᵀμ + J_NNᵀ(B_Lᵀλ + D_Lᵀμ). Every iterate is therefore dual
//! feasible and NN consistent, and only outer stationarity is approximate.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::{dualize, solve_conic, ConicProgram, DualPoint, DualProgram, SolveStatus};
use crate::error::{Error, Result};
use crate::formulation::SocOptions;
use crate::network::NetworkCase;
use crate::nn::{snap, MlpModel};
use crate::redispatch::{build_soc_redispatch, solve_ac_redispatch, solve_soc_redispatch, SocRedispatchVars};
use crate::scenario::{GammaBox, ScenarioInput};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    /// Network constraints in the inner program and Models I/II.
    pub soc: SocOptions,
    /// Number of starts: the box midpoint, then seeded uniform draws.
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Bound on dual infeasibility and scaled outer stationarity.
    pub stage_tol: f64,
    /// Conic tolerance for the inner solves.
    pub inner_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            soc: SocOptions::SIMPLIFIED,
            restarts: 5,
            seed: 0,
            max_iter: 100,
            stage_tol: 5e-3,
            inner_tol: 1e-7,
        }
    }
}

/// Sizes of the single-level program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableCount {
    pub lambda: usize,
    pub mu: usize,
    pub s: usize,
    pub gamma: usize,
    pub l: usize,
    /// Pre-activations of every neuron plus hidden activations.
    pub nn_aux: usize,
}

impl VariableCount {
    pub fn total(&self) -> usize {
        self.lambda + self.mu + self.s + self.gamma + self.l + self.nn_aux
    }
}

pub struct VerificationProblem {
    pub primal: ConicProgram,
    pub dual: DualProgram,
    pub vars: SocRedispatchVars,
    pub nn: MlpModel,
    pub gbox: GammaBox,
    pub soc: SocOptions,
}

/// Inner solve at one γ.
#[derive(Debug, Clone)]
pub struct InnerPoint {
    pub gamma: Vec<f64>,
    pub l: Vec<f64>,
    pub y: DualPoint,
    pub dual_objective: f64,
    pub primal_objective: f64,
    /// d(dual objective)/dγ through both γ and L = NN(γ).
    pub grad: Vec<f64>,
}

pub fn build_verification(case: &NetworkCase, nn: &MlpModel, soc: SocOptions) -> Result<VerificationProblem> {
    nn.check_case(case)?;
    let (primal, vars) = build_soc_redispatch(case, soc)?;
    let dual = dualize(&primal)?;
    Ok(VerificationProblem {
        primal,
        dual,
        vars,
        nn: nn.clone(),
        gbox: GammaBox::for_case(case),
        soc,
    })
}

impl VerificationProblem {
    pub fn variable_count(&self) -> VariableCount {
        let [_, h1, h2, out] = self.nn.dims;
        VariableCount {
            lambda: self.dual.n_lambda(),
            mu: self.dual.n_mu(),
            s: self.dual.n_s(),
            gamma: self.gbox.dim(),
            l: out,
            nn_aux: 2 * (h1 + h2) + out,
        }
    }

    pub fn evaluate(&self, gamma: &[f64], tol: f64) -> Result<InnerPoint> {
        if !self.gbox.contains(gamma, 1e-9) {
            return Err(Error::Domain("scenario outside the verification box".into()));
        }
        let l = self.nn.forward(gamma)?;
        let mut sol = solve_conic(&self.primal, gamma, &l, tol)?;
        if !sol.is_optimal() && tol < 1e-6 {
            sol = solve_conic(&self.primal, gamma, &l, 1e-6)?;
        }
        let y = match (sol.status, sol.dual) {
            (SolveStatus::Optimal, Some(y)) => y,
            (st, _) => return Err(Error::Solver(format!("inner solve ended with {st:?}: {}", sol.diagnostic))),
        };
        let (mut grad, gl) = self.dual.parameter_gradient(&y);
        let jac = self.nn.jacobian(gamma)?;
        for (row, g) in jac.iter().zip(&gl) {
            for (a, j) in grad.iter_mut().zip(row) {
                *a += g * j;
            }
        }
        Ok(InnerPoint {
            dual_objective: self.dual.objective(&y, gamma, &l),
            primal_objective: sol.objective,
            gamma: gamma.to_vec(),
            l,
            y,
            grad,
        })
    }

    /// ‖P(u + ∇_u F) − u‖∞ in normalized coordinates, over 1 + |F|.
    pub fn stationarity(&self, p: &InnerPoint) -> f64 {
        let u = self.gbox.normalize(&p.gamma);
        let s = self
            .gbox
            .half_widths()
            .iter()
            .zip(&p.grad)
            .zip(&u)
            .filter(|((h, _), _)| **h > 0.0)
            .fold(0.0_f64, |m, ((h, g), u)| m.max(((u + g * h).clamp(-1.0, 1.0) - u).abs()));
        s / (1.0 + p.dual_objective.abs())
    }

    /// Scaled dual infeasibility of the multipliers.
    pub fn dual_residual(&self, p: &InnerPoint) -> Result<f64> {
        let scale = 1.0 + self.dual.h.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Ok(self.dual.infeasibility(&p.y)? / scale)
    }
}

/// Outcome of the search from one start.
#[derive(Debug, Clone)]
pub struct StageA {
    pub point: InnerPoint,
    pub start: usize,
    pub iterations: usize,
    pub stationarity: f64,
    pub dual_residual: f64,
    pub converged: bool,
}

fn ascend(vp: &VerificationProblem, start: Vec<f64>, k: usize, cfg: &VerifyConfig) -> Result<StageA> {
    let hw = vp.gbox.half_widths();
    let mut cur = vp.evaluate(&start, cfg.inner_tol)?;
    let mut step = 1.0;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        if vp.stationarity(&cur) <= 1e-3 * cfg.stage_tol {
            break;
        }
        iterations += 1;
        let u = vp.gbox.normalize(&cur.gamma);
        let gu: Vec<f64> = cur.grad.iter().zip(&hw).map(|(g, h)| g * h).collect();
        let scale = gu.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        let mut accepted = None;
        while step >= 1e-6 {
            let un: Vec<f64> = u
                .iter()
                .zip(&gu)
                .zip(&hw)
                .map(|((u, g), h)| if *h > 0.0 { (u + step * g / scale).clamp(-1.0, 1.0) } else { *u })
                .collect();
            let mut gamma = vp.gbox.denormalize(&un);
            vp.gbox.project(&mut gamma);
            let predicted: f64 = gu.iter().zip(un.iter().zip(&u)).map(|(g, (a, b))| g * (a - b)).sum();
            match vp.evaluate(&gamma, cfg.inner_tol) {
                Ok(next) if next.dual_objective >= cur.dual_objective + 1e-4 * predicted && predicted > 0.0 => {
                    accepted = Some(next);
                    break;
                }
                _ => step *= 0.5,
            }
        }
        match accepted {
            Some(next) => {
                cur = next;
                step = (2.0 * step).min(2.0);
            }
            None => break,
        }
    }
    let stationarity = vp.stationarity(&cur);
    let dual_residual = vp.dual_residual(&cur)?;
    Ok(StageA {
        converged: stationarity <= cfg.stage_tol && dual_residual <= cfg.stage_tol,
        point: cur,
        start: k,
        iterations,
        stationarity,
        dual_residual,
    })
}

pub fn start_point(vp: &VerificationProblem, k: usize, seed: u64) -> Vec<f64> {
    if k == 0 {
        vp.gbox.midpoint()
    } else {
        vp.gbox.sample(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64)))
    }
}

/// Multistart ascent; the best converged start by dual objective wins,
/// ties going to the lowest start index.
pub fn solve_verification(vp: &VerificationProblem, cfg: &VerifyConfig) -> Result<StageA> {
    if cfg.restarts == 0 {
        return Err(Error::Domain("at least one start is required".into()));
    }
    let runs: Vec<Result<StageA>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|k| ascend(vp, start_point(vp, k, cfg.seed), k, cfg))
        .collect();
    let mut best: Option<StageA> = None;
    let mut fallback: Option<StageA> = None;
    for r in runs {
        match r {
            Ok(a) if a.converged => {
                if best.as_ref().map_or(true, |b| a.point.dual_objective > b.point.dual_objective) {
                    best = Some(a);
                }
            }
            Ok(a) => {
                let res = a.stationarity.max(a.dual_residual);
                if fallback.as_ref().map_or(true, |b| res < b.stationarity.max(b.dual_residual)) {
                    fallback = Some(a);
                }
            }
            Err(e) => log::warn!("verification start failed: {e}"),
        }
    }
    match (best, fallback) {
        (Some(b), _) => Ok(b),
        (None, Some(f)) => Err(Error::Unconverged {
            residual: f.stationarity.max(f.dual_residual),
            gamma: f.point.gamma,
        }),
        (None, None) => Err(Error::Solver("every start failed in the inner solve".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    NumericalFailure,
    Error,
}

impl From<SolveStatus> for StageStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Optimal => StageStatus::Optimal,
            SolveStatus::Infeasible => StageStatus::Infeasible,
            SolveStatus::Unbounded => StageStatus::Unbounded,
            SolveStatus::IterationLimit => StageStatus::IterationLimit,
            SolveStatus::NumericalFailure => StageStatus::NumericalFailure,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Sheds {
    #[serde(rename = "I")]
    pub model_i: Option<f64>,
    #[serde(rename = "II")]
    pub model_ii: Option<f64>,
    #[serde(rename = "III")]
    pub model_iii: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Statuses {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_a: Option<StageStatus>,
    #[serde(rename = "I")]
    pub model_i: StageStatus,
    #[serde(rename = "II")]
    pub model_ii: StageStatus,
    #[serde(rename = "III")]
    pub model_iii: StageStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_a: Option<f64>,
    #[serde(rename = "I")]
    pub model_i: f64,
    #[serde(rename = "II")]
    pub model_ii: f64,
    #[serde(rename = "III")]
    pub model_iii: f64,
}

/// Restoration outcome at one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub gamma: ScenarioInput,
    #[serde(rename = "L")]
    pub l: Vec<f64>,
    pub z: Vec<u8>,
    pub shed: Sheds,
    pub status: Statuses,
    pub time_s: Timings,
}

impl PipelineOutcome {
    pub fn all_ok(&self) -> bool {
        [self.status.model_i, self.status.model_ii, self.status.model_iii]
            .iter()
            .all(|s| *s == StageStatus::Optimal)
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}

fn stage(r: Result<crate::redispatch::RedispatchResult>, name: &str) -> (Option<f64>, StageStatus) {
    match r {
        Ok(r) if r.is_ok() => (Some(r.shed), StageStatus::Optimal),
        Ok(r) => (None, r.status.into()),
        Err(e) => {
            log::warn!("{name} failed: {e}");
            (None, StageStatus::Error)
        }
    }
}

/// Model I at L = NN(γ), then snap(L) into Models II and III. Each stage
/// runs even if an earlier one fails.
pub fn run_pipeline(case: &NetworkCase, nn: &MlpModel, gamma: &ScenarioInput, soc: SocOptions) -> Result<PipelineOutcome> {
    gamma.check_dims(case)?;
    let l = nn.forward(&gamma.to_vec())?;
    let z = snap(&l);
    let zf: Vec<f64> = z.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let ((shed_i, st_i), t_i) = timed(|| stage(solve_soc_redispatch(case, gamma, &l, soc, 1e-8), "Model I"));
    let ((shed_ii, st_ii), t_ii) = timed(|| stage(solve_soc_redispatch(case, gamma, &zf, soc, 1e-8), "Model II"));
    let ((shed_iii, st_iii), t_iii) = timed(|| stage(solve_ac_redispatch(case, gamma, &z, None), "Model III"));
    Ok(PipelineOutcome {
        gamma: gamma.clone(),
        l,
        z: z.iter().map(|&b| b as u8).collect(),
        shed: Sheds {
            model_i: shed_i,
            model_ii: shed_ii,
            model_iii: shed_iii,
        },
        status: Statuses {
            stage_a: None,
            model_i: st_i,
            model_ii: st_ii,
            model_iii: st_iii,
        },
        time_s: Timings {
            stage_a: None,
            model_i: t_i,
            model_ii: t_ii,
            model_iii: t_iii,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    #[serde(flatten)]
    pub outcome: PipelineOutcome,
    /// Stage-A value λᵀb + μᵀd at (γ*, NN(γ*)).
    pub dual_obj: f64,
    pub stationarity: f64,
    pub dual_residual: f64,
    pub start: usize,
    pub iterations: usize,
    pub variables: VariableCount,
}

impl VerificationResult {
    /// The realized AC shed at the adversarial scenario.
    pub fn headline(&self) -> Option<f64> {
        self.outcome.shed.model_iii
    }
}

pub fn verify(case: &NetworkCase, nn: &MlpModel, cfg: &VerifyConfig) -> Result<VerificationResult> {
    let vp = build_verification(case, nn, cfg.soc).map_err(|e| e.in_stage("build"))?;
    let (a, t_a) = timed(|| solve_verification(&vp, cfg));
    let a = a.map_err(|e| e.in_stage("stage A"))?;
    let gamma = ScenarioInput::from_vec(&a.point.gamma, case.n_loads(), case.n_lines())?;
    let mut outcome = run_pipeline(case, nn, &gamma, cfg.soc).map_err(|e| e.in_stage("restoration"))?;
    outcome.status.stage_a = Some(StageStatus::Optimal);
    outcome.time_s.stage_a = Some(t_a);
    Ok(VerificationResult {
        outcome,
        dual_obj: a.point.dual_objective,
        stationarity: a.stationarity,
        dual_residual: a.dual_residual,
        start: a.start,
        iterations: a.iterations,
        variables: vp.variable_count(),
    })
}

#[cfg(test)]
mod tests;
