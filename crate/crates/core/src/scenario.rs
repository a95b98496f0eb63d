//! Scenario vectors γ = (P^D, Q^D, R, α) and their verification box.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NetworkCase;

/// Load multiplier range around the base case.
pub const LOAD_RANGE: (f64, f64) = (0.75, 1.25);
/// Range for the per-line risk multipliers.
pub const RISK_RANGE: (f64, f64) = (0.25, 0.75);
/// Range for the risk/load tradeoff parameter.
pub const ALPHA_RANGE: (f64, f64) = (0.25, 0.75);

/// One operating scenario. Flattened layout is `[p_d…, q_d…, r…, alpha]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInput {
    pub p_d: Vec<f64>,
    pub q_d: Vec<f64>,
    pub r: Vec<f64>,
    pub alpha: f64,
}

impl ScenarioInput {
    /// Base loading with risk multipliers and α at their box midpoints.
    pub fn base(case: &NetworkCase) -> Self {
        ScenarioInput {
            p_d: case.loads().iter().map(|d| d.p_base).collect(),
            q_d: case.loads().iter().map(|d| d.q_base).collect(),
            r: vec![0.5 * (RISK_RANGE.0 + RISK_RANGE.1); case.n_lines()],
            alpha: 0.5 * (ALPHA_RANGE.0 + ALPHA_RANGE.1),
        }
    }

    pub fn dim(n_loads: usize, n_lines: usize) -> usize {
        2 * n_loads + n_lines + 1
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.p_d.len() * 2 + self.r.len() + 1);
        v.extend_from_slice(&self.p_d);
        v.extend_from_slice(&self.q_d);
        v.extend_from_slice(&self.r);
        v.push(self.alpha);
        v
    }

    pub fn from_vec(v: &[f64], n_loads: usize, n_lines: usize) -> Result<Self> {
        if v.len() != Self::dim(n_loads, n_lines) {
            return Err(Error::Dimension(format!(
                "scenario vector has {} entries, expected {}",
                v.len(),
                Self::dim(n_loads, n_lines)
            )));
        }
        Ok(ScenarioInput {
            p_d: v[..n_loads].to_vec(),
            q_d: v[n_loads..2 * n_loads].to_vec(),
            r: v[2 * n_loads..2 * n_loads + n_lines].to_vec(),
            alpha: v[2 * n_loads + n_lines],
        })
    }

    pub fn check_dims(&self, case: &NetworkCase) -> Result<()> {
        if self.p_d.len() != case.n_loads()
            || self.q_d.len() != case.n_loads()
            || self.r.len() != case.n_lines()
        {
            return Err(Error::Dimension(format!(
                "scenario has {}/{}/{} load/load/line entries, case has {} loads and {} lines",
                self.p_d.len(),
                self.q_d.len(),
                self.r.len(),
                case.n_loads(),
                case.n_lines()
            )));
        }
        Ok(())
    }

    /// Line risk weights R_ij = base risk × multiplier.
    pub fn line_risks(&self, case: &NetworkCase) -> Vec<f64> {
        case.lines()
            .iter()
            .zip(&self.r)
            .map(|(l, m)| l.risk * m)
            .collect()
    }
}

/// Componentwise box `lo ≤ γ ≤ hi` over the flattened scenario layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl GammaBox {
    /// Verification box: loads ±25 % of base, risk and α in [0.25, 0.75].
    pub fn for_case(case: &NetworkCase) -> Self {
        let scaled = |v: f64| {
            let (a, b) = (LOAD_RANGE.0 * v, LOAD_RANGE.1 * v);
            (a.min(b), a.max(b))
        };
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for d in case.loads() {
            let (a, b) = scaled(d.p_base);
            lo.push(a);
            hi.push(b);
        }
        for d in case.loads() {
            let (a, b) = scaled(d.q_base);
            lo.push(a);
            hi.push(b);
        }
        for _ in case.lines() {
            lo.push(RISK_RANGE.0);
            hi.push(RISK_RANGE.1);
        }
        lo.push(ALPHA_RANGE.0);
        hi.push(ALPHA_RANGE.1);
        GammaBox { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn contains(&self, gamma: &[f64], tol: f64) -> bool {
        gamma.len() == self.dim()
            && gamma
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(g, (a, b))| *g >= a - tol && *g <= b + tol)
    }

    pub fn project(&self, gamma: &mut [f64]) {
        for (g, (a, b)) in gamma.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *g = g.clamp(*a, *b);
        }
    }

    /// Affine map of the box onto [-1, 1]. Degenerate (zero-width)
    /// components map to 0.
    pub fn normalize(&self, gamma: &[f64]) -> Vec<f64> {
        gamma
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(g, (a, b))| {
                if b > a {
                    2.0 * (g - a) / (b - a) - 1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn denormalize(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(u, (a, b))| a + 0.5 * (u + 1.0) * (b - a))
            .collect()
    }

    /// dγ/du per component.
    pub fn half_widths(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (b - a))
            .collect()
    }

    /// Independent uniform draw per component.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| if b > a { rng.gen_range(*a..=*b) } else { *a })
            .collect()
    }
}
