use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Box on the lifted cross-voltage terms of a line,
/// `W^R ≈ V_i V_j cos(θ_i − θ_j)` and `W^I ≈ V_i V_j sin(θ_i − θ_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WBounds {
    pub wr_min: f64,
    pub wr_max: f64,
    pub wi_min: f64,
    pub wi_max: f64,
}

impl WBounds {
    pub(crate) const UNBOUNDED: WBounds = WBounds {
        wr_min: f64::NEG_INFINITY,
        wr_max: f64::INFINITY,
        wi_min: f64::NEG_INFINITY,
        wi_max: f64::INFINITY,
    };

    pub fn is_bounded(&self) -> bool {
        [self.wr_min, self.wr_max, self.wi_min, self.wi_max]
            .iter()
            .all(|v| v.is_finite())
    }

    pub fn contains(&self, wr: f64, wi: f64) -> bool {
        wr >= self.wr_min && wr <= self.wr_max && wi >= self.wi_min && wi <= self.wi_max
    }
}

/// Lifted cross-voltage box from magnitude limits at both ends and a
/// symmetric angle-difference limit `theta_max ∈ [0, π/2)`.
pub fn compute_w_bounds(
    v_min_i: f64,
    v_max_i: f64,
    v_min_j: f64,
    v_max_j: f64,
    theta_max: f64,
) -> Result<WBounds> {
    if !(0.0..FRAC_PI_2).contains(&theta_max) {
        return Err(Error::Domain(format!(
            "angle limit {theta_max} rad must lie in [0, π/2)"
        )));
    }
    if !(v_min_i > 0.0 && v_min_i <= v_max_i && v_min_j > 0.0 && v_min_j <= v_max_j) {
        return Err(Error::Domain(format!(
            "voltage limits [{v_min_i}, {v_max_i}], [{v_min_j}, {v_max_j}] must satisfy 0 < min ≤ max"
        )));
    }
    let vv_max = v_max_i * v_max_j;
    let wi_max = vv_max * theta_max.sin();
    Ok(WBounds {
        wr_min: v_min_i * v_min_j * theta_max.cos(),
        wr_max: vv_max,
        wi_min: -wi_max,
        wi_max,
    })
}
