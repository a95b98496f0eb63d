use std::f64::consts::FRAC_PI_2;

use serde::Serialize;

use super::NetworkCase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Severity {
    Error,
    Warning,
}

/// One invariant violation, addressed by component path (e.g. `lines[3]`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub severity: Severity,
    pub path: String,
    pub message: String,
}

/// Check every type invariant of the case. An empty list means the case is
/// fully valid.
pub fn validate(case: &NetworkCase) -> Vec<Finding> {
    let mut out = Vec::new();
    let mut error = |path: String, message: String| {
        out.push(Finding {
            severity: Severity::Error,
            path,
            message,
        })
    };

    for (k, bus) in case.buses().iter().enumerate() {
        if !(bus.v_min > 0.0 && bus.v_min <= bus.v_max) {
            error(
                format!("buses[{k}] (id {})", bus.id),
                format!("voltage limits [{}, {}] violate 0 < vmin <= vmax", bus.v_min, bus.v_max),
            );
        }
    }

    for (k, line) in case.lines().iter().enumerate() {
        let path = format!("lines[{k}] (id {})", line.id);
        let tap = line.tap_re.powi(2) + line.tap_im.powi(2);
        if (line.tap_mag.powi(2) - tap).abs() > 1e-9 || line.tap_mag <= 0.0 {
            error(
                path.clone(),
                format!(
                    "tap magnitude {} inconsistent with tap ({}, {})",
                    line.tap_mag, line.tap_re, line.tap_im
                ),
            );
        }
        if !(line.thermal > 0.0) {
            error(path.clone(), format!("nonpositive thermal limit {}", line.thermal));
        }
        if !(line.theta_min < 0.0 && line.theta_max > 0.0) {
            error(
                path.clone(),
                format!(
                    "angle limits [{}, {}] must straddle zero",
                    line.theta_min, line.theta_max
                ),
            );
        } else if (line.theta_min + line.theta_max).abs() > 1e-12 {
            error(
                path.clone(),
                format!(
                    "asymmetric angle bounds [{}, {}]",
                    line.theta_min, line.theta_max
                ),
            );
        } else if line.theta_max >= FRAC_PI_2 {
            error(
                path.clone(),
                format!("angle limit {} rad leaves the lifted voltage box unbounded", line.theta_max),
            );
        } else if line.theta_max > case.theta_delta_max() {
            error(
                path.clone(),
                format!(
                    "angle limit {} exceeds the big-M constant {}",
                    line.theta_max,
                    case.theta_delta_max()
                ),
            );
        }
        if !(line.risk >= 0.0) {
            error(path, format!("negative risk {}", line.risk));
        }
    }

    for (k, gen) in case.gens().iter().enumerate() {
        let path = format!("gens[{k}] (bus {})", gen.bus);
        if !(gen.p_max >= 0.0) {
            error(path.clone(), format!("negative pmax {}", gen.p_max));
        }
        if !(gen.q_min <= gen.q_max) {
            error(path, format!("qmin {} above qmax {}", gen.q_min, gen.q_max));
        }
    }

    for (k, load) in case.loads().iter().enumerate() {
        if !(load.p_base >= 0.0) {
            error(
                format!("loads[{k}] (bus {})", load.bus),
                format!("negative active demand {}", load.p_base),
            );
        }
    }

    if !(case.p_tot() > 0.0) {
        error("loads".into(), "total active demand must be positive".into());
    }
    if !(case.r_tot() > 0.0) {
        error("lines".into(), "total line risk must be positive".into());
    }
    out
}
