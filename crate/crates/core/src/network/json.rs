use serde::{Deserialize, Serialize};

use super::{Bus, Generator, Line, Load, NetworkCase, Shunt};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseDoc {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    name: String,
    base_mva: f64,
    buses: Vec<BusDoc>,
    lines: Vec<LineDoc>,
    gens: Vec<GenDoc>,
    loads: Vec<LoadDoc>,
    #[serde(default)]
    shunts: Vec<ShuntDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusDoc {
    id: i64,
    vmin: f64,
    vmax: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineDoc {
    id: i64,
    from: i64,
    to: i64,
    g: f64,
    b: f64,
    g_fr: f64,
    g_to: f64,
    b_fr: f64,
    b_to: f64,
    tap_mag: f64,
    tap_re: f64,
    tap_im: f64,
    thermal: f64,
    theta_max: f64,
    #[serde(default = "default_risk")]
    risk: f64,
}

fn default_risk() -> f64 {
    1.0
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenDoc {
    bus: i64,
    pmax: f64,
    qmin: f64,
    qmax: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadDoc {
    bus: i64,
    pd: f64,
    qd: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShuntDoc {
    bus: i64,
    gs: f64,
    bs: f64,
}

/// Parse the canonical JSON grid format. All electrical quantities are
/// per-unit on `base_mva`; angle limits are in radians and symmetric.
pub fn parse_json(text: &str) -> Result<NetworkCase> {
    let doc: CaseDoc = serde_json::from_str(text).map_err(|e| Error::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    NetworkCase::from_parts(
        doc.name,
        doc.base_mva,
        doc.buses
            .into_iter()
            .map(|b| Bus {
                id: b.id,
                v_min: b.vmin,
                v_max: b.vmax,
            })
            .collect(),
        doc.lines
            .into_iter()
            .map(|l| Line {
                id: l.id,
                from_bus: l.from,
                to_bus: l.to,
                g: l.g,
                b: l.b,
                g_fr: l.g_fr,
                g_to: l.g_to,
                b_fr: l.b_fr,
                b_to: l.b_to,
                tap_mag: l.tap_mag,
                tap_re: l.tap_re,
                tap_im: l.tap_im,
                thermal: l.thermal,
                theta_min: -l.theta_max,
                theta_max: l.theta_max,
                risk: l.risk,
            })
            .collect(),
        doc.gens
            .into_iter()
            .map(|g| Generator {
                bus: g.bus,
                p_max: g.pmax,
                q_min: g.qmin,
                q_max: g.qmax,
            })
            .collect(),
        doc.loads
            .into_iter()
            .map(|d| Load {
                bus: d.bus,
                p_base: d.pd,
                q_base: d.qd,
            })
            .collect(),
        doc.shunts
            .into_iter()
            .map(|s| Shunt {
                bus: s.bus,
                gs: s.gs,
                bs: s.bs,
            })
            .collect(),
    )
}

/// Serialize a case back into the canonical JSON grid format.
pub fn to_json(case: &NetworkCase) -> String {
    let doc = CaseDoc {
        name: case.name().to_string(),
        base_mva: case.base_mva(),
        buses: case
            .buses()
            .iter()
            .map(|b| BusDoc {
                id: b.id,
                vmin: b.v_min,
                vmax: b.v_max,
            })
            .collect(),
        lines: case
            .lines()
            .iter()
            .map(|l| LineDoc {
                id: l.id,
                from: l.from_bus,
                to: l.to_bus,
                g: l.g,
                b: l.b,
                g_fr: l.g_fr,
                g_to: l.g_to,
                b_fr: l.b_fr,
                b_to: l.b_to,
                tap_mag: l.tap_mag,
                tap_re: l.tap_re,
                tap_im: l.tap_im,
                thermal: l.thermal,
                theta_max: l.theta_max,
                risk: l.risk,
            })
            .collect(),
        gens: case
            .gens()
            .iter()
            .map(|g| GenDoc {
                bus: g.bus,
                pmax: g.p_max,
                qmin: g.q_min,
                qmax: g.q_max,
            })
            .collect(),
        loads: case
            .loads()
            .iter()
            .map(|d| LoadDoc {
                bus: d.bus,
                pd: d.p_base,
                qd: d.q_base,
            })
            .collect(),
        shunts: case
            .shunts()
            .iter()
            .map(|s| ShuntDoc {
                bus: s.bus,
                gs: s.gs,
                bs: s.bs,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("case serializes")
}
