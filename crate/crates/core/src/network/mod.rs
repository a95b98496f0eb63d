//! Power-grid case model.
//!
//! A [`NetworkCase`] is an immutable per-unit description of a transmission
//! grid together with the per-bus incidence maps and derived constants that
//! every problem builder needs. Cases come from the canonical JSON grid format
//! ([`parse_json`]) or from a subset of the MATPOWER `.m` format
//! ([`parse_matpower`]); [`parse_case`] sniffs which one it was given.

mod json;
mod matpower;
mod synthetic;
mod validate;
mod wbounds;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use json::{parse_json, to_json};
pub use matpower::parse_matpower;
pub use synthetic::{random_grid, simple_line};
pub use validate::{validate, Finding, Severity};
pub use wbounds::{compute_w_bounds, WBounds};

/// Default big-M constant used to decouple angle differences across open lines.
pub const DEFAULT_THETA_DELTA_MAX: f64 = PI / 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: i64,
    pub v_min: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shunt {
    pub bus: i64,
    pub gs: f64,
    pub bs: f64,
}

/// A branch (line or transformer) in the pi-model with a complex tap on the
/// from side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: i64,
    pub from_bus: i64,
    pub to_bus: i64,
    pub g: f64,
    pub b: f64,
    pub g_fr: f64,
    pub g_to: f64,
    pub b_fr: f64,
    pub b_to: f64,
    pub tap_mag: f64,
    pub tap_re: f64,
    pub tap_im: f64,
    pub thermal: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: i64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus: i64,
    pub p_base: f64,
    pub q_base: f64,
}

/// Which end of a line touches a bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    From,
    To,
}

/// Immutable per-unit grid model with incidence maps.
///
/// Component vectors are sorted: buses and lines by ascending id, generators,
/// loads and shunts by ascending bus id (stable with respect to input order).
/// The neural-network input layout depends on this ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCase {
    name: String,
    base_mva: f64,
    buses: Vec<Bus>,
    lines: Vec<Line>,
    gens: Vec<Generator>,
    loads: Vec<Load>,
    shunts: Vec<Shunt>,
    bus_index: BTreeMap<i64, usize>,
    line_ends: Vec<(usize, usize)>,
    bus_gens: Vec<Vec<usize>>,
    bus_loads: Vec<Vec<usize>>,
    bus_shunts: Vec<Vec<usize>>,
    bus_lines: Vec<Vec<(usize, End)>>,
    gen_bus: Vec<usize>,
    load_bus: Vec<usize>,
    shunt_bus: Vec<usize>,
    w_bounds: Vec<WBounds>,
    p_tot: f64,
    r_tot: f64,
    theta_delta_max: f64,
}

impl NetworkCase {
    /// Assemble a case from components, sorting them and building incidence maps.
    ///
    /// Only referential integrity is enforced here; numeric invariants are
    /// reported by [`validate`].
    pub fn from_parts(
        name: impl Into<String>,
        base_mva: f64,
        mut buses: Vec<Bus>,
        mut lines: Vec<Line>,
        mut gens: Vec<Generator>,
        mut loads: Vec<Load>,
        mut shunts: Vec<Shunt>,
    ) -> Result<Self> {
        buses.sort_by_key(|b| b.id);
        lines.sort_by_key(|l| l.id);
        gens.sort_by_key(|g| g.bus);
        loads.sort_by_key(|d| d.bus);
        shunts.sort_by_key(|s| s.bus);

        let mut bus_index = BTreeMap::new();
        for (k, bus) in buses.iter().enumerate() {
            if bus_index.insert(bus.id, k).is_some() {
                return Err(Error::semantic(
                    format!("bus {}", bus.id),
                    "duplicate bus id",
                ));
            }
        }
        for pair in lines.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::semantic(
                    format!("line {}", pair[0].id),
                    "duplicate line id",
                ));
            }
        }

        let lookup = |kind: &str, idx: usize, bus: i64| -> Result<usize> {
            bus_index.get(&bus).copied().ok_or_else(|| {
                Error::semantic(
                    format!("{kind}[{idx}]"),
                    format!("{kind} references missing bus {bus}"),
                )
            })
        };

        let n = buses.len();
        let mut bus_gens = vec![Vec::new(); n];
        let mut bus_loads = vec![Vec::new(); n];
        let mut bus_shunts = vec![Vec::new(); n];
        let mut bus_lines = vec![Vec::new(); n];

        let mut line_ends = Vec::with_capacity(lines.len());
        for (k, line) in lines.iter().enumerate() {
            let f = lookup("line", k, line.from_bus)?;
            let t = lookup("line", k, line.to_bus)?;
            if f == t {
                return Err(Error::semantic(
                    format!("line {}", line.id),
                    "line connects a bus to itself",
                ));
            }
            bus_lines[f].push((k, End::From));
            bus_lines[t].push((k, End::To));
            line_ends.push((f, t));
        }
        let mut gen_bus = Vec::with_capacity(gens.len());
        for (k, gen) in gens.iter().enumerate() {
            let i = lookup("generator", k, gen.bus)?;
            bus_gens[i].push(k);
            gen_bus.push(i);
        }
        let mut load_bus = Vec::with_capacity(loads.len());
        for (k, load) in loads.iter().enumerate() {
            let i = lookup("load", k, load.bus)?;
            bus_loads[i].push(k);
            load_bus.push(i);
        }
        let mut shunt_bus = Vec::with_capacity(shunts.len());
        for (k, shunt) in shunts.iter().enumerate() {
            let i = lookup("shunt", k, shunt.bus)?;
            bus_shunts[i].push(k);
            shunt_bus.push(i);
        }

        let w_bounds = lines
            .iter()
            .zip(&line_ends)
            .map(|(line, &(f, t))| {
                let theta = line.theta_max.max(-line.theta_min);
                compute_w_bounds(
                    buses[f].v_min,
                    buses[f].v_max,
                    buses[t].v_min,
                    buses[t].v_max,
                    theta,
                )
                .unwrap_or(WBounds::UNBOUNDED)
            })
            .collect();

        let p_tot = loads.iter().map(|d| d.p_base).sum();
        let r_tot = lines.iter().map(|l| l.risk).sum();

        Ok(NetworkCase {
            name: name.into(),
            base_mva,
            buses,
            lines,
            gens,
            loads,
            shunts,
            bus_index,
            line_ends,
            bus_gens,
            bus_loads,
            bus_shunts,
            bus_lines,
            gen_bus,
            load_bus,
            shunt_bus,
            w_bounds,
            p_tot,
            r_tot,
            theta_delta_max: DEFAULT_THETA_DELTA_MAX,
        })
    }

    /// Override the big-M angle constant.
    pub fn with_theta_delta_max(mut self, theta: f64) -> Self {
        self.theta_delta_max = theta;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }
    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }
    pub fn lines(&self) -> &[Line] {
        &self.lines
    }
    pub fn gens(&self) -> &[Generator] {
        &self.gens
    }
    pub fn loads(&self) -> &[Load] {
        &self.loads
    }
    pub fn shunts(&self) -> &[Shunt] {
        &self.shunts
    }
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }
    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }
    pub fn n_gens(&self) -> usize {
        self.gens.len()
    }
    pub fn n_loads(&self) -> usize {
        self.loads.len()
    }
    pub fn n_shunts(&self) -> usize {
        self.shunts.len()
    }

    /// Position of a bus id in [`buses`](Self::buses).
    pub fn bus_position(&self, id: i64) -> Option<usize> {
        self.bus_index.get(&id).copied()
    }

    /// (from, to) bus positions of a line.
    pub fn line_ends(&self, line: usize) -> (usize, usize) {
        self.line_ends[line]
    }
    pub fn bus_gens(&self, bus: usize) -> &[usize] {
        &self.bus_gens[bus]
    }
    pub fn bus_loads(&self, bus: usize) -> &[usize] {
        &self.bus_loads[bus]
    }
    pub fn bus_shunts(&self, bus: usize) -> &[usize] {
        &self.bus_shunts[bus]
    }
    pub fn bus_lines(&self, bus: usize) -> &[(usize, End)] {
        &self.bus_lines[bus]
    }
    pub fn gen_bus(&self, gen: usize) -> usize {
        self.gen_bus[gen]
    }
    pub fn load_bus(&self, load: usize) -> usize {
        self.load_bus[load]
    }
    pub fn shunt_bus(&self, shunt: usize) -> usize {
        self.shunt_bus[shunt]
    }
    pub fn w_bounds(&self, line: usize) -> WBounds {
        self.w_bounds[line]
    }
    /// Total base active demand.
    pub fn p_tot(&self) -> f64 {
        self.p_tot
    }
    /// Total base line risk.
    pub fn r_tot(&self) -> f64 {
        self.r_tot
    }
    pub fn theta_delta_max(&self) -> f64 {
        self.theta_delta_max
    }

    /// Connected components over the lines whose `energized` flag is set.
    /// Returns a component label per bus; labels are dense and ordered by the
    /// lowest bus position they contain.
    pub fn components(&self, energized: &[bool]) -> Vec<usize> {
        let n = self.n_buses();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for (l, &on) in energized.iter().enumerate() {
            if on {
                let (f, t) = self.line_ends[l];
                let (rf, rt) = (find(&mut parent, f), find(&mut parent, t));
                if rf != rt {
                    parent[rf.max(rt)] = rf.min(rt);
                }
            }
        }
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        let mut out = vec![0; n];
        for i in 0..n {
            let r = find(&mut parent, i);
            if label[r] == usize::MAX {
                label[r] = next;
                next += 1;
            }
            out[i] = label[r];
        }
        out
    }

    /// Layout fingerprint of the scenario vector for this case: load buses,
    /// line ids, in order. Used to tie trained models to a case.
    pub fn layout_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(b"loads");
        for d in &self.loads {
            hasher.update(d.bus.to_le_bytes());
        }
        hasher.update(b"lines");
        for l in &self.lines {
            hasher.update(l.id.to_le_bytes());
            hasher.update(l.from_bus.to_le_bytes());
            hasher.update(l.to_bus.to_le_bytes());
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parse either the canonical JSON grid format or the MATPOWER subset, then
/// validate. Any error-severity finding is returned as a semantic error.
pub fn parse_case(text: &str) -> Result<NetworkCase> {
    let trimmed = text.trim_start();
    let case = if trimmed.starts_with('{') {
        parse_json(text)?
    } else {
        parse_matpower(text)?
    };
    if let Some(f) = validate(&case)
        .into_iter()
        .find(|f| f.severity == Severity::Error)
    {
        return Err(Error::semantic(f.path, f.message));
    }
    Ok(case)
}

/// Read and parse a case file from disk.
pub fn load_case(path: impl AsRef<std::path::Path>) -> Result<NetworkCase> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::semantic(path.display().to_string(), format!("cannot read case: {e}"))
    })?;
    let mut case = parse_case(&text)?;
    if case.name.is_empty() {
        if let Some(stem) = path.file_stem() {
            case.name = stem.to_string_lossy().into_owned();
        }
    }
    Ok(case)
}
