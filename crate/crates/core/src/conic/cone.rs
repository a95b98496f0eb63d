use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One block of the product cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "dim", rename_all = "snake_case")]
pub enum ConeBlock {
    Free(usize),
    Nonneg(usize),
    /// (t, w): t ≥ ‖w‖
    Soc(usize),
    /// (u, v, w): 2uv ≥ ‖w‖², u, v ≥ 0
    RotatedSoc(usize),
}

impl ConeBlock {
    pub fn dim(&self) -> usize {
        match *self {
            ConeBlock::Free(n) | ConeBlock::Nonneg(n) | ConeBlock::Soc(n) | ConeBlock::RotatedSoc(n) => n,
        }
    }

    pub fn min_dim(&self) -> usize {
        match self {
            ConeBlock::Free(_) | ConeBlock::Nonneg(_) => 1,
            ConeBlock::Soc(_) => 2,
            ConeBlock::RotatedSoc(_) => 3,
        }
    }

    /// Distance-like measure of how far `v` is from the block; 0 inside.
    pub fn violation(&self, v: &[f64]) -> f64 {
        match self {
            ConeBlock::Free(_) => 0.0,
            ConeBlock::Nonneg(_) => v.iter().fold(0.0_f64, |m, x| m.max(-x)),
            ConeBlock::Soc(_) => soc_violation(v[0], &v[1..]),
            ConeBlock::RotatedSoc(_) => {
                let t = rotated_to_soc(v);
                soc_violation(t[0], &t[1..])
            }
        }
    }

    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        self.violation(v) <= tol
    }

    /// Euclidean projection onto the block.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        match self {
            ConeBlock::Free(_) => v.to_vec(),
            ConeBlock::Nonneg(_) => v.iter().map(|x| x.max(0.0)).collect(),
            ConeBlock::Soc(_) => project_soc(v),
            ConeBlock::RotatedSoc(_) => rotated_to_soc(&project_soc(&rotated_to_soc(v))),
        }
    }
}

fn norm(w: &[f64]) -> f64 {
    w.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn soc_violation(t: f64, w: &[f64]) -> f64 {
    ((norm(w) - t) / std::f64::consts::SQRT_2).max(0.0)
}

fn project_soc(v: &[f64]) -> Vec<f64> {
    let t = v[0];
    let nw = norm(&v[1..]);
    if nw <= t {
        v.to_vec()
    } else if nw <= -t {
        vec![0.0; v.len()]
    } else {
        let a = 0.5 * (t + nw);
        let mut out = Vec::with_capacity(v.len());
        out.push(a);
        out.extend(v[1..].iter().map(|x| a * x / nw));
        out
    }
}

/// Maps (u, v, w) to ((u+v)/√2, (u−v)/√2, w). Symmetric and orthogonal, and
/// carries the rotated cone onto the standard second-order cone.
pub fn rotated_to_soc(v: &[f64]) -> Vec<f64> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = v.to_vec();
    out[0] = r * (v[0] + v[1]);
    out[1] = r * (v[0] - v[1]);
    out
}

/// Ordered product of cone blocks covering every program variable.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub blocks: Vec<ConeBlock>,
}

impl ConeSpec {
    pub fn new(blocks: Vec<ConeBlock>) -> Self {
        ConeSpec { blocks }
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(ConeBlock::dim).sum()
    }

    pub fn check(&self) -> Result<()> {
        for (k, b) in self.blocks.iter().enumerate() {
            if b.dim() < b.min_dim() {
                return Err(Error::Dimension(format!(
                    "cone block {k} ({b:?}) needs dimension >= {}",
                    b.min_dim()
                )));
            }
        }
        Ok(())
    }

    /// Blocks with their starting offsets.
    pub fn iter_ranges(&self) -> impl Iterator<Item = (ConeBlock, std::ops::Range<usize>)> + '_ {
        let mut off = 0;
        self.blocks.iter().map(move |b| {
            let r = off..off + b.dim();
            off += b.dim();
            (*b, r)
        })
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        self.iter_ranges()
            .map(|(b, r)| b.violation(&x[r]))
            .fold(0.0, f64::max)
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        for (b, r) in self.iter_ranges() {
            out.extend(b.project(&x[r]));
        }
        out
    }

    /// Indices covered by free blocks; their dual slack is pinned to zero.
    pub fn free_indices(&self) -> Vec<usize> {
        self.iter_ranges()
            .filter(|(b, _)| matches!(b, ConeBlock::Free(_)))
            .flat_map(|(_, r)| r)
            .collect()
    }
}
