//! Sigmoid MLP proxy γ → L with two hidden layers, trained on switching
//! labels by mini-batch gradient descent on binary cross-entropy.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NetworkCase;
use crate::ops::TrainingSample;
use crate::scenario::GammaBox;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// Row-per-output weight matrix.
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub case: String,
    pub layout_hash: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub dims: [usize; 4],
    pub layers: Vec<Layer>,
    /// Input box; inputs are mapped affinely onto [−1, 1] before layer 1.
    pub norm: GammaBox,
    pub meta: ModelMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub width: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            width: 32,
            lr: 0.05,
            epochs: 2000,
            batch: 16,
            momentum: 0.0,
            seed: 0,
        }
    }
}

const OUT_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Output activation, kept strictly inside (0, 1).
fn logistic(x: f64) -> f64 {
    sigmoid(x).clamp(f64::MIN_POSITIVE, OUT_MAX)
}

fn affine(layer: &Layer, x: &[f64]) -> Vec<f64> {
    layer
        .w
        .iter()
        .zip(&layer.b)
        .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
        .collect()
}

/// Activations of every layer: [input (normalized), h1, h2, output].
struct Trace {
    acts: [Vec<f64>; 4],
}

impl MlpModel {
    /// Weights uniform in ±√(6 / (fan_in + fan_out)).
    pub fn init(case: &NetworkCase, width: usize, seed: u64) -> Result<MlpModel> {
        if width == 0 {
            return Err(Error::Domain("hidden width must be at least 1".into()));
        }
        let norm = GammaBox::for_case(case);
        let dims = [norm.dim(), width, width, case.n_lines()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = (0..3)
            .map(|k| {
                let (fan_in, fan_out) = (dims[k], dims[k + 1]);
                let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    w: (0..fan_out)
                        .map(|_| (0..fan_in).map(|_| rng.gen_range(-r..=r)).collect())
                        .collect(),
                    b: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(MlpModel {
            dims,
            layers,
            norm,
            meta: ModelMeta {
                case: case.name().to_string(),
                layout_hash: case.layout_hash(),
                version: FORMAT_VERSION,
                training: None,
                final_loss: None,
            },
        })
    }

    /// A net with all weights and biases zero (every output 0.5).
    pub fn zeros(case: &NetworkCase, width: usize) -> Result<MlpModel> {
        let mut m = MlpModel::init(case, width, 0)?;
        for l in &mut m.layers {
            l.w.iter_mut().for_each(|r| r.fill(0.0));
            l.b.fill(0.0);
        }
        Ok(m)
    }

    pub fn n_in(&self) -> usize {
        self.dims[0]
    }

    pub fn n_out(&self) -> usize {
        self.dims[3]
    }

    pub fn width(&self) -> usize {
        self.dims[1]
    }

    fn check_input(&self, gamma: &[f64]) -> Result<()> {
        if gamma.len() != self.n_in() {
            return Err(Error::Dimension(format!(
                "network takes {} inputs, got {}",
                self.n_in(),
                gamma.len()
            )));
        }
        Ok(())
    }

    fn trace(&self, gamma: &[f64]) -> Trace {
        let x0 = self.norm.normalize(gamma);
        let h1: Vec<f64> = affine(&self.layers[0], &x0).into_iter().map(sigmoid).collect();
        let h2: Vec<f64> = affine(&self.layers[1], &h1).into_iter().map(sigmoid).collect();
        let out: Vec<f64> = affine(&self.layers[2], &h2).into_iter().map(logistic).collect();
        Trace {
            acts: [x0, h1, h2, out],
        }
    }

    /// Switching probabilities L = σ(W₃ σ(W₂ σ(W₁ u + b₁) + b₂) + b₃),
    /// u the normalized input.
    pub fn forward(&self, gamma: &[f64]) -> Result<Vec<f64>> {
        self.check_input(gamma)?;
        Ok(self.trace(gamma).acts[3].clone())
    }

    /// ∂L/∂γ, row-major n_out × n_in, accumulated from the output side.
    pub fn jacobian(&self, gamma: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(gamma)?;
        let t = self.trace(gamma);
        // Rows of diag(σ′) W, pushed back through each layer.
        let mut m: Vec<Vec<f64>> = (0..self.n_out())
            .map(|o| {
                let y = t.acts[3][o];
                self.layers[2].w[o].iter().map(|w| y * (1.0 - y) * w).collect()
            })
            .collect();
        for k in (0..2).rev() {
            let act = &t.acts[k + 1];
            let layer = &self.layers[k];
            m = m
                .iter()
                .map(|row| {
                    let mut next = vec![0.0; self.dims[k]];
                    for (j, r) in row.iter().enumerate() {
                        let g = r * act[j] * (1.0 - act[j]);
                        if g != 0.0 {
                            for (n, w) in next.iter_mut().zip(&layer.w[j]) {
                                *n += g * w;
                            }
                        }
                    }
                    next
                })
                .collect();
        }
        let scale: Vec<f64> = self
            .norm
            .half_widths()
            .iter()
            .map(|h| if *h > 0.0 { 1.0 / h } else { 0.0 })
            .collect();
        for row in &mut m {
            for (v, s) in row.iter_mut().zip(&scale) {
                *v *= s;
            }
        }
        Ok(m)
    }

    pub fn save(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn load(text: &str) -> Result<MlpModel> {
        let m: MlpModel = serde_json::from_str(text).map_err(|e| Error::Schema(format!("model file: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    /// Load and require the model to match the case's scenario layout.
    pub fn load_for_case(text: &str, case: &NetworkCase) -> Result<MlpModel> {
        let m = MlpModel::load(text)?;
        m.check_case(case)?;
        Ok(m)
    }

    pub fn check_case(&self, case: &NetworkCase) -> Result<()> {
        if self.meta.layout_hash != case.layout_hash() {
            return Err(Error::Schema(format!(
                "model layout {} does not match case layout {}",
                self.meta.layout_hash,
                case.layout_hash()
            )));
        }
        if self.n_in() != GammaBox::for_case(case).dim() || self.n_out() != case.n_lines() {
            return Err(Error::Dimension("model dimensions do not match the case".into()));
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.meta.version != FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "model format version {} (expected {FORMAT_VERSION})",
                self.meta.version
            )));
        }
        if self.layers.len() != 3 || self.norm.lo.len() != self.dims[0] || self.norm.hi.len() != self.dims[0] {
            return Err(Error::Schema("model must have three layers and a full input box".into()));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.w.len() != self.dims[k + 1]
                || l.b.len() != self.dims[k + 1]
                || l.w.iter().any(|r| r.len() != self.dims[k])
            {
                return Err(Error::Schema(format!("layer {k} does not match dims {:?}", self.dims)));
            }
            if l.w.iter().flatten().chain(&l.b).any(|v| !v.is_finite()) {
                return Err(Error::Schema(format!("layer {k} has non-finite weights")));
            }
        }
        Ok(())
    }
}

/// z_l = 1 iff L_l ≥ 0.5.
pub fn snap(l: &[f64]) -> Vec<bool> {
    l.iter().map(|v| *v >= 0.5).collect()
}

pub fn snap_f64(l: &[f64]) -> Vec<f64> {
    l.iter().map(|v| if *v >= 0.5 { 1.0 } else { 0.0 }).collect()
}

fn bce(out: &[f64], label: &[f64]) -> f64 {
    out.iter()
        .zip(label)
        .map(|(p, y)| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
        .sum::<f64>()
        / out.len() as f64
}

/// Mean cross-entropy over a dataset.
pub fn dataset_loss(m: &MlpModel, data: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    data.iter().map(|(x, y)| bce(&m.trace(x).acts[3], y)).sum::<f64>() / data.len() as f64
}

/// Fraction of line decisions where snap(forward(γ)) equals the label.
pub fn snap_accuracy(m: &MlpModel, samples: &[TrainingSample]) -> Result<f64> {
    let mut hit = 0usize;
    let mut total = 0usize;
    for s in samples {
        let z = snap(&m.forward(&s.gamma.to_vec())?);
        for (a, b) in z.iter().zip(&s.z) {
            hit += usize::from(*a == (*b == 1));
            total += 1;
        }
    }
    Ok(hit as f64 / total.max(1) as f64)
}

/// Per-epoch training losses and the trained model.
pub struct Trained {
    pub model: MlpModel,
    pub losses: Vec<f64>,
}

pub fn train(case: &NetworkCase, samples: &[TrainingSample], cfg: &TrainConfig) -> Result<Trained> {
    if samples.is_empty() {
        return Err(Error::Domain("training set is empty".into()));
    }
    if cfg.batch == 0 || !(cfg.lr > 0.0 && cfg.lr.is_finite()) || !(0.0..1.0).contains(&cfg.momentum) {
        return Err(Error::Domain(format!("invalid training config {cfg:?}")));
    }
    let mut model = MlpModel::init(case, cfg.width, cfg.seed)?;
    let data: Vec<(Vec<f64>, Vec<f64>)> = samples
        .iter()
        .map(|s| {
            if s.z.len() != case.n_lines() || s.z.iter().any(|v| *v > 1) {
                return Err(Error::Domain("labels must be binary, one per line".into()));
            }
            let g = s.gamma.to_vec();
            model.check_input(&g)?;
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("training inputs must be finite".into()));
            }
            Ok((g, s.z.iter().map(|v| *v as f64).collect()))
        })
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut velocity: Vec<Layer> = model
        .layers
        .iter()
        .map(|l| Layer {
            w: l.w.iter().map(|r| vec![0.0; r.len()]).collect(),
            b: vec![0.0; l.b.len()],
        })
        .collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch) {
            let mut grad: Vec<Layer> = velocity
                .iter()
                .map(|l| Layer {
                    w: l.w.iter().map(|r| vec![0.0; r.len()]).collect(),
                    b: vec![0.0; l.b.len()],
                })
                .collect();
            let scale = 1.0 / (chunk.len() * model.n_out()) as f64;
            for &i in chunk {
                let (x, y) = &data[i];
                let t = model.trace(x);
                // Cross-entropy through the logistic output: dℓ/da = L − y.
                let mut delta: Vec<f64> = t.acts[3].iter().zip(y).map(|(p, y)| (p - y) * scale).collect();
                for k in (0..3).rev() {
                    let input = &t.acts[k];
                    for (j, d) in delta.iter().enumerate() {
                        grad[k].b[j] += d;
                        for (g, v) in grad[k].w[j].iter_mut().zip(input) {
                            *g += d * v;
                        }
                    }
                    if k > 0 {
                        let mut prev = vec![0.0; model.dims[k]];
                        for (j, d) in delta.iter().enumerate() {
                            for (p, w) in prev.iter_mut().zip(&model.layers[k].w[j]) {
                                *p += d * w;
                            }
                        }
                        for (p, a) in prev.iter_mut().zip(input) {
                            *p *= a * (1.0 - a);
                        }
                        delta = prev;
                    }
                }
            }
            for ((layer, g), v) in model.layers.iter_mut().zip(&grad).zip(&mut velocity) {
                for ((wr, gr), vr) in layer.w.iter_mut().zip(&g.w).zip(&mut v.w) {
                    for ((w, g), v) in wr.iter_mut().zip(gr).zip(vr.iter_mut()) {
                        *v = cfg.momentum * *v - cfg.lr * g;
                        *w += *v;
                    }
                }
                for ((b, g), v) in layer.b.iter_mut().zip(&g.b).zip(&mut v.b) {
                    *v = cfg.momentum * *v - cfg.lr * g;
                    *b += *v;
                }
            }
        }
        let loss = dataset_loss(&model, &data);
        let finite = model.layers.iter().all(|l| l.w.iter().flatten().chain(&l.b).all(|v| v.is_finite()));
        if !loss.is_finite() || !finite {
            return Err(Error::Diverged { epoch });
        }
        losses.push(loss);
    }
    model.meta.training = Some(*cfg);
    model.meta.final_loss = losses.last().copied();
    Ok(Trained { model, losses })
}

#[cfg(test)]
mod tests;
