use super::*;
use crate::network::load_case;
use crate::ops::{generate_training_set, OpsConfig};
use crate::scenario::ScenarioInput;
use proptest::prelude::*;

fn fixture(name: &str) -> NetworkCase {
    load_case(format!("{}/../../cases/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn meta() -> ModelMeta {
    ModelMeta {
        case: "toy".into(),
        layout_hash: "0".into(),
        version: FORMAT_VERSION,
        training: None,
        final_loss: None,
    }
}

/// Identity normalization over [−1, 1]^n.
fn raw_net(dims: [usize; 4], layers: Vec<Layer>) -> MlpModel {
    MlpModel {
        dims,
        layers,
        norm: GammaBox {
            lo: vec![-1.0; dims[0]],
            hi: vec![1.0; dims[0]],
        },
        meta: meta(),
    }
}

fn random_net(dims: [usize; 4], seed: u64, scale: f64) -> MlpModel {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = (0..3)
        .map(|k| Layer {
            w: (0..dims[k + 1])
                .map(|_| (0..dims[k]).map(|_| rng.gen_range(-scale..scale)).collect())
                .collect(),
            b: (0..dims[k + 1]).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        })
        .collect();
    let mut m = raw_net(dims, layers);
    m.norm.lo = (0..dims[0]).map(|i| -(i as f64) - 0.5).collect();
    m.norm.hi = (0..dims[0]).map(|i| 2.0 * i as f64 + 1.0).collect();
    m
}

fn unit_chain() -> MlpModel {
    let one = || Layer {
        w: vec![vec![1.0]],
        b: vec![0.0],
    };
    raw_net([1, 1, 1, 1], vec![one(), one(), one()])
}

#[test]
fn zero_net_outputs_half() {
    let case = fixture("case14.m");
    let m = MlpModel::zeros(&case, 8).unwrap();
    let g = GammaBox::for_case(&case).midpoint();
    assert!(m.forward(&g).unwrap().iter().all(|v| *v == 0.5));
    assert!(m.jacobian(&g).unwrap().iter().flatten().all(|v| *v == 0.0));
    assert!(m.forward(&g[1..]).is_err());
}

#[test]
fn unit_chain_by_hand() {
    let s = |x: f64| 1.0 / (1.0 + (-x).exp());
    let (a1, a2, a3) = (s(0.0), s(s(0.0)), s(s(s(0.0))));
    let m = unit_chain();
    let out = m.forward(&[0.0]).unwrap()[0];
    assert!((out - a3).abs() < 1e-15);
    assert!((out - 0.650_78).abs() < 1e-5);
    let want = a1 * (1.0 - a1) * a2 * (1.0 - a2) * a3 * (1.0 - a3);
    let j = m.jacobian(&[0.0]).unwrap()[0][0];
    assert!((j - want).abs() < 1e-15);
    // 0.25 · 0.23500 · 0.22726 ≈ 0.013352
    assert!((j - 0.013_351).abs() < 2e-6);
}

#[test]
fn jacobian_matches_central_differences() {
    use rand::Rng;
    for (a, dims) in [[3, 4, 4, 2], [5, 8, 6, 7], [9, 32, 32, 4]].into_iter().enumerate() {
        let m = random_net(dims, a as u64, 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + a as u64);
        for _ in 0..100 {
            let g: Vec<f64> = m.norm.lo.iter().zip(&m.norm.hi).map(|(l, h)| rng.gen_range(*l..*h)).collect();
            let jac = m.jacobian(&g).unwrap();
            for i in 0..dims[0] {
                let h = 1e-6 * (m.norm.hi[i] - m.norm.lo[i]);
                let mut up = g.clone();
                let mut dn = g.clone();
                up[i] += h;
                dn[i] -= h;
                let (fu, fd) = (m.forward(&up).unwrap(), m.forward(&dn).unwrap());
                for o in 0..dims[3] {
                    let fdv = (fu[o] - fd[o]) / (2.0 * h);
                    let err = (jac[o][i] - fdv).abs() / jac[o][i].abs().max(1e-4);
                    assert!(err < 1e-5, "dims {dims:?} ({o},{i}): {} vs {fdv}", jac[o][i]);
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn outputs_strictly_inside_unit_interval(seed in 0u64..500, x in prop::collection::vec(-1e3f64..1e3, 3)) {
        let m = random_net([3, 5, 5, 4], seed, 20.0);
        for v in m.forward(&x).unwrap() {
            prop_assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn nonnegative_weights_are_monotone(seed in 0u64..500, x in prop::collection::vec(-1.0f64..1.0, 3), i in 0usize..3, step in 0.0f64..2.0) {
        let mut m = random_net([3, 4, 4, 2], seed, 2.0);
        for l in &mut m.layers {
            l.w.iter_mut().flatten().for_each(|w| *w = w.abs());
        }
        let mut y = x.clone();
        y[i] += step;
        let (a, b) = (m.forward(&x).unwrap(), m.forward(&y).unwrap());
        for (a, b) in a.iter().zip(&b) {
            prop_assert!(b >= a);
        }
    }
}

#[test]
fn snap_rule() {
    assert_eq!(snap(&[0.7, 0.3]), vec![true, false]);
    assert_eq!(snap(&[0.5]), vec![true]);
    assert_eq!(snap(&[0.499_999]), vec![false]);
    assert_eq!(snap_f64(&[0.5, 0.1]), vec![1.0, 0.0]);
}

fn labelled(case: &NetworkCase, n: usize, seed: u64, label: impl Fn(usize, usize) -> u8) -> Vec<TrainingSample> {
    let gbox = GammaBox::for_case(case);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let g = gbox.sample(&mut rng);
            TrainingSample {
                gamma: ScenarioInput::from_vec(&g, case.n_loads(), case.n_lines()).unwrap(),
                z: (0..case.n_lines()).map(|l| label(k, l)).collect(),
                objective: 0.0,
                alpha: g[g.len() - 1],
            }
        })
        .collect()
}

#[test]
fn constant_label_is_learned() {
    let case = fixture("case14.m");
    let data = labelled(&case, 20, 1, |_, _| 1);
    let cfg = TrainConfig {
        width: 16,
        epochs: 200,
        batch: 4,
        ..TrainConfig::default()
    };
    let t = train(&case, &data, &cfg).unwrap();
    assert_eq!(t.losses.len(), 200);
    assert_eq!(t.model.meta.final_loss, t.losses.last().copied());
    for s in &data {
        assert!(t.model.forward(&s.gamma.to_vec()).unwrap().iter().all(|v| *v > 0.9));
    }
}

#[test]
fn single_sample_loss_decreases() {
    let case = fixture("case14.m");
    let data = labelled(&case, 1, 2, |_, l| (l % 3 == 0) as u8);
    let cfg = TrainConfig {
        width: 8,
        epochs: 10,
        ..TrainConfig::default()
    };
    let t = train(&case, &data, &cfg).unwrap();
    let init = dataset_loss(
        &MlpModel::init(&case, 8, cfg.seed).unwrap(),
        &[(data[0].gamma.to_vec(), data[0].z.iter().map(|v| *v as f64).collect())],
    );
    let mut last = init;
    for l in &t.losses {
        assert!(*l < last, "{l} after {last}");
        last = *l;
    }
}

#[test]
fn training_is_deterministic() {
    let case = fixture("case3.json");
    let data = labelled(&case, 12, 3, |k, l| ((k + l) % 2) as u8);
    let cfg = TrainConfig {
        width: 6,
        epochs: 30,
        batch: 5,
        momentum: 0.5,
        seed: 42,
        ..TrainConfig::default()
    };
    let a = train(&case, &data, &cfg).unwrap().model;
    let b = train(&case, &data, &cfg).unwrap().model;
    assert_eq!(a.save(), b.save());
    let c = train(&case, &data, &TrainConfig { seed: 43, ..cfg }).unwrap().model;
    assert_ne!(a.layers, c.layers);
}

#[test]
fn divergence_reports_epoch() {
    let case = fixture("case3.json");
    let data = labelled(&case, 4, 3, |k, _| (k % 2) as u8);
    let cfg = TrainConfig {
        width: 4,
        epochs: 5,
        lr: f64::MAX,
        batch: 1,
        momentum: 0.9,
        ..TrainConfig::default()
    };
    let r = train(&case, &data, &cfg);
    assert!(matches!(r, Err(Error::Diverged { epoch: 1 })), "{:?}", r.map(|t| t.losses));
}

#[test]
fn rejects_bad_datasets() {
    let case = fixture("case3.json");
    let cfg = TrainConfig::default();
    assert!(train(&case, &[], &cfg).is_err());
    let bad = labelled(&case, 2, 0, |_, _| 2);
    assert!(train(&case, &bad, &cfg).is_err());
    let other = labelled(&fixture("case2.json"), 2, 0, |_, _| 1);
    assert!(train(&case, &other, &cfg).is_err());
}

#[test]
fn save_load_round_trip() {
    use rand::Rng;
    let case = fixture("case14.m");
    let data = labelled(&case, 8, 5, |k, l| ((k * l) % 2) as u8);
    let cfg = TrainConfig {
        width: 8,
        epochs: 5,
        ..TrainConfig::default()
    };
    let m = train(&case, &data, &cfg).unwrap().model;
    let text = m.save();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["dims", "layers", "norm", "meta"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert!(v["layers"][0]["w"].is_array() && v["norm"]["lo"].is_array());
    let back = MlpModel::load_for_case(&text, &case).unwrap();
    let gbox = GammaBox::for_case(&case);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let g: Vec<f64> = gbox.lo.iter().zip(&gbox.hi).map(|(l, h)| rng.gen_range(*l..=*h)).collect();
        assert_eq!(m.forward(&g).unwrap(), back.forward(&g).unwrap());
    }
}

#[test]
fn load_errors() {
    let case = fixture("case14.m");
    let text = MlpModel::init(&case, 4, 0).unwrap().save();
    assert!(matches!(MlpModel::load(&text[..text.len() / 2]), Err(Error::Schema(_))));
    assert!(matches!(MlpModel::load_for_case(&text, &fixture("case3.json")), Err(Error::Schema(_))));
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["meta"]["version"] = 99.into();
    assert!(matches!(MlpModel::load(&v.to_string()), Err(Error::Schema(_))));
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["layers"][1]["b"] = serde_json::json!([0.0]);
    assert!(matches!(MlpModel::load(&v.to_string()), Err(Error::Schema(_))));
}

#[test]
fn fits_ops_labels() {
    let case = fixture("case3.json");
    let set = generate_training_set(&case, 60, (0.25, 0.75), 11, &OpsConfig::default()).unwrap();
    let t = train(&case, &set.samples, &TrainConfig::default()).unwrap();
    let acc = snap_accuracy(&t.model, &set.samples).unwrap();
    assert!(acc >= 0.9, "{acc}");
}
