use super::*;
use crate::conic::weak_duality_check;
use crate::network::load_case;
use crate::redispatch::solve_model_soc;
use rand::Rng;

fn fixture(name: &str) -> NetworkCase {
    load_case(format!("{}/../../cases/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn quick() -> VerifyConfig {
    VerifyConfig {
        restarts: 2,
        max_iter: 30,
        ..VerifyConfig::default()
    }
}

/// Random net with weights large enough to flip statuses across the box.
fn random_net(case: &NetworkCase, width: usize, seed: u64) -> MlpModel {
    let mut m = MlpModel::init(case, width, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for l in &mut m.layers {
        l.w.iter_mut().flatten().for_each(|w| *w *= 4.0);
        l.b.iter_mut().for_each(|b| *b = rng.gen_range(-2.0..2.0));
    }
    m
}

#[test]
fn two_bus_variable_count_by_hand() {
    let case = fixture("case2.json");
    let nn = MlpModel::zeros(&case, 3).unwrap();
    let vp = build_verification(&case, &nn, SocOptions::SIMPLIFIED).unwrap();
    // Equalities: 4 flow definitions, 3 lifted cones × 4 links, P/Q balance at 2 buses.
    let lambda = 4 + 3 * 4 + 2 * 2;
    // Inequalities: shed and served-q bounds (2 + 2), W bounds at 2 buses,
    // Pg and Qg bounds, on/off bounds for Wfr and Wto (4 each), WR and WI (2 each).
    let mu = 4 + 2 * 2 + 2 + 2 + 2 * 4 + 2 * 2;
    // Columns: shed, q, 2 W, Pg, Qg, Wfr, Wto, WR, WI, 4 flows, 3 cones of 4.
    let s = 14 + 3 * 4;
    let gamma = 2 + 1 + 1;
    let aux = (3 + 3) + (3 + 3) + 1;
    let c = vp.variable_count();
    assert_eq!((c.lambda, c.mu, c.s, c.gamma, c.l, c.nn_aux), (lambda, mu, s, gamma, 1, aux));
    assert_eq!(c.total(), lambda + mu + s + gamma + 1 + aux);
}

#[test]
fn simplifications_drop_dual_variables() {
    let case = fixture("case14.m");
    let nn = MlpModel::zeros(&case, 4).unwrap();
    let full = build_verification(&case, &nn, SocOptions::FULL).unwrap().variable_count();
    let simple = build_verification(&case, &nn, SocOptions::SIMPLIFIED).unwrap().variable_count();
    assert!(simple.total() < full.total());
    assert!(simple.mu < full.mu);
}

#[test]
fn box_is_the_load_band() {
    let case = fixture("case14.m");
    let nn = MlpModel::zeros(&case, 4).unwrap();
    let vp = build_verification(&case, &nn, SocOptions::SIMPLIFIED).unwrap();
    let nd = case.n_loads();
    for (d, load) in case.loads().iter().enumerate() {
        for (k, base) in [(d, load.p_base), (nd + d, load.q_base)] {
            assert!((vp.gbox.lo[k] - base.min(0.75 * base).min(1.25 * base)).abs() < 1e-15);
            assert!((vp.gbox.hi[k] - base.max(0.75 * base).max(1.25 * base)).abs() < 1e-15);
        }
    }
    assert!(vp.gbox.lo[2 * nd..].iter().all(|v| *v == 0.25));
    assert!(vp.gbox.hi[2 * nd..].iter().all(|v| *v == 0.75));
    assert!(build_verification(&fixture("case3.json"), &nn, SocOptions::SIMPLIFIED).is_err());
}

#[test]
fn gradient_matches_value_differences() {
    let case = fixture("case3.json");
    let nn = random_net(&case, 5, 1);
    let vp = build_verification(&case, &nn, SocOptions::SIMPLIFIED).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    for _ in 0..6 {
        let g0 = vp.gbox.sample(&mut rng);
        let p = vp.evaluate(&g0, 1e-9).unwrap();
        let dir: Vec<f64> = vp.gbox.half_widths().iter().map(|h| h * rng.gen_range(-1.0..1.0)).collect();
        let t = 1e-4;
        let shifted = |s: f64| -> Vec<f64> { g0.iter().zip(&dir).map(|(g, d)| g + s * d).collect() };
        let (up, dn) = (shifted(t), shifted(-t));
        if !vp.gbox.contains(&up, 0.0) || !vp.gbox.contains(&dn, 0.0) {
            continue;
        }
        let fu = vp.evaluate(&up, 1e-9).unwrap().primal_objective;
        let fd = vp.evaluate(&dn, 1e-9).unwrap().primal_objective;
        let fdv = (fu - fd) / (2.0 * t);
        let an: f64 = p.grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        assert!((fdv - an).abs() <= 1e-3 * (1.0 + an.abs()), "{an} vs {fdv}");
        checked += 1;
    }
    assert!(checked >= 4);
}

#[test]
fn constant_net_maximizes_load() {
    let case = fixture("case2.json");
    let nn = MlpModel::zeros(&case, 2).unwrap();
    let vp = build_verification(&case, &nn, SocOptions::SIMPLIFIED).unwrap();
    // Sweep γ_P at L = 0.5: shed never decreases with load.
    let mut base = vp.gbox.midpoint();
    let mut last = f64::NEG_INFINITY;
    for k in 0..=10 {
        base[0] = vp.gbox.lo[0] + (vp.gbox.hi[0] - vp.gbox.lo[0]) * k as f64 / 10.0;
        let v = vp.evaluate(&base, 1e-8).unwrap().primal_objective;
        assert!(v >= last - 1e-7);
        last = v;
    }
    // Below generator capacity the shed is identically zero, so starts in
    // that plateau stay put; the multistart default reaches the sloped part.
    let cfg = VerifyConfig {
        max_iter: 30,
        ..VerifyConfig::default()
    };
    let a = solve_verification(&vp, &cfg).unwrap();
    assert!((a.point.gamma[0] - 1.25 * 0.5).abs() < 1e-9, "{:?}", a.point.gamma);
    assert!(a.converged);
}

#[test]
fn stage_a_is_dual_feasible_and_deterministic() {
    let case = fixture("case3.json");
    let nn = random_net(&case, 6, 3);
    let vp = build_verification(&case, &nn, SocOptions::SIMPLIFIED).unwrap();
    let a = solve_verification(&vp, &quick()).unwrap();
    assert!(vp.gbox.contains(&a.point.gamma, 1e-9));
    assert!(a.dual_residual <= 5e-3 && a.stationarity <= 5e-3);
    let margin = weak_duality_check(&vp.primal, &a.point.y, &a.point.gamma, &a.point.l, 5e-3).unwrap();
    assert!(margin >= -5e-3, "{margin}");
    let b = solve_verification(&vp, &quick()).unwrap();
    assert_eq!(a.point.gamma, b.point.gamma);
    assert_eq!(a.point.dual_objective.to_bits(), b.point.dual_objective.to_bits());
    // No start does better than the one chosen.
    for k in 0..2 {
        let p = vp.evaluate(&start_point(&vp, k, 0), 1e-7).unwrap();
        assert!(p.dual_objective <= a.point.dual_objective + 1e-9);
    }
}

#[test]
fn zero_net_pipeline_keeps_lines() {
    let case = fixture("case2.json");
    let nn = MlpModel::zeros(&case, 2).unwrap();
    let mut sc = ScenarioInput::base(&case);
    sc.p_d[0] = 0.625;
    let out = run_pipeline(&case, &nn, &sc, SocOptions::SIMPLIFIED).unwrap();
    assert_eq!(out.l, vec![0.5]);
    assert_eq!(out.z, vec![1]);
    assert!(out.all_ok());
    let direct = solve_model_soc(&case, &sc, &[1.0], SocOptions::SIMPLIFIED).unwrap();
    let ac = solve_ac_redispatch(&case, &sc, &[true], None).unwrap();
    assert!((out.shed.model_ii.unwrap() - direct.shed).abs() < 1e-9);
    assert!((out.shed.model_iii.unwrap() - ac.shed).abs() < 1e-9);
    assert!((out.shed.model_ii.unwrap() - out.shed.model_iii.unwrap()).abs() < 1e-3);
}

#[test]
fn negative_bias_net_sheds_everything() {
    let case = fixture("case3.json");
    let mut nn = MlpModel::zeros(&case, 2).unwrap();
    nn.layers[2].b.fill(-30.0);
    let sc = ScenarioInput::base(&case);
    let out = run_pipeline(&case, &nn, &sc, SocOptions::SIMPLIFIED).unwrap();
    assert!(out.z.iter().all(|z| *z == 0));
    let total: f64 = (0..case.n_loads())
        .filter(|&d| case.bus_gens(case.load_bus(d)).is_empty())
        .map(|d| sc.p_d[d])
        .sum();
    assert!(total > 0.0);
    assert!(out.shed.model_iii.unwrap() >= total - 1e-6);
}

#[test]
fn snapped_models_are_ordered() {
    let case = fixture("case3.json");
    let gbox = GammaBox::for_case(&case);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ran = 0;
    for seed in 0..50 {
        let nn = random_net(&case, 4, seed);
        let sc = ScenarioInput::from_vec(&gbox.sample(&mut rng), case.n_loads(), case.n_lines()).unwrap();
        let out = run_pipeline(&case, &nn, &sc, SocOptions::SIMPLIFIED).unwrap();
        if let (Some(ii), Some(iii)) = (out.shed.model_ii, out.shed.model_iii) {
            assert!(ii <= iii + 1e-6, "seed {seed}: {ii} > {iii}");
            ran += 1;
        }
    }
    assert!(ran >= 45);
}

#[test]
fn end_to_end_two_bus() {
    let case = fixture("case2.json");
    let nn = random_net(&case, 4, 11);
    let r = verify(&case, &nn, &quick()).unwrap();
    let o = &r.outcome;
    assert!(o.all_ok());
    let (i, ii, iii) = (o.shed.model_i.unwrap(), o.shed.model_ii.unwrap(), o.shed.model_iii.unwrap());
    assert!(ii <= iii + 1e-6);
    assert!(r.dual_obj <= i + 5e-3);
    assert!((r.dual_obj - i).abs() < 1e-5);
    assert!(GammaBox::for_case(&case).contains(&o.gamma.to_vec(), 1e-9));
    assert_eq!(o.l, nn.forward(&o.gamma.to_vec()).unwrap());
    assert_eq!(r.headline(), Some(iii));
    let v: serde_json::Value = serde_json::to_value(&r).unwrap();
    for key in ["gamma", "L", "z", "dual_obj", "shed", "status", "time_s"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["status"]["stage_a"], "optimal");
    assert!(v["shed"]["III"].is_number());
    let back: VerificationResult = serde_json::from_value(v).unwrap();
    assert_eq!(back, r);
}
