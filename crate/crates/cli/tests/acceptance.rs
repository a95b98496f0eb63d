//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any hard criterion failed. Soft failures are printed the same
//! way and counted in the summary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use loadshed_core::conic::{solve_conic, AffineMap, ConeBlock, ConeSpec, ConicProgram, SolveStatus, SparseMatrix, DEFAULT_TOL};
use loadshed_core::formulation::SocOptions;
use loadshed_core::network::{load_case, random_grid};
use loadshed_core::nn::{train, Layer, MlpModel, TrainConfig};
use loadshed_core::ops::{generate_training_set, parse_jsonl, solve_soc_ops_fixed, solve_soc_ops_global, OpsConfig};
use loadshed_core::sampling::{draw, run_benchmark, BenchmarkRun};
use loadshed_core::verify::{verify, PipelineOutcome, VerificationResult, VerifyConfig};
use loadshed_core::{GammaBox, NetworkCase, ScenarioInput};

const CACHED_SET: &str = "case14_train.jsonl";
const CACHED_SEED: u64 = 14;
const BENCH_SAMPLES: usize = 100;
const SEEDS: u64 = 5;

fn cases_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../cases")
}

fn fixture(name: &str) -> NetworkCase {
    load_case(cases_dir().join(name)).expect("fixture loads")
}

struct Line {
    name: &'static str,
    pass: bool,
    soft: bool,
    detail: String,
    secs: f64,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> Line {
    let t = Instant::now();
    let (pass, detail) = match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
        Ok(Ok(d)) => (true, d),
        Ok(Err(d)) => (false, d),
        Err(p) => (
            false,
            format!(
                "panicked: {}",
                p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
            ),
        ),
    };
    let line = Line {
        name,
        pass,
        soft: false,
        detail,
        secs: t.elapsed().as_secs_f64(),
    };
    println!(
        "{} {}: {} ({:.1} s)",
        if pass { "PASS" } else { "FAIL" },
        line.name,
        line.detail,
        line.secs
    );
    line
}

/// Marks a criterion whose failure is reported but does not fail the run.
fn soft(mut line: Line) -> Line {
    line.soft = true;
    line
}

fn verdict(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- duality

fn interior(block: ConeBlock, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = block.dim();
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    match block {
        ConeBlock::Free(_) => {}
        ConeBlock::Nonneg(_) => v.iter_mut().for_each(|x| *x = x.abs() + 0.1),
        ConeBlock::Soc(_) => v[0] = norm(&v[1..]) + 0.5,
        ConeBlock::RotatedSoc(_) => {
            v[0] = v[0].abs() + 0.5;
            v[1] = v[2..].iter().map(|x| x * x).sum::<f64>() / (2.0 * v[0]) + 0.5;
        }
    }
    v
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Violation of s ∈ K*, written out per block (every cone used here is
/// self-dual; the dual of a free block is {0}).
fn dual_cone_violation(cone: &ConeSpec, s: &[f64]) -> f64 {
    cone.iter_ranges()
        .map(|(b, r)| {
            let v = &s[r];
            match b {
                ConeBlock::Free(_) => v.iter().fold(0.0_f64, |m, x| m.max(x.abs())),
                ConeBlock::Nonneg(_) => v.iter().fold(0.0_f64, |m, x| m.max(-x)),
                ConeBlock::Soc(_) => (norm(&v[1..]) - v[0]).max(0.0),
                ConeBlock::RotatedSoc(_) => {
                    let w2: f64 = v[2..].iter().map(|x| x * x).sum();
                    (-v[0]).max(-v[1]).max(w2 - 2.0 * v[0] * v[1]).max(0.0)
                }
            }
        })
        .fold(0.0, f64::max)
}

struct Socp {
    p: ConicProgram,
    lambda0: Vec<f64>,
    mu0: Vec<f64>,
}

/// Random SOCP with a strictly feasible primal point and a strictly
/// feasible dual point (λ0, μ0, s0) built in.
fn random_socp(rng: &mut ChaCha8Rng, free_blocks: bool) -> Socp {
    let target = rng.gen_range(8..=18);
    let mut blocks = Vec::new();
    let mut n = 0;
    while n < target {
        let blk = match rng.gen_range(if free_blocks { 0 } else { 1 }..4) {
            0 => ConeBlock::Free(1),
            1 => ConeBlock::Nonneg(rng.gen_range(1..3)),
            2 => ConeBlock::Soc(rng.gen_range(2..4)),
            _ => ConeBlock::RotatedSoc(3),
        };
        n += blk.dim();
        blocks.push(blk);
    }
    let cone = ConeSpec::new(blocks);
    let x0: Vec<f64> = cone.iter_ranges().flat_map(|(b, _)| interior(b, rng)).collect();
    let s0: Vec<f64> = cone
        .iter_ranges()
        .flat_map(|(b, _)| match b {
            ConeBlock::Free(k) => vec![0.0; k],
            _ => interior(b, rng),
        })
        .collect();
    let m_eq = rng.gen_range(1..4);
    let m_in = rng.gen_range(1..5);
    let mut mat = |rows: usize| {
        let t: Vec<_> = (0..rows)
            .flat_map(|r| (0..n).map(move |c| (r, c)))
            .filter_map(|(r, c)| rng.gen_bool(0.5).then(|| (r, c, rng.gen_range(-1.0..1.0))))
            .collect();
        SparseMatrix::from_triplets(rows, n, &t)
    };
    let a = mat(m_eq);
    let c = mat(m_in);
    let b: Vec<f64> = a.mul_vec(&x0).iter().map(|v| -v).collect();
    let d: Vec<f64> = c.mul_vec(&x0).iter().map(|v| -v - rng.gen_range(0.1..1.0)).collect();
    let lambda0: Vec<f64> = (0..m_eq).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mu0: Vec<f64> = (0..m_in).map(|_| rng.gen_range(0.1..1.0)).collect();
    let at = a.tr_mul_vec(&lambda0);
    let ct = c.tr_mul_vec(&mu0);
    let h: Vec<f64> = (0..n).map(|j| s0[j] - at[j] - ct[j]).collect();
    let p = ConicProgram {
        h,
        a,
        b: AffineMap::constant_only(b),
        c,
        d: AffineMap::constant_only(d),
        cone,
        var_names: (0..n).map(|j| format!("x{j}")).collect(),
        eq_names: vec![],
        ineq_names: vec![],
        n_gamma: 0,
        n_status: 0,
    };
    Socp { p, lambda0, mu0 }
}

fn duality_suite() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_gap = 0.0_f64;
    for k in 0..200 {
        let s = random_socp(&mut rng, true);
        let sol = solve_conic(&s.p, &[], &[], DEFAULT_TOL).map_err(|e| format!("program {k}: {e}"))?;
        if sol.status != SolveStatus::Optimal {
            return Err(format!("program {k}: {:?}", sol.status));
        }
        let gap = (sol.objective - sol.dual_objective).abs() / (1.0 + sol.objective.abs());
        worst_gap = worst_gap.max(gap);
    }
    // Dual-feasible points around the built-in interior dual point; the dual
    // objective and the cone test are evaluated here from the raw data.
    let mut min_margin = f64::INFINITY;
    let mut points = 0;
    while points < 1000 {
        let s = random_socp(&mut rng, false);
        let sol = solve_conic(&s.p, &[], &[], DEFAULT_TOL).map_err(|e| e.to_string())?;
        if sol.status != SolveStatus::Optimal {
            return Err(format!("weak-duality program: {:?}", sol.status));
        }
        let b = s.p.b.eval(&[], &[]);
        let d = s.p.d.eval(&[], &[]);
        let mut taken = 0;
        let mut tries = 0;
        while taken < 10 && tries < 1000 {
            tries += 1;
            // Half the points perturb (λ0, μ0); the other half lie on the
            // segment toward the solver's optimal multipliers, where the
            // margin closes to zero.
            let (lambda, mu): (Vec<f64>, Vec<f64>) = if taken % 2 == 0 {
                let t = rng.gen_range(0.0..0.5);
                (
                    s.lambda0.iter().map(|v| v + t * rng.gen_range(-1.0..1.0)).collect(),
                    s.mu0.iter().map(|v| v + t * rng.gen_range(-1.0..1.0)).collect(),
                )
            } else {
                let y = sol.dual.as_ref().ok_or("solver returned no multipliers")?;
                let th = 1.0 - 10f64.powf(rng.gen_range(-4.0..-1.0));
                (
                    s.lambda0.iter().zip(&y.lambda).map(|(a, b)| (1.0 - th) * a + th * b).collect(),
                    s.mu0.iter().zip(&y.mu).map(|(a, b)| (1.0 - th) * a + th * b).collect(),
                )
            };
            if mu.iter().any(|v| *v < 0.0) {
                continue;
            }
            let at = s.p.a.tr_mul_vec(&lambda);
            let ct = s.p.c.tr_mul_vec(&mu);
            let sv: Vec<f64> = (0..s.p.h.len()).map(|j| s.p.h[j] + at[j] + ct[j]).collect();
            if dual_cone_violation(&s.p.cone, &sv) > 0.0 {
                continue;
            }
            let dobj: f64 = lambda.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() + mu.iter().zip(&d).map(|(x, y)| x * y).sum::<f64>();
            min_margin = min_margin.min(sol.objective - dobj);
            taken += 1;
            points += 1;
        }
    }
    verdict(
        worst_gap <= 1e-6 && min_margin >= -1e-9,
        format!("200 SOCPs, worst scaled gap {worst_gap:.2e} (≤ 1e-6); {points} dual-feasible points, min margin {min_margin:.3e} (≥ -1e-9)"),
    )
}

// ------------------------------------------------------------- B&B oracle

fn enumerate(case: &NetworkCase, sc: &ScenarioInput) -> Result<f64, String> {
    let nl = case.n_lines();
    let mut best = f64::NEG_INFINITY;
    for mask in 0..(1u32 << nl) {
        let z: Vec<bool> = (0..nl).map(|l| mask >> l & 1 == 1).collect();
        if let Some(d) = solve_soc_ops_fixed(case, sc, &z).map_err(|e| e.to_string())? {
            best = best.max(d.objective);
        }
    }
    Ok(best)
}

fn bnb_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut instances: Vec<(String, NetworkCase, ScenarioInput)> = Vec::new();
    for k in 0..50 {
        let nb = rng.gen_range(2..=5);
        let nl = rng.gen_range(nb - 1..=6);
        let case = random_grid(1000 + k, nb, nl);
        let sc = draw(&case, 5, k as usize);
        instances.push((format!("grid {k}"), case, sc));
    }
    let c3 = fixture("case3.json");
    instances.push(("case3 base".into(), c3.clone(), ScenarioInput::base(&c3)));
    let mut worst = 0.0_f64;
    for (name, case, sc) in &instances {
        let oracle = enumerate(case, sc)?;
        let d = solve_soc_ops_global(case, sc, &OpsConfig::default()).map_err(|e| format!("{name}: {e}"))?;
        if !d.certified {
            return Err(format!("{name}: not certified"));
        }
        let gap = (d.objective - oracle).abs() / oracle.abs().max(1.0);
        worst = worst.max(gap);
        if gap > 1e-5 {
            return Err(format!("{name}: B&B {} vs enumeration {oracle}", d.objective));
        }
    }
    verdict(true, format!("{} instances, worst rel. gap {worst:.2e} (≤ 1e-5)", instances.len()))
}

// -------------------------------------------------------------- α extremes

fn alpha_extremes() -> Result<String, String> {
    let mut cases = vec![fixture("case2.json"), fixture("case3.json"), fixture("case14.m")];
    cases.extend((0..5).map(|k| random_grid(300 + k, 4, 5)));
    for case in &cases {
        let mut sc = ScenarioInput::base(case);
        sc.alpha = 1.0;
        let d = solve_soc_ops_global(case, &sc, &OpsConfig::default()).map_err(|e| e.to_string())?;
        if d.z.iter().any(|z| *z != 0.0) {
            return Err(format!("{}: α=1 keeps {:?}", case.name(), d.z));
        }
    }
    let c2 = fixture("case2.json");
    let mut sc = ScenarioInput::base(&c2);
    sc.alpha = 0.0;
    let d = solve_soc_ops_global(&c2, &sc, &OpsConfig::default()).map_err(|e| e.to_string())?;
    let total: f64 = sc.p_d.iter().sum();
    let shed = total - d.served_load;
    verdict(
        d.z == vec![1.0] && shed.abs() <= 1e-6,
        format!("α=1 switches every line off on {} cases; α=0 on 2-bus keeps z={:?}, shed {shed:.1e}", cases.len(), d.z),
    )
}

// ------------------------------------------------------------- NN gradient

fn random_net(case: &NetworkCase, width: usize, seed: u64) -> MlpModel {
    let mut m = MlpModel::init(case, width, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for l in &mut m.layers {
        let Layer { w, b } = l;
        w.iter_mut().flatten().for_each(|v| *v = rng.gen_range(-1.5..1.5));
        b.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    }
    m
}

fn nn_gradient() -> Result<String, String> {
    let arch = [("case2.json", 4), ("case3.json", 16), ("case14.m", 32)];
    let mut worst = 0.0_f64;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (k, (name, width)) in arch.iter().enumerate() {
        let case = fixture(name);
        let m = random_net(&case, *width, k as u64);
        let gbox = GammaBox::for_case(&case);
        let hw = gbox.half_widths();
        for _ in 0..100 {
            let g = gbox.sample(&mut rng);
            let j = m.jacobian(&g).map_err(|e| e.to_string())?;
            let mut fd = vec![vec![0.0; g.len()]; j.len()];
            for c in 0..g.len() {
                let h = 1e-5 * hw[c].max(1e-3);
                let (mut up, mut dn) = (g.clone(), g.clone());
                up[c] += h;
                dn[c] -= h;
                let (fu, fdn) = (m.forward(&up).unwrap(), m.forward(&dn).unwrap());
                for r in 0..j.len() {
                    fd[r][c] = (fu[r] - fdn[r]) / (2.0 * h);
                }
            }
            let scale = fd.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-8);
            let err = j.iter().flatten().zip(fd.iter().flatten()).fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
            worst = worst.max(err / scale);
        }
    }
    verdict(worst <= 1e-5, format!("3 architectures × 100 points, worst rel. err {worst:.2e} (≤ 1e-5)"))
}

// ------------------------------------------------------------ 14-bus study

struct Study {
    case: NetworkCase,
    seeds: Vec<(u64, VerificationResult, BenchmarkRun)>,
    /// Verifier runs on small cases, for the weak-duality criterion.
    extra: Vec<VerificationResult>,
    fig_dir: PathBuf,
    setup: String,
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_loadshed")).args(args).output().map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)))
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn study(tmp: &Path) -> Result<Study, String> {
    let case = fixture("case14.m");
    let text = fs::read_to_string(cases_dir().join(CACHED_SET)).map_err(|e| format!("{CACHED_SET}: {e}"))?;
    let cached = parse_jsonl(&text).map_err(|e| e.to_string())?;
    if cached.len() < 200 {
        return Err(format!("cached set has {} samples, need 200", cached.len()));
    }
    // The cache must be what the generator produces for its seed.
    let fresh = generate_training_set(&case, 2, (0.25, 0.75), CACHED_SEED, &OpsConfig::default()).map_err(|e| e.to_string())?;
    for s in &fresh.samples {
        if !cached.iter().any(|c| c.gamma == s.gamma && c.z == s.z && (c.objective - s.objective).abs() <= 1e-9) {
            return Err("regenerated sample missing from the cached set".into());
        }
    }
    let trained = train(&case, &cached, &TrainConfig { width: 32, ..TrainConfig::default() }).map_err(|e| e.to_string())?;
    let nn = trained.model;
    let acc = loadshed_core::nn::snap_accuracy(&nn, &cached).map_err(|e| e.to_string())?;
    let setup = format!(
        "{} cached samples (prefix regenerated), width-32 net, loss {:.4}, snapped acc. {:.3}",
        cached.len(),
        trained.losses.last().copied().unwrap_or(f64::NAN),
        acc
    );
    // Seed 0 goes through the CLI, which also writes the loading-pattern files.
    let model_path = tmp.join("model14.json");
    fs::write(&model_path, nn.save()).map_err(|e| e.to_string())?;
    let fig_dir = tmp.join("verify14");
    let c14 = cases_dir().join("case14.m");
    run_cli(&["verify", "--case", p(&c14), "--nn", p(&model_path), "--seed", "0", "--out", p(&fig_dir)])?;
    let v0: VerificationResult =
        serde_json::from_str(&fs::read_to_string(fig_dir.join("verification.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let mut seeds = Vec::new();
    // Draw i of a run uses master ^ i, so small consecutive masters would
    // share most of their draws. Spacing them keeps the five runs independent.
    for seed in (0..SEEDS).map(|k| k << 16) {
        let v = if seed == 0 {
            v0.clone()
        } else {
            verify(&case, &nn, &VerifyConfig { seed, ..VerifyConfig::default() }).map_err(|e| format!("verify seed {seed}: {e}"))?
        };
        let run = run_benchmark(&case, &nn, BENCH_SAMPLES, seed, SocOptions::SIMPLIFIED, false).map_err(|e| e.to_string())?;
        seeds.push((seed, v, run));
    }
    let mut extra = Vec::new();
    for (k, name) in ["case2.json", "case3.json"].iter().enumerate() {
        let c = fixture(name);
        for s in 0..3 {
            let m = random_net(&c, 8, 40 + 10 * k as u64 + s);
            extra.push(verify(&c, &m, &VerifyConfig::default()).map_err(|e| format!("{name}: {e}"))?);
        }
    }
    Ok(Study {
        case,
        seeds,
        extra,
        fig_dir,
        setup,
    })
}

/// Per model, the seeds where the optimized shed reached the sampled max,
/// and a note for each seed where it did not.
fn dominance(st: &Study) -> Result<([usize; 3], Vec<String>), String> {
    let mut hold = [0usize; 3];
    let mut notes = Vec::new();
    for (seed, v, run) in &st.seeds {
        if run.partial {
            return Err(format!("seed {seed}: sampling budget ran out"));
        }
        let s = &v.outcome.shed;
        let pairs = [
            (s.model_i, run.summary.max_i),
            (s.model_ii, run.summary.max_ii),
            (s.model_iii, run.summary.max_iii),
        ];
        for (m, (opt, sampled)) in pairs.iter().enumerate() {
            if opt.is_some_and(|o| o >= *sampled) {
                hold[m] += 1;
            } else {
                notes.push(format!("seed {seed} model {}: {} < {sampled:.4}", ["I", "II", "III"][m], fmt(*opt)));
            }
        }
    }
    Ok((hold, notes))
}

fn dominance_i(st: &Study) -> Result<String, String> {
    let (hold, notes) = dominance(st)?;
    let n = st.seeds.len();
    let (v, r) = (&st.seeds[0].1, &st.seeds[0].2);
    let mut detail = format!(
        "{}; optimized ≥ sampled max in {}/{n} seeds (need {n}/{n}); seed 0 optimized {} vs sampled {:.4}",
        st.setup,
        hold[0],
        fmt(v.outcome.shed.model_i),
        r.summary.max_i
    );
    let misses: Vec<_> = notes.iter().filter(|m| m.contains("model I:")).cloned().collect();
    if !misses.is_empty() {
        detail.push_str(&format!("; misses: {}", misses.join(", ")));
    }
    verdict(hold[0] == n, detail)
}

fn dominance_ii_iii(st: &Study) -> Result<String, String> {
    let (hold, notes) = dominance(st)?;
    let n = st.seeds.len();
    let mut detail = format!("II {}/{n}, III {}/{n} seeds (need ≥ {}/{n} each)", hold[1], hold[2], n - 1);
    let misses: Vec<_> = notes.iter().filter(|m| !m.contains("model I:")).cloned().collect();
    if !misses.is_empty() {
        detail.push_str(&format!("; misses: {}", misses.join(", ")));
    }
    verdict(hold[1] + 1 >= n && hold[2] + 1 >= n, detail)
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "failed".into(), |v| format!("{v:.4}"))
}

fn outcomes(st: &Study) -> impl Iterator<Item = &PipelineOutcome> {
    st.seeds
        .iter()
        .flat_map(|(_, v, run)| std::iter::once(&v.outcome).chain(run.records.iter().map(|r| &r.outcome)))
        .chain(st.extra.iter().map(|v| &v.outcome))
}

fn ordering(st: &Study) -> Result<String, String> {
    let mut n = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut skipped = 0;
    for o in outcomes(st) {
        match (o.shed.model_ii, o.shed.model_iii) {
            (Some(ii), Some(iii)) => {
                n += 1;
                worst = worst.max(ii - iii);
            }
            _ => skipped += 1,
        }
    }
    verdict(
        n >= 300 && worst <= 1e-6,
        format!("{n} instances with both models solved ({skipped} without), max shed_II − shed_III {worst:.2e} (≤ 1e-6)"),
    )
}

fn weak_duality_at_adversary(st: &Study) -> Result<String, String> {
    let runs: Vec<&VerificationResult> = st.seeds.iter().map(|(_, v, _)| v).chain(st.extra.iter()).collect();
    let mut worst = f64::NEG_INFINITY;
    for v in &runs {
        let shed = v.outcome.shed.model_i.ok_or("Model I failed at a verifier point")?;
        worst = worst.max(v.dual_obj - shed);
    }
    verdict(
        worst <= 5e-3,
        format!("{} verifier runs, max dual_obj − shed_I {worst:.2e} (≤ 5e-3)", runs.len()),
    )
}

fn loading_pattern(st: &Study) -> Result<String, String> {
    let mut parts = Vec::new();
    for (file, label) in [("fig4_pd.csv", "P"), ("fig5_qd.csv", "Q")] {
        let text = fs::read_to_string(st.fig_dir.join(file)).map_err(|e| format!("{file}: {e}"))?;
        let signs: Vec<i32> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
        if signs.len() != st.case.n_loads() {
            return Err(format!("{file}: {} rows for {} loads", signs.len(), st.case.n_loads()));
        }
        let count = |s: i32| signs.iter().filter(|v| **v == s).count();
        parts.push(format!("{label}: {} up, {} down, {} unchanged", count(1), count(-1), count(0)));
    }
    verdict(true, format!("fig4_pd.csv and fig5_qd.csv written; {}", parts.join("; ")))
}

// --------------------------------------------------------- reproducibility

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

/// Runs `args --out dir` twice into the same directory and compares bytes.
fn twice(dir: &Path, args: &[&str]) -> Result<(), String> {
    let mut v: Vec<&str> = args.to_vec();
    v.extend(["--out", p(dir)]);
    run_cli(&v)?;
    let first = snapshot(dir);
    fs::remove_dir_all(dir).map_err(|e| e.to_string())?;
    run_cli(&v)?;
    if first != snapshot(dir) {
        return Err(format!("{} output differs between runs", args[0]));
    }
    Ok(())
}

fn reproducibility(tmp: &Path) -> Result<String, String> {
    let t = tmp.join("repro");
    let c3 = cases_dir().join("case3.json");
    let (data, model, ver, bench, report) = (t.join("data"), t.join("model"), t.join("verify"), t.join("bench"), t.join("report"));
    twice(&data, &["gen-data", "--case", p(&c3), "--n", "8", "--seed", "5"])?;
    twice(&model, &["train", "--case", p(&c3), "--data", p(&data), "--width", "8", "--epochs", "200", "--seed", "1"])?;
    twice(&ver, &["verify", "--case", p(&c3), "--nn", p(&model), "--restarts", "2", "--max-iter", "30"])?;
    twice(&bench, &["bench", "--case", p(&c3), "--nn", p(&model), "--samples", "6", "--restarts", "2", "--max-iter", "30"])?;
    twice(&report, &["report", "--runs", p(&bench)])?;
    verdict(true, "gen-data, train, verify, bench, report byte-identical across repeated serial runs".into())
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut lines = vec![
        check("duality-suite", duality_suite),
        check("bnb-oracle", bnb_oracle),
        check("alpha-extremes", alpha_extremes),
        check("nn-gradient", nn_gradient),
    ];
    let t = Instant::now();
    match study(tmp.path()) {
        Ok(st) => {
            println!("(14-bus study: {:.1} s)", t.elapsed().as_secs_f64());
            lines.push(check("verifier-dominance-I", || dominance_i(&st)));
            lines.push(soft(check("verifier-dominance-II-III", || dominance_ii_iii(&st))));
            lines.push(check("relaxation-ordering", || ordering(&st)));
            lines.push(check("weak-duality-at-adversary", || weak_duality_at_adversary(&st)));
            lines.push(check("loading-pattern", || loading_pattern(&st)));
        }
        Err(e) => {
            for name in ["verifier-dominance-I", "verifier-dominance-II-III", "relaxation-ordering", "weak-duality-at-adversary", "loading-pattern"] {
                lines.push(check(name, || Err(format!("14-bus study failed: {e}"))));
            }
        }
    }
    lines.push(check("reproducibility", || reproducibility(tmp.path())));
    let failed = lines.iter().filter(|l| !l.pass).count();
    let hard = lines.iter().filter(|l| !l.pass && !l.soft).count();
    println!("{} of {} criteria passed", lines.len() - failed, lines.len());
    if failed > hard {
        println!("{} soft criteria failed (logged; local solves carry no guarantee)", failed - hard);
    }
    if hard > 0 {
        std::process::exit(1);
    }
}
