use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};

use loadshed_core::formulation::SocOptions;
use loadshed_core::network::parse_case;
use loadshed_core::nn::{self, MlpModel, TrainConfig};
use loadshed_core::ops::{generate_training_set, parse_jsonl, BnbConfig, OpsConfig};
use loadshed_core::sampling::{compare, run_benchmark, BenchmarkRun};
use loadshed_core::verify::{self, PipelineOutcome, Timings, VerificationResult, VerifyConfig};
use loadshed_core::{Error, NetworkCase};

use crate::output::{csv, num, opt, OutDir};
use crate::{CmdResult, Failure, Globals};

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn runtime_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn required<'a, T>(v: &'a Option<T>, name: &str) -> Result<&'a T, Failure> {
    v.as_ref().ok_or_else(|| config_err(anyhow!("--{} is required", name.replace('_', "-"))))
}

fn read_input(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display())).map_err(config_err)
}

/// A file, or the named default file inside a directory.
fn file_or_dir(path: &Path, default: &str) -> PathBuf {
    if path.is_dir() {
        path.join(default)
    } else {
        path.to_path_buf()
    }
}

fn load_case(out: &mut OutDir, path: &Path) -> Result<NetworkCase, Failure> {
    let bytes = read_input(path)?;
    out.input("case", path, &bytes);
    let text = String::from_utf8(bytes).map_err(config_err)?;
    parse_case(&text)
        .with_context(|| format!("case {}", path.display()))
        .map_err(config_err)
}

fn load_model(out: &mut OutDir, path: &Path, case: &NetworkCase) -> Result<MlpModel, Failure> {
    let path = file_or_dir(path, "model.json");
    let bytes = read_input(&path)?;
    out.input("nn", &path, &bytes);
    let text = String::from_utf8(bytes).map_err(config_err)?;
    MlpModel::load_for_case(&text, case)
        .with_context(|| format!("model {}", path.display()))
        .map_err(config_err)
}

fn soc_options(full: bool) -> SocOptions {
    if full {
        SocOptions::FULL
    } else {
        SocOptions::SIMPLIFIED
    }
}

fn zero_times(t: &mut Timings) {
    *t = Timings {
        stage_a: t.stage_a.map(|_| 0.0),
        ..Timings::default()
    };
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataConfig {
    case: Option<PathBuf>,
    n: usize,
    alpha_lo: f64,
    alpha_hi: f64,
    seed: u64,
    max_nodes: usize,
    out: Option<PathBuf>,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        GenDataConfig {
            case: None,
            n: 200,
            alpha_lo: 0.25,
            alpha_hi: 0.75,
            seed: 0,
            max_nodes: BnbConfig::default().max_nodes,
            out: None,
        }
    }
}

pub fn gen_data(g: &Globals, cfg: GenDataConfig) -> CmdResult {
    let case_path = required(&cfg.case, "case")?;
    let mut out = OutDir::create(required(&cfg.out, "out")?).map_err(config_err)?;
    if cfg.n == 0 || !(0.0 <= cfg.alpha_lo && cfg.alpha_lo <= cfg.alpha_hi && cfg.alpha_hi <= 1.0) {
        return Err(config_err(anyhow!("need n ≥ 1 and 0 ≤ alpha-lo ≤ alpha-hi ≤ 1")));
    }
    let case = load_case(&mut out, case_path)?;
    let ops = OpsConfig {
        bnb: BnbConfig {
            max_nodes: cfg.max_nodes,
            ..BnbConfig::default()
        },
        ..OpsConfig::default()
    };
    let set = generate_training_set(&case, cfg.n, (cfg.alpha_lo, cfg.alpha_hi), cfg.seed, &ops).map_err(runtime_err)?;
    out.write("data.jsonl", &set.to_jsonl()).map_err(runtime_err)?;
    out.finish("gen-data", &cfg, g.timings).map_err(runtime_err)?;
    println!(
        "{} samples written ({} of {} draws rejected)",
        set.samples.len(),
        set.rejected,
        set.draws
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCmdConfig {
    case: Option<PathBuf>,
    data: Option<PathBuf>,
    width: usize,
    epochs: usize,
    lr: f64,
    batch: usize,
    momentum: f64,
    seed: u64,
    out: Option<PathBuf>,
}

impl Default for TrainCmdConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainCmdConfig {
            case: None,
            data: None,
            width: t.width,
            epochs: t.epochs,
            lr: t.lr,
            batch: t.batch,
            momentum: t.momentum,
            seed: t.seed,
            out: None,
        }
    }
}

pub fn train(g: &Globals, cfg: TrainCmdConfig) -> CmdResult {
    let case_path = required(&cfg.case, "case")?;
    let data_path = file_or_dir(required(&cfg.data, "data")?, "data.jsonl");
    let mut out = OutDir::create(required(&cfg.out, "out")?).map_err(config_err)?;
    if cfg.width == 0 || cfg.batch == 0 || !(cfg.lr > 0.0) || !(0.0..1.0).contains(&cfg.momentum) {
        return Err(config_err(anyhow!(
            "need width ≥ 1, batch ≥ 1, lr > 0 and momentum in [0, 1)"
        )));
    }
    let case = load_case(&mut out, case_path)?;
    let bytes = read_input(&data_path)?;
    out.input("data", &data_path, &bytes);
    let samples = parse_jsonl(&String::from_utf8(bytes).map_err(config_err)?)
        .with_context(|| format!("dataset {}", data_path.display()))
        .map_err(config_err)?;
    let tc = TrainConfig {
        width: cfg.width,
        lr: cfg.lr,
        epochs: cfg.epochs,
        batch: cfg.batch,
        momentum: cfg.momentum,
        seed: cfg.seed,
    };
    let trained = nn::train(&case, &samples, &tc).map_err(|e| match e {
        Error::Diverged { .. } => runtime_err(e),
        other => config_err(other),
    })?;
    let acc = nn::snap_accuracy(&trained.model, &samples).map_err(runtime_err)?;
    out.write("model.json", &trained.model.save()).map_err(runtime_err)?;
    out.finish("train", &cfg, g.timings).map_err(runtime_err)?;
    println!(
        "final loss {:.6}, snapped accuracy {:.4} on {} samples",
        trained.model.meta.final_loss.unwrap_or(f64::NAN),
        acc,
        samples.len()
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyCmdConfig {
    case: Option<PathBuf>,
    nn: Option<PathBuf>,
    restarts: usize,
    seed: u64,
    max_iter: usize,
    stage_tol: f64,
    inner_tol: f64,
    full_soc: bool,
    out: Option<PathBuf>,
}

impl Default for VerifyCmdConfig {
    fn default() -> Self {
        let v = VerifyConfig::default();
        VerifyCmdConfig {
            case: None,
            nn: None,
            restarts: v.restarts,
            seed: v.seed,
            max_iter: v.max_iter,
            stage_tol: v.stage_tol,
            inner_tol: v.inner_tol,
            full_soc: false,
            out: None,
        }
    }
}

fn load_pattern(case: &NetworkCase, r: &VerificationResult, reactive: bool) -> String {
    let g = &r.outcome.gamma;
    let rows = case.loads().iter().enumerate().map(|(d, load)| {
        let (base, worst) = if reactive {
            (load.q_base, g.q_d[d])
        } else {
            (load.p_base, g.p_d[d])
        };
        let delta = worst - base;
        let sign = if delta.abs() <= 1e-9 * (1.0 + base.abs()) {
            0
        } else if delta > 0.0 {
            1
        } else {
            -1
        };
        vec![d.to_string(), load.bus.to_string(), num(base), num(worst), num(delta), sign.to_string()]
    });
    csv(&["load", "bus", "base", "worst", "delta", "sign"], rows)
}

fn summary_text(r: &VerificationResult) -> String {
    let o = &r.outcome;
    let f = |v: Option<f64>| v.map_or_else(|| "failed".to_string(), |v| format!("{v:.6}"));
    let t = &o.time_s;
    let mut s = String::new();
    s.push_str(&format!("stage A bound (dual objective): {:.6} p.u.\n", r.dual_obj));
    s.push_str(&format!("  start {}, {} iterations, stationarity {:.2e}, dual residual {:.2e}\n", r.start, r.iterations, r.stationarity, r.dual_residual));
    s.push_str(&format!("Model I   shed {} p.u. ({:?})\n", f(o.shed.model_i), o.status.model_i));
    s.push_str(&format!("Model II  shed {} p.u. ({:?})\n", f(o.shed.model_ii), o.status.model_ii));
    s.push_str(&format!("Model III shed {} p.u. ({:?})\n", f(o.shed.model_iii), o.status.model_iii));
    s.push_str(&format!(
        "lines switched off: {} of {}\n",
        o.z.iter().filter(|z| **z == 0).count(),
        o.z.len()
    ));
    s.push_str(&format!(
        "times (s): stage A {:.3}, I {:.3}, II {:.3}, III {:.3}\n",
        t.stage_a.unwrap_or(0.0),
        t.model_i,
        t.model_ii,
        t.model_iii
    ));
    s
}

fn verify_config(restarts: usize, seed: u64, max_iter: usize, full_soc: bool) -> VerifyConfig {
    VerifyConfig {
        soc: soc_options(full_soc),
        restarts,
        seed,
        max_iter,
        ..VerifyConfig::default()
    }
}

pub fn verify(g: &Globals, cfg: VerifyCmdConfig) -> CmdResult {
    let case_path = required(&cfg.case, "case")?;
    let nn_path = required(&cfg.nn, "nn")?;
    let mut out = OutDir::create(required(&cfg.out, "out")?).map_err(config_err)?;
    if cfg.restarts == 0 || !(cfg.stage_tol > 0.0) || !(cfg.inner_tol > 0.0) {
        return Err(config_err(anyhow!("need restarts ≥ 1 and positive tolerances")));
    }
    let case = load_case(&mut out, case_path)?;
    let model = load_model(&mut out, nn_path, &case)?;
    let vc = VerifyConfig {
        stage_tol: cfg.stage_tol,
        inner_tol: cfg.inner_tol,
        ..verify_config(cfg.restarts, cfg.seed, cfg.max_iter, cfg.full_soc)
    };
    let mut r = verify::verify(&case, &model, &vc).map_err(runtime_err)?;
    if !g.timings {
        zero_times(&mut r.outcome.time_s);
    }
    out.write_json("verification.json", &r).map_err(runtime_err)?;
    let text = summary_text(&r);
    out.write("summary.txt", &text).map_err(runtime_err)?;
    out.write("fig4_pd.csv", &load_pattern(&case, &r, false)).map_err(runtime_err)?;
    out.write("fig5_qd.csv", &load_pattern(&case, &r, true)).map_err(runtime_err)?;
    out.finish("verify", &cfg, g.timings).map_err(runtime_err)?;
    print!("{text}");
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchCmdConfig {
    case: Option<PathBuf>,
    nn: Option<PathBuf>,
    samples: usize,
    seed: u64,
    restarts: usize,
    max_iter: usize,
    full_soc: bool,
    allow_partial: bool,
    out: Option<PathBuf>,
}

impl Default for BenchCmdConfig {
    fn default() -> Self {
        let v = VerifyConfig::default();
        BenchCmdConfig {
            case: None,
            nn: None,
            samples: 100,
            seed: 0,
            restarts: v.restarts,
            max_iter: v.max_iter,
            full_soc: false,
            allow_partial: false,
            out: None,
        }
    }
}

fn zero_outcome_times(o: &mut PipelineOutcome) {
    zero_times(&mut o.time_s);
}

pub fn bench(g: &Globals, cfg: BenchCmdConfig) -> CmdResult {
    let case_path = required(&cfg.case, "case")?;
    let nn_path = required(&cfg.nn, "nn")?;
    let mut out = OutDir::create(required(&cfg.out, "out")?).map_err(config_err)?;
    if cfg.samples == 0 {
        return Err(config_err(anyhow!("--samples must be at least 1")));
    }
    let case = load_case(&mut out, case_path)?;
    let model = load_model(&mut out, nn_path, &case)?;
    let soc = soc_options(cfg.full_soc);
    let mut run = run_benchmark(&case, &model, cfg.samples, cfg.seed, soc, g.jobs > 1).map_err(runtime_err)?;
    if cfg.restarts > 0 {
        let vc = verify_config(cfg.restarts, cfg.seed, cfg.max_iter, cfg.full_soc);
        run.optimized = Some(verify::verify(&case, &model, &vc).map_err(runtime_err)?);
    }
    if !g.timings {
        run.records.iter_mut().for_each(|r| zero_outcome_times(&mut r.outcome));
        run.summary.mean_time_s = [0.0; 3];
        if let Some(o) = run.optimized.as_mut() {
            zero_outcome_times(&mut o.outcome);
        }
    }
    out.write("samples.csv", &run.to_csv()).map_err(runtime_err)?;
    out.write_json("run.json", &run).map_err(runtime_err)?;
    out.finish("bench", &cfg, g.timings).map_err(runtime_err)?;
    let s = &run.summary;
    println!(
        "{} accepted, {} rejected; sampled max shed I {:.6}, II {:.6}, III {:.6}",
        s.accepted, s.rejected, s.max_i, s.max_ii, s.max_iii
    );
    if let Some(o) = &run.optimized {
        let sh = &o.outcome.shed;
        println!("optimized shed I {}, II {}, III {}", opt(sh.model_i), opt(sh.model_ii), opt(sh.model_iii));
    }
    if run.partial && !cfg.allow_partial {
        return Err(runtime_err(Error::BudgetExhausted {
            draws: s.draws,
            accepted: s.accepted,
        }));
    }
    Ok(())
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    runs: Vec<PathBuf>,
    out: Option<PathBuf>,
}

pub fn report(g: &Globals, cfg: ReportConfig) -> CmdResult {
    if cfg.runs.is_empty() {
        return Err(config_err(anyhow!("--runs needs at least one bench output")));
    }
    let mut out = OutDir::create(required(&cfg.out, "out")?).map_err(config_err)?;
    let mut runs: BTreeMap<(String, usize), BenchmarkRun> = BTreeMap::new();
    for (k, p) in cfg.runs.iter().enumerate() {
        let path = file_or_dir(p, "run.json");
        let bytes = read_input(&path)?;
        out.input(&format!("run{k}"), &path, &bytes);
        let run: BenchmarkRun = serde_json::from_slice(&bytes)
            .with_context(|| format!("run {}", path.display()))
            .map_err(config_err)?;
        if let Some(old) = runs.insert((run.case.clone(), run.width), run) {
            log::warn!("run for ({}, {}) replaced by {}", old.case, old.width, path.display());
        }
    }
    let mut tables: [Vec<Vec<String>>; 3] = Default::default();
    let mut timing = Vec::new();
    let mut fig3 = Vec::new();
    for run in runs.values() {
        let (rows, t) = compare(run)
            .with_context(|| format!("run ({}, {})", run.case, run.width))
            .map_err(runtime_err)?;
        for (table, r) in tables.iter_mut().zip(&rows) {
            table.push(vec![r.case.clone(), r.width.to_string(), num(r.optimized), num(r.sampled_max), num(r.ratio)]);
        }
        timing.push(vec![t.case, t.width.to_string(), num(t.verify_s), num(t.verify_plus_ac_s), num(t.sample_ac_s)]);
        for r in run.accepted() {
            let s = &r.outcome.shed;
            fig3.push(vec![
                run.case.clone(),
                run.width.to_string(),
                "sample".into(),
                r.draw.to_string(),
                opt(s.model_i),
                opt(s.model_ii),
                opt(s.model_iii),
            ]);
        }
        let b = &rows;
        fig3.push(vec![
            run.case.clone(),
            run.width.to_string(),
            "bound".into(),
            String::new(),
            num(b[0].optimized),
            num(b[1].optimized),
            num(b[2].optimized),
        ]);
    }
    let header = ["case", "width", "optimized", "sampled_max", "ratio"];
    for (name, rows) in ["table_modelI.csv", "table_modelII.csv", "table_modelIII.csv"].iter().zip(tables) {
        out.write(name, &csv(&header, rows)).map_err(runtime_err)?;
    }
    out.write(
        "timing.csv",
        &csv(&["case", "width", "verify_s", "verify_plus_ac_s", "sample_ac_s"], timing),
    )
    .map_err(runtime_err)?;
    out.write(
        "fig3_points.csv",
        &csv(&["case", "width", "kind", "sample", "shed_I", "shed_II", "shed_III"], fig3),
    )
    .map_err(runtime_err)?;
    out.finish("report", &cfg, g.timings).map_err(runtime_err)?;
    println!("report over {} runs written", runs.len());
    Ok(())
}
