//! Random-sampling baseline: uniform scenarios pushed through the proxy
//! and the restoration pipeline, with rejection of unsolved draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulation::SocOptions;
use crate::network::NetworkCase;
use crate::nn::MlpModel;
use crate::scenario::{GammaBox, ScenarioInput};
use crate::verify::{run_pipeline, PipelineOutcome, VerificationResult};

/// Draws allowed per requested sample.
pub const BUDGET_FACTOR: usize = 10;

/// Each component independently uniform on its box interval.
pub fn sample_gamma<R: Rng + ?Sized>(case: &NetworkCase, rng: &mut R) -> ScenarioInput {
    let g = GammaBox::for_case(case).sample(rng);
    ScenarioInput::from_vec(&g, case.n_loads(), case.n_lines()).expect("box matches the layout")
}

/// Scenario for draw `index` of a run seeded with `seed`.
pub fn draw(case: &NetworkCase, seed: u64, index: usize) -> ScenarioInput {
    sample_gamma(case, &mut ChaCha8Rng::seed_from_u64(seed ^ index as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub draw: usize,
    pub rejected: bool,
    pub outcome: PipelineOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub max_i: f64,
    pub max_ii: f64,
    pub max_iii: f64,
    pub accepted: usize,
    pub rejected: usize,
    pub draws: usize,
    /// Mean wall time per accepted sample and stage.
    pub mean_time_s: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRun {
    pub case: String,
    pub nn: String,
    pub width: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub records: Vec<SampleRecord>,
    pub summary: BenchmarkSummary,
    /// Budget ran out before `n_samples` draws were accepted.
    pub partial: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimized: Option<VerificationResult>,
}

impl BenchmarkRun {
    pub fn accepted(&self) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(|r| !r.rejected)
    }

    /// `sample,rejected,shed_I,shed_II,shed_III`, one row per draw.
    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v}"));
        let mut out = String::from("sample,rejected,shed_I,shed_II,shed_III\n");
        for r in &self.records {
            let s = &r.outcome.shed;
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.draw,
                r.rejected as u8,
                f(s.model_i),
                f(s.model_ii),
                f(s.model_iii)
            ));
        }
        out
    }
}

fn summarize(records: &[SampleRecord]) -> BenchmarkSummary {
    let acc: Vec<&PipelineOutcome> = records.iter().filter(|r| !r.rejected).map(|r| &r.outcome).collect();
    let max = |f: fn(&PipelineOutcome) -> Option<f64>| acc.iter().filter_map(|o| f(o)).fold(f64::NEG_INFINITY, f64::max);
    let mean = |f: fn(&PipelineOutcome) -> f64| {
        if acc.is_empty() {
            0.0
        } else {
            acc.iter().map(|o| f(o)).sum::<f64>() / acc.len() as f64
        }
    };
    BenchmarkSummary {
        max_i: max(|o| o.shed.model_i),
        max_ii: max(|o| o.shed.model_ii),
        max_iii: max(|o| o.shed.model_iii),
        accepted: acc.len(),
        rejected: records.len() - acc.len(),
        draws: records.len(),
        mean_time_s: [mean(|o| o.time_s.model_i), mean(|o| o.time_s.model_ii), mean(|o| o.time_s.model_iii)],
    }
}

/// Push `n` accepted draws through the pipeline. Draw i uses the stream
/// seeded with `seed ^ i`, so the record sequence is the same whether or
/// not draws are evaluated in parallel.
pub fn run_benchmark(
    case: &NetworkCase,
    nn: &MlpModel,
    n: usize,
    seed: u64,
    soc: SocOptions,
    parallel: bool,
) -> Result<BenchmarkRun> {
    if n == 0 {
        return Err(Error::Domain("sample count must be at least 1".into()));
    }
    nn.check_case(case)?;
    let budget = BUDGET_FACTOR * n;
    let eval = |i: usize| -> Result<SampleRecord> {
        let outcome = run_pipeline(case, nn, &draw(case, seed, i), soc)?;
        Ok(SampleRecord {
            draw: i,
            rejected: !outcome.all_ok(),
            outcome,
        })
    };
    let mut records: Vec<SampleRecord> = Vec::new();
    let mut accepted = 0;
    while accepted < n && records.len() < budget {
        let lo = records.len();
        let hi = (lo + n - accepted).min(budget);
        let batch: Vec<SampleRecord> = if parallel {
            (lo..hi).into_par_iter().map(eval).collect::<Result<_>>()?
        } else {
            (lo..hi).map(eval).collect::<Result<_>>()?
        };
        for r in batch {
            if accepted == n {
                break;
            }
            accepted += usize::from(!r.rejected);
            records.push(r);
        }
    }
    let summary = summarize(&records);
    if accepted < n {
        log::warn!("{}", Error::BudgetExhausted { draws: records.len(), accepted });
    }
    Ok(BenchmarkRun {
        case: case.name().to_string(),
        nn: nn.meta.layout_hash.clone(),
        width: nn.width(),
        n_samples: n,
        seed,
        records,
        summary,
        partial: accepted < n,
        optimized: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub case: String,
    pub width: usize,
    pub model: String,
    pub optimized: f64,
    pub sampled_max: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub case: String,
    pub width: usize,
    /// Stage-A search time.
    pub verify_s: f64,
    /// Stage A plus the AC restoration.
    pub verify_plus_ac_s: f64,
    /// Mean AC restoration time over accepted samples.
    pub sample_ac_s: f64,
}

pub fn compare_row(case: &str, width: usize, model: &str, optimized: f64, sampled_max: f64) -> CompareRow {
    CompareRow {
        case: case.to_string(),
        width,
        model: model.to_string(),
        optimized,
        sampled_max,
        ratio: optimized / sampled_max,
    }
}

/// Rows for Models I, II, III in that order, plus the timing row.
pub fn compare(run: &BenchmarkRun) -> Result<(Vec<CompareRow>, TimingRow)> {
    let opt = run
        .optimized
        .as_ref()
        .ok_or_else(|| Error::Domain("benchmark run has no optimized result attached".into()))?;
    if run.partial {
        return Err(Error::BudgetExhausted {
            draws: run.summary.draws,
            accepted: run.summary.accepted,
        });
    }
    let s = &opt.outcome.shed;
    let missing = || Error::Domain("optimized result is missing a model value".into());
    let rows = vec![
        compare_row(&run.case, run.width, "I", s.model_i.ok_or_else(missing)?, run.summary.max_i),
        compare_row(&run.case, run.width, "II", s.model_ii.ok_or_else(missing)?, run.summary.max_ii),
        compare_row(&run.case, run.width, "III", s.model_iii.ok_or_else(missing)?, run.summary.max_iii),
    ];
    let t = &opt.outcome.time_s;
    let stage_a = t.stage_a.unwrap_or(0.0);
    Ok((
        rows,
        TimingRow {
            case: run.case.clone(),
            width: run.width,
            verify_s: stage_a,
            verify_plus_ac_s: stage_a + t.model_iii,
            sample_ac_s: run.summary.mean_time_s[2],
        },
    ))
}
