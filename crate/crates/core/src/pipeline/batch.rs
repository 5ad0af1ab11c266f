use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fem::{DensityField, MaterialParams};
use crate::problem::DesignProblem;

use super::evaluate::{evaluate_structure, quantize, EvaluationReport, DEFAULT_THRESHOLD};
use super::{generate, FailureKind, GenerationParams, PipelineError};

/// One member of a batch. `structure` holds the 8-bit quantized densities
/// the report was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: usize,
    pub seed: Option<u64>,
    pub report: Option<EvaluationReport>,
    pub converged: bool,
    pub iterations: usize,
    pub error: Option<String>,
    pub failure: Option<FailureKind>,
    #[serde(skip)]
    pub structure: Option<DensityField>,
}

impl RunRecord {
    /// Counted in the statistics: generated and with finite compliance.
    pub fn succeeded(&self) -> bool {
        self.report
            .as_ref()
            .is_some_and(|r| r.compliance.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub n: usize,
    pub compliance_mean: Option<f64>,
    pub compliance_std: Option<f64>,
    pub vf_mean_pct: Option<f64>,
    pub vf_std_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    /// Runs counted in the statistics.
    pub n: usize,
    pub requested: usize,
    pub compliance_mean: f64,
    pub compliance_std: f64,
    /// Global retained volume, in percent.
    pub vf_mean_pct: f64,
    pub vf_std_pct: f64,
    /// Set when `n == 1`, where the standard deviation is reported as 0.
    pub std_undefined: bool,
    pub runs: Vec<RunRecord>,
}

/// Mean and sample (n − 1) standard deviation; the deviation is 0 for a
/// single value and both are NaN for none.
pub fn summarize(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

impl BatchStats {
    pub fn from_runs(runs: Vec<RunRecord>) -> Self {
        let ok: Vec<&EvaluationReport> = runs
            .iter()
            .filter(|r| r.succeeded())
            .filter_map(|r| r.report.as_ref())
            .collect();
        let compliance: Vec<f64> = ok.iter().map(|r| r.compliance).collect();
        let vf: Vec<f64> = ok.iter().map(|r| 100.0 * r.vf_global).collect();
        let (compliance_mean, compliance_std) = summarize(&compliance);
        let (vf_mean_pct, vf_std_pct) = summarize(&vf);
        BatchStats {
            n: ok.len(),
            requested: runs.len(),
            compliance_mean,
            compliance_std,
            vf_mean_pct,
            vf_std_pct,
            std_undefined: ok.len() == 1,
            runs,
        }
    }

    pub fn summary(&self) -> BatchSummary {
        let finite = |v: f64| v.is_finite().then_some(v);
        BatchSummary {
            n: self.n,
            compliance_mean: finite(self.compliance_mean),
            compliance_std: finite(self.compliance_std),
            vf_mean_pct: finite(self.vf_mean_pct),
            vf_std_pct: finite(self.vf_std_pct),
        }
    }

    /// Per-run CSV; non-finite or missing values are empty cells.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "run_id",
            "seed",
            "compliance",
            "vf_global_pct",
            "vf_editable_pct",
            "converged",
            "iterations",
        ])?;
        let num = |v: Option<f64>| {
            v.filter(|v| v.is_finite())
                .map_or(String::new(), |v| v.to_string())
        };
        for run in &self.runs {
            let rep = run.report.as_ref();
            w.write_record([
                run.run_id.to_string(),
                run.seed.map_or(String::new(), |s| s.to_string()),
                num(rep.map(|r| r.compliance)),
                num(rep.map(|r| 100.0 * r.vf_global)),
                num(rep.and_then(|r| r.vf_editable).map(|v| 100.0 * v)),
                run.converged.to_string(),
                run.iterations.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Generate and evaluate one batch member.
pub(crate) fn run_one(
    run_id: usize,
    problem: &DesignProblem,
    params: &GenerationParams,
    prior: Option<&DensityField>,
    mp: &MaterialParams,
    threshold: f64,
) -> RunRecord {
    let seed = params.seed.map(|s| s.wrapping_add(run_id as u64));
    let member = GenerationParams {
        seed,
        ..params.clone()
    };
    let eval_problem = params.effective_problem(problem);
    match generate(problem, &member, prior, mp) {
        Ok(g) => {
            let structure = quantize(&g.field);
            let mut report = evaluate_structure(&structure, &eval_problem, mp, threshold);
            let mut diags = g.diagnostics;
            diags.append(&mut report.diagnostics);
            report.diagnostics = diags;
            RunRecord {
                run_id,
                seed,
                report: Some(report),
                converged: g.converged,
                iterations: g.iterations,
                error: None,
                failure: None,
                structure: Some(structure),
            }
        }
        Err(e) => RunRecord {
            run_id,
            seed,
            report: None,
            converged: false,
            iterations: 0,
            error: Some(e.to_string()),
            failure: Some(e.kind()),
            structure: None,
        },
    }
}

/// Runs `params.batch_count` generations with seeds `seed, seed + 1, …`,
/// in parallel, and aggregates their evaluations at the default threshold.
pub fn batch_run(
    problem: &DesignProblem,
    params: &GenerationParams,
    mp: &MaterialParams,
) -> Result<BatchStats, PipelineError> {
    batch_run_with(problem, params, None, mp, DEFAULT_THRESHOLD)
}

pub fn batch_run_with(
    problem: &DesignProblem,
    params: &GenerationParams,
    prior: Option<&DensityField>,
    mp: &MaterialParams,
    threshold: f64,
) -> Result<BatchStats, PipelineError> {
    params.validate()?;
    let runs: Vec<RunRecord> = (0..params.batch_count)
        .into_par_iter()
        .map(|k| run_one(k, problem, params, prior, mp, threshold))
        .collect();
    Ok(BatchStats::from_runs(runs))
}
