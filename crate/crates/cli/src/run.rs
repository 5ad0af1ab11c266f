//! Sketch-to-artifacts runner shared by `solve` and the job service.
//!
//! A run directory holds:
//!
//! ```text
//! problem.json            parsed design problem
//! sketch.png              input sketch, verbatim
//! mask.png, prior.png     optional inputs, verbatim
//! structures/run_NNN.png  one grayscale structure per successful run (0 = solid)
//! reports.json            one RunEntry per requested run
//! summary.csv             per-run compliance and volume table
//! summary.json            batch statistics
//! manifest.json           file list, parameters and creation time; written last
//! ```
//!
//! Only `manifest.json` carries a timestamp, so two runs with equal inputs
//! and seed produce byte-identical files everywhere else.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use topoforge::pipeline::{
    batch_run_with, evaluate_gray, evaluate_raster, BatchSummary, RunRecord,
};
use topoforge::problem::{parse_sketch_layers, ProblemError, Severity};
use topoforge::raster::{encode_density_png, GrayImage};
use topoforge::{
    validate_problem, BatchStats, DensityField, DesignProblem, EvaluationReport, FailureKind,
    GenerationParams, Grid, MaterialParams, Palette, ParseParams, RasterSketch,
};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid sketch: {0}")]
    InvalidSketch(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("remote backend failure: {0}")]
    Remote(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl SolveError {
    pub fn exit_code(&self) -> i32 {
        match self {
            SolveError::InvalidSketch(_) | SolveError::InvalidRequest(_) => 2,
            SolveError::Solver(_) => 3,
            SolveError::Remote(_) => 4,
            SolveError::Io(_) => 1,
        }
    }
}

/// Name of the failure class followed by its message, e.g.
/// `NoMaterial: sketch contains no material pixels`.
pub fn describe_problem_error(e: &ProblemError) -> String {
    let name = match e {
        ProblemError::NoMaterial => "NoMaterial",
        ProblemError::NoLoad => "NoLoad",
        ProblemError::NoFixing => "NoFixing",
        ProblemError::AmbiguousPalette(_) => "AmbiguousPalette",
        ProblemError::Invalid(_) => "Invalid",
        ProblemError::Json(_) => "Json",
    };
    format!("{name}: {e}")
}

#[derive(Debug, Clone)]
pub struct SolveInput {
    pub sketch_png: Vec<u8>,
    pub mask_png: Option<Vec<u8>>,
    /// Grayscale structure the generation starts from and keeps outside the mask.
    pub prior_png: Option<Vec<u8>>,
    pub grid: Grid,
    /// `volume_fraction` must be set; it completes the sketch.
    pub params: GenerationParams,
    pub threshold: f64,
}

/// Parsed and validated inputs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub problem: DesignProblem,
    pub prior: Option<DensityField>,
    pub warnings: Vec<String>,
}

pub fn prepare(input: &SolveInput) -> Result<Prepared, SolveError> {
    input
        .params
        .validate()
        .map_err(|e| SolveError::InvalidRequest(e.to_string()))?;
    if !(0.0..=1.0).contains(&input.threshold) {
        return Err(SolveError::InvalidRequest(format!(
            "threshold {} outside [0, 1]",
            input.threshold
        )));
    }
    let vf = input
        .params
        .volume_fraction
        .ok_or_else(|| SolveError::InvalidRequest("volume fraction is required".into()))?;
    let sketch = RasterSketch::from_png(&input.sketch_png)
        .map_err(|e| SolveError::InvalidSketch(format!("sketch: {e}")))?;
    let mask = input
        .mask_png
        .as_deref()
        .map(RasterSketch::from_png)
        .transpose()
        .map_err(|e| SolveError::InvalidSketch(format!("mask: {e}")))?;
    let parse = ParseParams::new(input.params.load_angle_deg, vf).with_grid(input.grid);
    let problem = parse_sketch_layers(&sketch, mask.as_ref(), &Palette::default(), &parse)
        .map_err(|e| SolveError::InvalidSketch(describe_problem_error(&e)))?;

    let mut warnings = Vec::new();
    let mut errors = Vec::new();
    for d in validate_problem(&problem) {
        let line = format!("{:?}: {}", d.kind, d.message);
        match d.severity {
            Severity::Error => errors.push(line),
            Severity::Warning => warnings.push(line),
        }
    }
    if !errors.is_empty() {
        return Err(SolveError::InvalidSketch(errors.join("; ")));
    }

    let prior = match &input.prior_png {
        None => None,
        Some(bytes) => {
            let image = GrayImage::from_png(bytes)
                .map_err(|e| SolveError::InvalidRequest(format!("prior: {e}")))?;
            let grid = problem.grid;
            if (image.width, image.height) != (grid.nelx, grid.nely) {
                warnings.push(format!(
                    "Resampled: {}x{} prior resampled to {grid}",
                    image.width, image.height
                ));
            }
            Some(DensityField::from_values(
                &problem,
                &image.to_densities(grid),
            ))
        }
    };
    Ok(Prepared {
        problem,
        prior,
        warnings,
    })
}

/// One requested run as stored in `reports.json` and returned by the API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub run_id: usize,
    pub seed: Option<u64>,
    /// Structure PNG path relative to the run directory.
    pub structure: Option<String>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest per-element change from the prior, over the domain.
    pub prior_drift: Option<f64>,
    pub error: Option<String>,
    pub failure: Option<FailureKind>,
    pub report: Option<EvaluationReport>,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub problem: DesignProblem,
    pub stats: BatchStats,
    pub entries: Vec<RunEntry>,
    /// Encoded structures, parallel to `entries`.
    pub structures: Vec<Option<Vec<u8>>>,
    pub warnings: Vec<String>,
}

impl SolveOutcome {
    /// The first failed run, classified for exit codes and job states.
    pub fn failure(&self) -> Option<SolveError> {
        self.entries.iter().find_map(|e| {
            let msg = format!("run {}: {}", e.run_id, e.error.clone().unwrap_or_default());
            e.failure.map(|kind| match kind {
                FailureKind::InvalidRequest => SolveError::InvalidRequest(msg),
                FailureKind::Solver => SolveError::Solver(msg),
                FailureKind::Remote => SolveError::Remote(msg),
            })
        })
    }

    pub fn summary_json(&self) -> SummaryFile {
        SummaryFile {
            requested: self.stats.requested,
            std_undefined: self.stats.std_undefined,
            stats: self.stats.summary(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    #[serde(flatten)]
    pub stats: BatchSummary,
    pub requested: usize,
    pub std_undefined: bool,
}

fn structure_path(run_id: usize) -> String {
    format!("structures/run_{run_id:03}.png")
}

fn drift(structure: &DensityField, prior: &DensityField) -> f64 {
    structure
        .rho
        .iter()
        .zip(&prior.rho)
        .zip(&structure.domain)
        .filter(|(_, &d)| d)
        .map(|((a, b), _)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn entry(record: &RunRecord, prior: Option<&DensityField>) -> (RunEntry, Option<Vec<u8>>) {
    let png = record
        .structure
        .as_ref()
        .map(|s| encode_density_png(s.grid, &s.rho).expect("grid-sized buffer encodes"));
    let entry = RunEntry {
        run_id: record.run_id,
        seed: record.seed,
        structure: png.as_ref().map(|_| structure_path(record.run_id)),
        converged: record.converged,
        iterations: record.iterations,
        prior_drift: prior
            .zip(record.structure.as_ref())
            .map(|(p, s)| drift(s, p)),
        error: record.error.clone(),
        failure: record.failure,
        report: record.report.clone(),
    };
    (entry, png)
}

/// Generate and evaluate every run. Individual run failures are recorded in
/// the outcome rather than returned.
pub fn execute(prepared: &Prepared, input: &SolveInput) -> Result<SolveOutcome, SolveError> {
    let mp = MaterialParams::default();
    let stats = batch_run_with(
        &prepared.problem,
        &input.params,
        prepared.prior.as_ref(),
        &mp,
        input.threshold,
    )
    .map_err(|e| SolveError::InvalidRequest(e.to_string()))?;
    let (entries, structures) = stats
        .runs
        .iter()
        .map(|r| entry(r, prepared.prior.as_ref()))
        .unzip();
    Ok(SolveOutcome {
        problem: input.params.effective_problem(&prepared.problem),
        stats,
        entries,
        structures,
        warnings: prepared.warnings.clone(),
    })
}

pub fn solve(input: &SolveInput) -> Result<SolveOutcome, SolveError> {
    execute(&prepare(input)?, input)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub created_unix_ms: u64,
    pub version: String,
    pub grid: Grid,
    pub threshold: f64,
    pub params: GenerationParams,
    /// Paths relative to the run directory, all present on disk.
    pub files: Vec<String>,
}

pub const MANIFEST: &str = "manifest.json";

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("artifact types serialize");
    v.push(b'\n');
    v
}

pub fn now_unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// Write all artifacts of `outcome` into `dir`, replacing earlier contents
/// of the same names. The manifest is written last.
pub fn write_run_dir(
    dir: &Path,
    input: &SolveInput,
    outcome: &SolveOutcome,
) -> Result<RunManifest, SolveError> {
    let structures_dir = dir.join("structures");
    if structures_dir.exists() {
        fs::remove_dir_all(&structures_dir)?;
    }
    fs::create_dir_all(&structures_dir)?;
    let mut files = Vec::new();
    let mut put = |name: String, bytes: &[u8]| -> io::Result<()> {
        fs::write(dir.join(&name), bytes)?;
        files.push(name);
        Ok(())
    };
    put("problem.json".into(), &json_bytes(&outcome.problem))?;
    put("sketch.png".into(), &input.sketch_png)?;
    if let Some(mask) = &input.mask_png {
        put("mask.png".into(), mask)?;
    }
    if let Some(prior) = &input.prior_png {
        put("prior.png".into(), prior)?;
    }
    for (entry, png) in outcome.entries.iter().zip(&outcome.structures) {
        if let (Some(path), Some(png)) = (&entry.structure, png) {
            put(path.clone(), png)?;
        }
    }
    put("reports.json".into(), &json_bytes(&outcome.entries))?;
    let mut csv = Vec::new();
    outcome
        .stats
        .write_csv(&mut csv)
        .map_err(|e| io::Error::other(e.to_string()))?;
    put("summary.csv".into(), &csv)?;
    put("summary.json".into(), &json_bytes(&outcome.summary_json()))?;

    let manifest = RunManifest {
        created_unix_ms: now_unix_ms(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        grid: outcome.problem.grid,
        threshold: input.threshold,
        params: input.params.clone(),
        files,
    };
    fs::write(dir.join(MANIFEST), json_bytes(&manifest))?;
    Ok(manifest)
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.filter(|x| x.is_finite())
        .map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

/// Human-readable per-run table followed by mean ± std lines.
pub fn summary_table(outcome: &SolveOutcome) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>4} {:>20} {:>12} {:>10} {:>12} {:>9} {:>6}",
        "run", "seed", "compliance", "vf_global%", "vf_editable%", "converged", "iters"
    );
    for e in &outcome.entries {
        let r = e.report.as_ref();
        let _ = writeln!(
            s,
            "{:>4} {:>20} {:>12} {:>10} {:>12} {:>9} {:>6}",
            e.run_id,
            e.seed.map_or_else(|| "-".to_string(), |v| v.to_string()),
            fmt_opt(r.map(|r| r.compliance), 4),
            fmt_opt(r.map(|r| 100.0 * r.vf_global), 2),
            fmt_opt(r.and_then(|r| r.vf_editable).map(|v| 100.0 * v), 2),
            e.converged,
            e.iterations,
        );
        if let Some(err) = &e.error {
            let _ = writeln!(s, "     error: {err}");
        }
    }
    let sum = outcome.stats.summary();
    let _ = writeln!(s, "n = {} of {}", sum.n, outcome.stats.requested);
    let _ = writeln!(
        s,
        "compliance  {} ± {}",
        fmt_opt(sum.compliance_mean, 4),
        fmt_opt(sum.compliance_std, 4)
    );
    let _ = writeln!(
        s,
        "vf_global%  {} ± {}",
        fmt_opt(sum.vf_mean_pct, 2),
        fmt_opt(sum.vf_std_pct, 2)
    );
    s
}

/// How `evaluate` obtains the problem a structure is checked against.
#[derive(Debug, Clone)]
pub enum ProblemSource {
    Json(String),
    Sketch {
        png: Vec<u8>,
        mask: Option<Vec<u8>>,
        vf: f64,
        load_angle: f64,
        /// Falls back to the structure's pixel size.
        grid: Option<Grid>,
    },
}

#[derive(Debug, Clone)]
pub struct EvaluateInput {
    pub structure_png: Vec<u8>,
    pub problem: ProblemSource,
    pub threshold: f64,
    /// Treat light pixels as solid.
    pub invert: bool,
    /// Analyse gray densities instead of thresholding.
    pub gray: bool,
}

pub fn evaluate(input: &EvaluateInput) -> Result<EvaluationReport, SolveError> {
    let mut image = GrayImage::from_png(&input.structure_png)
        .map_err(|e| SolveError::InvalidRequest(format!("structure: {e}")))?;
    if input.invert {
        image.invert();
    }
    let problem = match &input.problem {
        ProblemSource::Json(text) => {
            let p = DesignProblem::from_json(text)
                .map_err(|e| SolveError::InvalidRequest(format!("problem: {e}")))?;
            p.check()
                .map_err(|e| SolveError::InvalidRequest(format!("problem: {e}")))?;
            p
        }
        ProblemSource::Sketch {
            png,
            mask,
            vf,
            load_angle,
            grid,
        } => {
            let input = SolveInput {
                sketch_png: png.clone(),
                mask_png: mask.clone(),
                prior_png: None,
                grid: grid.unwrap_or(Grid::new(image.width, image.height)),
                params: GenerationParams {
                    volume_fraction: Some(*vf),
                    load_angle_deg: *load_angle,
                    ..GenerationParams::default()
                },
                threshold: input.threshold,
            };
            prepare(&input)?.problem
        }
    };
    if !(0.0..=1.0).contains(&input.threshold) {
        return Err(SolveError::InvalidRequest(format!(
            "threshold {} outside [0, 1]",
            input.threshold
        )));
    }
    let mp = MaterialParams::default();
    if input.gray {
        let field = DensityField::from_values(&problem, &image.to_densities(problem.grid));
        Ok(evaluate_gray(&field, &problem, &mp))
    } else {
        Ok(evaluate_raster(&image, &problem, &mp, input.threshold))
    }
}

/// Default run directory under `root`, named by creation time.
pub fn fresh_run_dir(root: &Path) -> PathBuf {
    root.join(format!("run-{}", now_unix_ms()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_failure_class() {
        assert_eq!(SolveError::InvalidSketch(String::new()).exit_code(), 2);
        assert_eq!(SolveError::InvalidRequest(String::new()).exit_code(), 2);
        assert_eq!(SolveError::Solver(String::new()).exit_code(), 3);
        assert_eq!(SolveError::Remote(String::new()).exit_code(), 4);
        assert_eq!(SolveError::Io(io::Error::other("x")).exit_code(), 1);
        assert!(describe_problem_error(&ProblemError::NoMaterial).starts_with("NoMaterial: "));
    }

    #[test]
    fn first_failed_run_decides_the_outcome() {
        let problem = DesignProblem::benchmark(Grid::new(4, 4));
        let failed = |run_id, kind| RunEntry {
            run_id,
            seed: None,
            structure: None,
            converged: false,
            iterations: 0,
            prior_drift: None,
            error: Some("boom".into()),
            failure: Some(kind),
            report: None,
        };
        let outcome = |entries: Vec<RunEntry>| SolveOutcome {
            problem: problem.clone(),
            stats: BatchStats::from_runs(Vec::new()),
            structures: vec![None; entries.len()],
            entries,
            warnings: Vec::new(),
        };
        let o = outcome(vec![
            failed(0, FailureKind::Solver),
            failed(1, FailureKind::Remote),
        ]);
        assert_eq!(o.failure().unwrap().exit_code(), 3);
        let o = outcome(vec![failed(0, FailureKind::Remote)]);
        assert_eq!(o.failure().unwrap().exit_code(), 4);
        assert!(outcome(Vec::new()).failure().is_none());
    }
}
