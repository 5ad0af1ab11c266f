use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::fem::{assemble_and_solve, DensityField, MaterialParams, SolverDiagnostics};
use crate::grid::Grid;
use crate::problem::components4;
use crate::problem::rle::{self, Run};
use crate::problem::DesignProblem;
use crate::raster::{density_to_gray, gray_to_density, GrayImage};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportCode {
    /// Some load has no solid path to a support.
    NoLoadPath,
    SingularSystem,
    /// The structure raster did not match the grid and was resampled.
    Resampled,
    NotConverged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportDiagnostic {
    pub code: ReportCode,
    pub severity: crate::problem::Severity,
    pub message: String,
}

impl ReportDiagnostic {
    pub fn warning(code: ReportCode, message: impl Into<String>) -> Self {
        ReportDiagnostic {
            code,
            severity: crate::problem::Severity::Warning,
            message: message.into(),
        }
    }

    pub fn error(code: ReportCode, message: impl Into<String>) -> Self {
        ReportDiagnostic {
            code,
            severity: crate::problem::Severity::Error,
            message: message.into(),
        }
    }
}

/// Compliance and retained volume of one structure.
///
/// `compliance` is `+∞` when no load reaches a support or the system is
/// singular; it serializes as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// `None` for gray evaluation.
    pub threshold: Option<f64>,
    pub grid: Grid,
    /// Run-length encoded solid elements of the binarized structure.
    pub solid: Vec<Run>,
    pub vf_global: f64,
    /// Over the editable region; `None` without a mask.
    pub vf_editable: Option<f64>,
    #[serde(serialize_with = "ser_compliance", deserialize_with = "de_compliance")]
    pub compliance: f64,
    pub solver: Option<SolverDiagnostics>,
    pub diagnostics: Vec<ReportDiagnostic>,
}

impl EvaluationReport {
    pub fn solid_mask(&self) -> Vec<bool> {
        rle::decode(&self.solid, self.grid.n_elements()).unwrap_or_default()
    }

    pub fn has(&self, code: ReportCode) -> bool {
        self.diagnostics.iter().any(|d| d.code == code)
    }
}

fn ser_compliance<S: Serializer>(c: &f64, s: S) -> Result<S::Ok, S::Error> {
    if c.is_finite() {
        s.serialize_some(c)
    } else {
        s.serialize_none()
    }
}

fn de_compliance<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// Round each density through 8-bit gray, as stored in structure PNGs.
pub fn quantize(field: &DensityField) -> DensityField {
    DensityField {
        grid: field.grid,
        rho: field
            .rho
            .iter()
            .map(|&r| gray_to_density(density_to_gray(r)))
            .collect(),
        domain: field.domain.clone(),
    }
}

/// Binarize at `threshold` (solid when `ρ ≥ threshold`, domain only) and
/// analyse the solid/void structure.
pub fn evaluate_structure(
    structure: &DensityField,
    problem: &DesignProblem,
    mp: &MaterialParams,
    threshold: f64,
) -> EvaluationReport {
    let solid: Vec<bool> = structure
        .rho
        .iter()
        .zip(&problem.domain)
        .map(|(&r, &d)| d && r >= threshold)
        .collect();
    let rho: Vec<f64> = solid.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
    analyse(problem, mp, rho, solid, Some(threshold), Vec::new())
}

/// Analyse the gray densities directly, without binarization. Volume
/// fractions are mean densities; `solid` marks `ρ ≥ 0.5`.
pub fn evaluate_gray(
    structure: &DensityField,
    problem: &DesignProblem,
    mp: &MaterialParams,
) -> EvaluationReport {
    let rho: Vec<f64> = structure
        .rho
        .iter()
        .zip(&problem.domain)
        .map(|(&r, &d)| if d { r.clamp(0.0, 1.0) } else { 0.0 })
        .collect();
    let solid = rho.iter().map(|&r| r >= DEFAULT_THRESHOLD).collect();
    analyse(problem, mp, rho, solid, None, Vec::new())
}

/// Evaluate a grayscale raster (0 = solid), resampling it to the grid.
pub fn evaluate_raster(
    image: &GrayImage,
    problem: &DesignProblem,
    mp: &MaterialParams,
    threshold: f64,
) -> EvaluationReport {
    let grid = problem.grid;
    let field = DensityField::from_values(problem, &image.to_densities(grid));
    let mut report = evaluate_structure(&field, problem, mp, threshold);
    if (image.width, image.height) != (grid.nelx, grid.nely) {
        report.diagnostics.insert(
            0,
            ReportDiagnostic::warning(
                ReportCode::Resampled,
                format!(
                    "{}x{} raster resampled to {}",
                    image.width, image.height, grid
                ),
            ),
        );
    }
    report
}

fn mean_where(values: &[f64], select: impl Iterator<Item = bool>) -> Option<f64> {
    let (sum, n) = values
        .iter()
        .zip(select)
        .filter(|(_, s)| *s)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn analyse(
    problem: &DesignProblem,
    mp: &MaterialParams,
    rho: Vec<f64>,
    solid: Vec<bool>,
    threshold: Option<f64>,
    mut diagnostics: Vec<ReportDiagnostic>,
) -> EvaluationReport {
    let grid = problem.grid;
    let vf_global = mean_where(&rho, problem.domain.iter().copied()).unwrap_or(0.0);
    let vf_editable = problem
        .mask
        .as_ref()
        .and_then(|_| mean_where(&rho, problem.editable().into_iter()));

    let mut compliance = f64::INFINITY;
    let mut solver = None;
    if let Some(msg) = missing_load_path(problem, &rho) {
        diagnostics.push(ReportDiagnostic::error(ReportCode::NoLoadPath, msg));
    } else {
        let field = DensityField {
            grid,
            rho,
            domain: problem.domain.clone(),
        };
        match assemble_and_solve(&field, problem, mp) {
            Ok(sol) => {
                compliance = sol.compliance;
                solver = Some(sol.diagnostics);
            }
            Err(e) => diagnostics.push(ReportDiagnostic::error(
                ReportCode::SingularSystem,
                e.to_string(),
            )),
        }
    }
    EvaluationReport {
        threshold,
        grid,
        solid: rle::encode(&solid),
        vf_global,
        vf_editable,
        compliance,
        solver,
        diagnostics,
    }
}

/// Every load must touch a material element whose edge-connected component
/// touches a fixed node. Material means `ρ > 0`.
fn missing_load_path(problem: &DesignProblem, rho: &[f64]) -> Option<String> {
    let grid = problem.grid;
    let material: Vec<bool> = rho.iter().map(|&r| r > 0.0).collect();
    let comp = components4(grid, &material);
    let n_comp = comp.iter().flatten().max().map_or(0, |m| m + 1);
    let mut supported = vec![false; n_comp];
    for (node, _) in problem.fixed_nodes() {
        for e in grid.elements_around_node(node) {
            if let Some(c) = comp[e] {
                supported[c] = true;
            }
        }
    }
    for (k, load) in problem.loads.iter().enumerate() {
        let reached = grid
            .elements_touching(load.x, load.y)
            .into_iter()
            .filter_map(|e| comp[e])
            .any(|c| supported[c]);
        if !reached {
            return Some(format!(
                "load {k} at ({}, {}) has no material path to a support",
                load.x, load.y
            ));
        }
    }
    None
}
