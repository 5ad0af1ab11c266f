//! Structure generation backends, evaluation and batch statistics.

mod batch;
mod evaluate;
pub mod remote;

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{DensityField, MaterialParams};
use crate::problem::DesignProblem;
use crate::simp::{optimize, SimpError, SolverConfig};

pub use batch::{batch_run, batch_run_with, summarize, BatchStats, BatchSummary, RunRecord};
pub use evaluate::{
    evaluate_gray, evaluate_raster, evaluate_structure, quantize, EvaluationReport, ReportCode,
    ReportDiagnostic, DEFAULT_THRESHOLD,
};

pub const DEFAULT_STRENGTH: f64 = 0.7;
pub const DEFAULT_REMOTE_TIMEOUT: Duration = Duration::from_secs(120);
/// Half-width of the seeded initial perturbation.
pub const SEED_PERTURBATION: f64 = 0.05;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("remote backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("remote backend timed out after {0:?}")]
    Timeout(Duration),
    #[error("remote backend protocol error: {0}")]
    RemoteProtocolError(String),
    #[error(transparent)]
    Optimizer(#[from] SimpError),
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
}

/// Coarse class of a pipeline failure, kept on run records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    InvalidRequest,
    Solver,
    Remote,
}

impl PipelineError {
    pub fn kind(&self) -> FailureKind {
        match self {
            PipelineError::InvalidRequest(_)
            | PipelineError::Optimizer(SimpError::InvalidInput(_)) => FailureKind::InvalidRequest,
            PipelineError::Optimizer(_) => FailureKind::Solver,
            _ => FailureKind::Remote,
        }
    }

    pub fn is_remote(&self) -> bool {
        matches!(
            self,
            PipelineError::BackendUnavailable(_)
                | PipelineError::Timeout(_)
                | PipelineError::RemoteProtocolError(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Simp,
    Remote {
        url: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_timeout_ms() -> u64 {
    DEFAULT_REMOTE_TIMEOUT.as_millis() as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    /// Overrides the problem's volume fraction when set.
    pub volume_fraction: Option<f64>,
    /// Load angle forwarded to the remote backend; the problem's loads carry
    /// their own angles for the SIMP backend.
    pub load_angle_deg: f64,
    pub strength: f64,
    pub backend: Backend,
    pub batch_count: usize,
    pub seed: Option<u64>,
    pub solver: SolverConfig,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            volume_fraction: None,
            load_angle_deg: 270.0,
            strength: DEFAULT_STRENGTH,
            backend: Backend::Simp,
            batch_count: 1,
            seed: None,
            solver: SolverConfig::default(),
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidRequest(m));
        if let Some(vf) = self.volume_fraction {
            if !(vf > 0.0 && vf <= 1.0) {
                return bad(format!("volume_fraction {vf} outside (0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.strength) {
            return bad(format!("strength {} outside [0, 1]", self.strength));
        }
        if self.batch_count == 0 {
            return bad("batch_count must be at least 1".into());
        }
        if !self.load_angle_deg.is_finite() {
            return bad("load angle must be finite".into());
        }
        Ok(())
    }

    /// The problem with the volume-fraction override applied.
    pub fn effective_problem(&self, problem: &DesignProblem) -> DesignProblem {
        let mut p = problem.clone();
        if let Some(vf) = self.volume_fraction {
            p.volume_fraction = vf;
        }
        p
    }
}

/// A generated structure plus what the backend reported about it.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub field: DensityField,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostics: Vec<ReportDiagnostic>,
}

pub fn generate(
    problem: &DesignProblem,
    params: &GenerationParams,
    prior: Option<&DensityField>,
    mp: &MaterialParams,
) -> Result<Generated, PipelineError> {
    params.validate()?;
    let problem = params.effective_problem(problem);
    problem
        .check()
        .map_err(|e| PipelineError::InvalidRequest(e.to_string()))?;
    if let Some(p) = prior {
        if p.grid != problem.grid || p.rho.len() != problem.grid.n_elements() {
            return Err(PipelineError::InvalidRequest(format!(
                "prior grid {} does not match problem grid {}",
                p.grid, problem.grid
            )));
        }
    }
    match &params.backend {
        Backend::Simp => generate_simp(&problem, params, prior, mp),
        Backend::Remote { url, timeout_ms } => remote::generate_remote(
            &problem,
            params,
            prior,
            url,
            Duration::from_millis(*timeout_ms),
        ),
    }
}

/// Value of each non-editable element in any generated output.
pub(crate) fn frozen_value(problem: &DesignProblem, prior: Option<&DensityField>, e: usize) -> f64 {
    match (problem.domain[e], prior) {
        (false, _) => 0.0,
        (true, Some(p)) => p.rho[e].clamp(0.0, 1.0),
        (true, None) => 1.0,
    }
}

/// Initial design for the SIMP backend.
pub fn simp_init(
    problem: &DesignProblem,
    prior: Option<&DensityField>,
    strength: f64,
    seed: Option<u64>,
) -> DensityField {
    let vf = problem.volume_fraction;
    let editable = problem.editable();
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let rho = (0..problem.grid.n_elements())
        .map(|e| {
            if !editable[e] {
                return frozen_value(problem, prior, e);
            }
            let base = match prior {
                Some(p) => (1.0 - strength) * p.rho[e] + strength * vf,
                None => vf,
            };
            let jitter = rng.as_mut().map_or(0.0, |r| {
                r.random_range(-SEED_PERTURBATION..=SEED_PERTURBATION)
            });
            (base + jitter).clamp(0.0, 1.0)
        })
        .collect();
    DensityField {
        grid: problem.grid,
        rho,
        domain: problem.domain.clone(),
    }
}

fn generate_simp(
    problem: &DesignProblem,
    params: &GenerationParams,
    prior: Option<&DensityField>,
    mp: &MaterialParams,
) -> Result<Generated, PipelineError> {
    let init = simp_init(problem, prior, params.strength, params.seed);
    let result = optimize(problem, &params.solver, mp, Some(&init))?;
    let mut diagnostics = Vec::new();
    if !result.converged {
        diagnostics.push(ReportDiagnostic::warning(
            ReportCode::NotConverged,
            format!(
                "stopped after {} iterations with change {:.4}",
                result.iterations, result.final_change
            ),
        ));
    }
    Ok(Generated {
        field: result.field,
        iterations: result.iterations,
        converged: result.converged,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn init_mixes_prior_and_volume_fraction() {
        let p = DesignProblem::benchmark(Grid::new(4, 4));
        let prior = DensityField::uniform(&p, 1.0);
        let a = simp_init(&p, Some(&prior), 0.0, None);
        assert_eq!(a.rho, prior.rho);
        let b = simp_init(&p, Some(&prior), 1.0, None);
        assert!(b.rho.iter().all(|&r| r == 0.2));
        let c = simp_init(&p, Some(&prior), 0.5, None);
        assert!(c.rho.iter().all(|&r| (r - 0.6).abs() < 1e-15));
    }

    #[test]
    fn seeded_perturbation_is_bounded_and_repeatable() {
        let p = DesignProblem::benchmark(Grid::new(8, 8));
        let a = simp_init(&p, None, 0.7, Some(3));
        let b = simp_init(&p, None, 0.7, Some(3));
        let c = simp_init(&p, None, 0.7, Some(4));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a
            .rho
            .iter()
            .all(|&r| (r - 0.2).abs() <= SEED_PERTURBATION + 1e-15));
    }

    #[test]
    fn frozen_elements_take_prior_or_domain() {
        let grid = Grid::new(4, 4);
        let mut mask = vec![false; 16];
        mask[5] = true;
        let p = DesignProblem::benchmark(grid).with_mask(mask);
        let init = simp_init(&p, None, 0.7, Some(1));
        assert!(init
            .rho
            .iter()
            .enumerate()
            .all(|(e, &r)| e == 5 || r == 1.0));
        let prior = DensityField::uniform(&p, 0.4);
        let init = simp_init(&p, Some(&prior), 0.7, Some(1));
        assert!(init
            .rho
            .iter()
            .enumerate()
            .all(|(e, &r)| e == 5 || r == 0.4));
    }

    #[test]
    fn params_validation() {
        let mut g = GenerationParams::default();
        assert!(g.validate().is_ok());
        g.strength = 1.5;
        assert!(g.validate().is_err());
        g.strength = 0.5;
        g.batch_count = 0;
        assert!(g.validate().is_err());
        g.batch_count = 1;
        g.volume_fraction = Some(0.0);
        assert!(g.validate().is_err());
    }
}
