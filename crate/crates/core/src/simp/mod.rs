//! Compliance minimization by SIMP with a linear density filter and the
//! optimality-criteria update.
//!
//! Design variables `x` live on every element. Physical densities are
//! `xPhys = H·x` on editable elements and `xPhys = x` elsewhere, so frozen
//! domain elements keep their initial density bit for bit and off-domain
//! elements stay at zero. The volume constraint is the mean of `xPhys` over
//! the editable elements.

mod filter;
mod oc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{
    assemble_and_solve_with, compliance_sensitivity, DensityField, FemError, LinearSolver,
    MaterialParams,
};
use crate::problem::DesignProblem;

pub use filter::{build_filter, FilterOperator};
pub use oc::oc_update;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimpError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("volume multiplier bisection failed: {0}")]
    BisectionFailure(String),
    #[error("invalid optimizer input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub rmin: f64,
    pub move_limit: f64,
    pub max_iters: usize,
    /// Stop once the largest design-variable change falls below this.
    pub change_tol: f64,
    pub bisection_tol: f64,
    /// OC damping exponent.
    pub eta: f64,
    pub solver: LinearSolver,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rmin: 2.0,
            move_limit: 0.2,
            max_iters: 200,
            change_tol: 0.01,
            bisection_tol: 1e-4,
            eta: 0.5,
            solver: LinearSolver::Direct,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SimpError> {
        let bad = |m: String| Err(SimpError::InvalidInput(m));
        if !(self.rmin >= 0.0 && self.rmin.is_finite()) {
            return bad(format!("rmin = {}", self.rmin));
        }
        if !(self.move_limit > 0.0 && self.move_limit <= 1.0) {
            return bad(format!("move_limit = {} outside (0, 1]", self.move_limit));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad(format!("eta = {} outside (0, 1]", self.eta));
        }
        if self.bisection_tol.is_nan()
            || self.bisection_tol <= 0.0
            || self.change_tol.is_nan()
            || self.change_tol < 0.0
        {
            return bad("tolerances must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    /// Physical (filtered) densities of the final design.
    pub field: DensityField,
    /// Compliance of every analysed design, ending with the returned one.
    pub compliance_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Mean physical density over the editable elements.
    pub volume_fraction: f64,
    pub final_change: f64,
}

impl OptimizationResult {
    pub fn compliance(&self) -> f64 {
        self.compliance_history.last().copied().unwrap_or(f64::NAN)
    }
}

/// Initial design: the volume fraction on editable elements, full material on
/// frozen domain elements, zero off the domain.
pub fn default_init(problem: &DesignProblem) -> DensityField {
    let editable = problem.editable();
    let rho = problem
        .domain
        .iter()
        .zip(&editable)
        .map(|(&d, &a)| match (d, a) {
            (_, true) => problem.volume_fraction,
            (true, false) => 1.0,
            _ => 0.0,
        })
        .collect();
    DensityField {
        grid: problem.grid,
        rho,
        domain: problem.domain.clone(),
    }
}

pub fn optimize(
    problem: &DesignProblem,
    cfg: &SolverConfig,
    mp: &MaterialParams,
    init: Option<&DensityField>,
) -> Result<OptimizationResult, SimpError> {
    optimize_observed(problem, cfg, mp, init, &mut |_, _| {})
}

/// [`optimize`], calling `observer(iteration, xPhys)` after every update.
pub fn optimize_observed(
    problem: &DesignProblem,
    cfg: &SolverConfig,
    mp: &MaterialParams,
    init: Option<&DensityField>,
    observer: &mut dyn FnMut(usize, &DensityField),
) -> Result<OptimizationResult, SimpError> {
    cfg.validate()?;
    mp.validate()?;
    problem
        .check()
        .map_err(|e| SimpError::InvalidInput(e.to_string()))?;
    let grid = problem.grid;
    let n = grid.n_elements();
    let start = match init {
        Some(f) => {
            let checked = DensityField::new(f.grid, f.rho.clone(), f.domain.clone())
                .map_err(SimpError::InvalidInput)?;
            if checked.grid != grid || checked.domain != problem.domain {
                return Err(SimpError::InvalidInput(
                    "initial field does not match the problem grid and domain".into(),
                ));
            }
            checked
        }
        None => default_init(problem),
    };
    let active = problem.editable();
    let n_active = active.iter().filter(|&&a| a).count();
    let solve = |field: &DensityField| assemble_and_solve_with(field, problem, mp, cfg.solver);

    if n_active == 0 {
        let sol = solve(&start)?;
        return Ok(OptimizationResult {
            volume_fraction: f64::NAN,
            field: start,
            compliance_history: vec![sol.compliance],
            iterations: 0,
            converged: true,
            final_change: 0.0,
        });
    }

    let filter = build_filter(problem, cfg.rmin);
    let physical = |x: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|e| {
                if active[e] {
                    filter.apply_row(e, x)
                } else {
                    x[e]
                }
            })
            .collect()
    };
    let active_mean = |v: &[f64]| -> f64 {
        v.iter()
            .zip(&active)
            .filter(|(_, &a)| a)
            .map(|(r, _)| r)
            .sum::<f64>()
            / n_active as f64
    };
    // ∂V/∂x: adjoint filter of the editable indicator
    let dv: Vec<f64> = {
        let ind: Vec<f64> = active.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
        filter.apply_transpose(&ind)
    };

    let mut x = start.rho.clone();
    let mut field = DensityField {
        grid,
        rho: physical(&x),
        domain: problem.domain.clone(),
    };
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    let mut converged = false;
    while iterations < cfg.max_iters {
        let sol = solve(&field)?;
        history.push(sol.compliance);
        let mut dc = compliance_sensitivity(&field, &sol, mp);
        dc.iter_mut().zip(&active).for_each(|(d, &a)| {
            if !a {
                *d = 0.0
            }
        });
        let dc_x = filter.apply_transpose(&dc);
        let ratio: Vec<f64> = (0..n)
            .map(|e| {
                if active[e] && dv[e] > 0.0 {
                    (-dc_x[e]).max(0.0) / dv[e]
                } else {
                    0.0
                }
            })
            .collect();
        let x_new = oc::oc_bisect(&x, &ratio, &active, problem.volume_fraction, cfg, |xn| {
            active_mean(&physical(xn))
        })?;
        change = x_new
            .iter()
            .zip(&x)
            .zip(&active)
            .filter(|(_, &a)| a)
            .map(|((a, b), _)| (a - b).abs())
            .fold(0.0, f64::max);
        x = x_new;
        field.rho = physical(&x);
        iterations += 1;
        observer(iterations, &field);
        if change < cfg.change_tol {
            converged = true;
            break;
        }
    }
    let sol = solve(&field)?;
    history.push(sol.compliance);
    Ok(OptimizationResult {
        volume_fraction: active_mean(&field.rho),
        field,
        compliance_history: history,
        iterations,
        converged,
        final_change: change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn defaults() {
        let c = SolverConfig::default();
        assert_eq!((c.rmin, c.move_limit, c.max_iters), (2.0, 0.2, 200));
        assert_eq!((c.change_tol, c.bisection_tol, c.eta), (0.01, 1e-4, 0.5));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn small_benchmark_decreases_compliance() {
        let p = DesignProblem::benchmark(Grid::new(16, 16));
        let r = optimize(
            &p,
            &SolverConfig::default(),
            &MaterialParams::default(),
            None,
        )
        .unwrap();
        assert!((r.volume_fraction - 0.2).abs() <= 1e-4);
        assert!(r.compliance() < r.compliance_history[0]);
        assert!(r.field.rho.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn empty_editable_region_returns_init() {
        let p = DesignProblem::benchmark(Grid::new(8, 8)).with_mask(vec![false; 64]);
        let r = optimize(
            &p,
            &SolverConfig::default(),
            &MaterialParams::default(),
            None,
        )
        .unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.field, default_init(&p));
    }
}
