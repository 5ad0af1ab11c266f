//! Plane-stress finite-element analysis on the regular element grid with
//! SIMP material interpolation.
//!
//! Every element of the grid is kept in the mesh; elements outside the design
//! domain carry zero density and therefore the void modulus `Emin`. Fixed DOFs
//! are eliminated by replacing their rows and columns with identity rows.

mod element;
mod solver;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid;
use crate::problem::DesignProblem;

use element::element_energy;
pub use element::element_stiffness;
use solver::{dot, norm, pcg, BandMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("stiffness system is singular: {0}")]
    SingularSystem(String),
    #[error("dimension mismatch: field has grid {field}, problem has grid {problem}")]
    DimensionMismatch { field: Grid, problem: Grid },
    #[error("invalid material parameters: {0}")]
    InvalidMaterial(String),
}

/// Material constants of the two-phase SIMP model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub e0: f64,
    pub emin: f64,
    pub nu: f64,
    pub penal: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams {
            e0: 1.0,
            emin: 1e-9,
            nu: 0.3,
            penal: 3.0,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<(), FemError> {
        if !(self.emin > 0.0 && self.emin < self.e0) {
            return Err(FemError::InvalidMaterial(format!(
                "need 0 < Emin < E0, got Emin = {}, E0 = {}",
                self.emin, self.e0
            )));
        }
        if !(0.0..0.5).contains(&self.nu) {
            return Err(FemError::InvalidMaterial(format!(
                "nu = {} outside [0, 0.5)",
                self.nu
            )));
        }
        if self.penal.is_nan() || self.penal < 1.0 {
            return Err(FemError::InvalidMaterial(format!(
                "penal = {} below 1",
                self.penal
            )));
        }
        Ok(())
    }
}

/// `E(ρ) = Emin + ρ^p·(E0 − Emin)`.
#[inline]
pub fn simp_modulus(rho: f64, mp: &MaterialParams) -> f64 {
    mp.emin + rho.powf(mp.penal) * (mp.e0 - mp.emin)
}

/// Per-element material densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub grid: Grid,
    pub rho: Vec<f64>,
    pub domain: Vec<bool>,
}

impl DensityField {
    /// Checks `rho ∈ [0,1]` everywhere and `rho = 0` off the domain.
    pub fn new(grid: Grid, rho: Vec<f64>, domain: Vec<bool>) -> Result<Self, String> {
        let n = grid.n_elements();
        if rho.len() != n || domain.len() != n {
            return Err(format!(
                "expected {n} elements, got rho {} and domain {}",
                rho.len(),
                domain.len()
            ));
        }
        if let Some(e) = rho.iter().position(|r| !(0.0..=1.0).contains(r)) {
            return Err(format!("density {} at element {e} outside [0,1]", rho[e]));
        }
        if let Some(e) = (0..n).find(|&e| !domain[e] && rho[e] != 0.0) {
            return Err(format!(
                "element {e} is outside the domain but has density {}",
                rho[e]
            ));
        }
        Ok(DensityField { grid, rho, domain })
    }

    /// `value` on the domain, zero elsewhere.
    pub fn uniform(problem: &DesignProblem, value: f64) -> Self {
        let rho = problem
            .domain
            .iter()
            .map(|&d| if d { value } else { 0.0 })
            .collect();
        DensityField {
            grid: problem.grid,
            rho,
            domain: problem.domain.clone(),
        }
    }

    /// Densities from raw values, forced to zero off the domain and clamped to `[0,1]`.
    pub fn from_values(problem: &DesignProblem, values: &[f64]) -> Self {
        let rho = values
            .iter()
            .zip(&problem.domain)
            .map(|(&v, &d)| if d { v.clamp(0.0, 1.0) } else { 0.0 })
            .collect();
        DensityField {
            grid: problem.grid,
            rho,
            domain: problem.domain.clone(),
        }
    }

    /// Mean density over the selected elements; `None` when none are selected.
    pub fn mean_over(&self, select: &[bool]) -> Option<f64> {
        let (sum, count) = self
            .rho
            .iter()
            .zip(select)
            .filter(|(_, &s)| s)
            .fold((0.0, 0usize), |(s, c), (&r, _)| (s + r, c + 1));
        (count > 0).then(|| sum / count as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LinearSolver {
    /// Banded Cholesky with one step of iterative refinement.
    #[default]
    Direct,
    /// Jacobi-preconditioned conjugate gradients, relative residual 1e-8,
    /// at most `10·ndof` iterations.
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub solver: LinearSolver,
    /// CG iterations, or refinement steps for the direct solver.
    pub iterations: usize,
    /// `‖F − K·U‖ / ‖F‖` of the returned displacements.
    pub rel_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FemSolution {
    /// Nodal displacements, two DOFs per node.
    pub u: Vec<f64>,
    /// `Uᵀ·K·U`.
    pub compliance: f64,
    /// Unpenalized element energies `uₑᵀ·k₀·uₑ`.
    pub element_energy: Vec<f64>,
    pub diagnostics: SolverDiagnostics,
}

pub const CG_TOLERANCE: f64 = 1e-8;

/// Consistent nodal force vector. Each load is shared between the four nodes
/// of the element containing it with bilinear weights. Fixed DOFs are zeroed.
pub fn load_vector(problem: &DesignProblem) -> Vec<f64> {
    let grid = problem.grid;
    let mut f = vec![0.0; grid.n_dofs()];
    for load in &problem.loads {
        let hit = grid.containing_element(load.x, load.y);
        let (fx, fy) = load.components();
        let (xi, eta) = (hit.xi, hit.eta);
        let weights = [
            (1.0 - xi) * (1.0 - eta),
            xi * (1.0 - eta),
            xi * eta,
            (1.0 - xi) * eta,
        ];
        for (node, w) in grid.element_nodes(hit.element).into_iter().zip(weights) {
            f[2 * node] += w * fx;
            f[2 * node + 1] += w * fy;
        }
    }
    for (dof, fixed) in fixed_dofs(problem).into_iter().enumerate() {
        if fixed {
            f[dof] = 0.0;
        }
    }
    f
}

pub fn fixed_dofs(problem: &DesignProblem) -> Vec<bool> {
    let grid = problem.grid;
    let mut fixed = vec![false; grid.n_dofs()];
    for (node, kind) in problem.fixed_nodes() {
        let n = grid.node_of(node);
        fixed[2 * n] |= kind.fixes_x();
        fixed[2 * n + 1] |= kind.fixes_y();
    }
    fixed
}

/// Whether the fixed DOFs suppress both translations and the in-plane rotation.
pub fn restrains_rigid_motion(problem: &DesignProblem) -> bool {
    // Gram matrix of the rigid modes (1,0), (0,1), (-y, x) restricted to fixed DOFs
    let mut g = [[0.0f64; 3]; 3];
    for (node, kind) in problem.fixed_nodes() {
        let (x, y) = (node.i as f64, node.j_bottom as f64);
        let mut rows = Vec::with_capacity(2);
        if kind.fixes_x() {
            rows.push([1.0, 0.0, -y]);
        }
        if kind.fixes_y() {
            rows.push([0.0, 1.0, x]);
        }
        for r in rows {
            for a in 0..3 {
                for b in 0..3 {
                    g[a][b] += r[a] * r[b];
                }
            }
        }
    }
    let det = g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[2][1])
        - g[0][1] * (g[1][0] * g[2][2] - g[1][2] * g[2][0])
        + g[0][2] * (g[1][0] * g[2][1] - g[1][1] * g[2][0]);
    // Hadamard: 0 <= det <= product of the diagonal
    let diag = g[0][0] * g[1][1] * g[2][2];
    diag > 0.0 && det > 1e-10 * diag
}

fn half_bandwidth(grid: Grid) -> usize {
    // every element spans the same DOF range under column-major numbering
    let d = grid.element_dofs(0);
    d.iter().max().unwrap() - d.iter().min().unwrap()
}

/// Solve `K(ρ)·U = F` with the default direct solver.
pub fn assemble_and_solve(
    field: &DensityField,
    problem: &DesignProblem,
    mp: &MaterialParams,
) -> Result<FemSolution, FemError> {
    assemble_and_solve_with(field, problem, mp, LinearSolver::Direct)
}

pub fn assemble_and_solve_with(
    field: &DensityField,
    problem: &DesignProblem,
    mp: &MaterialParams,
    solver: LinearSolver,
) -> Result<FemSolution, FemError> {
    let grid = problem.grid;
    if field.grid != grid || field.rho.len() != grid.n_elements() {
        return Err(FemError::DimensionMismatch {
            field: field.grid,
            problem: grid,
        });
    }
    mp.validate()?;
    if !restrains_rigid_motion(problem) {
        return Err(FemError::SingularSystem(
            "fixings leave a rigid-body motion unrestrained".into(),
        ));
    }
    let ke = element_stiffness(mp.nu);
    let fixed = fixed_dofs(problem);
    let n = grid.n_dofs();
    let mut k = BandMatrix::zeros(n, half_bandwidth(grid));
    for e in 0..grid.n_elements() {
        let modulus = simp_modulus(field.rho[e], mp);
        let dofs = grid.element_dofs(e);
        for a in 0..8 {
            let ga = dofs[a];
            if fixed[ga] {
                continue;
            }
            for b in 0..8 {
                let gb = dofs[b];
                if gb <= ga && !fixed[gb] {
                    k.add_lower(ga, gb, modulus * ke[a][b]);
                }
            }
        }
    }
    for (dof, &is_fixed) in fixed.iter().enumerate() {
        if is_fixed {
            k.set_diag(dof, 1.0);
        }
    }
    let f = load_vector(problem);
    let fnorm = norm(&f);

    let (u, iterations) = match solver {
        LinearSolver::Direct => {
            let chol = k.clone().cholesky().map_err(|b| {
                let node = b.row / 2;
                FemError::SingularSystem(format!(
                    "factorization broke down at DOF {} (node {node})",
                    b.row
                ))
            })?;
            let mut u = f.clone();
            chol.solve_in_place(&mut u);
            // one step of iterative refinement
            let mut ku = vec![0.0; n];
            k.matvec(&u, &mut ku);
            let mut r: Vec<f64> = f.iter().zip(&ku).map(|(f, ku)| f - ku).collect();
            chol.solve_in_place(&mut r);
            u.iter_mut().zip(&r).for_each(|(u, d)| *u += d);
            (u, 1)
        }
        LinearSolver::ConjugateGradient => {
            let out = pcg(&k, &f, CG_TOLERANCE, 10 * n);
            if !out.converged {
                return Err(FemError::SingularSystem(format!(
                    "conjugate gradients stalled at relative residual {:.3e} after {} iterations",
                    out.rel_residual, out.iterations
                )));
            }
            (out.x, out.iterations)
        }
    };
    let mut ku = vec![0.0; n];
    k.matvec(&u, &mut ku);
    let rel_residual = if fnorm > 0.0 {
        norm(&ku.iter().zip(&f).map(|(a, b)| a - b).collect::<Vec<_>>()) / fnorm
    } else {
        0.0
    };
    if !rel_residual.is_finite() {
        return Err(FemError::SingularSystem("non-finite displacements".into()));
    }

    let mut element_energy_v = Vec::with_capacity(grid.n_elements());
    let mut compliance = 0.0;
    for e in 0..grid.n_elements() {
        let dofs = grid.element_dofs(e);
        let ue: [f64; 8] = std::array::from_fn(|a| u[dofs[a]]);
        let ee = element_energy(&ke, &ue).max(0.0);
        compliance += simp_modulus(field.rho[e], mp) * ee;
        element_energy_v.push(ee);
    }

    Ok(FemSolution {
        u,
        compliance,
        element_energy: element_energy_v,
        diagnostics: SolverDiagnostics {
            solver,
            iterations,
            rel_residual,
        },
    })
}

/// `∂c/∂ρₑ = −p·ρₑ^(p−1)·(E0 − Emin)·eₑ`.
pub fn compliance_sensitivity(
    field: &DensityField,
    sol: &FemSolution,
    mp: &MaterialParams,
) -> Vec<f64> {
    field
        .rho
        .iter()
        .zip(&sol.element_energy)
        .map(|(&rho, &e)| {
            if rho == 0.0 {
                0.0
            } else {
                -mp.penal * rho.powf(mp.penal - 1.0) * (mp.e0 - mp.emin) * e
            }
        })
        .collect()
}

/// `Uᵀ·F`, the external work of a solution.
pub fn external_work(problem: &DesignProblem, sol: &FemSolution) -> f64 {
    dot(&sol.u, &load_vector(problem))
}
