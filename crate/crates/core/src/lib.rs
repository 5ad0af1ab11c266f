//! Sketch-driven 2D topology optimization.
//!
//! A design problem is drawn as a color-coded raster: black paints the
//! material domain, red marks loads, yellow/blue/green mark supports fixed in
//! x, y or both, and a semi-transparent azure mask selects the region that may
//! change. The crate turns such sketches into [`DesignProblem`]s, analyses them
//! with a bilinear plane-stress finite-element model, minimizes compliance with
//! a SIMP optimality-criteria loop, and evaluates the resulting structures by
//! compliance and retained volume fraction.
//!
//! ```text
//!  sketch.png ──parse_sketch──► DesignProblem ──generate──► DensityField
//!                                      │                         │
//!                                      └──────evaluate_structure─┘──► EvaluationReport
//! ```
//!
//! Module map:
//!
//! - [`problem`]: problem data model, palette, sketch codec, diagnostics
//! - [`fem`]: element stiffness, SIMP interpolation, global solve, sensitivities
//! - [`simp`]: density filter, OC update, optimization loop with frozen regions
//! - [`pipeline`]: SIMP and remote backends, evaluation, batch statistics

pub mod fem;
pub mod grid;
pub mod pipeline;
pub mod problem;
pub mod raster;
pub mod simp;
pub mod testkit;

pub use fem::{
    assemble_and_solve, compliance_sensitivity, element_stiffness, simp_modulus, DensityField,
    FemError, FemSolution, MaterialParams,
};
pub use grid::Grid;
pub use pipeline::{
    batch_run, evaluate_structure, generate, Backend, BatchStats, EvaluationReport, FailureKind,
    GenerationParams, PipelineError,
};
pub use problem::{
    parse_sketch, render_problem, validate_problem, DesignProblem, FixKind, Fixing, Load, Palette,
    ParseParams, Role,
};
pub use raster::RasterSketch;
pub use simp::{build_filter, oc_update, optimize, OptimizationResult, SimpError, SolverConfig};
