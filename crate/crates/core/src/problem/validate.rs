use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::grid::Grid;

use super::DesignProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiagnosticKind {
    InvalidGrid,
    InvalidVolumeFraction,
    InvalidMagnitude,
    NoMaterial,
    NoLoad,
    NoFixing,
    OutOfBounds,
    MaskNotSubset,
    LoadOutsideDomain,
    FixingOutsideDomain,
    /// A domain component carries load but has no support.
    SingularRisk,
    /// The fixings leave a rigid-body motion of the whole mesh free.
    Underconstrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    fn error(kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Diagnostic {
            kind,
            severity: Severity::Error,
            message: message.into(),
        }
    }

    fn warning(kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Diagnostic {
            kind,
            severity: Severity::Warning,
            message: message.into(),
        }
    }
}

fn in_unit_square(x: f64, y: f64) -> bool {
    (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y)
}

/// Structural checks on a problem. Never fails; an empty list means the
/// problem is well-formed and every load has a supported path.
pub fn validate_problem(problem: &DesignProblem) -> Vec<Diagnostic> {
    use DiagnosticKind::*;
    let mut out = Vec::new();
    let grid = problem.grid;
    if grid.nelx == 0 || grid.nely == 0 || problem.domain.len() != grid.n_elements() {
        out.push(Diagnostic::error(
            InvalidGrid,
            format!(
                "domain has {} elements, grid {} needs {}",
                problem.domain.len(),
                grid,
                grid.n_elements()
            ),
        ));
        return out;
    }
    let vf = problem.volume_fraction;
    if !(vf > 0.0 && vf <= 1.0) {
        out.push(Diagnostic::error(
            InvalidVolumeFraction,
            format!("volume_fraction {vf} outside (0, 1]"),
        ));
    }
    if problem.domain_count() == 0 {
        out.push(Diagnostic::error(NoMaterial, "domain is empty"));
    }
    if problem.loads.is_empty() {
        out.push(Diagnostic::error(NoLoad, "problem has no loads"));
    }
    if problem.fixings.is_empty() {
        out.push(Diagnostic::error(NoFixing, "problem has no fixings"));
    }
    if let Some(mask) = &problem.mask {
        if mask.len() != grid.n_elements() {
            out.push(Diagnostic::error(
                InvalidGrid,
                format!(
                    "mask has {} elements, expected {}",
                    mask.len(),
                    grid.n_elements()
                ),
            ));
        } else if let Some(e) = mask
            .iter()
            .zip(&problem.domain)
            .position(|(&m, &d)| m && !d)
        {
            let (r, c) = grid.element_row_col(e);
            out.push(Diagnostic::error(
                MaskNotSubset,
                format!("mask element at row {r}, col {c} lies outside the domain"),
            ));
        }
    }

    let components = components4(grid, &problem.domain);
    let n_comp = components.iter().flatten().max().map_or(0, |m| m + 1);
    let mut supported = vec![false; n_comp];
    let mut loaded = vec![false; n_comp];

    for (k, f) in problem.fixings.iter().enumerate() {
        if !in_unit_square(f.x, f.y) {
            out.push(Diagnostic::error(
                OutOfBounds,
                format!("fixing {k} at ({}, {}) lies outside [0,1]²", f.x, f.y),
            ));
            continue;
        }
        let node = grid.nearest_node(f.x, f.y);
        let touching: Vec<usize> = grid
            .elements_around_node(node)
            .into_iter()
            .filter_map(|e| components[e])
            .collect();
        if touching.is_empty() {
            out.push(Diagnostic::warning(
                FixingOutsideDomain,
                format!("fixing {k} at ({}, {}) touches no domain element", f.x, f.y),
            ));
        }
        for c in touching {
            supported[c] = true;
        }
    }

    for (k, l) in problem.loads.iter().enumerate() {
        if !l.magnitude.is_finite() || !l.angle_deg.is_finite() {
            out.push(Diagnostic::error(
                InvalidMagnitude,
                format!("load {k} has non-finite magnitude or angle"),
            ));
        }
        if !in_unit_square(l.x, l.y) {
            out.push(Diagnostic::error(
                OutOfBounds,
                format!("load {k} at ({}, {}) lies outside [0,1]²", l.x, l.y),
            ));
            continue;
        }
        let touching: Vec<usize> = grid
            .elements_touching(l.x, l.y)
            .into_iter()
            .filter_map(|e| components[e])
            .collect();
        if touching.is_empty() {
            out.push(Diagnostic::warning(
                LoadOutsideDomain,
                format!("load {k} at ({}, {}) is not on the domain", l.x, l.y),
            ));
        }
        for c in touching {
            loaded[c] = true;
        }
    }

    let fixings_in_bounds = problem.fixings.iter().all(|f| in_unit_square(f.x, f.y));
    if !problem.fixings.is_empty()
        && fixings_in_bounds
        && !crate::fem::restrains_rigid_motion(problem)
    {
        out.push(Diagnostic::error(
            Underconstrained,
            "fixings do not restrain both translations and rotation",
        ));
    }

    for c in 0..n_comp {
        if loaded[c] && !supported[c] {
            out.push(Diagnostic::warning(
                SingularRisk,
                format!("domain component {c} carries load but has no fixing"),
            ));
        }
    }
    out
}

/// Edge-connected components of the set elements; `None` outside the set.
pub(crate) fn components4(grid: Grid, set: &[bool]) -> Vec<Option<usize>> {
    let mut label = vec![None; set.len()];
    let mut next = 0;
    for start in 0..set.len() {
        if !set[start] || label[start].is_some() {
            continue;
        }
        label[start] = Some(next);
        let mut queue = VecDeque::from([start]);
        while let Some(e) = queue.pop_front() {
            for n in grid.neighbors4(e) {
                if set[n] && label[n].is_none() {
                    label[n] = Some(next);
                    queue.push_back(n);
                }
            }
        }
        next += 1;
    }
    label
}
