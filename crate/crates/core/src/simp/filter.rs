use crate::grid::Grid;
use crate::problem::DesignProblem;

/// Linear density filter with cone weights `max(0, rmin − dist)` between
/// element centers, restricted to the design domain and row-normalized.
#[derive(Debug, Clone)]
pub struct FilterOperator {
    grid: Grid,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

pub fn build_filter(problem: &DesignProblem, rmin: f64) -> FilterOperator {
    let grid = problem.grid;
    let reach = rmin.max(0.0).ceil() as isize;
    let mut row_start = Vec::with_capacity(grid.n_elements() + 1);
    let mut cols = Vec::new();
    let mut weights = Vec::new();
    row_start.push(0);
    for e in 0..grid.n_elements() {
        if problem.domain[e] {
            let (row, col) = grid.element_row_col(e);
            let first = cols.len();
            for dr in -reach..=reach {
                for dc in -reach..=reach {
                    let (r, c) = (row as isize + dr, col as isize + dc);
                    if r < 0 || c < 0 || r >= grid.nely as isize || c >= grid.nelx as isize {
                        continue;
                    }
                    let j = grid.element_index(r as usize, c as usize);
                    if !problem.domain[j] {
                        continue;
                    }
                    let w = rmin - ((dr * dr + dc * dc) as f64).sqrt();
                    if w > 0.0 || j == e {
                        cols.push(j);
                        weights.push(w.max(0.0));
                    }
                }
            }
            let total: f64 = weights[first..].iter().sum();
            if total > 0.0 {
                weights[first..].iter_mut().for_each(|w| *w /= total);
            } else {
                // rmin == 0: keep the element itself
                for (c, w) in cols[first..].iter().zip(&mut weights[first..]) {
                    *w = if *c == e { 1.0 } else { 0.0 };
                }
            }
        }
        row_start.push(cols.len());
    }
    FilterOperator {
        grid,
        row_start,
        cols,
        weights,
    }
}

impl FilterOperator {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Neighbours and normalized weights of one row; empty off the domain.
    pub fn row(&self, e: usize) -> (&[usize], &[f64]) {
        let span = self.row_start[e]..self.row_start[e + 1];
        (&self.cols[span.clone()], &self.weights[span])
    }

    #[inline]
    pub fn apply_row(&self, e: usize, x: &[f64]) -> f64 {
        let (cols, weights) = self.row(e);
        cols.iter().zip(weights).map(|(&j, &w)| w * x[j]).sum()
    }

    /// `H·x` on domain rows; off-domain entries pass through.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|e| {
                if self.row_start[e] == self.row_start[e + 1] {
                    x[e]
                } else {
                    self.apply_row(e, x)
                }
            })
            .collect()
    }

    /// `Hᵀ·v` over domain rows.
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (e, &ve) in v.iter().enumerate() {
            let (cols, weights) = self.row(e);
            for (&j, &w) in cols.iter().zip(weights) {
                out[j] += w * ve;
            }
        }
        out
    }

    /// True when every row carries only its own element.
    pub fn is_identity(&self) -> bool {
        (0..self.grid.n_elements()).all(|e| {
            let (cols, weights) = self.row(e);
            cols.iter()
                .zip(weights)
                .all(|(&j, &w)| (j == e && w == 1.0) || (j != e && w == 0.0))
        })
    }
}
