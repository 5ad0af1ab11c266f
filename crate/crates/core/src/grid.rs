//! Regular element grid shared by the sketch codec, the FE model and the optimizer.
//!
//! Elements are stored row-major with row 0 at the top, matching raster
//! order. Physical coordinates use unit-size elements with the origin at the
//! lower-left corner; normalized coordinates divide by the grid extents so
//! that the whole domain maps to `[0,1]²`.
//!
//! Nodes are numbered column by column (`i * (nely + 1) + j`, with `j`
//! counted from the top) and carry two DOFs each: `2n` is `u_x` and `2n + 1`
//! is `u_y`, positive up.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Element grid dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    pub nelx: usize,
    pub nely: usize,
}

/// Position of a point inside the element that owns it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementHit {
    pub element: usize,
    /// Local coordinate along x in `[0,1]`, measured from the element's left edge.
    pub xi: f64,
    /// Local coordinate along y in `[0,1]`, measured from the element's bottom edge.
    pub eta: f64,
}

/// A node addressed by column `i` (from the left) and row `j` counted from the bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeCoord {
    pub i: usize,
    pub j_bottom: usize,
}

impl Grid {
    pub const CANONICAL: Grid = Grid { nelx: 64, nely: 64 };

    pub fn new(nelx: usize, nely: usize) -> Self {
        Grid { nelx, nely }
    }

    pub fn n_elements(&self) -> usize {
        self.nelx * self.nely
    }

    pub fn n_nodes(&self) -> usize {
        (self.nelx + 1) * (self.nely + 1)
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.n_nodes()
    }

    #[inline]
    pub fn element_index(&self, row: usize, col: usize) -> usize {
        row * self.nelx + col
    }

    #[inline]
    pub fn element_row_col(&self, e: usize) -> (usize, usize) {
        (e / self.nelx, e % self.nelx)
    }

    /// Node index from column `i` and row `j_top` counted from the top.
    #[inline]
    pub fn node_index(&self, i: usize, j_top: usize) -> usize {
        i * (self.nely + 1) + j_top
    }

    pub fn node_of(&self, node: NodeCoord) -> usize {
        self.node_index(node.i, self.nely - node.j_bottom)
    }

    /// Corner nodes of an element, counterclockwise from the lower-left corner.
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (row, col) = self.element_row_col(e);
        [
            self.node_index(col, row + 1),
            self.node_index(col + 1, row + 1),
            self.node_index(col + 1, row),
            self.node_index(col, row),
        ]
    }

    /// Global DOFs of an element in the same order as [`Grid::element_nodes`].
    pub fn element_dofs(&self, e: usize) -> [usize; 8] {
        let n = self.element_nodes(e);
        [
            2 * n[0],
            2 * n[0] + 1,
            2 * n[1],
            2 * n[1] + 1,
            2 * n[2],
            2 * n[2] + 1,
            2 * n[3],
            2 * n[3] + 1,
        ]
    }

    /// Normalized center of an element (lower-left origin).
    pub fn element_center(&self, e: usize) -> (f64, f64) {
        let (row, col) = self.element_row_col(e);
        (
            (col as f64 + 0.5) / self.nelx as f64,
            1.0 - (row as f64 + 0.5) / self.nely as f64,
        )
    }

    /// Element containing a normalized point. Points on a shared edge belong to
    /// the element on the lower-left side of it.
    pub fn containing_element(&self, x: f64, y: f64) -> ElementHit {
        let (col, xi) = owning_cell(x * self.nelx as f64, self.nelx);
        let (row_bottom, eta) = owning_cell(y * self.nely as f64, self.nely);
        let row = self.nely - 1 - row_bottom;
        ElementHit {
            element: self.element_index(row, col),
            xi,
            eta,
        }
    }

    /// Every element whose closed square contains the normalized point.
    pub fn elements_touching(&self, x: f64, y: f64) -> Vec<usize> {
        let cols = touching_cells(x * self.nelx as f64, self.nelx);
        let rows_bottom = touching_cells(y * self.nely as f64, self.nely);
        let mut out = Vec::with_capacity(4);
        for &rb in &rows_bottom {
            for &c in &cols {
                out.push(self.element_index(self.nely - 1 - rb, c));
            }
        }
        out
    }

    /// Nearest node to a normalized point. Exact ties between two node lines
    /// resolve toward the nearer domain boundary.
    pub fn nearest_node(&self, x: f64, y: f64) -> NodeCoord {
        NodeCoord {
            i: round_toward_edge(x * self.nelx as f64, self.nelx),
            j_bottom: round_toward_edge(y * self.nely as f64, self.nely),
        }
    }

    pub fn node_position(&self, node: NodeCoord) -> (f64, f64) {
        (
            node.i as f64 / self.nelx as f64,
            node.j_bottom as f64 / self.nely as f64,
        )
    }

    /// Elements incident to a node (one to four).
    pub fn elements_around_node(&self, node: NodeCoord) -> Vec<usize> {
        let mut out = Vec::with_capacity(4);
        let j_top = self.nely - node.j_bottom;
        for row in [j_top.wrapping_sub(1), j_top] {
            if row >= self.nely {
                continue;
            }
            for col in [node.i.wrapping_sub(1), node.i] {
                if col < self.nelx {
                    out.push(self.element_index(row, col));
                }
            }
        }
        out
    }

    /// Edge-adjacent neighbours of an element.
    pub fn neighbors4(&self, e: usize) -> impl Iterator<Item = usize> + '_ {
        let (row, col) = self.element_row_col(e);
        let cand = [
            (row.wrapping_sub(1), col),
            (row + 1, col),
            (row, col.wrapping_sub(1)),
            (row, col + 1),
        ];
        cand.into_iter()
            .filter(|&(r, c)| r < self.nely && c < self.nelx)
            .map(move |(r, c)| self.element_index(r, c))
    }

    /// Mirror an element index about the vertical midline.
    pub fn mirror_element(&self, e: usize) -> usize {
        let (row, col) = self.element_row_col(e);
        self.element_index(row, self.nelx - 1 - col)
    }
}

impl Default for Grid {
    fn default() -> Self {
        Grid::CANONICAL
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.nelx, self.nely)
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected NxM, got {s:?}"))?;
        let nelx: usize = a
            .trim()
            .parse()
            .map_err(|_| format!("bad width in {s:?}"))?;
        let nely: usize = b
            .trim()
            .parse()
            .map_err(|_| format!("bad height in {s:?}"))?;
        if nelx == 0 || nely == 0 {
            return Err(format!("grid dimensions must be positive, got {s:?}"));
        }
        Ok(Grid { nelx, nely })
    }
}

/// Values within `TIE_EPS` of an integer are treated as that integer, so
/// coordinates like `15.0 / 22.0 * 44.0` land exactly on the grid line.
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() <= TIE_EPS {
        r
    } else {
        v
    }
}

/// Cell `k` owns the half-open interval `(k, k+1]`, except cell 0 which also owns 0.
fn owning_cell(v: f64, n: usize) -> (usize, f64) {
    let v = snap(v);
    let k = (v.ceil() as i64 - 1).clamp(0, n as i64 - 1) as usize;
    (k, (v - k as f64).clamp(0.0, 1.0))
}

fn touching_cells(v: f64, n: usize) -> Vec<usize> {
    let v = snap(v).clamp(0.0, n as f64);
    let lo = (v.ceil() as i64 - 1).max(0) as usize;
    let hi = (v.floor() as usize).min(n - 1);
    (lo.min(hi)..=hi.max(lo)).collect()
}

const TIE_EPS: f64 = 1e-9;

pub(crate) fn round_toward_edge(v: f64, n: usize) -> usize {
    let v = v.clamp(0.0, n as f64);
    let f = v.floor();
    let frac = v - f;
    let r = if (frac - 0.5).abs() <= TIE_EPS {
        if v < n as f64 / 2.0 {
            f
        } else {
            f + 1.0
        }
    } else {
        v.round()
    };
    (r as usize).min(n)
}
