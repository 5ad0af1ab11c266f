//! Design-problem data model and its raster codec.
//!
//! A [`DesignProblem`] is what the FE model and optimizer consume: a grid, the
//! designable domain, point loads in normalized coordinates, nodal fixings and
//! a target volume fraction, plus an optional edit mask. Problems round-trip
//! through JSON (bitmaps run-length encoded) and through color-coded sketches.

mod codec;
mod palette;
pub mod rle;
mod validate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, NodeCoord};

pub use codec::{
    parse_sketch, parse_sketch_layers, render_mask_layer, render_problem, ParseParams,
};
pub use palette::{ColorCode, Palette, PaletteError, Role};
pub(crate) use validate::components4;
pub use validate::{validate_problem, Diagnostic, DiagnosticKind, Severity};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("sketch contains no material pixels")]
    NoMaterial,
    #[error("sketch contains no load pixels")]
    NoLoad,
    #[error("sketch contains no fixing pixels")]
    NoFixing,
    #[error(transparent)]
    AmbiguousPalette(#[from] PaletteError),
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("problem json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Support type drawn with the yellow, blue or green brush.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FixKind {
    FixX,
    FixY,
    FixXY,
}

impl FixKind {
    pub fn fixes_x(self) -> bool {
        matches!(self, FixKind::FixX | FixKind::FixXY)
    }

    pub fn fixes_y(self) -> bool {
        matches!(self, FixKind::FixY | FixKind::FixXY)
    }
}

/// Point load at a normalized position (origin lower-left).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub x: f64,
    pub y: f64,
    #[serde(default = "unit_magnitude")]
    pub magnitude: f64,
    /// Direction in degrees, 0 = +x, counterclockwise.
    pub angle_deg: f64,
}

fn unit_magnitude() -> f64 {
    1.0
}

impl Load {
    pub fn new(x: f64, y: f64, angle_deg: f64) -> Self {
        Load {
            x,
            y,
            magnitude: 1.0,
            angle_deg,
        }
    }

    /// Force components. Right angles produce exact zeros.
    pub fn components(&self) -> (f64, f64) {
        let (s, c) = direction(self.angle_deg);
        (self.magnitude * c, self.magnitude * s)
    }
}

fn direction(angle_deg: f64) -> (f64, f64) {
    let a = angle_deg.rem_euclid(360.0);
    if a == 0.0 {
        (0.0, 1.0)
    } else if a == 90.0 {
        (1.0, 0.0)
    } else if a == 180.0 {
        (0.0, -1.0)
    } else if a == 270.0 {
        (-1.0, 0.0)
    } else {
        a.to_radians().sin_cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fixing {
    pub x: f64,
    pub y: f64,
    pub kind: FixKind,
}

impl Fixing {
    pub fn new(x: f64, y: f64, kind: FixKind) -> Self {
        Fixing { x, y, kind }
    }
}

/// A sketch-defined topology optimization problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemFile", into = "ProblemFile")]
pub struct DesignProblem {
    pub grid: Grid,
    pub domain: Vec<bool>,
    pub loads: Vec<Load>,
    pub fixings: Vec<Fixing>,
    pub volume_fraction: f64,
    pub mask: Option<Vec<bool>>,
}

/// On-disk layout: bitmaps as `[start, count]` runs of set elements.
#[derive(Serialize, Deserialize)]
struct ProblemFile {
    grid: Grid,
    domain: Vec<rle::Run>,
    loads: Vec<Load>,
    fixings: Vec<Fixing>,
    volume_fraction: f64,
    #[serde(default)]
    mask: Option<Vec<rle::Run>>,
}

impl TryFrom<ProblemFile> for DesignProblem {
    type Error = rle::RleError;

    fn try_from(f: ProblemFile) -> Result<Self, Self::Error> {
        let n = f.grid.n_elements();
        Ok(DesignProblem {
            grid: f.grid,
            domain: rle::decode(&f.domain, n)?,
            loads: f.loads,
            fixings: f.fixings,
            volume_fraction: f.volume_fraction,
            mask: f.mask.map(|m| rle::decode(&m, n)).transpose()?,
        })
    }
}

impl From<DesignProblem> for ProblemFile {
    fn from(p: DesignProblem) -> Self {
        ProblemFile {
            grid: p.grid,
            domain: rle::encode(&p.domain),
            loads: p.loads,
            fixings: p.fixings,
            volume_fraction: p.volume_fraction,
            mask: p.mask.as_deref().map(rle::encode),
        }
    }
}

impl DesignProblem {
    /// Full rectangular domain without mask.
    pub fn full(grid: Grid, loads: Vec<Load>, fixings: Vec<Fixing>, volume_fraction: f64) -> Self {
        DesignProblem {
            grid,
            domain: vec![true; grid.n_elements()],
            loads,
            fixings,
            volume_fraction,
            mask: None,
        }
    }

    /// The evaluation case used as the reference benchmark: a full square
    /// domain, a downward load near the top-right corner and two pinned
    /// supports on the bottom and left edges, at 20 % volume.
    pub fn benchmark(grid: Grid) -> Self {
        DesignProblem::full(
            grid,
            vec![Load::new(0.98, 0.96, 270.0)],
            vec![
                Fixing::new(0.26, 0.0, FixKind::FixXY),
                Fixing::new(0.0, 0.62, FixKind::FixXY),
            ],
            0.2,
        )
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Self {
        self.mask = Some(mask);
        self
    }

    pub fn from_json(s: &str) -> Result<Self, ProblemError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem serializes")
    }

    /// Elements the optimizer may change: domain elements inside the mask,
    /// or the whole domain when no mask is set.
    pub fn editable(&self) -> Vec<bool> {
        match &self.mask {
            Some(m) => self.domain.iter().zip(m).map(|(&d, &m)| d && m).collect(),
            None => self.domain.clone(),
        }
    }

    pub fn domain_count(&self) -> usize {
        self.domain.iter().filter(|&&d| d).count()
    }

    /// Fixed nodes with their merged kinds, sorted and deduplicated.
    pub fn fixed_nodes(&self) -> Vec<(NodeCoord, FixKind)> {
        let mut out: Vec<(NodeCoord, FixKind)> = self
            .fixings
            .iter()
            .map(|f| (self.grid.nearest_node(f.x, f.y), f.kind))
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Reject problems whose diagnostics contain errors.
    pub fn check(&self) -> Result<(), ProblemError> {
        let errors: Vec<String> = validate_problem(self)
            .into_iter()
            .filter(|d| d.severity == Severity::Error)
            .map(|d| d.message)
            .collect();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ProblemError::Invalid(errors.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn right_angle_components_are_exact() {
        assert_eq!(Load::new(0.5, 0.5, 270.0).components(), (0.0, -1.0));
        assert_eq!(Load::new(0.5, 0.5, 90.0).components(), (0.0, 1.0));
        assert_eq!(Load::new(0.5, 0.5, -90.0).components(), (0.0, -1.0));
        assert_eq!(Load::new(0.5, 0.5, 180.0).components(), (-1.0, 0.0));
        let (x, y) = Load::new(0.5, 0.5, 45.0).components();
        assert!((x - y).abs() < 1e-15 && (x - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn json_roundtrip_with_mask() {
        let grid = Grid::new(4, 3);
        let mut mask = vec![false; 12];
        mask[5] = true;
        mask[6] = true;
        let p = DesignProblem::benchmark(grid).with_mask(mask);
        let s = p.to_json();
        assert!(s.contains("\"mask\""));
        let back = DesignProblem::from_json(&s).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn json_schema_fields() {
        let p = DesignProblem::benchmark(Grid::new(2, 2));
        let v: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        assert_eq!(v["grid"]["nelx"], 2);
        assert_eq!(v["domain"], serde_json::json!([[0, 4]]));
        assert_eq!(v["mask"], serde_json::Value::Null);
        assert_eq!(v["loads"][0]["angle_deg"], 270.0);
        assert_eq!(v["fixings"][1]["kind"], "FixXY");
    }

    #[test]
    fn missing_magnitude_defaults_to_one() {
        let s = r#"{"grid":{"nelx":2,"nely":2},"domain":[[0,4]],
            "loads":[{"x":0.5,"y":1.0,"angle_deg":270}],
            "fixings":[{"x":0,"y":0,"kind":"FixXY"}],"volume_fraction":0.5}"#;
        let p = DesignProblem::from_json(s).unwrap();
        assert_eq!(p.loads[0].magnitude, 1.0);
        assert_eq!(p.mask, None);
    }

    #[test]
    fn editable_defaults_to_domain() {
        let mut p = DesignProblem::benchmark(Grid::new(2, 2));
        p.domain[0] = false;
        assert_eq!(p.editable(), vec![false, true, true, true]);
        let p = p.with_mask(vec![true, true, false, false]);
        assert_eq!(p.editable(), vec![false, true, false, false]);
    }
}
