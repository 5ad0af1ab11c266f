//! Oracles shared by the integration tests of both workspace crates.
#![allow(dead_code)]

use topoforge::problem::{parse_sketch_layers, render_mask_layer};
use topoforge::*;

/// Plane-stress bilinear quad stiffness by 2×2 Gauss quadrature on the unit
/// square, nodes counterclockwise from (0,0).
pub fn quadrature_stiffness(nu: f64) -> [[f64; 8]; 8] {
    let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    let d = {
        let s = 1.0 / (1.0 - nu * nu);
        [
            [s, s * nu, 0.0],
            [s * nu, s, 0.0],
            [0.0, 0.0, s * (1.0 - nu) / 2.0],
        ]
    };
    let g = 1.0 / 3f64.sqrt();
    let mut k = [[0.0; 8]; 8];
    for &xi in &[-g, g] {
        for &eta in &[-g, g] {
            // x = (1 + ξ)/2, y = (1 + η)/2, so ∂/∂x = 2∂/∂ξ and det J = 1/4
            let mut b = [[0.0; 8]; 3];
            for (a, &(xa, ya)) in corners.iter().enumerate() {
                let dx = 2.0 * 0.25 * xa * (1.0 + ya * eta);
                let dy = 2.0 * 0.25 * ya * (1.0 + xa * xi);
                b[0][2 * a] = dx;
                b[1][2 * a + 1] = dy;
                b[2][2 * a] = dy;
                b[2][2 * a + 1] = dx;
            }
            for i in 0..8 {
                for j in 0..8 {
                    let mut s = 0.0;
                    for p in 0..3 {
                        for q in 0..3 {
                            s += b[p][i] * d[p][q] * b[q][j];
                        }
                    }
                    k[i][j] += 0.25 * s;
                }
            }
        }
    }
    k
}

/// Render at `scale` pixels per element, parse back, and compare. Positions
/// may move by at most one pixel per axis; everything else must be equal.
pub fn check_round_trip(
    p: &DesignProblem,
    scale: usize,
    separate_mask: bool,
) -> Result<(), String> {
    let palette = Palette::default();
    let (w, h) = (p.grid.nelx * scale, p.grid.nely * scale);
    let params = ParseParams::new(
        p.loads.first().map_or(270.0, |l| l.angle_deg),
        p.volume_fraction,
    )
    .with_grid(p.grid);
    let back = if separate_mask {
        let stripped = DesignProblem {
            mask: None,
            ..p.clone()
        };
        let sketch = render_problem(&stripped, &palette, w, h);
        let layer = render_mask_layer(p, &palette, w, h);
        parse_sketch_layers(&sketch, layer.as_ref(), &palette, &params)
    } else {
        parse_sketch(&render_problem(p, &palette, w, h), &palette, &params)
    }
    .map_err(|e| e.to_string())?;

    let (px, py) = (1.0 / w as f64, 1.0 / h as f64);
    let near = |ax: f64, ay: f64, bx: f64, by: f64| {
        (ax - bx).abs() <= px + 1e-12 && (ay - by).abs() <= py + 1e-12
    };
    if back.grid != p.grid || back.domain != p.domain {
        return Err(format!(
            "grid or domain changed:\n{}\n{}",
            bitmap(p.grid, &p.domain),
            bitmap(p.grid, &back.domain)
        ));
    }
    if back.mask != p.mask {
        return Err("mask changed".into());
    }
    if back.volume_fraction != p.volume_fraction {
        return Err("volume fraction changed".into());
    }
    if back.loads.len() != p.loads.len() {
        return Err(format!(
            "{} loads became {}",
            p.loads.len(),
            back.loads.len()
        ));
    }
    for l in &p.loads {
        let hit = back.loads.iter().any(|b| {
            near(l.x, l.y, b.x, b.y) && b.angle_deg == l.angle_deg && b.magnitude == l.magnitude
        });
        if !hit {
            return Err(format!("load {l:?} not recovered from {:?}", back.loads));
        }
    }
    // fixings act on grid nodes; parsing returns node positions
    if back.fixed_nodes() != p.fixed_nodes() {
        return Err(format!("fixings {:?} became {:?}", p.fixings, back.fixings));
    }
    for f in &p.fixings {
        let node = p.grid.nearest_node(f.x, f.y);
        let (nx, ny) = p.grid.node_position(node);
        if !back
            .fixings
            .iter()
            .any(|b| (b.x, b.y) == (nx, ny) && b.kind == f.kind)
        {
            return Err(format!(
                "fixing {f:?} not recovered from {:?}",
                back.fixings
            ));
        }
    }
    Ok(())
}

pub fn bitmap(g: Grid, bits: &[bool]) -> String {
    (0..g.nely)
        .map(|r| {
            (0..g.nelx)
                .map(|c| {
                    if bits[g.element_index(r, c)] {
                        '#'
                    } else {
                        '.'
                    }
                })
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join("\n")
}
