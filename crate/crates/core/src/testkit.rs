//! Seeded generators of random problems and density fields for property
//! tests and acceptance checks. Every generator is deterministic in its RNG.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fem::DensityField;
use crate::grid::{Grid, NodeCoord};
use crate::problem::{DesignProblem, FixKind, Fixing, Load};

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Full-domain problem that restrains rigid motion: a pin on the left edge,
/// a roller on the bottom edge and up to two extra supports, with one to
/// three loads of random position, direction and magnitude.
pub fn random_fem_problem(rng: &mut TestRng, grid: Grid) -> DesignProblem {
    let node = |i: usize, j: usize| grid.node_position(NodeCoord { i, j_bottom: j });
    let (px, py) = node(0, rng.random_range(0..=grid.nely));
    let (rx, ry) = node(rng.random_range(1..=grid.nelx), 0);
    let mut fixings = vec![
        Fixing::new(px, py, FixKind::FixXY),
        Fixing::new(rx, ry, FixKind::FixY),
    ];
    for _ in 0..rng.random_range(0..=2) {
        let (x, y) = node(
            rng.random_range(0..=grid.nelx),
            rng.random_range(0..=grid.nely),
        );
        let kind = [FixKind::FixX, FixKind::FixY, FixKind::FixXY][rng.random_range(0..3)];
        fixings.push(Fixing::new(x, y, kind));
    }
    let loads = (0..rng.random_range(1..=3))
        .map(|_| Load {
            x: rng.random_range(0.0..=1.0),
            y: rng.random_range(0.0..=1.0),
            magnitude: rng.random_range(0.5..=2.0),
            angle_deg: rng.random_range(0.0..360.0),
        })
        .collect();
    DesignProblem::full(grid, loads, fixings, rng.random_range(0.1..=0.9))
}

/// Independent uniform densities in `[lo, hi]` on the domain.
pub fn random_density(
    rng: &mut TestRng,
    problem: &DesignProblem,
    lo: f64,
    hi: f64,
) -> DensityField {
    let values: Vec<f64> = (0..problem.grid.n_elements())
        .map(|_| rng.random_range(lo..=hi))
        .collect();
    DensityField::from_values(problem, &values)
}

/// A problem that survives rendering at `scale` pixels per element and
/// parsing back: constraints sit on domain elements, are spaced apart, stay
/// clear of the mask, and all loads share one unit-magnitude direction.
/// Returns the problem and the render scale.
pub fn random_sketch_problem(rng: &mut TestRng) -> (DesignProblem, usize) {
    let grid = Grid::new(rng.random_range(6..=24), rng.random_range(6..=24));
    let scale = [2, 4, 8][rng.random_range(0..3)];
    let n = grid.n_elements();
    let mut domain = vec![false; n];
    for _ in 0..rng.random_range(1..=3) {
        let (c0, r0) = (
            rng.random_range(0..grid.nelx),
            rng.random_range(0..grid.nely),
        );
        let (c1, r1) = (
            rng.random_range(c0..grid.nelx),
            rng.random_range(r0..grid.nely),
        );
        for r in r0..=r1 {
            for c in c0..=c1 {
                domain[grid.element_index(r, c)] = true;
            }
        }
    }
    let domain_elems: Vec<usize> = (0..n).filter(|&e| domain[e]).collect();
    // elements near a constraint, kept out of the mask
    let mut reserved = vec![false; n];
    let mut taken: Vec<(usize, usize)> = Vec::new();
    let far_enough = |taken: &[(usize, usize)], r: usize, c: usize| {
        taken
            .iter()
            .all(|&(tr, tc)| tr.abs_diff(r) >= 2 || tc.abs_diff(c) >= 2)
    };
    let reserve = |reserved: &mut Vec<bool>, r: usize, c: usize| {
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                if rr >= 0 && cc >= 0 && (rr as usize) < grid.nely && (cc as usize) < grid.nelx {
                    reserved[grid.element_index(rr as usize, cc as usize)] = true;
                }
            }
        }
    };

    let angle = [0.0, 45.0, 90.0, 135.0, 180.0, 225.0, 270.0, 315.0][rng.random_range(0..8)];
    let mut loads = Vec::new();
    let want = rng.random_range(1..=3);
    for _ in 0..50 {
        if loads.len() == want {
            break;
        }
        let e = domain_elems[rng.random_range(0..domain_elems.len())];
        let (r, c) = grid.element_row_col(e);
        if !far_enough(&taken, r, c) {
            continue;
        }
        taken.push((r, c));
        reserve(&mut reserved, r, c);
        let (cx, cy) = grid.element_center(e);
        let jitter = 0.3 / scale as f64;
        loads.push(Load::new(
            cx + rng.random_range(-jitter..=jitter) / grid.nelx as f64,
            cy + rng.random_range(-jitter..=jitter) / grid.nely as f64,
            angle,
        ));
    }

    let mut fixings = Vec::new();
    let mut used_nodes = Vec::new();
    let want = rng.random_range(1..=4);
    for _ in 0..200 {
        if fixings.len() == want {
            break;
        }
        let e = domain_elems[rng.random_range(0..domain_elems.len())];
        let (r, c) = grid.element_row_col(e);
        if !far_enough(&taken, r, c) {
            continue;
        }
        // one of the element's four corners
        let (i, j_bottom) = (
            c + rng.random_range(0..=1),
            grid.nely - 1 - r + rng.random_range(0..=1),
        );
        let node = NodeCoord { i, j_bottom };
        if used_nodes.contains(&node) {
            continue;
        }
        used_nodes.push(node);
        taken.push((r, c));
        reserve(&mut reserved, r, c);
        let (x, y) = grid.node_position(node);
        let kind = [FixKind::FixX, FixKind::FixY, FixKind::FixXY][rng.random_range(0..3)];
        fixings.push(Fixing::new(x, y, kind));
    }

    let mask = rng.random_bool(0.5).then(|| {
        let (c0, r0) = (
            rng.random_range(0..grid.nelx),
            rng.random_range(0..grid.nely),
        );
        let (c1, r1) = (
            rng.random_range(c0..grid.nelx),
            rng.random_range(r0..grid.nely),
        );
        (0..n)
            .map(|e| {
                let (r, c) = grid.element_row_col(e);
                domain[e] && !reserved[e] && (r0..=r1).contains(&r) && (c0..=c1).contains(&c)
            })
            .collect::<Vec<bool>>()
    });
    if fixings.is_empty() {
        return random_sketch_problem(rng);
    }
    // an all-false mask renders as no mask at all
    let mask = mask.filter(|m| m.iter().any(|&v| v));

    let vf = (rng.random_range(1..=100) as f64) / 100.0;
    (
        DesignProblem {
            grid,
            domain,
            loads,
            fixings,
            volume_fraction: vf,
            mask,
        },
        scale,
    )
}
