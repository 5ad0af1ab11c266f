//! Conversion between color-coded sketches and [`DesignProblem`]s.
//!
//! Parsing classifies every pixel against the palette, then:
//! - material and mask pixels form the domain, together with any cluster of
//!   constraint pixels that touches them (a red dot drawn on a black shape is
//!   still part of the shape);
//! - every 4-connected cluster of load pixels becomes one point load at the
//!   cluster centroid, pointing in the direction given by the parameters;
//! - every fixing pixel fixes the grid node nearest to its center;
//! - mask pixels, inline or from a separate layer, mark the editable region.
//!
//! Pixel `(r, c)` of a `W×H` sketch sits at normalized
//! `((c + 0.5)/W, 1 − (r + 0.5)/H)`. The domain and mask bitmaps are
//! nearest-neighbour resampled from the sketch to the element grid.

use std::collections::{BTreeSet, VecDeque};

use crate::grid::{Grid, NodeCoord};
use crate::raster::{resample_nearest, RasterSketch, Rgba};

use super::{DesignProblem, FixKind, Fixing, Load, Palette, ProblemError, Role};

/// Text-entered parameters that complete a sketch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParseParams {
    /// Direction shared by every load, degrees counterclockwise from +x.
    pub load_angle_deg: f64,
    pub volume_fraction: f64,
    /// Element grid the sketch is resampled to.
    pub grid: Grid,
}

impl ParseParams {
    pub fn new(load_angle_deg: f64, volume_fraction: f64) -> Self {
        ParseParams {
            load_angle_deg,
            volume_fraction,
            grid: Grid::CANONICAL,
        }
    }

    pub fn with_grid(mut self, grid: Grid) -> Self {
        self.grid = grid;
        self
    }
}

pub fn parse_sketch(
    sketch: &RasterSketch,
    palette: &Palette,
    params: &ParseParams,
) -> Result<DesignProblem, ProblemError> {
    parse_sketch_layers(sketch, None, palette, params)
}

/// Parse a sketch with an optional separate mask layer. Mask-colored pixels
/// of the layer are added to any mask drawn inline; the result is clipped to
/// the domain.
pub fn parse_sketch_layers(
    sketch: &RasterSketch,
    mask_layer: Option<&RasterSketch>,
    palette: &Palette,
    params: &ParseParams,
) -> Result<DesignProblem, ProblemError> {
    if !(params.volume_fraction > 0.0 && params.volume_fraction <= 1.0) {
        return Err(ProblemError::Invalid(format!(
            "volume fraction {} outside (0, 1]",
            params.volume_fraction
        )));
    }
    // rebuilding through `new` re-checks tolerance overlap for hand-built palettes
    let palette = Palette::new(palette.codes().to_vec())?;
    let (w, h) = (sketch.width(), sketch.height());
    let roles: Vec<Role> = sketch
        .pixels()
        .iter()
        .map(|&p| palette.classify(p))
        .collect();

    let domain_px = domain_pixels(&roles, w, h);
    if !domain_px.iter().any(|&d| d) {
        return Err(ProblemError::NoMaterial);
    }
    let grid = params.grid;
    let domain = resample_nearest(&domain_px, w, h, grid.nelx, grid.nely);
    if !domain.iter().any(|&d| d) {
        return Err(ProblemError::NoMaterial);
    }

    let loads: Vec<Load> = clusters(&roles, w, h, Role::Load)
        .into_iter()
        .map(|pixels| {
            let n = pixels.len() as f64;
            let (sx, sy) = pixels.iter().fold((0.0, 0.0), |(sx, sy), &i| {
                let (x, y) = pixel_center(i, w, h);
                (sx + x, sy + y)
            });
            Load::new(sx / n, sy / n, params.load_angle_deg)
        })
        .collect();
    if loads.is_empty() {
        return Err(ProblemError::NoLoad);
    }

    let mut fixed: BTreeSet<(NodeCoord, FixKind)> = BTreeSet::new();
    for (i, role) in roles.iter().enumerate() {
        let kind = match role {
            Role::FixX => FixKind::FixX,
            Role::FixY => FixKind::FixY,
            Role::FixXY => FixKind::FixXY,
            _ => continue,
        };
        let (x, y) = pixel_center(i, w, h);
        fixed.insert((grid.nearest_node(x, y), kind));
    }
    if fixed.is_empty() {
        return Err(ProblemError::NoFixing);
    }
    let fixings = fixed
        .into_iter()
        .map(|(node, kind)| {
            let (x, y) = grid.node_position(node);
            Fixing::new(x, y, kind)
        })
        .collect();

    let mut mask_el = resample_nearest(
        &roles.iter().map(|&r| r == Role::Mask).collect::<Vec<_>>(),
        w,
        h,
        grid.nelx,
        grid.nely,
    );
    let mut any_mask = roles.contains(&Role::Mask);
    if let Some(layer) = mask_layer {
        let layer_px: Vec<bool> = layer
            .pixels()
            .iter()
            .map(|&p| palette.classify(p) == Role::Mask)
            .collect();
        any_mask |= layer_px.iter().any(|&m| m);
        let layer_el = resample_nearest(
            &layer_px,
            layer.width(),
            layer.height(),
            grid.nelx,
            grid.nely,
        );
        for (m, l) in mask_el.iter_mut().zip(layer_el) {
            *m |= l;
        }
    }
    let mask = any_mask.then(|| {
        mask_el
            .iter()
            .zip(&domain)
            .map(|(&m, &d)| m && d)
            .collect::<Vec<_>>()
    });

    Ok(DesignProblem {
        grid,
        domain,
        loads,
        fixings,
        volume_fraction: params.volume_fraction,
        mask,
    })
}

fn pixel_center(i: usize, w: usize, h: usize) -> (f64, f64) {
    let (r, c) = (i / w, i % w);
    (
        (c as f64 + 0.5) / w as f64,
        1.0 - (r as f64 + 0.5) / h as f64,
    )
}

fn neighbors4(i: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (r, c) = (i / w, i % w);
    [
        (r.wrapping_sub(1), c),
        (r + 1, c),
        (r, c.wrapping_sub(1)),
        (r, c + 1),
    ]
    .into_iter()
    .filter(move |&(r, c)| r < h && c < w)
    .map(move |(r, c)| r * w + c)
}

/// 4-connected clusters of pixels satisfying `pred`, in raster order of their first pixel.
fn clusters_by(roles: &[Role], w: usize, h: usize, pred: impl Fn(Role) -> bool) -> Vec<Vec<usize>> {
    let mut seen = vec![false; roles.len()];
    let mut out = Vec::new();
    for start in 0..roles.len() {
        if seen[start] || !pred(roles[start]) {
            continue;
        }
        let mut cluster = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            cluster.push(i);
            for j in neighbors4(i, w, h) {
                if !seen[j] && pred(roles[j]) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        out.push(cluster);
    }
    out
}

fn clusters(roles: &[Role], w: usize, h: usize, role: Role) -> Vec<Vec<usize>> {
    clusters_by(roles, w, h, |r| r == role)
}

fn domain_pixels(roles: &[Role], w: usize, h: usize) -> Vec<bool> {
    let mut domain: Vec<bool> = roles
        .iter()
        .map(|&r| matches!(r, Role::Material | Role::Mask))
        .collect();
    for cluster in clusters_by(roles, w, h, Role::is_constraint) {
        let touches = cluster
            .iter()
            .any(|&i| neighbors4(i, w, h).any(|j| matches!(roles[j], Role::Material | Role::Mask)));
        if touches {
            for i in cluster {
                domain[i] = true;
            }
        }
    }
    domain
}

/// Rasterize a problem at `width × height` pixels.
///
/// Domain elements are painted with the material color, each load as one
/// load pixel and each fixing as one pixel next to its node, then the mask is
/// painted over everything. Constraint pixels are placed on domain pixels
/// whenever the geometry allows it so that parsing recovers the same domain.
pub fn render_problem(
    problem: &DesignProblem,
    palette: &Palette,
    width: usize,
    height: usize,
) -> RasterSketch {
    let grid = problem.grid;
    let px_grid = Grid::new(width, height);
    let background = palette.color(Role::Background);
    let material = palette.color(Role::Material);
    let domain_px = resample_nearest(&problem.domain, grid.nelx, grid.nely, width, height);
    let pixels: Vec<Rgba> = domain_px
        .iter()
        .map(|&d| if d { material } else { background })
        .collect();
    let mut sketch = RasterSketch::new(width, height, pixels).expect("render size at least 2x2");
    let mut painted: Vec<Option<Role>> = vec![None; width * height];

    for f in &problem.fixings {
        let node = grid.nearest_node(f.x, f.y);
        let (nx, ny) = grid.node_position(node);
        let pick = px_grid
            .elements_touching(nx, ny)
            .into_iter()
            .max_by_key(|&p| {
                let (cx, cy) = px_grid.element_center(p);
                (domain_px[p], grid.nearest_node(cx, cy) == node)
            })
            .expect("node touches at least one pixel");
        let role = match (painted[pick], f.kind) {
            (Some(Role::FixX), FixKind::FixY) | (Some(Role::FixY), FixKind::FixX) => Role::FixXY,
            (Some(Role::FixXY), _) => Role::FixXY,
            (_, FixKind::FixX) => Role::FixX,
            (_, FixKind::FixY) => Role::FixY,
            (_, FixKind::FixXY) => Role::FixXY,
        };
        painted[pick] = Some(role);
    }

    for l in &problem.loads {
        let own = px_grid.containing_element(l.x, l.y).element;
        let pick = if domain_px[own] {
            own
        } else {
            px_grid
                .elements_touching(l.x, l.y)
                .into_iter()
                .find(|&p| domain_px[p])
                .unwrap_or(own)
        };
        painted[pick] = Some(Role::Load);
    }

    for (i, role) in painted.iter().enumerate() {
        if let Some(role) = role {
            let (r, c) = (i / width, i % width);
            sketch.set(r, c, palette.color(*role));
        }
    }

    if let Some(mask) = &problem.mask {
        let mask_px = resample_nearest(mask, grid.nelx, grid.nely, width, height);
        let color = palette.color(Role::Mask);
        for (i, &m) in mask_px.iter().enumerate() {
            if m {
                sketch.set(i / width, i % width, color);
            }
        }
    }
    sketch
}

/// Mask as a separate transparent layer, for transports that keep the mask
/// apart from the sketch.
pub fn render_mask_layer(
    problem: &DesignProblem,
    palette: &Palette,
    width: usize,
    height: usize,
) -> Option<RasterSketch> {
    let mask = problem.mask.as_ref()?;
    let grid = problem.grid;
    let color = palette.color(Role::Mask);
    let pixels = resample_nearest(mask, grid.nelx, grid.nely, width, height)
        .into_iter()
        .map(|m| if m { color } else { [0, 0, 0, 0] })
        .collect();
    Some(RasterSketch::new(width, height, pixels).expect("render size at least 2x2"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BLACK: Rgba = [0, 0, 0, 255];
    const WHITE: Rgba = [255, 255, 255, 255];
    const RED: Rgba = [255, 0, 0, 255];
    const GREEN: Rgba = [0, 255, 0, 255];
    const AZURE: Rgba = [0, 127, 255, 100];

    fn square(n: usize, fill: Rgba) -> RasterSketch {
        RasterSketch::filled(n, n, fill).unwrap()
    }

    fn params() -> ParseParams {
        ParseParams::new(270.0, 0.2)
    }

    #[test]
    fn all_black_sketch_has_no_load() {
        let s = square(64, BLACK);
        assert!(matches!(
            parse_sketch(&s, &Palette::default(), &params()),
            Err(ProblemError::NoLoad)
        ));
    }

    #[test]
    fn blank_sketch_has_no_material() {
        let s = square(64, WHITE);
        assert!(matches!(
            parse_sketch(&s, &Palette::default(), &params()),
            Err(ProblemError::NoMaterial)
        ));
    }

    #[test]
    fn missing_fixing_is_reported() {
        let mut s = square(8, BLACK);
        s.set(0, 7, RED);
        assert!(matches!(
            parse_sketch(
                &s,
                &Palette::default(),
                &params().with_grid(Grid::new(8, 8))
            ),
            Err(ProblemError::NoFixing)
        ));
    }

    #[test]
    fn load_cluster_collapses_to_centroid() {
        let mut s = square(8, BLACK);
        // 2x2 red block at rows 1-2, cols 5-6 -> center at pixel (2, 6) corner
        for (r, c) in [(1, 5), (1, 6), (2, 5), (2, 6)] {
            s.set(r, c, RED);
        }
        s.set(7, 0, GREEN);
        let p = parse_sketch(
            &s,
            &Palette::default(),
            &params().with_grid(Grid::new(8, 8)),
        )
        .unwrap();
        assert_eq!(p.loads.len(), 1);
        assert!((p.loads[0].x - 6.0 / 8.0).abs() < 1e-12);
        assert!((p.loads[0].y - 6.0 / 8.0).abs() < 1e-12);
        assert_eq!(p.loads[0].angle_deg, 270.0);
        assert_eq!(p.loads[0].magnitude, 1.0);
        // load pixels stay inside the domain
        assert!(p.domain.iter().all(|&d| d));
        // bottom-left pixel fixes the corner node
        assert_eq!(p.fixings, vec![Fixing::new(0.0, 0.0, FixKind::FixXY)]);
    }

    #[test]
    fn separate_clusters_give_separate_loads() {
        let mut s = square(8, BLACK);
        s.set(0, 0, RED);
        s.set(0, 7, RED);
        s.set(1, 1, RED); // diagonal to (0,0): a separate 4-connected cluster
        s.set(7, 7, GREEN);
        let p = parse_sketch(
            &s,
            &Palette::default(),
            &params().with_grid(Grid::new(8, 8)),
        )
        .unwrap();
        assert_eq!(p.loads.len(), 3);
    }

    #[test]
    fn fixing_pixels_deduplicate_per_node() {
        let mut s = square(8, BLACK);
        s.set(0, 0, RED);
        // on a same-size grid each edge pixel owns the node toward the boundary
        s.set(7, 0, GREEN);
        s.set(7, 1, GREEN);
        s.set(6, 0, GREEN);
        let p = parse_sketch(
            &s,
            &Palette::default(),
            &params().with_grid(Grid::new(8, 8)),
        )
        .unwrap();
        let nodes: Vec<_> = p.fixed_nodes().into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            nodes,
            vec![
                NodeCoord { i: 0, j_bottom: 0 },
                NodeCoord { i: 0, j_bottom: 1 },
                NodeCoord { i: 1, j_bottom: 0 },
            ]
        );
        // upsampled 8x: 64 pixels per element collapse onto a handful of nodes
        let big = RasterSketch::new(64, 64, resample_nearest(s.pixels(), 8, 8, 64, 64)).unwrap();
        let p2 = parse_sketch(
            &big,
            &Palette::default(),
            &params().with_grid(Grid::new(8, 8)),
        )
        .unwrap();
        assert!(p2.fixed_nodes().len() >= 3);
        assert_eq!(p2.domain, p.domain);
    }

    #[test]
    fn constraint_cluster_outside_material_is_not_domain() {
        let mut s = square(8, WHITE);
        for r in 0..8 {
            for c in 0..4 {
                s.set(r, c, BLACK);
            }
        }
        s.set(0, 3, RED); // on the shape
        s.set(7, 6, GREEN); // floating in background
        let p = parse_sketch(
            &s,
            &Palette::default(),
            &params().with_grid(Grid::new(8, 8)),
        )
        .unwrap();
        assert!(p.domain[3]);
        assert!(!p.domain[7 * 8 + 6]);
        assert_eq!(p.domain_count(), 32);
    }

    #[test]
    fn mask_has_precedence_and_marks_domain() {
        let palette = Palette::default();
        let mut s = square(8, BLACK);
        s.set(0, 7, RED);
        s.set(7, 0, GREEN);
        s.set(3, 3, AZURE);
        s.set(3, 4, AZURE);
        let p = parse_sketch(&s, &palette, &params().with_grid(Grid::new(8, 8))).unwrap();
        let mask = p.mask.unwrap();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 2);
        assert!(mask[3 * 8 + 3] && mask[3 * 8 + 4]);
    }

    #[test]
    fn separate_mask_layer_is_clipped_to_domain() {
        let palette = Palette::default();
        let mut s = square(8, WHITE);
        for r in 0..8 {
            for c in 0..4 {
                s.set(r, c, BLACK);
            }
        }
        s.set(0, 3, RED);
        s.set(7, 0, GREEN);
        let mut layer = RasterSketch::filled(8, 8, [0, 0, 0, 0]).unwrap();
        for c in 0..8 {
            layer.set(4, c, AZURE);
        }
        let p = parse_sketch_layers(
            &s,
            Some(&layer),
            &palette,
            &params().with_grid(Grid::new(8, 8)),
        )
        .unwrap();
        let mask = p.mask.unwrap();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 4);
    }

    #[test]
    fn invalid_volume_fraction_is_rejected() {
        let s = square(8, BLACK);
        let bad = ParseParams::new(270.0, 1.5).with_grid(Grid::new(8, 8));
        assert!(matches!(
            parse_sketch(&s, &Palette::default(), &bad),
            Err(ProblemError::Invalid(_))
        ));
    }

    #[test]
    fn render_empty_mask_has_no_mask_pixels() {
        let palette = Palette::default();
        let p = DesignProblem::benchmark(Grid::CANONICAL);
        let s = render_problem(&p, &palette, 64, 64);
        let mask = palette.color(Role::Mask);
        assert!(!s.pixels().iter().any(|&px| px == mask));
        assert!(render_mask_layer(&p, &palette, 64, 64).is_none());
    }

    #[test]
    fn render_full_domain_has_no_background() {
        let palette = Palette::default();
        let p = DesignProblem::benchmark(Grid::CANONICAL);
        let s = render_problem(&p, &palette, 64, 64);
        assert_eq!(s.pixels().len(), 64 * 64);
        assert!(s
            .pixels()
            .iter()
            .all(|&px| palette.classify(px) != Role::Background));
        let counts = |role| {
            s.pixels()
                .iter()
                .filter(|&&px| palette.classify(px) == role)
                .count()
        };
        assert_eq!(counts(Role::Load), 1);
        assert_eq!(counts(Role::FixXY), 2);
        assert_eq!(counts(Role::Material), 64 * 64 - 3);
    }
}
