use proptest::prelude::*;
use topoforge::testkit::{random_sketch_problem, rng};
use topoforge::*;

mod support;
use support::check_round_trip;

#[test]
fn thin_domain_fixings_stay_on_material() {
    let (p, scale) = random_sketch_problem(&mut rng(6298038000103842372));
    check_round_trip(&p, scale, false).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn render_then_parse_recovers_problem(seed in any::<u64>(), separate in any::<bool>()) {
        let (p, scale) = random_sketch_problem(&mut rng(seed));
        if let Err(msg) = check_round_trip(&p, scale, separate) {
            prop_assert!(false, "seed {seed} scale {scale}: {msg}");
        }
    }
}

#[test]
fn benchmark_round_trips_at_canvas_resolution() {
    let p = DesignProblem::benchmark(Grid::CANONICAL);
    check_round_trip(&p, 8, false).unwrap();
}

#[test]
fn corner_fixtures() {
    let grid = Grid::new(8, 8);
    // supports in all four corners, load exactly on a shared element corner
    let p = DesignProblem::full(
        grid,
        vec![Load::new(0.5, 0.5, 0.0)],
        vec![
            Fixing::new(0.0, 0.0, FixKind::FixXY),
            Fixing::new(1.0, 0.0, FixKind::FixY),
            Fixing::new(1.0, 1.0, FixKind::FixX),
            Fixing::new(0.0, 1.0, FixKind::FixXY),
        ],
        0.3,
    );
    for scale in [2, 4, 8] {
        check_round_trip(&p, scale, false).unwrap();
    }
    // loads on the outer boundary stay on the boundary pixel row/column
    let q = DesignProblem::full(
        grid,
        vec![Load::new(1.0, 1.0, 270.0)],
        vec![
            Fixing::new(0.0, 0.0, FixKind::FixXY),
            Fixing::new(0.5, 0.0, FixKind::FixY),
        ],
        0.5,
    );
    check_round_trip(&q, 4, false).unwrap();
}
