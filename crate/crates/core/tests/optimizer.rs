mod common;

use agecgan_core::optim::{lbfgsb_minimize, Bounds, Evaluation, LbfgsbConfig, Termination};
use agecgan_core::Result;
use common::problems::{reference_solve, rosenbrock, BoxQuadratic};
use proptest::prelude::*;

#[test]
fn rosenbrock_matches_reference_solver() {
    let bounds = Bounds::uniform(2, -3.0, 3.0);
    let cfg = LbfgsbConfig {
        max_iter: 200,
        ..Default::default()
    };
    let r = lbfgsb_minimize(rosenbrock, &[-1.2, 1.0], &bounds, &cfg).unwrap();
    assert!(r.f < 1e-6, "f = {} after {} iterations", r.f, r.iterations);
    let (xr, fr) = reference_solve(rosenbrock, &[-1.2, 1.0], -3.0, 3.0);
    assert!(fr < 1e-6);
    for (a, b) in r.x.iter().zip(&xr) {
        assert!((a - b).abs() < 1e-4, "{:?} vs {:?}", r.x, xr);
    }
}

#[test]
fn box_quadratics_match_active_set_enumeration() {
    for seed in 0..40 {
        let dim = 2 + (seed as usize % 4);
        let problem = BoxQuadratic::random(dim, seed);
        let expected = problem.brute_force();
        let bounds = Bounds::uniform(dim, problem.lo, problem.hi);
        let cfg = LbfgsbConfig {
            tol: 1e-9,
            max_iter: 500,
            ..Default::default()
        };
        let r =
            lbfgsb_minimize(|x: &[f64]| problem.eval(x), &vec![0.0; dim], &bounds, &cfg).unwrap();
        for (a, b) in r.x.iter().zip(&expected) {
            assert!(
                (a - b).abs() < 1e-4,
                "seed {seed}: {:?} vs {:?}",
                r.x,
                expected
            );
        }
    }
}

#[test]
fn line_search_failure_falls_back_then_stops() {
    // Gradient reports a slope the objective never delivers.
    let bounds = Bounds::uniform(1, -3.0, 3.0);
    let liar = |x: &[f64]| -> Result<Evaluation> { Ok((1.0 + 1e-3 * x[0] * x[0], vec![-1.0])) };
    let r = lbfgsb_minimize(liar, &[0.0], &bounds, &Default::default()).unwrap();
    assert_eq!(r.termination, Termination::LineSearchFailed);
    assert_eq!(r.x, vec![0.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn traces_are_monotone_and_iterates_feasible(
        seed in 0u64..10_000,
        dim in 1usize..6,
        start in proptest::collection::vec(-1.0f64..1.0, 6),
    ) {
        let problem = BoxQuadratic::random(dim, seed);
        let bounds = Bounds::uniform(dim, problem.lo, problem.hi);
        let mut visited = Vec::new();
        let r = lbfgsb_minimize(
            |x: &[f64]| {
                visited.push(x.to_vec());
                problem.eval(x)
            },
            &start[..dim],
            &bounds,
            &Default::default(),
        )
        .unwrap();
        for w in r.trace.windows(2) {
            prop_assert!(w[1].f <= w[0].f);
        }
        for x in &visited {
            prop_assert!(bounds.contains(x));
        }
        prop_assert!(r.f <= r.trace[0].f);
    }

    #[test]
    fn rosenbrock_from_random_starts_stays_in_box(a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let bounds = Bounds::uniform(2, -3.0, 3.0);
        let r = lbfgsb_minimize(rosenbrock, &[a, b], &bounds, &Default::default()).unwrap();
        prop_assert!(bounds.contains(&r.x));
        for w in r.trace.windows(2) {
            prop_assert!(w[1].f <= w[0].f);
        }
    }
}
