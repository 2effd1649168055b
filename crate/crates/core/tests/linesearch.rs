use cmgd::direction::{stage1_direction, stage2_direction, DirectionOptions, DirectionStatus};
use cmgd::linesearch::{monotone_step, StepOptions};
use cmgd::problems::toy_problem;
use cmgd::ProblemSpec;

/// First grid point along the ray where some directional derivative turns
/// positive or the point leaves the feasible set.
fn grid_oracle(p: &ProblemSpec, x: &[f64], w: &[f64], spacing: f64, limit: f64) -> f64 {
    let mut t = 0.0;
    while t < limit {
        t += spacing;
        let y: Vec<f64> = x.iter().zip(w).map(|(a, b)| a + t * b).collect();
        let g = p.evaluate_gradients(&y).unwrap();
        if g.directional(w).iter().any(|&v| v > 0.0) || p.max_violation(&y).unwrap() > 1e-8 {
            return t;
        }
    }
    limit
}

#[test]
fn toy_step_matches_grid_oracle() {
    let p = toy_problem();
    let opts = StepOptions::default();
    for x in [
        [0.3, -0.2, 0.1],
        [-0.6, 0.1, 0.2],
        [0.5, 0.4, -0.5],
        [0.0, 0.3, 0.0],
    ] {
        let g = p.evaluate_gradients(&x).unwrap();
        let d = stage1_direction(&p, &x, &g, &DirectionOptions::default()).unwrap();
        assert_eq!(d.status, DirectionStatus::Descent);
        let r = monotone_step(&p, &x, &d.d, &opts).unwrap();
        let oracle = grid_oracle(&p, &x, &d.d, 1e-4, 10.0);
        assert!(
            r.h <= oracle + 1e-9 && r.h >= oracle - 1e-4 - 1e-9,
            "x={x:?} h={} oracle={oracle}",
            r.h
        );

        let before = p.evaluate_objectives(&x).unwrap();
        let y: Vec<f64> = x.iter().zip(&d.d).map(|(a, b)| a + r.h * b).collect();
        let after = p.evaluate_objectives(&y).unwrap();
        for (a, b) in after.iter().zip(&before) {
            assert!(*a <= b + 1e-9 * (1.0 + b.abs()));
        }
        assert!(p.max_violation(&y).unwrap() <= 1e-8);
        for frac in [0.25, 0.5, 0.75, 1.0] {
            let z: Vec<f64> = x
                .iter()
                .zip(&d.d)
                .map(|(a, b)| a + frac * r.h * b)
                .collect();
            let gz = p.evaluate_gradients(&z).unwrap();
            assert!(gz.directional(&d.d).iter().all(|&v| v <= 1e-7));
        }
        if !r.boundary_limited {
            let z: Vec<f64> = x
                .iter()
                .zip(&d.d)
                .map(|(a, b)| a + r.h * (1.0 + 4.0 * opts.h_rel_tol) * b)
                .collect();
            let gz = p.evaluate_gradients(&z).unwrap();
            assert!(gz.directional(&d.d).iter().any(|&v| v > -1e-7));
        }
    }
}

#[test]
fn stage2_steps_stay_monotone() {
    let p = toy_problem();
    let x = [0.5, -0.4, 0.3];
    let g = p.evaluate_gradients(&x).unwrap();
    let d = stage2_direction(&p, &x, &g, &DirectionOptions::default()).unwrap();
    let r = monotone_step(&p, &x, &d.d, &StepOptions::default()).unwrap();
    let oracle = grid_oracle(&p, &x, &d.d, 1e-4, 10.0);
    assert!(
        r.h <= oracle + 1e-9 && r.h >= oracle - 1e-4 - 1e-9,
        "h={} oracle={oracle}",
        r.h
    );
}
