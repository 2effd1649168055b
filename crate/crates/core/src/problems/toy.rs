//! Two Gaussian wells in three dimensions, separated by a slab.
//!
//! `f_{1,2}(x) = 1 − exp(−Σ_i (x_i ± 1/√3)²)` subject to `−1 ≤ Σ x_i ≤ 1`.
//! The wells sit at `∓(1/√3)(1,1,1)`, both outside the slab, so the
//! constrained Pareto set is the segment `t (1,1,1)`, `|t| ≤ 1/3`.

use crate::error::{Error, Result};
use crate::model::{FnOracle, ProblemSpec};

/// Half-length of the Pareto segment in the `t` parametrization.
pub const TOY_T_MAX: f64 = 1.0 / 3.0;

fn well(center: f64) -> FnOracle {
    FnOracle::new(
        move |x| 1.0 - (-sq_dist(x, center)).exp(),
        move |x| {
            let e = (-sq_dist(x, center)).exp();
            x.iter().map(|xi| 2.0 * e * (xi - center)).collect()
        },
    )
}

fn sq_dist(x: &[f64], center: f64) -> f64 {
    x.iter().map(|xi| (xi - center) * (xi - center)).sum()
}

pub fn toy_problem() -> ProblemSpec {
    let c = 1.0 / 3f64.sqrt();
    ProblemSpec::builder(3)
        .objective(well(-c))
        .objective(well(c))
        .linear_constraints(vec![vec![1.0; 3], vec![-1.0; 3]], vec![1.0, 1.0])
        .build()
        .expect("toy problem is well formed")
}

/// Objective pair at `t (1,1,1)`.
pub fn toy_analytic_front(t: f64) -> Result<(f64, f64)> {
    if !(t.abs() <= TOY_T_MAX) {
        return Err(Error::Contract(format!("t = {t} outside [-1/3, 1/3]")));
    }
    let c = 1.0 / 3f64.sqrt();
    Ok((
        1.0 - (-3.0 * (t + c).powi(2)).exp(),
        1.0 - (-3.0 * (t - c).powi(2)).exp(),
    ))
}

/// Euclidean distance from `x` to the Pareto segment.
pub fn toy_pareto_distance(x: &[f64]) -> f64 {
    let t = (x.iter().sum::<f64>() / 3.0).clamp(-TOY_T_MAX, TOY_T_MAX);
    x.iter().map(|xi| (xi - t) * (xi - t)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_values_and_slacks() {
        let p = toy_problem();
        let f = p.evaluate_objectives(&[0.0; 3]).unwrap();
        let expected = 1.0 - (-1.0f64).exp();
        assert!((f[0] - expected).abs() < 1e-15 && (f[1] - expected).abs() < 1e-15);
        let slack: Vec<f64> = p
            .constraint_values(&[0.0; 3])
            .unwrap()
            .iter()
            .map(|v| -v)
            .collect();
        assert_eq!(slack, vec![1.0, 1.0]);
    }

    #[test]
    fn well_center_is_zero_and_infeasible() {
        let p = toy_problem();
        let c = -1.0 / 3f64.sqrt();
        let f = p.evaluate_objectives(&[c; 3]).unwrap();
        assert!(f[0].abs() < 1e-15);
        assert!(!p.check_feasibility(&[c; 3], 1e-8).unwrap().is_feasible);
    }

    #[test]
    fn analytic_front_matches_objectives() {
        let p = toy_problem();
        for k in -10..=10 {
            let t = k as f64 / 30.0;
            let (f1, f2) = toy_analytic_front(t).unwrap();
            let f = p.evaluate_objectives(&[t; 3]).unwrap();
            assert!((f[0] - f1).abs() < 1e-14 && (f[1] - f2).abs() < 1e-14);
        }
        assert!(toy_analytic_front(0.34).is_err());
        assert!(toy_analytic_front(f64::NAN).is_err());
    }

    #[test]
    fn distance_to_segment() {
        assert!(toy_pareto_distance(&[0.2; 3]) < 1e-15);
        let d = toy_pareto_distance(&[1.0, 0.0, 0.0]);
        // Projection onto the line is (1/3)(1,1,1).
        assert!((d - (4.0f64 / 9.0 + 2.0 / 9.0).sqrt()).abs() < 1e-15);
        let far = toy_pareto_distance(&[1.0, 1.0, 1.0]);
        assert!((far - (3.0f64 * (2.0 / 3.0) * (2.0 / 3.0)).sqrt()).abs() < 1e-15);
    }
}
