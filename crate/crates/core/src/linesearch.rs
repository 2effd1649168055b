//! Step length along a descent direction.
//!
//! The step is the largest `h` such that every objective keeps a
//! non-positive directional derivative on `(0, h)`, capped so that
//! `θ + h w` stays feasible. The derivative condition is located by
//! doubling from `h0`, refining the first failing bracket on a uniform grid
//! and bisecting to a relative tolerance. Sampling is exact for objectives
//! whose directional derivative changes sign at most once along a ray
//! (quadratics, sums of convex exponentials, least squares).

use crate::error::{check_len, Error, Result};
use crate::linalg::{axpy, dot, norm};
use crate::model::ProblemSpec;

/// Slack on each directional derivative, relative to `‖∇F_i‖ ‖w‖`. When an
/// objective starts with zero slope and positive curvature, the strict rule
/// gives `h = 0`; the slack admits steps of order `1e-8 / curvature`, over
/// which the objective rises by about `1e-16`.
pub const DERIVATIVE_SLACK: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOptions {
    pub h0: f64,
    pub max_doublings: u32,
    pub h_rel_tol: f64,
    pub grad_tol: f64,
    pub h_min: f64,
    pub feas_tol: f64,
    /// Grid points used to refine the first failing bracket.
    pub grid: usize,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            h0: 1e-3,
            max_doublings: 60,
            h_rel_tol: 1e-6,
            grad_tol: 0.0,
            h_min: 1e-12,
            feas_tol: 1e-8,
            grid: 32,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub h: f64,
    /// Points along the ray at which gradients were evaluated.
    pub evaluations: usize,
    /// `h` was set by the feasibility cap or by collapse to `h_min`, not by
    /// an objective turning upward.
    pub boundary_limited: bool,
}

struct Ray<'a> {
    problem: &'a ProblemSpec,
    point: &'a [f64],
    w: &'a [f64],
    /// Per-objective allowance on the derivative: `grad_tol` plus
    /// [`DERIVATIVE_SLACK`].
    allowance: Vec<f64>,
    evaluations: usize,
}

impl Ray<'_> {
    fn at(&self, t: f64) -> Vec<f64> {
        axpy(self.point, t, self.w)
    }

    /// Every directional derivative at `θ + t w` is within its allowance.
    fn non_increasing(&mut self, t: f64) -> Result<bool> {
        self.evaluations += 1;
        let x = self.at(t);
        for (obj, &allow) in self.problem.objectives().iter().zip(&self.allowance) {
            let g = obj.gradient(&x);
            check_len(self.w.len(), g.len())?;
            if !(dot(&g, self.w) <= allow) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Largest `h` keeping `θ + h w` within every constraint.
///
/// Affine rows and bounds use an exact ratio test. Other constraints are
/// convex along the ray, so their feasible set in `h` is an interval from
/// zero; its end is found by doubling and bisection. A constraint may not
/// grow beyond `max(feas_tol / 2, f_i(θ))`.
fn feasibility_cap(
    problem: &ProblemSpec,
    point: &[f64],
    w: &[f64],
    opts: &StepOptions,
) -> Result<f64> {
    let mut cap = f64::INFINITY;
    let wn = norm(w);
    let mut ratio = |a_w: f64, slack: f64, scale: f64| {
        if a_w > 1e-11 * scale {
            cap = cap.min(slack.max(0.0) / a_w);
        }
    };
    if let Some(lin) = problem.linear_constraints() {
        for (a, b) in lin.rows.iter().zip(&lin.rhs) {
            ratio(dot(a, w), b - dot(a, point), norm(a) * wn);
        }
    }
    if let Some(bounds) = problem.bounds() {
        for j in 0..point.len() {
            ratio(w[j], bounds.upper[j] - point[j], wn);
            ratio(-w[j], point[j] - bounds.lower[j], wn);
        }
    }
    if problem.linear_constraints().is_some() || problem.num_constraints() == 0 {
        return Ok(cap);
    }

    let limits: Vec<f64> = problem
        .constraints()
        .iter()
        .map(|c| c.value(point).max(0.5 * opts.feas_tol))
        .collect();
    let inside = |t: f64| {
        let x = axpy(point, t, w);
        problem
            .constraints()
            .iter()
            .zip(&limits)
            .all(|(c, &lim)| c.value(&x) <= lim)
    };
    let h_max = opts.h0 * 2f64.powi(opts.max_doublings as i32);
    let top = cap.min(h_max);
    if inside(top) {
        return Ok(cap);
    }
    let (mut lo, mut hi) = (0.0, top);
    let mut t = opts.h0.min(top);
    while t < top {
        if !inside(t) {
            hi = t;
            break;
        }
        lo = t;
        t *= 2.0;
    }
    while hi - lo > opts.h_rel_tol * hi && hi > opts.h_min {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Step length along `w` from a feasible `point`.
///
/// Errors if `w` increases some objective to first order or if `point` is
/// infeasible.
pub fn monotone_step(
    problem: &ProblemSpec,
    point: &[f64],
    w: &[f64],
    opts: &StepOptions,
) -> Result<StepResult> {
    let dim = problem.dimension();
    check_len(dim, point.len())?;
    check_len(dim, w.len())?;
    let violation = problem.max_violation(point)?;
    if violation > opts.feas_tol {
        return Err(Error::Contract(format!(
            "step requested from an infeasible point (violation {violation:.3e})"
        )));
    }
    let wn = norm(w);
    if wn == 0.0 {
        return Ok(StepResult {
            h: 0.0,
            evaluations: 0,
            boundary_limited: false,
        });
    }
    let grads = problem.evaluate_gradients(point)?;
    let mut allowance = Vec::with_capacity(grads.n());
    for (t, g) in grads.rows().enumerate() {
        let slope = dot(g, w);
        let gn = norm(g) * wn;
        if slope > 1e-8 * (1.0 + gn) {
            return Err(Error::Contract(format!(
                "direction is not a descent direction: objective {t} has slope {slope:.3e}"
            )));
        }
        allowance.push(opts.grad_tol + DERIVATIVE_SLACK * gn);
    }
    let mut ray = Ray {
        problem,
        point,
        w,
        allowance,
        evaluations: 0,
    };

    let cap = feasibility_cap(problem, point, w, opts)?;
    if cap < opts.h_min {
        return Ok(StepResult {
            h: cap,
            evaluations: ray.evaluations,
            boundary_limited: true,
        });
    }

    // Doubling: find the first sampled point where some derivative is positive.
    let mut last_good = 0.0;
    let mut failing = None;
    let mut t = opts.h0;
    for _ in 0..=opts.max_doublings {
        let probe = t.min(cap);
        if !ray.non_increasing(probe)? {
            failing = Some(probe);
            break;
        }
        last_good = probe;
        if probe >= cap {
            break;
        }
        t *= 2.0;
    }

    let (h, boundary_limited) = match failing {
        None => (last_good, last_good >= cap),
        Some(hi) => {
            let (mut lo, mut hi) = refine_on_grid(&mut ray, last_good, hi, opts.grid)?;
            while hi - lo > opts.h_rel_tol * hi && hi > opts.h_min {
                let mid = 0.5 * (lo + hi);
                if ray.non_increasing(mid)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if lo < opts.h_min {
                (opts.h_min.min(cap), true)
            } else {
                (lo, false)
            }
        }
    };

    let h = guard_values(problem, point, w, h)?;
    Ok(StepResult {
        h,
        evaluations: ray.evaluations,
        boundary_limited,
    })
}

/// Shrink `[lo, hi]` to the first cell of a uniform grid whose right end fails.
fn refine_on_grid(ray: &mut Ray<'_>, lo: f64, hi: f64, grid: usize) -> Result<(f64, f64)> {
    let cells = grid.max(1);
    let step = (hi - lo) / cells as f64;
    let mut left = lo;
    for k in 1..cells {
        let t = lo + step * k as f64;
        if !ray.non_increasing(t)? {
            return Ok((left, t));
        }
        left = t;
    }
    Ok((left, hi))
}

/// Halve `h` while some objective ends above its starting value. Catches
/// derivative sign changes that fall between samples.
fn guard_values(problem: &ProblemSpec, point: &[f64], w: &[f64], mut h: f64) -> Result<f64> {
    let f0 = problem.evaluate_objectives(point)?;
    for _ in 0..64 {
        if h == 0.0 {
            break;
        }
        let f = problem.evaluate_objectives(&axpy(point, h, w))?;
        if f.iter()
            .zip(&f0)
            .all(|(a, b)| *a <= b + 1e-12 * (1.0 + b.abs()))
        {
            return Ok(h);
        }
        h *= 0.5;
    }
    Ok(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FnOracle;

    fn parabola() -> ProblemSpec {
        ProblemSpec::builder(1)
            .objective(FnOracle::new(|x| x[0] * x[0], |x| vec![2.0 * x[0]]))
            .build()
            .unwrap()
    }

    #[test]
    fn one_dimensional_quadratic_stops_at_minimum() {
        let r = monotone_step(&parabola(), &[1.0], &[-1.0], &StepOptions::default()).unwrap();
        assert!((r.h - 1.0).abs() < 1e-5, "h = {}", r.h);
        assert!(r.h <= 1.0 + 1e-12);
        assert!(!r.boundary_limited);
    }

    #[test]
    fn linear_objective_runs_to_the_bound() {
        let p = ProblemSpec::builder(2)
            .objective(FnOracle::new(|x| -x[0] - x[1], |_| vec![-1.0, -1.0]))
            .bounds(vec![-5.0, -5.0], vec![2.0, 3.0])
            .build()
            .unwrap();
        let r = monotone_step(&p, &[0.0, 0.0], &[1.0, 0.5], &StepOptions::default()).unwrap();
        assert!((r.h - 2.0).abs() < 1e-12);
        assert!(r.boundary_limited);
    }

    #[test]
    fn affine_rows_cap_the_step() {
        let p = ProblemSpec::builder(2)
            .objective(FnOracle::new(|x| -x[0], |_| vec![-1.0, 0.0]))
            .linear_constraints(vec![vec![1.0, 1.0]], vec![1.0])
            .build()
            .unwrap();
        let r = monotone_step(&p, &[0.0, 0.0], &[1.0, 0.0], &StepOptions::default()).unwrap();
        assert!((r.h - 1.0).abs() < 1e-12 && r.boundary_limited);
    }

    #[test]
    fn convex_constraint_is_bisected() {
        let p = ProblemSpec::builder(2)
            .objective(FnOracle::new(|x| -x[0], |_| vec![-1.0, 0.0]))
            .constraint(FnOracle::new(
                |x| x[0] * x[0] + x[1] * x[1] - 1.0,
                |x| vec![2.0 * x[0], 2.0 * x[1]],
            ))
            .build()
            .unwrap();
        let r = monotone_step(&p, &[0.0, 0.0], &[1.0, 0.0], &StepOptions::default()).unwrap();
        assert!((r.h - 1.0).abs() < 1e-5 && r.boundary_limited, "{r:?}");
        assert!(p.max_violation(&[r.h, 0.0]).unwrap() <= 1e-8);
    }

    #[test]
    fn ascent_direction_is_rejected() {
        assert!(monotone_step(&parabola(), &[1.0], &[1.0], &StepOptions::default()).is_err());
    }

    #[test]
    fn flat_start_collapses_to_h_min() {
        // At the minimum any move increases the objective.
        let r = monotone_step(&parabola(), &[0.0], &[1.0], &StepOptions::default()).unwrap();
        assert!(r.h <= 1e-12 && r.boundary_limited);
    }

    #[test]
    fn two_objectives_stop_at_first_turn() {
        // (x-1)² turns at 1, (x-3)² at 3.
        let p = ProblemSpec::builder(1)
            .objective(FnOracle::new(
                |x| (x[0] - 1.0).powi(2),
                |x| vec![2.0 * (x[0] - 1.0)],
            ))
            .objective(FnOracle::new(
                |x| (x[0] - 3.0).powi(2),
                |x| vec![2.0 * (x[0] - 3.0)],
            ))
            .build()
            .unwrap();
        let r = monotone_step(&p, &[0.0], &[1.0], &StepOptions::default()).unwrap();
        assert!((r.h - 1.0).abs() < 1e-5);
    }
}
