//! Direction subproblems of the two-stage method.
//!
//! Stage one (min–max) solves
//!
//! ```text
//! min_d  max_t ∇F_tᵀd   s.t.  f_i(θ + d) ≤ 0,  ∇F_tᵀd ≤ 0,  ‖d‖ ≤ 1
//! ```
//!
//! in epigraph form (`min η`, `∇F_tᵀd ≤ η`). Stage two (min–min) replaces the
//! outer `max` by `min` and is solved as `n` linear programs, one per
//! objective, keeping the best.
//!
//! With affine constraints the rows `f_i(θ + d) ≤ 0` are exact. General
//! convex constraints are replaced by `f_i(θ) + η_lin ∇f_i(θ)ᵀd ≤ 0`.
//!
//! The unit ball is handled in one of two ways:
//! * [`NormMode::BoxPostscale`] (default) solves over the box `‖d‖∞ ≤ 1`
//!   and rescales the result into the Euclidean ball;
//! * [`NormMode::ExactL2`] refines the box with tangent cuts `uᵀd ≤ 1`
//!   until the LP optimum lies on the ball, which reproduces the exact
//!   Euclidean subproblem.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, scale};
use crate::lp::{solve_lp, LpProblem, LpStatus};
use crate::model::{GradientMatrix, ProblemSpec};

/// Cutting stops once the LP optimum is this close to the unit ball. The
/// objective error is second order in the angular error, about `1e-12`.
const NORM_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Stage {
    MinMax,
    MinMin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DirectionStatus {
    Descent,
    Stationary,
    SubproblemFailed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectionResult {
    pub d: Vec<f64>,
    /// Stage one: `max_t ∇F_tᵀd`; stage two: `min_t ∇F_tᵀd`, at the returned `d`.
    pub eta: f64,
    pub stage: Stage,
    pub status: DirectionStatus,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConstraintMode {
    /// Exact rows when the problem is affine, otherwise linearized with the
    /// configured `eta_lin`.
    Auto,
    ExactLinear,
    Linearized {
        eta_lin: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    BoxPostscale,
    ExactL2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectionOptions {
    pub stationarity_tol: f64,
    pub feas_tol: f64,
    pub constraint_mode: ConstraintMode,
    pub eta_lin: f64,
    pub norm_mode: NormMode,
    /// Cut budget of the exact Euclidean mode.
    pub max_cuts: usize,
}

impl Default for DirectionOptions {
    fn default() -> Self {
        Self {
            stationarity_tol: 1e-7,
            feas_tol: 1e-8,
            constraint_mode: ConstraintMode::Auto,
            eta_lin: 0.1,
            norm_mode: NormMode::BoxPostscale,
            max_cuts: 200,
        }
    }
}

/// Affine rows `R d ≤ r` in the direction variable.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearRows {
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

/// Constraint rows over `d` at `point`.
///
/// `ExactLinear` emits `A d ≤ b − Aθ` and requires the problem to carry its
/// affine form. `Linearized` emits `∇f_i(θ)ᵀd ≤ −f_i(θ)/η_lin`. Variable
/// bounds are not included; they become bounds on `d` (see
/// [`direction_box`]).
pub fn build_constraint_rows(
    problem: &ProblemSpec,
    point: &[f64],
    mode: ConstraintMode,
) -> Result<LinearRows> {
    let mode = match mode {
        ConstraintMode::Auto if problem.is_linear() => ConstraintMode::ExactLinear,
        ConstraintMode::Auto => ConstraintMode::Linearized { eta_lin: 0.1 },
        m => m,
    };
    crate::error::check_len(problem.dimension(), point.len())?;
    match mode {
        ConstraintMode::ExactLinear => {
            if problem.num_constraints() == 0 {
                return Ok(LinearRows::default());
            }
            let lin = problem.linear_constraints().ok_or_else(|| {
                Error::Contract(
                    "exact rows requested for a problem with nonlinear constraints".into(),
                )
            })?;
            Ok(LinearRows {
                rows: lin.rows.clone(),
                rhs: lin
                    .rows
                    .iter()
                    .zip(&lin.rhs)
                    .map(|(a, b)| b - dot(a, point))
                    .collect(),
            })
        }
        ConstraintMode::Linearized { eta_lin } => {
            if !(eta_lin > 0.0) {
                return Err(Error::Contract(format!(
                    "η_lin = {eta_lin} must be positive"
                )));
            }
            let mut rows = LinearRows::default();
            for c in problem.constraints() {
                let g = c.gradient(point);
                crate::error::check_len(problem.dimension(), g.len())?;
                rows.rhs.push(-c.value(point) / eta_lin);
                rows.rows.push(g);
            }
            Ok(rows)
        }
        ConstraintMode::Auto => unreachable!(),
    }
}

/// Box for `d`: `‖d‖∞ ≤ 1` intersected with the shifted variable bounds.
pub fn direction_box(problem: &ProblemSpec, point: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = problem.dimension();
    let mut lo = vec![-1.0_f64; d];
    let mut up = vec![1.0_f64; d];
    if let Some(b) = problem.bounds() {
        for j in 0..d {
            lo[j] = lo[j].max(b.lower[j] - point[j]);
            up[j] = up[j].min(b.upper[j] - point[j]);
            // Roundoff can leave the point a hair outside a bound.
            if lo[j] > up[j] && lo[j] - up[j] < 1e-12 {
                let mid = 0.5 * (lo[j] + up[j]);
                lo[j] = mid;
                up[j] = mid;
            }
        }
    }
    (lo, up)
}

/// `d` if `‖d‖₂ ≤ 1`, else `d / ‖d‖₂`.
pub fn norm_postscale(d: &[f64]) -> Vec<f64> {
    let n = norm(d);
    if n > 1.0 {
        scale(d, 1.0 / n)
    } else {
        d.to_vec()
    }
}

struct Subproblem {
    rows: LinearRows,
    lo: Vec<f64>,
    up: Vec<f64>,
}

impl Subproblem {
    fn relaxed(&self, by: f64) -> Self {
        Self {
            rows: LinearRows {
                rows: self.rows.rows.clone(),
                rhs: self.rows.rhs.iter().map(|r| r + by).collect(),
            },
            lo: self.lo.iter().map(|v| (v - by).min(0.0)).collect(),
            up: self.up.iter().map(|v| (v + by).max(0.0)).collect(),
        }
    }
}

fn prepare(
    problem: &ProblemSpec,
    point: &[f64],
    gradients: &GradientMatrix,
    opts: &DirectionOptions,
) -> Result<Subproblem> {
    let d = problem.dimension();
    crate::error::check_len(d, point.len())?;
    crate::error::check_len(d, gradients.dim())?;
    crate::error::check_len(problem.num_objectives(), gradients.n())?;
    let violation = problem.max_violation(point)?;
    if violation > opts.feas_tol {
        return Err(Error::Contract(format!(
            "direction requested at an infeasible point (violation {violation:.3e})"
        )));
    }
    let mode = match opts.constraint_mode {
        ConstraintMode::Auto if !problem.is_linear() => ConstraintMode::Linearized {
            eta_lin: opts.eta_lin,
        },
        m => m,
    };
    let rows = build_constraint_rows(problem, point, mode)?;
    let (lo, up) = direction_box(problem, point);
    Ok(Subproblem { rows, lo, up })
}

/// Which LP a stage solves.
#[derive(Clone, Copy)]
enum Objective {
    /// `min η` with `∇F_tᵀd ≤ η` rows.
    Epigraph,
    /// `min ∇F_kᵀd`.
    Single(usize),
}

/// Solve one direction LP, with tangent cuts in exact-ℓ₂ mode. Returns the
/// unscaled LP solution restricted to `d`.
fn solve_direction_lp(
    sub: &Subproblem,
    gradients: &GradientMatrix,
    objective: Objective,
    opts: &DirectionOptions,
) -> Result<Option<Vec<f64>>> {
    let dim = gradients.dim();
    let with_eta = matches!(objective, Objective::Epigraph);
    let k = dim + usize::from(with_eta);

    let mut c = vec![0.0; k];
    match objective {
        Objective::Epigraph => c[dim] = 1.0,
        Objective::Single(t) => c[..dim].copy_from_slice(gradients.row(t)),
    }
    let mut lower = sub.lo.clone();
    let mut upper = sub.up.clone();
    if with_eta {
        lower.push(f64::NEG_INFINITY);
        upper.push(f64::INFINITY);
    }
    let mut lp = LpProblem::new(c).with_bounds(lower, upper);
    let pad = |row: &[f64], eta_coef: f64| {
        let mut r = row.to_vec();
        if with_eta {
            r.push(eta_coef);
        }
        r
    };
    if with_eta {
        for g in gradients.rows() {
            lp = lp.with_row(pad(g, -1.0), 0.0);
        }
    }
    for g in gradients.rows() {
        lp = lp.with_row(pad(g, 0.0), 0.0);
    }
    for (row, &rhs) in sub.rows.rows.iter().zip(&sub.rows.rhs) {
        lp = lp.with_row(pad(row, 0.0), rhs);
    }

    let cuts = match opts.norm_mode {
        NormMode::BoxPostscale => 0,
        NormMode::ExactL2 => opts.max_cuts,
    };
    let mut d;
    let mut round = 0;
    loop {
        let sol = solve_lp(&lp)?;
        if sol.status != LpStatus::Optimal {
            return Ok(None);
        }
        d = sol.x[..dim].to_vec();
        let n = norm(&d);
        if round >= cuts || n <= 1.0 + NORM_SLACK {
            break;
        }
        round += 1;
        let cut: Vec<f64> = d.iter().map(|v| v / n).collect();
        lp = lp.with_row(pad(&cut, 0.0), 1.0);
    }
    Ok(Some(d))
}

fn solve_with_relaxation(
    sub: &Subproblem,
    gradients: &GradientMatrix,
    objective: Objective,
    opts: &DirectionOptions,
) -> Result<Option<Vec<f64>>> {
    match solve_direction_lp(sub, gradients, objective, opts)? {
        Some(d) => Ok(Some(d)),
        None => solve_direction_lp(&sub.relaxed(1e-10), gradients, objective, opts),
    }
}

fn failed(dim: usize, stage: Stage) -> DirectionResult {
    DirectionResult {
        d: vec![0.0; dim],
        eta: f64::NAN,
        stage,
        status: DirectionStatus::SubproblemFailed,
    }
}

fn finish(d: Vec<f64>, eta: f64, stage: Stage, opts: &DirectionOptions) -> DirectionResult {
    if eta >= -opts.stationarity_tol {
        DirectionResult {
            d: vec![0.0; d.len()],
            eta,
            stage,
            status: DirectionStatus::Stationary,
        }
    } else {
        DirectionResult {
            d,
            eta,
            stage,
            status: DirectionStatus::Descent,
        }
    }
}

/// Min–max direction: minimizes the largest directional derivative.
pub fn stage1_direction(
    problem: &ProblemSpec,
    point: &[f64],
    gradients: &GradientMatrix,
    opts: &DirectionOptions,
) -> Result<DirectionResult> {
    let sub = prepare(problem, point, gradients, opts)?;
    let Some(raw) = solve_with_relaxation(&sub, gradients, Objective::Epigraph, opts)? else {
        return Ok(failed(gradients.dim(), Stage::MinMax));
    };
    let d = norm_postscale(&raw);
    let eta = gradients
        .directional(&d)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(finish(d, eta, Stage::MinMax, opts))
}

/// Min–min direction: minimizes the smallest directional derivative while
/// keeping every derivative non-positive.
pub fn stage2_direction(
    problem: &ProblemSpec,
    point: &[f64],
    gradients: &GradientMatrix,
    opts: &DirectionOptions,
) -> Result<DirectionResult> {
    let sub = prepare(problem, point, gradients, opts)?;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for t in 0..gradients.n() {
        let Some(raw) = solve_with_relaxation(&sub, gradients, Objective::Single(t), opts)? else {
            return Ok(failed(gradients.dim(), Stage::MinMin));
        };
        let value = dot(gradients.row(t), &raw);
        let improves = match &best {
            None => true,
            Some((v, _)) => value < v - 1e-12 * (1.0 + v.abs()),
        };
        if improves {
            best = Some((value, raw));
        }
    }
    let (_, raw) = best.expect("at least one objective");
    let d = norm_postscale(&raw);
    let eta = gradients
        .directional(&d)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    Ok(finish(d, eta, Stage::MinMin, opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FnOracle, ProblemSpec};

    fn free_problem(dim: usize) -> ProblemSpec {
        ProblemSpec::builder(dim)
            .objective(FnOracle::new(|_| 0.0, move |_| vec![0.0; dim]))
            .objective(FnOracle::new(|_| 0.0, move |_| vec![0.0; dim]))
            .build()
            .unwrap()
    }

    fn gm(rows: &[&[f64]]) -> GradientMatrix {
        GradientMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn postscale_examples() {
        assert_eq!(norm_postscale(&[0.3, 0.4]), vec![0.3, 0.4]);
        let s = norm_postscale(&[1.0, 1.0]);
        assert!((s[0] - 0.5_f64.sqrt()).abs() < 1e-15);
        assert_eq!(norm_postscale(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn exact_rows_shift_by_point() {
        let p = ProblemSpec::builder(3)
            .objective(FnOracle::new(|x| x[0], |_| vec![1.0, 0.0, 0.0]))
            .linear_constraints(vec![vec![1.0, 1.0, 1.0]], vec![1.0])
            .build()
            .unwrap();
        let rows =
            build_constraint_rows(&p, &[0.0, 0.0, 0.0], ConstraintMode::ExactLinear).unwrap();
        assert_eq!(rows.rows, vec![vec![1.0, 1.0, 1.0]]);
        assert_eq!(rows.rhs, vec![1.0]);
    }

    #[test]
    fn linearized_rows() {
        let ball = ProblemSpec::builder(2)
            .objective(FnOracle::new(|x| x[0], |_| vec![1.0, 0.0]))
            .constraint(FnOracle::new(
                |x| x[0] * x[0] + x[1] * x[1] - 1.0,
                |x| vec![2.0 * x[0], 2.0 * x[1]],
            ))
            .build()
            .unwrap();
        let rows = build_constraint_rows(
            &ball,
            &[1.0, 0.0],
            ConstraintMode::Linearized { eta_lin: 1.0 },
        )
        .unwrap();
        assert_eq!(rows.rows, vec![vec![2.0, 0.0]]);
        assert_eq!(rows.rhs[0], 0.0);

        let slack = ProblemSpec::builder(2)
            .objective(FnOracle::new(|x| x[0], |_| vec![1.0, 0.0]))
            .constraint(FnOracle::new(|_| -5.0, |_| vec![1.0, 0.0]))
            .build()
            .unwrap();
        let rows = build_constraint_rows(
            &slack,
            &[0.0, 0.0],
            ConstraintMode::Linearized { eta_lin: 1.0 },
        )
        .unwrap();
        assert_eq!(rows.rows, vec![vec![1.0, 0.0]]);
        assert_eq!(rows.rhs, vec![5.0]);

        assert!(build_constraint_rows(&ball, &[1.0, 0.0], ConstraintMode::ExactLinear).is_err());
        assert!(build_constraint_rows(
            &ball,
            &[1.0, 0.0],
            ConstraintMode::Linearized { eta_lin: 0.0 }
        )
        .is_err());
    }

    #[test]
    fn opposed_gradients_are_stationary() {
        let p = free_problem(2);
        let g = gm(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        for norm_mode in [NormMode::BoxPostscale, NormMode::ExactL2] {
            let opts = DirectionOptions {
                norm_mode,
                ..Default::default()
            };
            let r1 = stage1_direction(&p, &[0.0, 0.0], &g, &opts).unwrap();
            assert_eq!(r1.status, DirectionStatus::Stationary);
            assert_eq!(r1.d, vec![0.0, 0.0]);
            let r2 = stage2_direction(&p, &[0.0, 0.0], &g, &opts).unwrap();
            assert_eq!(r2.status, DirectionStatus::Stationary);
        }
    }

    #[test]
    fn duplicated_gradient_is_steepest_descent() {
        let p = free_problem(2);
        let g = gm(&[&[3.0, -4.0], &[3.0, -4.0]]);
        let opts = DirectionOptions {
            norm_mode: NormMode::ExactL2,
            ..Default::default()
        };
        let r = stage1_direction(&p, &[0.0, 0.0], &g, &opts).unwrap();
        assert!(
            (r.d[0] + 0.6).abs() < 1e-6 && (r.d[1] - 0.8).abs() < 1e-6,
            "{:?}",
            r.d
        );
        assert!((r.eta + 5.0).abs() < 1e-6);
    }

    #[test]
    fn box_mode_descends_and_stays_in_ball() {
        let p = free_problem(2);
        let g = gm(&[&[-1.0, 2.0], &[3.0, 1.0]]);
        let r = stage1_direction(&p, &[0.0, 0.0], &g, &DirectionOptions::default()).unwrap();
        assert_eq!(r.status, DirectionStatus::Descent);
        assert!(norm(&r.d) <= 1.0 + 1e-12);
        assert!(g.directional(&r.d).iter().all(|&v| v < -1e-10));
    }

    #[test]
    fn infeasible_point_is_rejected() {
        let p = ProblemSpec::builder(1)
            .objective(FnOracle::new(|x| x[0], |_| vec![1.0]))
            .linear_constraints(vec![vec![1.0]], vec![0.0])
            .build()
            .unwrap();
        let g = gm(&[&[1.0]]);
        assert!(stage1_direction(&p, &[1.0], &g, &DirectionOptions::default()).is_err());
    }
}
