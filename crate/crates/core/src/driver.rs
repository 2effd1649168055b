//! The two-stage outer loop and multi-start orchestration.
//!
//! Stage one repeats min–max direction + monotone step until the direction
//! certificate `η ≥ −tol` fires or `m1` iterations pass; stage two does the
//! same with min–min directions and budget `m2`. A stage also ends after
//! [`SolveOptions::stall_limit`] consecutive steps no longer than `h_min`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::direction::{
    stage1_direction, stage2_direction, DirectionOptions, DirectionResult, DirectionStatus, Stage,
};
use crate::error::{check_len, Error, Result};
use crate::linalg::axpy;
use crate::linesearch::{monotone_step, StepOptions};
use crate::model::{AffineMap, ProblemSpec};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub m1: usize,
    pub m2: usize,
    /// Stationarity threshold on the direction value `η`.
    pub tol: f64,
    pub feas_tol: f64,
    /// Seeds start sampling in [`multi_start`].
    pub seed: u64,
    pub stall_limit: usize,
    /// `stationarity_tol` and `feas_tol` are overridden by the fields above.
    pub direction: DirectionOptions,
    /// `feas_tol` is overridden by the field above.
    pub step: StepOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            m1: 200,
            m2: 50,
            tol: 1e-7,
            feas_tol: 1e-8,
            seed: 0,
            stall_limit: 3,
            direction: DirectionOptions::default(),
            step: StepOptions::default(),
        }
    }
}

impl SolveOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.feas_tol > 0.0) {
            return Err(Error::Contract("tol and feas_tol must be positive".into()));
        }
        Ok(())
    }

    fn direction_options(&self) -> DirectionOptions {
        DirectionOptions {
            stationarity_tol: self.tol,
            feas_tol: self.feas_tol,
            ..self.direction
        }
    }

    fn step_options(&self) -> StepOptions {
        StepOptions {
            feas_tol: self.feas_tol,
            ..self.step
        }
    }
}

/// Ordered from least to most severe; a trajectory reports the most severe
/// event it met.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Termination {
    WeakStationaryThenStationary,
    MaxIterStage1,
    MaxIterStage2,
    Stalled,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Iterate {
    pub index: usize,
    pub stage: Stage,
    pub point: Vec<f64>,
    pub objectives: Vec<f64>,
    /// Direction value of the step that produced this iterate; `None` for
    /// the start.
    pub eta: Option<f64>,
    pub step: Option<f64>,
    pub max_violation: f64,
}

/// Direction subproblem solved at the point where a stage ended.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Certificate {
    pub stage: Stage,
    pub eta: f64,
    pub status: DirectionStatus,
    /// Iterate index the certificate was computed at.
    pub at: usize,
}

impl Certificate {
    pub fn is_stationary(&self) -> bool {
        self.status == DirectionStatus::Stationary
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub start_index: usize,
    pub iterates: Vec<Iterate>,
    pub termination: Termination,
    pub stage1_exit: Certificate,
    /// `None` when stage one ended on a failed subproblem.
    pub stage2_exit: Option<Certificate>,
    pub diagnostics: Vec<String>,
}

impl Trajectory {
    pub fn final_iterate(&self) -> &Iterate {
        self.iterates.last().expect("trajectory holds its start")
    }

    pub fn final_point(&self) -> &[f64] {
        &self.final_iterate().point
    }

    pub fn final_objectives(&self) -> &[f64] {
        &self.final_iterate().objectives
    }

    /// Steps taken in `stage`.
    pub fn steps_in(&self, stage: Stage) -> usize {
        self.iterates
            .iter()
            .filter(|it| it.stage == stage && it.step.is_some())
            .count()
    }

    /// `η` of the last certificate computed (stage two when available).
    pub fn final_eta(&self) -> f64 {
        self.stage2_exit.unwrap_or(self.stage1_exit).eta
    }
}

enum StageEnd {
    Stationary,
    Budget,
    Stalled,
    Failed,
}

struct Runner<'a> {
    problem: &'a ProblemSpec,
    opts: &'a SolveOptions,
    dir_opts: DirectionOptions,
    step_opts: StepOptions,
    iterates: Vec<Iterate>,
    diagnostics: Vec<String>,
}

impl Runner<'_> {
    fn direction(&self, stage: Stage, x: &[f64]) -> Result<DirectionResult> {
        let grads = self.problem.evaluate_gradients(x)?;
        match stage {
            Stage::MinMax => stage1_direction(self.problem, x, &grads, &self.dir_opts),
            Stage::MinMin => stage2_direction(self.problem, x, &grads, &self.dir_opts),
        }
    }

    fn run_stage(&mut self, stage: Stage, budget: usize) -> Result<(StageEnd, Certificate)> {
        let mut taken = 0;
        let mut stalls = 0;
        loop {
            let x = self.iterates.last().expect("start recorded").point.clone();
            let dir = self.direction(stage, &x)?;
            let cert = Certificate {
                stage,
                eta: dir.eta,
                status: dir.status,
                at: self.iterates.len() - 1,
            };
            match dir.status {
                DirectionStatus::Stationary => return Ok((StageEnd::Stationary, cert)),
                DirectionStatus::SubproblemFailed => {
                    self.diagnostics.push(format!(
                        "{stage:?} subproblem failed at iterate {}",
                        cert.at
                    ));
                    return Ok((StageEnd::Failed, cert));
                }
                DirectionStatus::Descent => {}
            }
            if taken >= budget {
                return Ok((StageEnd::Budget, cert));
            }
            let step = monotone_step(self.problem, &x, &dir.d, &self.step_opts)?;
            let next = axpy(&x, step.h, &dir.d);
            self.iterates.push(Iterate {
                index: self.iterates.len(),
                stage,
                objectives: self.problem.evaluate_objectives(&next)?,
                max_violation: self.problem.max_violation(&next)?,
                point: next,
                eta: Some(dir.eta),
                step: Some(step.h),
            });
            taken += 1;
            if step.h <= self.step_opts.h_min {
                stalls += 1;
                if stalls >= self.opts.stall_limit {
                    self.diagnostics.push(format!(
                        "{stage:?} stalled: {stalls} steps of at most {:e} ending at iterate {}",
                        self.step_opts.h_min,
                        self.iterates.len() - 1
                    ));
                    return Ok((StageEnd::Stalled, cert));
                }
            } else {
                stalls = 0;
            }
        }
    }
}

/// Run both stages from a feasible `x0`.
pub fn two_stage_solve(
    problem: &ProblemSpec,
    x0: &[f64],
    opts: &SolveOptions,
) -> Result<Trajectory> {
    solve_indexed(problem, x0, opts, 0)
}

fn solve_indexed(
    problem: &ProblemSpec,
    x0: &[f64],
    opts: &SolveOptions,
    start_index: usize,
) -> Result<Trajectory> {
    opts.validate()?;
    check_len(problem.dimension(), x0.len())?;
    let report = problem.check_feasibility(x0, opts.feas_tol)?;
    if !report.is_feasible {
        return Err(Error::Contract(format!(
            "start {start_index} is infeasible: violation {:.3e} in {}",
            report.max_violation,
            report
                .violated_indices
                .first()
                .map(|&i| problem.constraint_label(i))
                .unwrap_or_default()
        )));
    }
    let mut runner = Runner {
        problem,
        opts,
        dir_opts: opts.direction_options(),
        step_opts: opts.step_options(),
        iterates: vec![Iterate {
            index: 0,
            stage: Stage::MinMax,
            point: x0.to_vec(),
            objectives: problem.evaluate_objectives(x0)?,
            eta: None,
            step: None,
            max_violation: report.max_violation,
        }],
        diagnostics: Vec::new(),
    };

    let mut termination = Termination::WeakStationaryThenStationary;
    let (end1, stage1_exit) = runner.run_stage(Stage::MinMax, opts.m1)?;
    match end1 {
        StageEnd::Stationary => {}
        StageEnd::Budget => termination = Termination::MaxIterStage1,
        StageEnd::Stalled => termination = Termination::Stalled,
        StageEnd::Failed => {
            return Ok(Trajectory {
                start_index,
                iterates: runner.iterates,
                termination: Termination::Stalled,
                stage1_exit,
                stage2_exit: None,
                diagnostics: runner.diagnostics,
            })
        }
    }
    let (end2, stage2_exit) = runner.run_stage(Stage::MinMin, opts.m2)?;
    termination = termination.max(match end2 {
        StageEnd::Stationary => Termination::WeakStationaryThenStationary,
        StageEnd::Budget => Termination::MaxIterStage2,
        StageEnd::Stalled | StageEnd::Failed => Termination::Stalled,
    });
    Ok(Trajectory {
        start_index,
        iterates: runner.iterates,
        termination,
        stage1_exit,
        stage2_exit: Some(stage2_exit),
        diagnostics: runner.diagnostics,
    })
}

/// Draws feasible starting points.
pub trait StartSampler: Send + Sync {
    fn sample(&self, problem: &ProblemSpec, rng: &mut ChaCha8Rng) -> Result<Vec<f64>>;
}

/// Rejection sampling from an axis-aligned box.
#[derive(Clone, Debug)]
pub struct BoxSampler {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub feas_tol: f64,
    pub max_attempts: usize,
}

impl BoxSampler {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self {
            lower,
            upper,
            feas_tol: 1e-8,
            max_attempts: 100_000,
        }
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self::new(vec![lo; dim], vec![hi; dim])
    }
}

impl StartSampler for BoxSampler {
    fn sample(&self, problem: &ProblemSpec, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let d = problem.dimension();
        check_len(d, self.lower.len())?;
        check_len(d, self.upper.len())?;
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::Contract("sampling box has lower > upper".into()));
        }
        // Closest miss: (max violation, constraint index).
        let mut closest = (f64::INFINITY, 0);
        for _ in 0..self.max_attempts {
            let x: Vec<f64> = self
                .lower
                .iter()
                .zip(&self.upper)
                .map(|(&l, &u)| if l == u { l } else { rng.random_range(l..u) })
                .collect();
            let values = problem.all_constraint_values(&x)?;
            let (worst, value) =
                values
                    .iter()
                    .copied()
                    .enumerate()
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
                    );
            if value <= self.feas_tol {
                return Ok(x);
            }
            if value < closest.0 {
                closest = (value, worst);
            }
        }
        Err(Error::Sampling {
            attempts: self.max_attempts,
            constraint: problem.constraint_label(closest.1),
            violation: closest.0,
        })
    }
}

/// Samples on `original` and maps the draw into the coordinates of a
/// problem built with [`ProblemSpec::reparametrize`].
#[derive(Clone)]
pub struct MappedSampler {
    pub original: ProblemSpec,
    pub map: AffineMap,
    pub inner: Arc<dyn StartSampler>,
}

impl StartSampler for MappedSampler {
    fn sample(&self, _problem: &ProblemSpec, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let theta = self.inner.sample(&self.original, rng)?;
        Ok(self.map.invert(&theta))
    }
}

#[derive(Clone)]
pub enum Starts {
    Explicit(Vec<Vec<f64>>),
    Sampled {
        count: usize,
        sampler: Arc<dyn StartSampler>,
    },
}

/// Random stream for start `index`, independent of thread scheduling.
pub fn start_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Independent two-stage runs, in parallel, returned in start order.
pub fn multi_start(
    problem: &ProblemSpec,
    starts: &Starts,
    opts: &SolveOptions,
) -> Result<Vec<Trajectory>> {
    let points: Vec<Vec<f64>> = match starts {
        Starts::Explicit(points) => points.clone(),
        Starts::Sampled { count, sampler } => (0..*count)
            .into_par_iter()
            .map(|i| sampler.sample(problem, &mut start_rng(opts.seed, i)))
            .collect::<Result<_>>()?,
    };
    points
        .par_iter()
        .enumerate()
        .map(|(i, x0)| solve_indexed(problem, x0, opts, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FnOracle;
    use crate::problems::toy_problem;

    #[test]
    fn pareto_start_exits_immediately() {
        let p = toy_problem();
        let t = toy_problem_start(0.2);
        let run = two_stage_solve(&p, &t, &SolveOptions::default()).unwrap();
        assert_eq!(run.iterates.len(), 1);
        assert_eq!(run.termination, Termination::WeakStationaryThenStationary);
        assert!(run.stage1_exit.is_stationary());
        assert!(run.stage2_exit.unwrap().is_stationary());
    }

    fn toy_problem_start(t: f64) -> Vec<f64> {
        vec![t; 3]
    }

    #[test]
    fn single_objective_box_quadratic() {
        let p = ProblemSpec::builder(2)
            .objective(FnOracle::new(
                |x| (x[0] - 2.0).powi(2) + (x[1] + 0.5).powi(2),
                |x| vec![2.0 * (x[0] - 2.0), 2.0 * (x[1] + 0.5)],
            ))
            .bounds(vec![-1.0, -1.0], vec![1.0, 1.0])
            .build()
            .unwrap();
        let run = two_stage_solve(&p, &[0.0, 0.0], &SolveOptions::default()).unwrap();
        let x = run.final_point();
        assert!(
            (x[0] - 1.0).abs() < 1e-6 && (x[1] + 0.5).abs() < 1e-6,
            "{x:?}"
        );
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let p = toy_problem();
        assert!(two_stage_solve(&p, &[1.0, 1.0, 1.0], &SolveOptions::default()).is_err());
    }

    #[test]
    fn zero_budgets_only_certify() {
        let p = toy_problem();
        let opts = SolveOptions {
            m1: 0,
            m2: 0,
            ..Default::default()
        };
        let run = two_stage_solve(&p, &[0.5, -0.2, 0.1], &opts).unwrap();
        assert_eq!(run.iterates.len(), 1);
        assert_eq!(run.termination, Termination::MaxIterStage2);
        assert!(run.stage1_exit.eta < -1e-3);
    }

    #[test]
    fn no_starts_no_runs() {
        let p = toy_problem();
        let starts = Starts::Sampled {
            count: 0,
            sampler: Arc::new(BoxSampler::cube(3, -1.0, 1.0)),
        };
        assert!(multi_start(&p, &starts, &SolveOptions::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn impossible_box_names_a_constraint() {
        let p = toy_problem();
        let sampler = BoxSampler {
            max_attempts: 100,
            ..BoxSampler::cube(3, 2.0, 3.0)
        };
        let err = sampler.sample(&p, &mut start_rng(0, 0)).unwrap_err();
        assert!(err.to_string().contains("constraint 0"), "{err}");
    }
}
