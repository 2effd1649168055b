use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use cmgd::direction::{DirectionOptions, NormMode};
use cmgd::driver::{multi_start, BoxSampler, MappedSampler, SolveOptions, Starts, Termination};
use cmgd::model::AffineMap;
use cmgd::pareto::{non_dominated_filter, FrontEntry, ParetoFront};
use cmgd::problems::{
    fd_preconditioner, fd_problem, fd_start_box, load_speed_density, portfolio_problem,
    synthetic_dataset, toy_analytic_front, toy_problem, PortfolioConfig, PortfolioSampler,
    SyntheticFd, WeightingScheme, DEFAULT_BREAKPOINTS, TOY_T_MAX,
};
use cmgd::ProblemSpec;

use crate::args::{ProblemKind, RunArgs};
use crate::output::{self, RunSummary, Summary};
use crate::plot::emit_plot;
use crate::user::load_user_spec;
use crate::CliError;

/// A problem ready to solve, in the coordinates the solver works in.
struct Setup {
    /// Solved problem.
    problem: ProblemSpec,
    /// Maps solver coordinates back to the natural ones.
    map: Option<AffineMap>,
    starts: Starts,
    decision_names: Vec<String>,
    overlay: Option<Vec<(f64, f64)>>,
    warnings: Vec<String>,
}

pub struct RunReport {
    pub summary: Summary,
    pub front: ParetoFront,
    pub written: Vec<PathBuf>,
}

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn validate(args: &RunArgs) -> Result<(), CliError> {
    if !args.out.is_dir() {
        return Err(config(format!(
            "output directory {} does not exist",
            args.out.display()
        )));
    }
    if !(args.tol > 0.0) || !(args.feas_tol > 0.0) {
        return Err(config("--tol and --feas-tol must be positive"));
    }
    if !(args.eta_lin > 0.0) {
        return Err(config("--eta-lin must be positive"));
    }
    if !(args.weight_bin_width >= 0.0) {
        return Err(config("--weight-bin-width must be non-negative"));
    }
    if let (Some(lo), Some(hi)) = (args.box_lower, args.box_upper) {
        if !(lo < hi) {
            return Err(config("--box-lower must be below --box-upper"));
        }
    }
    Ok(())
}

/// `CMGD_THREADS` if set, otherwise the rayon default.
fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("CMGD_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| config(format!("CMGD_THREADS={v} is not a positive integer")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn names(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("{prefix}{i}")).collect()
}

fn cube(args: &RunArgs, d: usize, default: (f64, f64)) -> BoxSampler {
    BoxSampler::cube(
        d,
        args.box_lower.unwrap_or(default.0),
        args.box_upper.unwrap_or(default.1),
    )
}

fn setup(args: &RunArgs) -> Result<Setup, CliError> {
    let count = args.starts as usize;
    match args.problem {
        ProblemKind::Toy => {
            let overlay = (0..=200)
                .map(|k| toy_analytic_front(TOY_T_MAX * (k as f64 / 100.0 - 1.0)))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Setup {
                problem: toy_problem(),
                map: None,
                starts: Starts::Sampled {
                    count,
                    sampler: Arc::new(cube(args, 3, (-1.0, 1.0))),
                },
                decision_names: names("x", 3),
                overlay: Some(overlay),
                warnings: Vec::new(),
            })
        }
        ProblemKind::Fd => {
            let (data, warnings) = match &args.fd_data {
                Some(path) => {
                    let loaded = load_speed_density(path)?;
                    let warnings = loaded
                        .warnings
                        .iter()
                        .map(|w| format!("{} line {}: {}", path.display(), w.line, w.message))
                        .collect();
                    (loaded.dataset, warnings)
                }
                None => (
                    synthetic_dataset(&SyntheticFd {
                        noise_sigma: args.fd_noise,
                        records: args.fd_records,
                        seed: args.seed,
                        ..Default::default()
                    })?,
                    Vec::new(),
                ),
            };
            let weighting = if args.weight_bin_width == 0.0 {
                WeightingScheme::Uniform
            } else {
                WeightingScheme::InverseBinFrequency {
                    bin_width: args.weight_bin_width,
                }
            };
            let natural = fd_problem(&data, DEFAULT_BREAKPOINTS, &weighting)?;
            let map = fd_preconditioner(&data, DEFAULT_BREAKPOINTS, &weighting)?;
            let (lo, hi) = fd_start_box(&data, DEFAULT_BREAKPOINTS);
            let starts = Starts::Sampled {
                count,
                sampler: Arc::new(MappedSampler {
                    original: natural.clone(),
                    map: map.clone(),
                    inner: Arc::new(BoxSampler::new(lo, hi)),
                }),
            };
            Ok(Setup {
                problem: natural.reparametrize(&map)?,
                map: Some(map),
                starts,
                decision_names: ["a1", "b1", "a2", "b2", "a3", "b3"]
                    .map(String::from)
                    .to_vec(),
                overlay: None,
                warnings,
            })
        }
        ProblemKind::Portfolio => {
            let (problem, instance) = portfolio_problem(&PortfolioConfig {
                n: args.portfolio_n,
                m: args.portfolio_m,
                seed: args.seed,
                ..Default::default()
            })?;
            Ok(Setup {
                problem,
                map: None,
                starts: Starts::Sampled {
                    count,
                    sampler: Arc::new(PortfolioSampler { instance }),
                },
                decision_names: names("x", args.portfolio_n),
                overlay: None,
                warnings: Vec::new(),
            })
        }
        ProblemKind::User => {
            let path = args
                .user_spec
                .as_ref()
                .ok_or_else(|| config("--problem user needs --user-spec <file>"))?;
            let spec = load_user_spec(path)?;
            let problem = spec.build()?;
            let (mut lo, mut hi) = spec.sampling_box();
            if let Some(v) = args.box_lower {
                lo.fill(v);
            }
            if let Some(v) = args.box_upper {
                hi.fill(v);
            }
            Ok(Setup {
                problem,
                map: None,
                starts: Starts::Sampled {
                    count,
                    sampler: Arc::new(BoxSampler::new(lo, hi)),
                },
                decision_names: names("x", spec.dimension),
                overlay: None,
                warnings: Vec::new(),
            })
        }
    }
}

fn problem_name(kind: ProblemKind) -> &'static str {
    match kind {
        ProblemKind::Toy => "toy",
        ProblemKind::Fd => "fd",
        ProblemKind::Portfolio => "portfolio",
        ProblemKind::User => "user",
    }
}

fn write_plots(
    out: &Path,
    front: &ParetoFront,
    overlay: Option<&[(f64, f64)]>,
) -> Result<Vec<PathBuf>, CliError> {
    let k = front.num_objectives().unwrap_or(0);
    let mut written = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let svg = emit_plot(front, (i, j), if (i, j) == (0, 1) { overlay } else { None })?;
            let path = out.join(format!("front_f{}_f{}.svg", i + 1, j + 1));
            std::fs::write(&path, svg)
                .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Solve, then write `front.csv`, `trajectories.jsonl`, `summary.json` and
/// optionally the plots. Nothing is written when the configuration is
/// rejected or solving fails.
pub fn execute(args: &RunArgs) -> Result<RunReport, CliError> {
    validate(args)?;
    let pool = thread_pool()?;
    let setup = setup(args)?;
    let opts = SolveOptions {
        m1: args.m1,
        m2: args.m2,
        tol: args.tol,
        feas_tol: args.feas_tol,
        seed: args.seed,
        direction: DirectionOptions {
            eta_lin: args.eta_lin,
            norm_mode: if args.exact_l2 {
                NormMode::ExactL2
            } else {
                NormMode::BoxPostscale
            },
            ..Default::default()
        },
        ..Default::default()
    };

    let t0 = Instant::now();
    let runs = pool.install(|| multi_start(&setup.problem, &setup.starts, &opts))?;
    let wall = t0.elapsed().as_secs_f64();

    let natural = |z: &[f64]| {
        setup
            .map
            .as_ref()
            .map_or_else(|| z.to_vec(), |m| m.apply(z))
    };
    let entries = runs
        .iter()
        .map(|r| FrontEntry {
            decision: natural(r.final_point()),
            objectives: r.final_objectives().to_vec(),
            origin: r.start_index,
        })
        .collect();
    let front = non_dominated_filter(entries)?;

    let summary = Summary {
        problem: problem_name(args.problem).into(),
        dimension: setup.problem.dimension(),
        objectives: setup.problem.num_objectives(),
        starts: runs.len(),
        seed: args.seed,
        m1: args.m1,
        m2: args.m2,
        tol: args.tol,
        feas_tol: args.feas_tol,
        exact_l2: args.exact_l2,
        eta_lin: args.eta_lin,
        threads: pool.current_num_threads(),
        wall_clock_seconds: wall,
        terminations: output::termination_tally(&runs),
        stalled: runs
            .iter()
            .filter(|r| r.termination == Termination::Stalled)
            .count(),
        front_size: front.len(),
        dataset_warnings: setup.warnings.clone(),
        runs: runs.iter().map(RunSummary::of).collect(),
    };

    let out = &args.out;
    let mut written = vec![
        out.join("front.csv"),
        out.join("trajectories.jsonl"),
        out.join("summary.json"),
    ];
    output::write_front_csv(&written[0], &front, &setup.decision_names)?;
    output::write_trajectories(&written[1], &runs, setup.map.as_ref())?;
    output::write_summary(&written[2], &summary)?;
    if args.plot {
        written.extend(write_plots(out, &front, setup.overlay.as_deref())?);
    }
    Ok(RunReport {
        summary,
        front,
        written,
    })
}
