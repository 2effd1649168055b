//! Front CSV, trajectory JSON lines and the run summary.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use cmgd::direction::Stage;
use cmgd::driver::Trajectory;
use cmgd::model::AffineMap;
use cmgd::pareto::{FrontEntry, ParetoFront};
use serde::Serialize;

use crate::CliError;

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("cannot write {}: {e}", path.display()))
}

/// Header `x1..xd, f1..fn, origin`; values with 17 significant digits.
pub fn write_front_csv(
    path: &Path,
    front: &ParetoFront,
    decision_names: &[String],
) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path).map_err(|e| io_error(path, e))?);
    let k = front.num_objectives().unwrap_or(0);
    let mut header: Vec<String> = decision_names.to_vec();
    header.extend((1..=k).map(|t| format!("f{t}")));
    header.push("origin".into());
    let mut text = header.join(",");
    text.push('\n');
    for e in front.entries() {
        let mut fields: Vec<String> = e
            .decision
            .iter()
            .chain(&e.objectives)
            .map(|v| format!("{v:.16e}"))
            .collect();
        fields.push(e.origin.to_string());
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| io_error(path, e))
}

/// Reads a file written by [`write_front_csv`]; `objectives` tells how many
/// trailing value columns are objectives.
pub fn read_front_csv(path: &Path, objectives: usize) -> Result<Vec<FrontEntry>, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut entries = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate().skip(1) {
        let line = line.map_err(|e| CliError::Config(e.to_string()))?;
        let bad =
            |what: &str| CliError::Config(format!("{} line {}: {what}", path.display(), n + 1));
        let fields: Vec<&str> = line.split(',').collect();
        let (origin, values) = fields.split_last().ok_or_else(|| bad("empty line"))?;
        let values: Vec<f64> = values
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad("not a number"))?;
        if values.len() < objectives {
            return Err(bad("too few columns"));
        }
        let split = values.len() - objectives;
        entries.push(FrontEntry {
            decision: values[..split].to_vec(),
            objectives: values[split..].to_vec(),
            origin: origin.parse().map_err(|_| bad("bad origin"))?,
        });
    }
    Ok(entries)
}

#[derive(Serialize)]
struct IterateLine<'a> {
    run: usize,
    index: usize,
    stage: Stage,
    point: Vec<f64>,
    objectives: &'a [f64],
    eta: Option<f64>,
    step: Option<f64>,
    max_violation: f64,
}

/// One JSON object per iterate, points in natural coordinates.
pub fn write_trajectories(
    path: &Path,
    runs: &[Trajectory],
    map: Option<&AffineMap>,
) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path).map_err(|e| io_error(path, e))?);
    for run in runs {
        for it in &run.iterates {
            let line = IterateLine {
                run: run.start_index,
                index: it.index,
                stage: it.stage,
                point: map.map_or_else(|| it.point.clone(), |m| m.apply(&it.point)),
                objectives: &it.objectives,
                eta: it.eta,
                step: it.step,
                max_violation: it.max_violation,
            };
            serde_json::to_writer(&mut out, &line).map_err(|e| CliError::Runtime(e.to_string()))?;
            out.write_all(b"\n").map_err(|e| io_error(path, e))?;
        }
    }
    out.flush().map_err(|e| io_error(path, e))
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub start: usize,
    pub termination: cmgd::driver::Termination,
    pub stage1_steps: usize,
    pub stage2_steps: usize,
    pub stage1_eta: f64,
    pub stage2_eta: Option<f64>,
    pub stationary: bool,
    pub final_objectives: Vec<f64>,
    pub diagnostics: Vec<String>,
}

impl RunSummary {
    pub fn of(run: &Trajectory) -> Self {
        Self {
            start: run.start_index,
            termination: run.termination,
            stage1_steps: run.steps_in(Stage::MinMax),
            stage2_steps: run.steps_in(Stage::MinMin),
            stage1_eta: run.stage1_exit.eta,
            stage2_eta: run.stage2_exit.map(|c| c.eta),
            stationary: run.stage2_exit.is_some_and(|c| c.is_stationary()),
            final_objectives: run.final_objectives().to_vec(),
            diagnostics: run.diagnostics.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub problem: String,
    pub dimension: usize,
    pub objectives: usize,
    pub starts: usize,
    pub seed: u64,
    pub m1: usize,
    pub m2: usize,
    pub tol: f64,
    pub feas_tol: f64,
    pub exact_l2: bool,
    pub eta_lin: f64,
    pub threads: usize,
    pub wall_clock_seconds: f64,
    pub terminations: BTreeMap<String, usize>,
    pub stalled: usize,
    pub front_size: usize,
    pub dataset_warnings: Vec<String>,
    pub runs: Vec<RunSummary>,
}

pub fn termination_tally(runs: &[Trajectory]) -> BTreeMap<String, usize> {
    let mut tally = BTreeMap::new();
    for r in runs {
        *tally.entry(format!("{:?}", r.termination)).or_insert(0) += 1;
    }
    tally
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<(), CliError> {
    let text =
        serde_json::to_string_pretty(summary).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| io_error(path, e))
}
