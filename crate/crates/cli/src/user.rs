//! JSON problem files for `--problem user`.
//!
//! ```json
//! {
//!   "dimension": 2,
//!   "objectives": [
//!     { "quadratic": [[2, 0], [0, 2]], "linear": [-2, 0] },
//!     { "linear": [0, 1], "constant": 3 }
//!   ],
//!   "constraints": { "rows": [[1, 1]], "rhs": [1] },
//!   "lower": [-1, -1],
//!   "upper": [1, 1],
//!   "start_box": { "lower": [-1, -1], "upper": [1, 1] }
//! }
//! ```
//!
//! Each objective is `½ xᵀQx + cᵀx + k`; `Q` must be symmetric positive
//! semidefinite. Constraints are affine rows `A x ≤ b` plus optional bounds.

use std::path::Path;

use cmgd::{FnOracle, ProblemSpec};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserObjective {
    #[serde(default)]
    pub quadratic: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub linear: Option<Vec<f64>>,
    #[serde(default)]
    pub constant: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserRows {
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub dimension: usize,
    pub objectives: Vec<UserObjective>,
    #[serde(default)]
    pub constraints: Option<UserRows>,
    #[serde(default)]
    pub lower: Option<Vec<f64>>,
    #[serde(default)]
    pub upper: Option<Vec<f64>>,
    #[serde(default)]
    pub start_box: Option<UserBox>,
}

pub fn load_user_spec(path: &Path) -> Result<UserSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn check_len(what: &str, expected: usize, found: usize) -> Result<(), CliError> {
    if expected == found {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{what} has length {found}, expected {expected}"
        )))
    }
}

impl UserSpec {
    pub fn build(&self) -> Result<ProblemSpec, CliError> {
        let d = self.dimension;
        if d == 0 || self.objectives.is_empty() {
            return Err(CliError::Config(
                "a user problem needs a positive dimension and at least one objective".into(),
            ));
        }
        let mut builder = ProblemSpec::builder(d);
        for (k, obj) in self.objectives.iter().enumerate() {
            let q = match &obj.quadratic {
                Some(rows) => {
                    check_len(&format!("objective {k} quadratic"), d, rows.len())?;
                    for row in rows {
                        check_len(&format!("objective {k} quadratic row"), d, row.len())?;
                    }
                    let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
                    if (&m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
                        return Err(CliError::Config(format!(
                            "objective {k}: quadratic term is not symmetric"
                        )));
                    }
                    let min_eig = SymmetricEigen::new(m.clone()).eigenvalues.min();
                    if min_eig < -1e-10 * (1.0 + m.amax()) {
                        return Err(CliError::Config(format!(
                            "objective {k}: quadratic term is not positive semidefinite (eigenvalue {min_eig:e})"
                        )));
                    }
                    Some(m)
                }
                None => None,
            };
            let c = match &obj.linear {
                Some(c) => {
                    check_len(&format!("objective {k} linear"), d, c.len())?;
                    c.clone()
                }
                None => vec![0.0; d],
            };
            let k0 = obj.constant;
            let (q1, c1) = (q.clone(), c.clone());
            builder = builder.objective(FnOracle::new(
                move |x| {
                    let lin: f64 = c1.iter().zip(x).map(|(a, b)| a * b).sum();
                    let quad = q1.as_ref().map_or(0.0, |q| {
                        let v = nalgebra::DVector::from_column_slice(x);
                        0.5 * v.dot(&(q * &v))
                    });
                    quad + lin + k0
                },
                move |x| {
                    let mut g = c.clone();
                    if let Some(q) = &q {
                        let v = q * nalgebra::DVector::from_column_slice(x);
                        g.iter_mut().zip(v.iter()).for_each(|(a, b)| *a += b);
                    }
                    g
                },
            ));
        }
        if let Some(rows) = &self.constraints {
            builder = builder.linear_constraints(rows.rows.clone(), rows.rhs.clone());
        }
        if self.lower.is_some() || self.upper.is_some() {
            let lower = self.lower.clone().unwrap_or(vec![f64::NEG_INFINITY; d]);
            let upper = self.upper.clone().unwrap_or(vec![f64::INFINITY; d]);
            builder = builder.bounds(lower, upper);
        }
        builder.build().map_err(|e| CliError::Config(e.to_string()))
    }

    /// Explicit start box, else the finite bounds, else `[-1, 1]ᵈ`.
    pub fn sampling_box(&self) -> (Vec<f64>, Vec<f64>) {
        if let Some(b) = &self.start_box {
            return (b.lower.clone(), b.upper.clone());
        }
        let d = self.dimension;
        let pick = |bound: &Option<Vec<f64>>, fallback: f64| -> Vec<f64> {
            match bound {
                Some(v) => v
                    .iter()
                    .map(|x| if x.is_finite() { *x } else { fallback })
                    .collect(),
                None => vec![fallback; d],
            }
        };
        (pick(&self.lower, -1.0), pick(&self.upper, 1.0))
    }
}
