//! Constrained multi-objective problem definition and the evaluation
//! primitives every solver component is built on.
//!
//! A [`ProblemSpec`] holds `n` objectives and `m` convex inequality
//! constraints `f_i(θ) ≤ 0`, each exposed as a value/gradient [`Oracle`].
//! When every constraint is affine the problem also carries the matrix form
//! `Aθ − b ≤ 0` ([`LinearConstraints`]), which lets the direction subproblem
//! use the constraints exactly instead of through linearization. Optional
//! per-coordinate bounds are kept separately and act as extra linear rows.

use std::fmt;
use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::linalg::dot;

/// A differentiable scalar function of the decision vector.
///
/// Implementations must be pure: the same input always yields the same
/// output and no hidden state is mutated, so a problem can be shared across
/// worker threads.
pub trait Oracle: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// Central-difference gradient with step `h_j = 1e-6 (1 + |x_j|)`.
pub fn central_difference(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|j| {
            let h = 1e-6 * (1.0 + x[j].abs());
            probe[j] = x[j] + h;
            let up = f(&probe);
            probe[j] = x[j] - h;
            let down = f(&probe);
            probe[j] = x[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// Closure-backed oracle. Without an analytic gradient it falls back to
/// central differences.
pub struct FnOracle {
    value: Box<ValueFn>,
    gradient: Option<Box<GradFn>>,
}

impl FnOracle {
    pub fn new<V, G>(value: V, gradient: G) -> Self
    where
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            value: Box::new(value),
            gradient: Some(Box::new(gradient)),
        }
    }

    pub fn value_only<V>(value: V) -> Self
    where
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            value: Box::new(value),
            gradient: None,
        }
    }
}

impl Oracle for FnOracle {
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.gradient {
            Some(g) => g(x),
            None => central_difference(&|p| (self.value)(p), x),
        }
    }
}

/// `aᵀx − b`
#[derive(Clone, Debug)]
pub struct AffineOracle {
    pub a: Vec<f64>,
    pub b: f64,
}

impl Oracle for AffineOracle {
    fn value(&self, x: &[f64]) -> f64 {
        dot(&self.a, x) - self.b
    }

    fn gradient(&self, _x: &[f64]) -> Vec<f64> {
        self.a.clone()
    }
}

/// Affine constraint system `A θ ≤ b`, stored row-wise.
#[derive(Clone, Debug, Default)]
pub struct LinearConstraints {
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

impl LinearConstraints {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `A θ − b`
    pub fn residuals(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(row, b)| dot(row, x) - b)
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct VariableBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// The `n` objective gradients at one point, stored as an `n × d` row-major
/// block.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMatrix {
    data: Vec<f64>,
    n: usize,
    dim: usize,
}

impl GradientMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Contract(
                "gradient matrix needs at least one row".into(),
            ));
        }
        let dim = rows[0].len();
        let mut data = Vec::with_capacity(n * dim);
        for row in rows {
            check_len(dim, row.len())?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Contract("non-finite gradient entry".into()));
            }
            data.extend(row);
        }
        Ok(Self { data, n, dim })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim)
    }

    /// Directional derivatives `∇F_tᵀ d` for every objective.
    pub fn directional(&self, d: &[f64]) -> Vec<f64> {
        self.rows().map(|g| dot(g, d)).collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * s).collect(),
            n: self.n,
            dim: self.dim,
        }
    }
}

/// Outcome of [`ProblemSpec::check_feasibility`].
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityReport {
    /// `max_i f_i(θ)` over constraints and bounds, clamped below at zero.
    pub max_violation: f64,
    /// Indices in the flat constraint numbering of [`ProblemSpec::constraint_label`].
    pub violated_indices: Vec<usize>,
    pub is_feasible: bool,
}

/// Constrained multi-objective problem `min {F_1, …, F_n}` s.t. `f_i(θ) ≤ 0`.
///
/// Immutable after construction; cloning is cheap since oracles are shared.
#[derive(Clone)]
pub struct ProblemSpec {
    dimension: usize,
    objectives: Vec<Arc<dyn Oracle>>,
    constraints: Vec<Arc<dyn Oracle>>,
    linear: Option<LinearConstraints>,
    bounds: Option<VariableBounds>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("dimension", &self.dimension)
            .field("objectives", &self.objectives.len())
            .field("constraints", &self.constraints.len())
            .field("linear", &self.linear.is_some())
            .field("bounds", &self.bounds.is_some())
            .finish()
    }
}

/// Affine change of variables `θ = M z + s` with invertible `M`.
///
/// Descent directions are not invariant under such maps, so a problem
/// solved in well-scaled coordinates `z` can converge much faster than in
/// its natural parameters `θ`; see [`ProblemSpec::reparametrize`].
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    matrix: nalgebra::DMatrix<f64>,
    inverse: nalgebra::DMatrix<f64>,
    shift: Vec<f64>,
}

impl AffineMap {
    /// `matrix` is row-major, `d × d`.
    pub fn new(matrix: Vec<Vec<f64>>, shift: Vec<f64>) -> Result<Self> {
        let d = shift.len();
        check_len(d, matrix.len())?;
        for row in &matrix {
            check_len(d, row.len())?;
        }
        let m = nalgebra::DMatrix::from_fn(d, d, |i, j| matrix[i][j]);
        let inverse = m
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Construction("change of variables is singular".into()))?;
        Ok(Self {
            matrix: m,
            inverse,
            shift,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            matrix: nalgebra::DMatrix::identity(d, d),
            inverse: nalgebra::DMatrix::identity(d, d),
            shift: vec![0.0; d],
        }
    }

    pub fn dimension(&self) -> usize {
        self.shift.len()
    }

    /// `θ = M z + s`
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let z = nalgebra::DVector::from_column_slice(z);
        (&self.matrix * z)
            .iter()
            .zip(&self.shift)
            .map(|(a, b)| a + b)
            .collect()
    }

    /// `z = M⁻¹ (θ − s)`
    pub fn invert(&self, theta: &[f64]) -> Vec<f64> {
        let t = nalgebra::DVector::from_iterator(
            theta.len(),
            theta.iter().zip(&self.shift).map(|(a, b)| a - b),
        );
        (&self.inverse * t).iter().copied().collect()
    }

    /// `Mᵀ g`: a `θ`-gradient expressed in `z`.
    pub fn pull_gradient(&self, g: &[f64]) -> Vec<f64> {
        self.matrix
            .tr_mul(&nalgebra::DVector::from_column_slice(g))
            .iter()
            .copied()
            .collect()
    }

    fn diagonal(&self) -> Option<Vec<f64>> {
        let d = self.dimension();
        let off = (0..d).any(|i| (0..d).any(|j| i != j && self.matrix[(i, j)] != 0.0));
        (!off).then(|| (0..d).map(|i| self.matrix[(i, i)]).collect())
    }
}

struct Pulled {
    inner: Arc<dyn Oracle>,
    map: Arc<AffineMap>,
}

impl Oracle for Pulled {
    fn value(&self, z: &[f64]) -> f64 {
        self.inner.value(&self.map.apply(z))
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        self.map
            .pull_gradient(&self.inner.gradient(&self.map.apply(z)))
    }
}

/// Builder for [`ProblemSpec`].
pub struct ProblemBuilder {
    dimension: usize,
    objectives: Vec<Arc<dyn Oracle>>,
    constraints: Vec<Arc<dyn Oracle>>,
    linear: Option<LinearConstraints>,
    bounds: Option<VariableBounds>,
}

impl ProblemBuilder {
    pub fn objective(mut self, oracle: impl Oracle + 'static) -> Self {
        self.objectives.push(Arc::new(oracle));
        self
    }

    pub fn objective_arc(mut self, oracle: Arc<dyn Oracle>) -> Self {
        self.objectives.push(oracle);
        self
    }

    /// Adds a general convex constraint `f(θ) ≤ 0`. Problems with general
    /// constraints are solved through the linearized subproblem.
    pub fn constraint(mut self, oracle: impl Oracle + 'static) -> Self {
        self.constraints.push(Arc::new(oracle));
        self
    }

    /// Declares that all constraints are the affine rows `A θ ≤ b`. Oracles
    /// for the rows are generated automatically.
    pub fn linear_constraints(mut self, rows: Vec<Vec<f64>>, rhs: Vec<f64>) -> Self {
        let lin = self.linear.get_or_insert_with(LinearConstraints::default);
        lin.rows.extend(rows);
        lin.rhs.extend(rhs);
        self
    }

    pub fn bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.bounds = Some(VariableBounds { lower, upper });
        self
    }

    pub fn build(self) -> Result<ProblemSpec> {
        let d = self.dimension;
        if d == 0 {
            return Err(Error::Construction("dimension must be positive".into()));
        }
        if self.objectives.is_empty() {
            return Err(Error::Construction(
                "at least one objective is required".into(),
            ));
        }
        let mut constraints = self.constraints;
        if let Some(lin) = &self.linear {
            if !constraints.is_empty() {
                return Err(Error::Construction(
                    "affine rows and general constraints cannot be mixed; pass the rows as oracles instead"
                        .into(),
                ));
            }
            if lin.rows.len() != lin.rhs.len() {
                return Err(Error::Construction(format!(
                    "{} constraint rows but {} right-hand sides",
                    lin.rows.len(),
                    lin.rhs.len()
                )));
            }
            for (row, &b) in lin.rows.iter().zip(&lin.rhs) {
                check_len(d, row.len())?;
                if row
                    .iter()
                    .chain(std::iter::once(&b))
                    .any(|v| !v.is_finite())
                {
                    return Err(Error::Construction(
                        "non-finite constraint coefficient".into(),
                    ));
                }
                constraints.push(Arc::new(AffineOracle { a: row.clone(), b }));
            }
        }
        if let Some(bounds) = &self.bounds {
            check_len(d, bounds.lower.len())?;
            check_len(d, bounds.upper.len())?;
            if bounds
                .lower
                .iter()
                .zip(&bounds.upper)
                .any(|(l, u)| l.is_nan() || u.is_nan() || l > u)
            {
                return Err(Error::Construction("inconsistent variable bounds".into()));
            }
        }
        Ok(ProblemSpec {
            dimension: d,
            objectives: self.objectives,
            constraints,
            linear: self.linear,
            bounds: self.bounds,
        })
    }
}

impl ProblemSpec {
    pub fn builder(dimension: usize) -> ProblemBuilder {
        ProblemBuilder {
            dimension,
            objectives: Vec::new(),
            constraints: Vec::new(),
            linear: None,
            bounds: None,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn num_objectives(&self) -> usize {
        self.objectives.len()
    }

    /// Number of constraint oracles (bounds excluded).
    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn objectives(&self) -> &[Arc<dyn Oracle>] {
        &self.objectives
    }

    pub fn constraints(&self) -> &[Arc<dyn Oracle>] {
        &self.constraints
    }

    pub fn linear_constraints(&self) -> Option<&LinearConstraints> {
        self.linear.as_ref()
    }

    pub fn bounds(&self) -> Option<&VariableBounds> {
        self.bounds.as_ref()
    }

    /// True when every constraint is affine, so the exact subproblem applies.
    pub fn is_linear(&self) -> bool {
        self.linear.is_some() || self.constraints.is_empty()
    }

    /// Human-readable name of a constraint in the flat numbering used by
    /// [`FeasibilityReport`]: oracles first, then lower bounds, then upper
    /// bounds.
    pub fn constraint_label(&self, index: usize) -> String {
        let m = self.constraints.len();
        let d = self.dimension;
        if index < m {
            format!("constraint {index}")
        } else if index < m + d {
            format!("lower bound on x{}", index - m)
        } else {
            format!("upper bound on x{}", index - m - d)
        }
    }

    fn check_point(&self, point: &[f64]) -> Result<()> {
        check_len(self.dimension, point.len())
    }

    pub fn evaluate_objectives(&self, point: &[f64]) -> Result<Vec<f64>> {
        self.check_point(point)?;
        Ok(self.objectives.iter().map(|o| o.value(point)).collect())
    }

    pub fn evaluate_gradients(&self, point: &[f64]) -> Result<GradientMatrix> {
        self.check_point(point)?;
        let rows = self
            .objectives
            .iter()
            .map(|o| {
                let g = o.gradient(point);
                check_len(self.dimension, g.len()).map(|_| g)
            })
            .collect::<Result<Vec<_>>>()?;
        GradientMatrix::from_rows(rows)
    }

    /// Constraint oracle values `f_i(θ)` (bounds excluded).
    pub fn constraint_values(&self, point: &[f64]) -> Result<Vec<f64>> {
        self.check_point(point)?;
        Ok(self.constraints.iter().map(|c| c.value(point)).collect())
    }

    /// Every constraint value in the flat numbering, bounds included as
    /// `l_j − θ_j` and `θ_j − u_j`. Infinite bounds contribute `-∞`.
    pub fn all_constraint_values(&self, point: &[f64]) -> Result<Vec<f64>> {
        let mut values = self.constraint_values(point)?;
        if let Some(b) = &self.bounds {
            values.extend(point.iter().zip(&b.lower).map(|(x, l)| l - x));
            values.extend(point.iter().zip(&b.upper).map(|(x, u)| x - u));
        }
        Ok(values)
    }

    /// Maximum constraint violation, clamped below at zero.
    pub fn max_violation(&self, point: &[f64]) -> Result<f64> {
        Ok(self
            .all_constraint_values(point)?
            .into_iter()
            .fold(0.0, f64::max))
    }

    pub fn check_feasibility(&self, point: &[f64], tol: f64) -> Result<FeasibilityReport> {
        if !(tol >= 0.0) {
            return Err(Error::Contract(format!(
                "feasibility tolerance {tol} must be ≥ 0"
            )));
        }
        let values = self.all_constraint_values(point)?;
        let max_violation = values.iter().copied().fold(0.0, f64::max);
        let violated_indices = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > tol)
            .map(|(i, _)| i)
            .collect();
        Ok(FeasibilityReport {
            max_violation,
            violated_indices,
            is_feasible: max_violation <= tol,
        })
    }

    /// Slater-type check: every constraint strictly negative, with bounds
    /// strictly inside.
    pub fn is_strictly_feasible(&self, point: &[f64]) -> Result<bool> {
        Ok(self.all_constraint_values(point)?.iter().all(|&v| v < 0.0))
    }

    /// The same problem in coordinates `z` with `θ = M z + s`. Objective and
    /// constraint values at `z` equal those of the original at `θ`. Affine
    /// rows stay affine (`A M z ≤ b − A s`); bounds require a diagonal `M`
    /// with positive entries.
    pub fn reparametrize(&self, map: &AffineMap) -> Result<ProblemSpec> {
        check_len(self.dimension, map.dimension())?;
        let map = Arc::new(map.clone());
        let pull = |o: &Arc<dyn Oracle>| -> Arc<dyn Oracle> {
            Arc::new(Pulled {
                inner: Arc::clone(o),
                map: Arc::clone(&map),
            })
        };
        let objectives = self.objectives.iter().map(pull).collect();
        let bounds = match &self.bounds {
            None => None,
            Some(b) => {
                let diag = map
                    .diagonal()
                    .filter(|d| d.iter().all(|v| *v > 0.0))
                    .ok_or_else(|| {
                        Error::Construction(
                            "bounds need a positive diagonal change of variables".into(),
                        )
                    })?;
                let to_z = |v: &[f64]| -> Vec<f64> {
                    v.iter()
                        .zip(&map.shift)
                        .zip(&diag)
                        .map(|((x, s), m)| (x - s) / m)
                        .collect()
                };
                Some(VariableBounds {
                    lower: to_z(&b.lower),
                    upper: to_z(&b.upper),
                })
            }
        };
        let (constraints, linear) = match &self.linear {
            Some(lin) => {
                let rows: Vec<Vec<f64>> = lin.rows.iter().map(|a| map.pull_gradient(a)).collect();
                let rhs: Vec<f64> = lin
                    .rows
                    .iter()
                    .zip(&lin.rhs)
                    .map(|(a, b)| b - dot(a, &map.shift))
                    .collect();
                let oracles = rows
                    .iter()
                    .zip(&rhs)
                    .map(|(a, &b)| Arc::new(AffineOracle { a: a.clone(), b }) as Arc<dyn Oracle>)
                    .collect();
                (oracles, Some(LinearConstraints { rows, rhs }))
            }
            None => (self.constraints.iter().map(pull).collect(), None),
        };
        Ok(ProblemSpec {
            dimension: self.dimension,
            objectives,
            constraints,
            linear,
            bounds,
        })
    }

    /// Largest relative error between each analytic gradient and a central
    /// difference with step `h`, measured as `|fd − g| / (1 + |g|)`.
    pub fn finite_diff_check(&self, point: &[f64], h: f64) -> Result<f64> {
        if !(h > 0.0) {
            return Err(Error::Contract(
                "finite-difference step must be positive".into(),
            ));
        }
        let grads = self.evaluate_gradients(point)?;
        let mut probe = point.to_vec();
        let mut worst = 0.0_f64;
        for (t, obj) in self.objectives.iter().enumerate() {
            let g = grads.row(t);
            for j in 0..self.dimension {
                probe[j] = point[j] + h;
                let up = obj.value(&probe);
                probe[j] = point[j] - h;
                let down = obj.value(&probe);
                probe[j] = point[j];
                let fd = (up - down) / (2.0 * h);
                worst = worst.max((fd - g[j]).abs() / (1.0 + g[j].abs()));
            }
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_2d() -> ProblemSpec {
        ProblemSpec::builder(2)
            .objective(FnOracle::new(
                |x| x.iter().map(|v| v * v).sum(),
                |x| x.iter().map(|v| 2.0 * v).collect(),
            ))
            .build()
            .unwrap()
    }

    #[test]
    fn identity_objective_value() {
        let p = ProblemSpec::builder(1)
            .objective(FnOracle::new(|x| x[0], |_| vec![1.0]))
            .build()
            .unwrap();
        assert_eq!(p.evaluate_objectives(&[5.0]).unwrap(), vec![5.0]);
    }

    #[test]
    fn quadratic_gradient() {
        let p = quadratic_2d();
        let g = p.evaluate_gradients(&[1.0, 2.0]).unwrap();
        assert_eq!(g.row(0), &[2.0, 4.0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = quadratic_2d();
        assert!(matches!(
            p.evaluate_objectives(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn wrong_gradient_length_is_reported() {
        let p = ProblemSpec::builder(2)
            .objective(FnOracle::new(|x| x[0], |_| vec![1.0]))
            .build()
            .unwrap();
        assert!(p.evaluate_gradients(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn fallback_gradient_uses_central_differences() {
        let p = ProblemSpec::builder(2)
            .objective(FnOracle::value_only(|x| x[0] * x[0] + 3.0 * x[1]))
            .build()
            .unwrap();
        let g = p.evaluate_gradients(&[1.5, -2.0]).unwrap();
        assert!((g.row(0)[0] - 3.0).abs() < 1e-8);
        assert!((g.row(0)[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn feasibility_counts_bounds() {
        let p = ProblemSpec::builder(2)
            .objective(FnOracle::new(|x| x[0], |_| vec![1.0, 0.0]))
            .linear_constraints(vec![vec![1.0, 1.0]], vec![1.0])
            .bounds(vec![0.0, 0.0], vec![f64::INFINITY, 0.5])
            .build()
            .unwrap();
        let r = p.check_feasibility(&[0.2, 0.3], 0.0).unwrap();
        assert!(r.is_feasible);
        let r = p.check_feasibility(&[-0.1, 0.9], 0.0).unwrap();
        assert!(!r.is_feasible);
        // lower bound on x0 and upper bound on x1
        assert_eq!(r.violated_indices, vec![1, 1 + 2 + 1]);
        assert!((r.max_violation - 0.4).abs() < 1e-15);
        assert_eq!(p.constraint_label(1), "lower bound on x0");
        assert_eq!(p.constraint_label(4), "upper bound on x1");
    }

    #[test]
    fn negative_tolerance_rejected() {
        let p = quadratic_2d();
        assert!(p.check_feasibility(&[0.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn mixing_affine_rows_and_oracles_is_rejected() {
        let r = ProblemSpec::builder(1)
            .objective(FnOracle::new(|x| x[0], |_| vec![1.0]))
            .constraint(FnOracle::new(|x| x[0] * x[0] - 1.0, |x| vec![2.0 * x[0]]))
            .linear_constraints(vec![vec![1.0]], vec![1.0])
            .build();
        assert!(r.is_err());
    }

    #[test]
    fn linear_finite_difference_is_exact() {
        let p = ProblemSpec::builder(3)
            .objective(FnOracle::new(
                |x| 2.0 * x[0] - x[1] + 0.5 * x[2],
                |_| vec![2.0, -1.0, 0.5],
            ))
            .build()
            .unwrap();
        for h in [1e-3, 1e-6, 0.5] {
            assert!(p.finite_diff_check(&[0.3, -0.7, 1.1], h).unwrap() <= 1e-8);
        }
    }
}
