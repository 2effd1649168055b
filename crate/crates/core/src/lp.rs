//! Dense two-phase primal simplex for small bounded linear programs.
//!
//! Solves `min cᵀx  s.t.  A x ≤ b,  l ≤ x ≤ u` where bounds may be infinite.
//! Bounds are handled implicitly (bounded-variable simplex), so only the
//! `A` rows enter the tableau. A nonbasic variable rests at one of its
//! bounds, or at zero when zero lies inside its range; the latter keeps
//! zero-cost coordinates of a direction subproblem at zero instead of
//! pushing them to a box corner.
//!
//! Pricing is Dantzig's rule; after `5 (p + k)` consecutive degenerate
//! pivots the solver falls back to Bland's rule until progress resumes. The
//! tableau is rebuilt from an LU factorization of the basis every
//! [`REFACTOR_EVERY`] pivots to bound drift.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-9;
const EXIT_TOL: f64 = 1e-8;
pub const REFACTOR_EVERY: usize = 100;

/// `min cᵀx  s.t.  a_ub x ≤ b_ub,  lower ≤ x ≤ upper`.
#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    /// New problem with cost `c` and default bounds `x ≥ 0`.
    pub fn new(c: Vec<f64>) -> Self {
        let k = c.len();
        Self {
            c,
            a_ub: Vec::new(),
            b_ub: Vec::new(),
            lower: vec![0.0; k],
            upper: vec![f64::INFINITY; k],
        }
    }

    pub fn with_row(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.a_ub.push(row);
        self.b_ub.push(rhs);
        self
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.a_ub.len()
    }

    fn validate(&self) -> Result<()> {
        let k = self.c.len();
        if self.lower.len() != k || self.upper.len() != k {
            return Err(Error::Contract(format!(
                "LP has {k} variables but {} lower / {} upper bounds",
                self.lower.len(),
                self.upper.len()
            )));
        }
        if self.a_ub.len() != self.b_ub.len() {
            return Err(Error::Contract(
                "LP row count differs from rhs length".into(),
            ));
        }
        if let Some(row) = self.a_ub.iter().find(|r| r.len() != k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: row.len(),
            });
        }
        let finite = self.c.iter().all(|v| v.is_finite())
            && self.a_ub.iter().flatten().all(|v| v.is_finite())
            && self.b_ub.iter().all(|v| v.is_finite());
        let no_nan = self.lower.iter().chain(&self.upper).all(|v| !v.is_nan());
        if !(finite && no_nan) {
            return Err(Error::Contract(
                "LP data must be finite (bounds may be ±∞)".into(),
            ));
        }
        Ok(())
    }

    /// Largest violation of rows and bounds at `x`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .a_ub
            .iter()
            .zip(&self.b_ub)
            .map(|(r, b)| crate::linalg::dot(r, x) - b);
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .flat_map(|(v, (l, u))| [l - v, v - u]);
        rows.chain(bounds).fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Pivot budget exhausted; only reachable through numerical trouble.
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    AtZero,
}

struct Tableau {
    p: usize,
    ncols: usize,
    /// Original rows after sign normalization, `p × ncols`.
    a: Vec<f64>,
    b: Vec<f64>,
    lo: Vec<f64>,
    up: Vec<f64>,
    /// `B⁻¹ A`, `p × ncols`.
    tab: Vec<f64>,
    xb: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<VarState>,
    reduced: Vec<f64>,
    cost: Vec<f64>,
    pivots: usize,
    since_refactor: usize,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl Tableau {
    fn value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::Basic(r) => self.xb[r],
            VarState::AtLower => self.lo[j],
            VarState::AtUpper => self.up[j],
            VarState::AtZero => 0.0,
        }
    }

    fn set_cost(&mut self, cost: Vec<f64>) {
        self.cost = cost;
        self.recompute_reduced();
    }

    fn recompute_reduced(&mut self) {
        let mut rc = self.cost.clone();
        for i in 0..self.p {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.tab[i * self.ncols..(i + 1) * self.ncols];
                for (r, t) in rc.iter_mut().zip(row) {
                    *r -= cb * t;
                }
            }
        }
        self.reduced = rc;
    }

    /// Rebuild `B⁻¹A` and the basic values from the original rows.
    fn refactor(&mut self) {
        self.since_refactor = 0;
        let p = self.p;
        if p == 0 {
            return;
        }
        let bmat = DMatrix::from_fn(p, p, |i, k| self.a[i * self.ncols + self.basis[k]]);
        let lu = bmat.lu();
        let amat = DMatrix::from_row_slice(p, self.ncols, &self.a);
        let Some(tab) = lu.solve(&amat) else {
            return;
        };
        let mut rhs = self.b.clone();
        for j in 0..self.ncols {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let v = self.value(j);
            if v != 0.0 {
                for (i, r) in rhs.iter_mut().enumerate() {
                    *r -= self.a[i * self.ncols + j] * v;
                }
            }
        }
        let Some(xb) = lu.solve(&DMatrix::from_column_slice(p, 1, &rhs)) else {
            return;
        };
        for i in 0..p {
            for j in 0..self.ncols {
                self.tab[i * self.ncols + j] = tab[(i, j)];
            }
            self.xb[i] = xb[(i, 0)];
        }
        self.recompute_reduced();
    }

    fn choose_entering(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.ncols {
            let rc = self.reduced[j];
            let (can_inc, can_dec) = match self.state[j] {
                VarState::Basic(_) => continue,
                VarState::AtLower => (self.up[j] > self.lo[j], false),
                VarState::AtUpper => (false, self.up[j] > self.lo[j]),
                VarState::AtZero => (self.up[j] > 0.0, self.lo[j] < 0.0),
            };
            let dir = if can_inc && rc < -DUAL_TOL {
                1.0
            } else if can_dec && rc > DUAL_TOL {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            if best.is_none_or(|(_, _, score)| rc.abs() > score) {
                best = Some((j, dir, rc.abs()));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn run(&mut self, max_pivots: usize, degenerate_limit: usize) -> PhaseOutcome {
        let mut degenerate_run = 0usize;
        let mut iterations = 0usize;
        loop {
            if iterations >= max_pivots {
                return PhaseOutcome::IterationLimit;
            }
            iterations += 1;
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor();
            }
            let bland = degenerate_run > degenerate_limit;
            let Some((q, dir)) = self.choose_entering(bland) else {
                return PhaseOutcome::Optimal;
            };

            // Ratio test. Basic i moves by -dir * θ * α_i.
            let mut theta = match dir > 0.0 {
                true => self.up[q] - self.value(q),
                false => self.value(q) - self.lo[q],
            };
            let mut leave: Option<(usize, bool)> = None; // (row, leaves at upper)
            let mut leave_alpha = 0.0;
            for i in 0..self.p {
                let alpha = self.tab[i * self.ncols + q];
                if alpha.abs() <= PIVOT_TOL {
                    continue;
                }
                let bvar = self.basis[i];
                let rate = -dir * alpha;
                let (limit, at_upper) = if rate < 0.0 {
                    if self.lo[bvar] == f64::NEG_INFINITY {
                        continue;
                    }
                    ((self.xb[i] - self.lo[bvar]) / -rate, false)
                } else {
                    if self.up[bvar] == f64::INFINITY {
                        continue;
                    }
                    ((self.up[bvar] - self.xb[i]) / rate, true)
                };
                let limit = limit.max(0.0);
                let take = match leave {
                    None => limit < theta - 1e-12,
                    Some((r, _)) => {
                        limit < theta - 1e-12
                            || (limit <= theta + 1e-12
                                && if bland {
                                    bvar < self.basis[r]
                                } else {
                                    alpha.abs() > leave_alpha
                                })
                    }
                };
                if take {
                    theta = theta.min(limit);
                    leave = Some((i, at_upper));
                    leave_alpha = alpha.abs();
                }
            }
            if !theta.is_finite() {
                return PhaseOutcome::Unbounded;
            }

            if theta <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }

            let entering_value = self.value(q) + dir * theta;
            if theta != 0.0 {
                for i in 0..self.p {
                    let alpha = self.tab[i * self.ncols + q];
                    self.xb[i] -= dir * theta * alpha;
                }
            }

            match leave {
                None => {
                    // Bound flip, no basis change.
                    self.state[q] = if dir > 0.0 {
                        VarState::AtUpper
                    } else {
                        VarState::AtLower
                    };
                }
                Some((r, at_upper)) => {
                    let out = self.basis[r];
                    self.state[out] = if at_upper {
                        VarState::AtUpper
                    } else {
                        VarState::AtLower
                    };
                    self.pivot(r, q);
                    self.xb[r] = entering_value;
                    self.basis[r] = q;
                    self.state[q] = VarState::Basic(r);
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let n = self.ncols;
        let piv = self.tab[r * n + q];
        for v in &mut self.tab[r * n..(r + 1) * n] {
            *v /= piv;
        }
        let pivot_row: Vec<f64> = self.tab[r * n..(r + 1) * n].to_vec();
        for i in 0..self.p {
            if i == r {
                continue;
            }
            let f = self.tab[i * n + q];
            if f != 0.0 {
                for (v, pr) in self.tab[i * n..(i + 1) * n].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
            }
        }
        let f = self.reduced[q];
        if f != 0.0 {
            for (v, pr) in self.reduced.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
        }
        self.pivots += 1;
        self.since_refactor += 1;
    }
}

/// Solves `lp`. Infeasibility and unboundedness are reported through
/// [`LpSolution::status`]; an `Err` means the input itself is malformed.
pub fn solve_lp(lp: &LpProblem) -> Result<LpSolution> {
    lp.validate()?;
    let k = lp.num_vars();
    let p = lp.num_rows();

    let failed = |status| LpSolution {
        status,
        x: vec![f64::NAN; k],
        objective: f64::NAN,
        pivots: 0,
    };

    if lp.lower.iter().zip(&lp.upper).any(|(l, u)| l > u) {
        return Ok(failed(LpStatus::Infeasible));
    }

    // Initial nonbasic placement of structural variables.
    let mut state: Vec<VarState> = (0..k)
        .map(|j| {
            let (l, u) = (lp.lower[j], lp.upper[j]);
            if l == 0.0 {
                VarState::AtLower
            } else if u == 0.0 {
                VarState::AtUpper
            } else if l < 0.0 && u > 0.0 {
                VarState::AtZero
            } else if l.is_finite() {
                VarState::AtLower
            } else {
                VarState::AtUpper
            }
        })
        .collect();
    let start_value = |j: usize, s: VarState| match s {
        VarState::AtLower => lp.lower[j],
        VarState::AtUpper => lp.upper[j],
        _ => 0.0,
    };

    let residual: Vec<f64> = (0..p)
        .map(|i| {
            lp.b_ub[i]
                - (0..k)
                    .map(|j| lp.a_ub[i][j] * start_value(j, state[j]))
                    .sum::<f64>()
        })
        .collect();
    let negated: Vec<bool> = residual.iter().map(|&r| r < 0.0).collect();
    let n_art = negated.iter().filter(|&&n| n).count();
    let ncols = k + p + n_art;

    let mut a = vec![0.0; p * ncols];
    let mut b = vec![0.0; p];
    let mut basis = vec![0; p];
    let mut xb = vec![0.0; p];
    let mut lo = lp.lower.clone();
    let mut up = lp.upper.clone();
    lo.extend(std::iter::repeat_n(0.0, p + n_art));
    up.extend(std::iter::repeat_n(f64::INFINITY, p + n_art));
    state.extend(std::iter::repeat_n(VarState::AtLower, p + n_art));

    let mut art = k + p;
    for i in 0..p {
        let sign = if negated[i] { -1.0 } else { 1.0 };
        for j in 0..k {
            a[i * ncols + j] = sign * lp.a_ub[i][j];
        }
        a[i * ncols + k + i] = sign;
        b[i] = sign * lp.b_ub[i];
        if negated[i] {
            a[i * ncols + art] = 1.0;
            basis[i] = art;
            xb[i] = -residual[i];
            state[art] = VarState::Basic(i);
            art += 1;
        } else {
            basis[i] = k + i;
            xb[i] = residual[i];
            state[k + i] = VarState::Basic(i);
        }
    }

    let mut t = Tableau {
        p,
        ncols,
        tab: a.clone(),
        a,
        b,
        lo,
        up,
        xb,
        basis,
        state,
        reduced: vec![0.0; ncols],
        cost: vec![0.0; ncols],
        pivots: 0,
        since_refactor: 0,
    };

    let max_pivots = 50 * (p + ncols) + 1000;
    let degenerate_limit = 5 * (p + k);

    if n_art > 0 {
        let mut cost = vec![0.0; ncols];
        cost[k + p..].iter_mut().for_each(|c| *c = 1.0);
        t.set_cost(cost);
        match t.run(max_pivots, degenerate_limit) {
            PhaseOutcome::IterationLimit => return Ok(failed(LpStatus::IterationLimit)),
            // Phase one is bounded below by zero.
            PhaseOutcome::Unbounded | PhaseOutcome::Optimal => {}
        }
        t.refactor();
        let infeasibility: f64 = (k + p..ncols).map(|j| t.value(j).max(0.0)).sum();
        let scale = 1.0 + lp.b_ub.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if infeasibility > PRIMAL_TOL * scale {
            return Ok(LpSolution {
                pivots: t.pivots,
                ..failed(LpStatus::Infeasible)
            });
        }
        for j in k + p..ncols {
            t.up[j] = 0.0;
            if !matches!(t.state[j], VarState::Basic(_)) {
                t.state[j] = VarState::AtLower;
            }
        }
    }

    let mut cost = lp.c.clone();
    cost.resize(ncols, 0.0);
    t.set_cost(cost);
    let outcome = t.run(max_pivots, degenerate_limit);
    t.refactor();
    let status = match outcome {
        PhaseOutcome::Optimal => LpStatus::Optimal,
        PhaseOutcome::Unbounded => LpStatus::Unbounded,
        PhaseOutcome::IterationLimit => LpStatus::IterationLimit,
    };
    if status != LpStatus::Optimal {
        return Ok(LpSolution {
            pivots: t.pivots,
            ..failed(status)
        });
    }

    let mut x: Vec<f64> = (0..k).map(|j| t.value(j)).collect();
    // Snap roundoff back into the box.
    for (j, v) in x.iter_mut().enumerate() {
        *v = v.clamp(lp.lower[j], lp.upper[j]);
    }
    let objective = crate::linalg::dot(&lp.c, &x);
    let status = if lp.violation(&x) <= EXIT_TOL {
        LpStatus::Optimal
    } else {
        LpStatus::Infeasible
    };
    Ok(LpSolution {
        status,
        x,
        objective,
        pivots: t.pivots,
    })
}
