//! Long-only portfolio with return, variance and cost objectives and
//! industry allocation bands.
//!
//! Minimizes `(−rᵀx, xᵀΣx, cᵀx)` over `x ≥ 0`, `Σ x_i = 1`,
//! `L ≤ Σ_{i∈S_j} x_i ≤ U`. The covariance is the factor model
//! `Σ = A Aᵀ + ε I` with `A` of size `n × k`; products with `Σ` go through
//! the factors and cost `O(nk)`.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Uniform};

use crate::driver::StartSampler;
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::model::{FnOracle, ProblemSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct PortfolioConfig {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub lower: f64,
    pub upper: f64,
    pub epsilon: f64,
    /// Factor count; `n / 10` (at least 1) when `None`.
    pub k: Option<usize>,
}

impl Default for PortfolioConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            m: 10,
            seed: 0,
            lower: 0.05,
            upper: 0.25,
            epsilon: 1e-6,
            k: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PortfolioInstance {
    pub n: usize,
    pub m: usize,
    pub r: Vec<f64>,
    pub c: Vec<f64>,
    /// Factor loadings, `n × k`.
    pub factors: DMatrix<f64>,
    pub epsilon: f64,
    /// Contiguous, equally sized asset blocks.
    pub industries: Vec<Range<usize>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl PortfolioInstance {
    /// `Σ x`
    pub fn covariance_times(&self, x: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(x);
        let y = &self.factors * (self.factors.tr_mul(&x)) + &x * self.epsilon;
        y.data.into()
    }

    /// Dense `Σ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.factors * self.factors.transpose() + DMatrix::identity(self.n, self.n) * self.epsilon
    }

    pub fn variance(&self, x: &[f64]) -> f64 {
        dot(x, &self.covariance_times(x))
    }

    /// Uniform draw from the simplex `Σ x = 1, x ≥ 0` restricted to the
    /// industry bands. Industry totals are `L + (1 − mL) s` with `s` uniform
    /// on the `m`-simplex, redrawn while any total exceeds `U`; each block
    /// is then split uniformly. Returns `None` after `max_attempts` redraws.
    pub fn sample_feasible(&self, rng: &mut impl Rng, max_attempts: usize) -> Option<Vec<f64>> {
        let spare = 1.0 - self.lower.iter().sum::<f64>();
        for _ in 0..max_attempts.max(1) {
            let s = simplex(rng, self.m);
            let totals: Vec<f64> = (0..self.m).map(|j| self.lower[j] + spare * s[j]).collect();
            if totals.iter().zip(&self.upper).any(|(t, u)| t > u) {
                continue;
            }
            let mut x = vec![0.0; self.n];
            for (block, total) in self.industries.iter().zip(totals) {
                for (xi, si) in x[block.clone()].iter_mut().zip(simplex(rng, block.len())) {
                    *xi = total * si;
                }
            }
            return Some(x);
        }
        None
    }
}

fn simplex(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Seeded random instance and its problem.
pub fn portfolio_problem(cfg: &PortfolioConfig) -> Result<(ProblemSpec, Arc<PortfolioInstance>)> {
    let PortfolioConfig {
        n,
        m,
        seed,
        lower,
        upper,
        epsilon,
        k,
    } = *cfg;
    if n == 0 || m == 0 || n % m != 0 {
        return Err(Error::Construction(format!(
            "{n} assets cannot be split into {m} equal industries"
        )));
    }
    if !(lower >= 0.0 && lower <= upper && m as f64 * lower <= 1.0 && 1.0 <= m as f64 * upper) {
        return Err(Error::Construction(format!(
            "industry bands [{lower}, {upper}] × {m} cannot sum to one"
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Construction("ε must be positive".into()));
    }
    let k = k.unwrap_or((n / 10).max(1));
    if k == 0 {
        return Err(Error::Construction("factor count must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let returns = Uniform::new(0.05, 0.15).expect("valid range");
    let costs = Uniform::new(0.01, 0.1).expect("valid range");
    let loading = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let r: Vec<f64> = (0..n).map(|_| returns.sample(&mut rng)).collect();
    let c: Vec<f64> = (0..n).map(|_| costs.sample(&mut rng)).collect();
    let sigma_a = 1.0 / (k as f64).sqrt();
    let factors = DMatrix::from_fn(n, k, |_, _| loading.sample(&mut rng) * sigma_a);

    let block = n / m;
    let industries: Vec<Range<usize>> = (0..m).map(|j| j * block..(j + 1) * block).collect();
    let inst = Arc::new(PortfolioInstance {
        n,
        m,
        r,
        c,
        factors,
        epsilon,
        industries,
        lower: vec![lower; m],
        upper: vec![upper; m],
    });

    let mut rows = vec![vec![1.0; n], vec![-1.0; n]];
    let mut rhs = vec![1.0, -1.0];
    for (j, s) in inst.industries.iter().enumerate() {
        let mut row = vec![0.0; n];
        row[s.clone()].fill(1.0);
        rows.push(row.iter().map(|v| -v).collect());
        rhs.push(-inst.lower[j]);
        rows.push(row);
        rhs.push(inst.upper[j]);
    }

    let neg_r: Vec<f64> = inst.r.iter().map(|v| -v).collect();
    let f1 = {
        let g = neg_r.clone();
        FnOracle::new(move |x| dot(&neg_r, x), move |_| g.clone())
    };
    let f2 = {
        let (a, b) = (Arc::clone(&inst), Arc::clone(&inst));
        FnOracle::new(
            move |x| a.variance(x),
            move |x| b.covariance_times(x).into_iter().map(|v| 2.0 * v).collect(),
        )
    };
    let f3 = {
        let (c1, c2) = (inst.c.clone(), inst.c.clone());
        FnOracle::new(move |x| dot(&c1, x), move |_| c2.clone())
    };
    let spec = ProblemSpec::builder(n)
        .objective(f1)
        .objective(f2)
        .objective(f3)
        .linear_constraints(rows, rhs)
        .bounds(vec![0.0; n], vec![f64::INFINITY; n])
        .build()?;
    Ok((spec, inst))
}

/// Feasible starts drawn by [`PortfolioInstance::sample_feasible`].
#[derive(Clone, Debug)]
pub struct PortfolioSampler {
    pub instance: Arc<PortfolioInstance>,
}

impl StartSampler for PortfolioSampler {
    fn sample(&self, _problem: &ProblemSpec, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        const ATTEMPTS: usize = 100_000;
        self.instance
            .sample_feasible(rng, ATTEMPTS)
            .ok_or_else(|| Error::Sampling {
                attempts: ATTEMPTS,
                constraint: "industry upper bounds".into(),
                violation: f64::NAN,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PortfolioConfig {
        PortfolioConfig {
            n: 10,
            m: 2,
            lower: 0.05,
            upper: 0.95,
            ..Default::default()
        }
    }

    #[test]
    fn uniform_allocation_is_feasible() {
        let (p, _) = portfolio_problem(&small()).unwrap();
        assert!(p.check_feasibility(&[0.1; 10], 1e-12).unwrap().is_feasible);
        let mut x = [0.1; 10];
        x[0] = 0.2;
        assert!(!p.check_feasibility(&x, 1e-8).unwrap().is_feasible);
    }

    #[test]
    fn factor_products_match_dense() {
        let (_, inst) = portfolio_problem(&PortfolioConfig {
            n: 40,
            m: 4,
            ..Default::default()
        })
        .unwrap();
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let dense = inst.covariance() * DVector::from_column_slice(&x);
        for (a, b) in inst.covariance_times(&x).iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_instance() {
        let (_, a) = portfolio_problem(&small()).unwrap();
        let (_, b) = portfolio_problem(&small()).unwrap();
        assert_eq!(a.r, b.r);
        assert_eq!(a.c, b.c);
        assert_eq!(a.factors, b.factors);
        let (_, other) = portfolio_problem(&PortfolioConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.r, other.r);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(portfolio_problem(&PortfolioConfig { n: 11, ..small() }).is_err());
        assert!(portfolio_problem(&PortfolioConfig {
            upper: 0.4,
            ..small()
        })
        .is_err());
        assert!(portfolio_problem(&PortfolioConfig {
            lower: 0.6,
            ..small()
        })
        .is_err());
    }

    #[test]
    fn sampled_starts_are_feasible() {
        let (p, inst) = portfolio_problem(&PortfolioConfig {
            n: 200,
            m: 10,
            ..Default::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x = inst.sample_feasible(&mut rng, 1000).unwrap();
            assert!(p.check_feasibility(&x, 1e-12).unwrap().is_feasible);
        }
    }
}
