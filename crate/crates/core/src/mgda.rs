//! Unconstrained MGDA: the minimum-norm point of the convex hull of the
//! objective gradients.
//!
//! `min_α ‖Σ_t α_t p_t‖²` over the probability simplex is solved by
//! Frank–Wolfe with away steps and exact line search, working in α-space
//! through the Gram matrix `G = P Pᵀ`. The stopping rule is Wolfe's
//! criterion: `w` is the minimum-norm point iff `wᵀp_j ≥ ‖w‖²` for every
//! generator, so the gap `‖w‖² − min_j wᵀp_j` certifies optimality.
//! After each step the iterate jumps to the minimum-norm point of its
//! active face when that point is inside the face.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, scale};
use crate::model::GradientMatrix;

pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct MinNormResult {
    /// Simplex weights.
    pub alpha: Vec<f64>,
    /// `Σ_t α_t p_t`
    pub w: Vec<f64>,
    pub norm_sq: f64,
    /// Wolfe gap at exit was within tolerance.
    pub certificate_ok: bool,
    pub iterations: usize,
}

/// Default iteration budget `10 · n · d`.
pub fn default_max_iter(gradients: &GradientMatrix) -> usize {
    10 * gradients.n() * gradients.dim()
}

/// True iff `xᵀp_j ≥ ‖x‖² − tol` for every row `p_j`.
pub fn wolfe_certificate(x: &[f64], points: &GradientMatrix, tol: f64) -> bool {
    if x.len() != points.dim() {
        return false;
    }
    let nsq = dot(x, x);
    points.rows().all(|p| dot(x, p) >= nsq - tol)
}

fn argmin_lowest(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::INFINITY;
    for (i, v) in values.enumerate() {
        if v < best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Minimum-norm point in `conv(p_1, …, p_n)`.
///
/// Never fails on well-formed input; when `max_iter` runs out before the
/// Wolfe gap drops below `tol`, the best iterate is returned with
/// `certificate_ok = false`.
pub fn min_norm_point(gradients: &GradientMatrix, tol: f64, max_iter: usize) -> MinNormResult {
    let n = gradients.n();
    let gram: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| dot(gradients.row(i), gradients.row(j)))
                .collect()
        })
        .collect();

    let start = argmin_lowest((0..n).map(|i| gram[i][i]));
    let mut alpha = vec![0.0; n];
    alpha[start] = 1.0;
    // ga[j] = wᵀp_j
    let mut ga: Vec<f64> = gram[start].clone();
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let nsq = dot(&alpha, &ga);
        let s = argmin_lowest(ga.iter().copied());
        let fw_gap = nsq - ga[s];
        if fw_gap <= tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        // Away vertex: largest wᵀp_j among the active set.
        let mut v = usize::MAX;
        for j in 0..n {
            if alpha[j] > 0.0 && (v == usize::MAX || ga[j] > ga[v]) {
                v = j;
            }
        }
        let away_gap = ga[v] - nsq;

        // Direction u in α-space: e_s − α (FW) or α − e_v (away).
        let (from, to, gamma_max, forward) = if fw_gap >= away_gap || alpha[v] >= 1.0 {
            (usize::MAX, s, 1.0, true)
        } else {
            (v, usize::MAX, alpha[v] / (1.0 - alpha[v]), false)
        };

        // ‖w + γ u‖² along the segment; u = p_s − w or w − p_v.
        let (slope, curvature) = if forward {
            // (p_s − w)ᵀw, ‖p_s − w‖²
            (ga[s] - nsq, gram[s][s] - 2.0 * ga[s] + nsq)
        } else {
            (nsq - ga[v], gram[v][v] - 2.0 * ga[v] + nsq)
        };
        let gamma = if curvature <= 0.0 {
            gamma_max
        } else {
            (-slope / curvature).clamp(0.0, gamma_max)
        };
        if gamma == 0.0 {
            break;
        }

        if forward {
            for a in alpha.iter_mut() {
                *a *= 1.0 - gamma;
            }
            alpha[to] += gamma;
            for (j, g) in ga.iter_mut().enumerate() {
                *g = (1.0 - gamma) * *g + gamma * gram[to][j];
            }
        } else {
            for a in alpha.iter_mut() {
                *a *= 1.0 + gamma;
            }
            alpha[from] -= gamma;
            if gamma >= gamma_max {
                alpha[from] = 0.0;
            }
            for (j, g) in ga.iter_mut().enumerate() {
                *g = (1.0 + gamma) * *g - gamma * gram[from][j];
            }
        }
        for a in alpha.iter_mut() {
            *a = a.max(0.0);
        }
        let total: f64 = alpha.iter().sum();
        for a in alpha.iter_mut() {
            *a /= total;
        }
        if let Some(polished) = face_minimizer(&gram, &alpha) {
            alpha = polished;
            ga = (0..n).map(|j| dot(&alpha, &gram[j])).collect();
        } else if iterations % 32 == 0 {
            // refresh from the Gram matrix against drift of the incremental update
            ga = (0..n).map(|j| dot(&alpha, &gram[j])).collect();
        }
    }

    let mut w = vec![0.0; gradients.dim()];
    for (a, p) in alpha.iter().zip(gradients.rows()) {
        for (wi, pi) in w.iter_mut().zip(p) {
            *wi += a * pi;
        }
    }
    let norm_sq = dot(&w, &w);
    MinNormResult {
        certificate_ok: converged || wolfe_certificate(&w, gradients, tol),
        alpha,
        w,
        norm_sq,
        iterations,
    }
}

/// Moves `alpha` toward the minimum-norm point of the affine hull of its
/// active vertices, dropping vertices whose weight reaches zero on the way.
/// Returns the new weights when they lower the norm.
fn face_minimizer(gram: &[Vec<f64>], alpha: &[f64]) -> Option<Vec<f64>> {
    let quad = |a: &[f64]| -> f64 {
        (0..a.len())
            .map(|i| a[i] * (0..a.len()).map(|j| gram[i][j] * a[j]).sum::<f64>())
            .sum()
    };
    let mut current = alpha.to_vec();
    loop {
        let active: Vec<usize> = (0..current.len()).filter(|&j| current[j] > 0.0).collect();
        let k = active.len();
        if k < 2 {
            break;
        }
        // [G_S 1; 1ᵀ 0] [β; μ] = [0; 1], least squares when the vertices are
        // affinely dependent
        let kkt = DMatrix::from_fn(k + 1, k + 1, |i, j| match (i < k, j < k) {
            (true, true) => gram[active[i]][active[j]],
            (false, false) => 0.0,
            _ => 1.0,
        });
        let mut rhs = DVector::zeros(k + 1);
        rhs[k] = 1.0;
        let scale = kkt.amax().max(1.0);
        let beta = kkt.svd(true, true).solve(&rhs, 1e-13 * scale).ok()?;
        if beta.iter().any(|b| !b.is_finite()) {
            return None;
        }
        if beta.iter().take(k).all(|&b| b > 0.0) {
            for (i, &j) in active.iter().enumerate() {
                current[j] = beta[i];
            }
            break;
        }
        // largest step toward β that keeps the weights non-negative
        let mut theta = 1.0;
        let mut hit = active[0];
        for (i, &j) in active.iter().enumerate() {
            if beta[i] <= 0.0 {
                let t = current[j] / (current[j] - beta[i]);
                if t < theta {
                    theta = t;
                    hit = j;
                }
            }
        }
        for (i, &j) in active.iter().enumerate() {
            current[j] += theta * (beta[i] - current[j]);
        }
        current[hit] = 0.0;
    }
    for a in current.iter_mut() {
        *a = a.max(0.0);
    }
    let total: f64 = current.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    for a in current.iter_mut() {
        *a /= total;
    }
    (quad(&current) < quad(alpha)).then_some(current)
}

/// The constrained-hull subproblem of the projection-style extension of
/// MGDA, restricted to two gradients:
///
/// `min_λ ‖w(λ)‖²`, `w(λ) = p_1 + λ (p_2 − p_1)`, `λ ∈ [0, 1]`,
/// subject to `a_kᵀ(θ − ε w(λ)) ≤ b_k` for each affine row.
///
/// Returns the hull point `w`, or `None` when the rows exclude the whole
/// segment.
pub fn constrained_hull_point(
    p1: &[f64],
    p2: &[f64],
    point: &[f64],
    epsilon: f64,
    rows: &[(Vec<f64>, f64)],
) -> Result<Option<Vec<f64>>> {
    check_len(p1.len(), p2.len())?;
    check_len(p1.len(), point.len())?;
    if !(epsilon > 0.0) {
        return Err(Error::Contract("step ε must be positive".into()));
    }
    let diff: Vec<f64> = p2.iter().zip(p1).map(|(a, b)| a - b).collect();
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for (a, b) in rows {
        check_len(point.len(), a.len())?;
        // a·θ − ε a·p1 − ε λ a·diff ≤ b
        let constant = dot(a, point) - epsilon * dot(a, p1) - b;
        let slope = -epsilon * dot(a, &diff);
        if slope.abs() < 1e-300 {
            if constant > 0.0 {
                return Ok(None);
            }
        } else if slope > 0.0 {
            hi = hi.min(-constant / slope);
        } else {
            lo = lo.max(-constant / slope);
        }
    }
    if lo > hi {
        return Ok(None);
    }
    let dd = dot(&diff, &diff);
    let lambda = if dd == 0.0 {
        lo
    } else {
        (-dot(p1, &diff) / dd).clamp(lo, hi)
    };
    Ok(Some(
        p1.iter().zip(&diff).map(|(a, b)| a + lambda * b).collect(),
    ))
}

/// A fixed two-objective instance on which the constrained-hull point is a
/// bad search direction: its negation increases one objective.
#[derive(Clone, Debug)]
pub struct Cmgda1Fixture {
    pub gradients: GradientMatrix,
    pub point: Vec<f64>,
    pub epsilon: f64,
    /// Affine rows `aᵀθ ≤ b`.
    pub constraints: Vec<(Vec<f64>, f64)>,
    pub hull_point: Vec<f64>,
    /// `−hull_point`
    pub direction: Vec<f64>,
}

/// Gradients `(−1, 2)` and `(3, 1)` at `θ = 0` with step `ε = 1` and the
/// half-plane `−θ₁ − θ₂ ≤ 1.15`. The row cuts the segment at `λ ≤ 0.05`,
/// away from the unconstrained optimum `λ = 6/17`, so the constrained-hull
/// point is `(−0.8, 1.95)` and `−w` has inner product `0.45 > 0` with the
/// second gradient.
pub fn cmgda1_counterexample_fixture() -> Cmgda1Fixture {
    let p1 = vec![-1.0, 2.0];
    let p2 = vec![3.0, 1.0];
    let point = vec![0.0, 0.0];
    let constraints = vec![(vec![-1.0, -1.0], 1.15)];
    let hull_point = constrained_hull_point(&p1, &p2, &point, 1.0, &constraints)
        .expect("fixture dimensions agree")
        .expect("fixture rows leave part of the segment");
    Cmgda1Fixture {
        gradients: GradientMatrix::from_rows(vec![p1, p2]).expect("fixture gradients"),
        point,
        epsilon: 1.0,
        constraints,
        direction: scale(&hull_point, -1.0),
        hull_point,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gm(rows: &[&[f64]]) -> GradientMatrix {
        GradientMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn singleton_hull() {
        let g = gm(&[&[3.0, 4.0]]);
        let r = min_norm_point(&g, DEFAULT_TOL, default_max_iter(&g));
        assert_eq!(r.alpha, vec![1.0]);
        assert_eq!(r.w, vec![3.0, 4.0]);
        assert_eq!(r.norm_sq, 25.0);
        assert!(r.certificate_ok);
    }

    #[test]
    fn orthogonal_pair() {
        let g = gm(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let r = min_norm_point(&g, DEFAULT_TOL, default_max_iter(&g));
        assert!((r.alpha[0] - 0.5).abs() < 1e-12);
        assert!((r.w[0] - 0.5).abs() < 1e-12 && (r.w[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn direction_comparison_pair() {
        let g = gm(&[&[-1.0, 2.0], &[3.0, 1.0]]);
        let r = min_norm_point(&g, DEFAULT_TOL, default_max_iter(&g));
        assert!((r.w[0] - 7.0 / 17.0).abs() < 1e-12);
        assert!((r.w[1] - 28.0 / 17.0).abs() < 1e-12);
        assert!((r.norm_sq - 49.0 / 17.0).abs() < 1e-12);
    }

    #[test]
    fn certificate_examples() {
        let g = gm(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(wolfe_certificate(&[0.5, 0.5], &g, 1e-9));
        assert!(!wolfe_certificate(&[1.0, 0.0], &g, 1e-9));
        let g = gm(&[&[-1.0, 2.0], &[3.0, 1.0]]);
        assert!(wolfe_certificate(&[7.0 / 17.0, 28.0 / 17.0], &g, 1e-12));
    }

    #[test]
    fn origin_inside_hull() {
        let g = gm(&[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0]]);
        let r = min_norm_point(&g, 1e-12, 1000);
        assert!(r.certificate_ok);
        assert!(r.norm_sq < 1e-12);
    }

    #[test]
    fn budget_exhaustion_flags_certificate() {
        let g = gm(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        let r = min_norm_point(&g, 1e-15, 1);
        assert!(!r.certificate_ok);
        assert!((r.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fixture_direction_increases_an_objective() {
        let f = cmgda1_counterexample_fixture();
        assert!((f.hull_point[0] + 0.8).abs() < 1e-12);
        assert!((f.hull_point[1] - 1.95).abs() < 1e-12);
        let dd = f.gradients.directional(&f.direction);
        assert!(dd.iter().any(|&v| v > 1e-8), "{dd:?}");
        // the step stays on the constraint boundary
        let step: Vec<f64> = f.direction.iter().map(|v| f.epsilon * v).collect();
        let (a, b) = &f.constraints[0];
        assert!(dot(a, &step) - b <= 1e-12);
    }

    #[test]
    fn inactive_constraint_matches_unconstrained_hull() {
        let rows = vec![(vec![1.0, 0.0], 100.0)];
        let w = constrained_hull_point(&[-1.0, 2.0], &[3.0, 1.0], &[0.0, 0.0], 1.0, &rows)
            .unwrap()
            .unwrap();
        let g = gm(&[&[-1.0, 2.0], &[3.0, 1.0]]);
        let r = min_norm_point(&g, DEFAULT_TOL, default_max_iter(&g));
        assert!((w[0] - r.w[0]).abs() < 1e-9 && (w[1] - r.w[1]).abs() < 1e-9);
    }

    #[test]
    fn identical_gradients_always_descend() {
        let p = [2.0, -1.0];
        let rows = vec![(vec![1.0, 1.0], 0.5)];
        let w = constrained_hull_point(&p, &p, &[0.0, 0.0], 1.0, &rows)
            .unwrap()
            .unwrap();
        assert!(-dot(&w, &p) < 0.0);
    }

    fn segment_projection(a: &[f64], b: &[f64]) -> Vec<f64> {
        let ba: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
        let len_sq = dot(&ba, &ba);
        let lambda = if len_sq == 0.0 {
            0.0
        } else {
            (-dot(a, &ba) / len_sq).clamp(0.0, 1.0)
        };
        a.iter().zip(&ba).map(|(x, y)| x + lambda * y).collect()
    }

    fn grid_min_norm(g: &GradientMatrix, step: f64) -> f64 {
        let k = (1.0 / step).round() as usize;
        let mut best = f64::INFINITY;
        for i in 0..=k {
            for j in 0..=k - i {
                let a = [i as f64 * step, j as f64 * step, (k - i - j) as f64 * step];
                let w: Vec<f64> = (0..g.dim())
                    .map(|c| (0..3).map(|t| a[t] * g.row(t)[c]).sum())
                    .collect();
                best = best.min(dot(&w, &w).sqrt());
            }
        }
        best
    }

    fn gradient_set(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = GradientMatrix> {
        (n, 1usize..=10).prop_flat_map(|(n, d)| {
            proptest::collection::vec(proptest::collection::vec(-1.0..1.0f64, d), n)
                .prop_map(|rows| GradientMatrix::from_rows(rows).unwrap())
        })
    }

    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn random_sets_are_certified(g in gradient_set(1..=6)) {
            let r = min_norm_point(&g, DEFAULT_TOL, default_max_iter(&g));
            prop_assert!(wolfe_certificate(&r.w, &g, 1e-7));
            prop_assert!(r.alpha.iter().all(|&a| a >= 0.0));
            prop_assert!((r.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            if r.norm_sq > DEFAULT_TOL {
                for p in g.rows() {
                    prop_assert!(-dot(&r.w, p) <= -r.norm_sq + 1e-8);
                }
            }
        }

        #[test]
        fn pairs_match_segment_projection(g in gradient_set(2..=2)) {
            let r = min_norm_point(&g, DEFAULT_TOL, default_max_iter(&g));
            let exact = segment_projection(g.row(0), g.row(1));
            for (a, b) in r.w.iter().zip(&exact) {
                prop_assert!((a - b).abs() <= 1e-9, "{:?} vs {:?}", r.w, exact);
            }
        }

        #[test]
        fn scaling_gradients_scales_w(g in gradient_set(1..=6), s in 0.1..10.0f64) {
            let r = min_norm_point(&g, 1e-12, default_max_iter(&g));
            let rs = min_norm_point(&g.scaled(s), 1e-12 * s * s, default_max_iter(&g));
            for (a, b) in r.w.iter().zip(&rs.w) {
                prop_assert!((a * s - b).abs() <= 1e-5 * (1.0 + b.abs()));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn triples_match_grid_search(g in gradient_set(3..=3)) {
            let r = min_norm_point(&g, DEFAULT_TOL, default_max_iter(&g));
            let grid = grid_min_norm(&g, 1e-3);
            prop_assert!((r.norm_sq.sqrt() - grid).abs() <= 2e-3, "{} vs {grid}", r.norm_sq.sqrt());
        }
    }
}
