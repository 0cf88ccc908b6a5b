//! L² projection of `x^α` onto Müntz spans on `[0, 1]`.
//!
//! Three independent routes to the same number:
//! the Gram-matrix solve ([`projection_error_sq`]), the single-exponent closed
//! form ([`projection_error_sq_closed_k1`]) and brute-force quadrature of the
//! residual ([`quadrature_l2_error`]). [`product_formula_error`] evaluates the
//! published general-K product expression so it can be compared against the
//! Gram solve.

pub mod quadrature;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MsnError, Result};

/// Largest basis size accepted by the Gram routines.
pub const MAX_K: usize = 12;
/// Condition estimate above which the Gram system is reported as unusable.
pub const MAX_CONDITION: f64 = 1e12;
/// Exponents closer than this are treated as duplicates.
pub const DISTINCT_TOL: f64 = 1e-10;
/// Width of the left panel integrated in closed form.
pub const LEFT_PANEL: f64 = 1e-6;
pub const QUAD_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionProblem {
    pub alpha: f64,
    pub mu: Vec<f64>,
}

impl ProjectionProblem {
    pub fn new(alpha: f64, mu: Vec<f64>) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(MsnError::Domain(format!("alpha must be positive, got {alpha}")));
        }
        check_basis(&mu)?;
        Ok(Self { alpha, mu })
    }

    /// `b_k = ⟨x^α, x^μ_k⟩ = 1/(α + μ_k + 1)`.
    pub fn rhs(&self) -> Vec<f64> {
        self.mu.iter().map(|m| 1.0 / (self.alpha + m + 1.0)).collect()
    }
}

fn check_basis(mu: &[f64]) -> Result<()> {
    if mu.is_empty() || mu.len() > MAX_K {
        return Err(MsnError::InvalidConfig(format!(
            "basis size must be in 1..={MAX_K}, got {}",
            mu.len()
        )));
    }
    if let Some(&bad) = mu.iter().find(|&&m| !(m > 0.0)) {
        return Err(MsnError::Domain(format!("exponents must be positive, got {bad}")));
    }
    for (i, a) in mu.iter().enumerate() {
        for b in &mu[i + 1..] {
            if (a - b).abs() < DISTINCT_TOL {
                return Err(MsnError::Domain(format!("exponents {a} and {b} coincide")));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
    /// 2-norm condition number from the symmetric eigenvalues.
    pub condition: f64,
}

impl GramMatrix {
    pub fn is_ill_conditioned(&self) -> bool {
        !(self.condition <= MAX_CONDITION)
    }
}

/// `G_jk = 1/(μ_j + μ_k + 1)` with its condition estimate.
pub fn gram_matrix(mu: &[f64]) -> Result<GramMatrix> {
    check_basis(mu)?;
    let k = mu.len();
    let entries = DMatrix::from_fn(k, k, |i, j| 1.0 / (mu[i] + mu[j] + 1.0));
    let eig = entries.clone().symmetric_eigen();
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    Ok(GramMatrix { entries, condition })
}

/// Solve `G a* = b` by Cholesky.
pub fn projection_coeffs(p: &ProjectionProblem) -> Result<Vec<f64>> {
    let g = gram_matrix(&p.mu)?;
    if g.is_ill_conditioned() {
        return Err(MsnError::IllConditioned {
            condition: g.condition,
        });
    }
    let chol = g
        .entries
        .cholesky()
        .ok_or(MsnError::IllConditioned {
            condition: g.condition,
        })?;
    let sol = chol.solve(&DVector::from_vec(p.rhs()));
    Ok(sol.iter().copied().collect())
}

/// `1/(2α+1) - bᵀ G⁻¹ b`, clamped at 0.
pub fn projection_error_sq(p: &ProjectionProblem) -> Result<f64> {
    let a = projection_coeffs(p)?;
    let bta: f64 = p.rhs().iter().zip(&a).map(|(b, a)| b * a).sum();
    Ok((1.0 / (2.0 * p.alpha + 1.0) - bta).max(0.0))
}

/// Single-exponent residual `(α-μ)² / ((2α+1)(α+μ+1)²)`.
///
/// This is the simplification of `1/(2α+1) - (2μ+1)/(α+μ+1)²`; the identity
/// `(α+μ+1)² - (2α+1)(2μ+1) = (α-μ)²` removes any `(2μ+1)` factor from the
/// denominator.
pub fn projection_error_sq_closed_k1(alpha: f64, mu: f64) -> f64 {
    let d = alpha - mu;
    let s = alpha + mu + 1.0;
    d * d / ((2.0 * alpha + 1.0) * s * s)
}

/// The published product expression
/// `1/(2α+1) · Π (α-μ_k)² / ((α+μ_k+1)(2μ_k+1))`.
///
/// It vanishes whenever some `μ_k = α` and scales as `δ²` near a match, but
/// it is not the projection residual: at K = 1 it differs from the Gram
/// solve by the factor `(α+μ+1)/(2μ+1)`. Compare against
/// [`projection_error_sq`], which is authoritative.
pub fn product_formula_error(p: &ProjectionProblem) -> f64 {
    let a = p.alpha;
    p.mu.iter()
        .map(|&m| (a - m) * (a - m) / ((a + m + 1.0) * (2.0 * m + 1.0)))
        .product::<f64>()
        / (2.0 * a + 1.0)
}

/// `∫₀¹ (x^α - Σ a_k x^μ_k)² dx` by adaptive Gauss-Kronrod on
/// `[LEFT_PANEL, 1]` plus exact power integration on `[0, LEFT_PANEL]`.
pub fn quadrature_l2_error(alpha: f64, mu: &[f64], a: &[f64]) -> Result<f64> {
    if mu.len() != a.len() {
        return Err(MsnError::DimensionMismatch {
            expected: mu.len(),
            got: a.len(),
        });
    }
    if !(alpha > 0.0) || mu.iter().any(|&m| !(m > 0.0)) {
        return Err(MsnError::Domain("exponents must be positive".into()));
    }
    let h = LEFT_PANEL;
    let power = |p: f64| h.powf(p + 1.0) / (p + 1.0);
    let mut left = power(2.0 * alpha);
    for j in 0..a.len() {
        left -= 2.0 * a[j] * power(alpha + mu[j]);
        for k in j..a.len() {
            let w = if k == j { 1.0 } else { 2.0 };
            left += w * a[j] * a[k] * power(mu[j] + mu[k]);
        }
    }
    let residual = |x: f64| {
        let r = x.powf(alpha) - a.iter().zip(mu).map(|(ak, mk)| ak * x.powf(*mk)).sum::<f64>();
        r * r
    };
    let right = quadrature::integrate(residual, h, 1.0, QUAD_TOL, 4000)?;
    Ok((left.max(0.0) + right.value).max(0.0))
}

/// `E[i][j] = projection_error_sq_closed_k1(alpha_grid[i], mu_grid[j])`.
pub fn error_landscape(alpha_grid: &[f64], mu_grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    if alpha_grid.iter().chain(mu_grid).any(|&v| !(v > 0.0)) {
        return Err(MsnError::Domain("landscape grids must be positive".into()));
    }
    Ok(alpha_grid
        .iter()
        .map(|&a| mu_grid.iter().map(|&m| projection_error_sq_closed_k1(a, m)).collect())
        .collect())
}

/// Long-form CSV with header `alpha,mu,error`.
pub fn landscape_csv(alpha_grid: &[f64], mu_grid: &[f64], errors: &[Vec<f64>]) -> String {
    let mut out = String::from("alpha,mu,error\n");
    for (a, row) in alpha_grid.iter().zip(errors) {
        for (m, e) in mu_grid.iter().zip(row) {
            let _ = writeln!(out, "{a},{m},{e:e}");
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub eps: f64,
    /// Exponent mismatch δ with single-exponent error exactly `eps`.
    pub delta: f64,
    /// `√eps`, the scale δ is expected to follow.
    pub sqrt_eps: f64,
    /// `eps^{-1/2}`, the ReLU neuron-count scaling.
    pub relu_neurons: f64,
}

/// δ ≥ 0 with `projection_error_sq_closed_k1(α, α + δ) = eps`, by bisection.
/// Infinite when `eps` is at or above the supremum `1/(2α+1)`.
pub fn mismatch_for_error(alpha: f64, eps: f64) -> f64 {
    if eps <= 0.0 {
        return 0.0;
    }
    let f = |d: f64| projection_error_sq_closed_k1(alpha, alpha + d);
    if eps >= 1.0 / (2.0 * alpha + 1.0) {
        return f64::INFINITY;
    }
    let mut hi = 1e-3;
    while f(hi) < eps {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn mlp_gap_table(alpha: f64, eps_targets: &[f64]) -> Vec<GapRow> {
    eps_targets
        .iter()
        .map(|&eps| GapRow {
            eps,
            delta: mismatch_for_error(alpha, eps),
            sqrt_eps: eps.sqrt(),
            relu_neurons: if eps > 0.0 { eps.powf(-0.5) } else { f64::INFINITY },
        })
        .collect()
}

/// CSV with header `eps,delta,sqrt_eps,relu_neurons`.
pub fn gap_table_csv(rows: &[GapRow]) -> String {
    let mut out = String::from("eps,delta,sqrt_eps,relu_neurons\n");
    for r in rows {
        let _ = writeln!(out, "{:e},{:e},{:e},{:e}", r.eps, r.delta, r.sqrt_eps, r.relu_neurons);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force residual of `x^α - Σ a_k x^μ_k` by composite Simpson on a
    /// graded mesh; an oracle independent of both the Gram algebra and the
    /// adaptive quadrature.
    fn simpson_residual(alpha: f64, mu: &[f64], a: &[f64]) -> f64 {
        let f = |x: f64| {
            let r = x.powf(alpha) - a.iter().zip(mu).map(|(ak, mk)| ak * x.powf(*mk)).sum::<f64>();
            r * r
        };
        // x = t^8 grading flattens the endpoint behaviour at 0
        let n = 20_000;
        let g = |t: f64| f(t.powi(8)) * 8.0 * t.powi(7);
        let h = 1.0 / n as f64;
        let mut s = g(0.0) + g(1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * g(i as f64 * h);
        }
        s * h / 3.0
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn gram_examples() {
        let g = gram_matrix(&[0.5]).unwrap();
        assert_eq!(g.entries[(0, 0)], 0.5);
        let g = gram_matrix(&[0.5, 1.5]).unwrap();
        let expected = [[0.5, 1.0 / 3.0], [1.0 / 3.0, 0.25]];
        for i in 0..2 {
            for j in 0..2 {
                assert!(close(g.entries[(i, j)], expected[i][j], 1e-15));
                // ⟨x^μi, x^μj⟩ by quadrature
                let (mi, mj) = ([0.5, 1.5][i], [0.5, 1.5][j]);
                let q = quadrature::integrate(|x: f64| x.powf(mi + mj), 0.0, 1.0, 1e-14, 200).unwrap();
                assert!(close(q.value, expected[i][j], 1e-13));
            }
        }
        assert!(matches!(gram_matrix(&[0.0, 1.0]), Err(MsnError::Domain(_))));
        assert!(gram_matrix(&[0.7, 0.7]).is_err());
        assert!(gram_matrix(&[0.5; 13]).is_err());
    }

    #[test]
    fn projection_coefficient_examples() {
        let p = ProjectionProblem::new(0.5, vec![0.5]).unwrap();
        assert!(close(projection_coeffs(&p).unwrap()[0], 1.0, 1e-14));
        let p = ProjectionProblem::new(1.0, vec![1.0]).unwrap();
        assert!(close(projection_coeffs(&p).unwrap()[0], 1.0, 1e-14));
        // b = 0.4, G = 1/3
        let p = ProjectionProblem::new(0.5, vec![1.0]).unwrap();
        assert!(close(projection_coeffs(&p).unwrap()[0], 1.2, 1e-14));
    }

    #[test]
    fn single_exponent_residual_three_ways() {
        // ∫(x^½ - 1.2x)² = 1/2 - 2.4/2.5 + 1.44/3 = 0.02
        let p = ProjectionProblem::new(0.5, vec![1.0]).unwrap();
        let gram = projection_error_sq(&p).unwrap();
        let closed = projection_error_sq_closed_k1(0.5, 1.0);
        let quad = quadrature_l2_error(0.5, &[1.0], &[1.2]).unwrap();
        let simpson = simpson_residual(0.5, &[1.0], &[1.2]);
        assert!(close(simpson, 0.02, 1e-10));
        for v in [gram, closed, quad] {
            assert!(close(v, 0.02, 1e-12), "{v}");
        }
    }

    #[test]
    fn zero_at_match() {
        let p = ProjectionProblem::new(0.5, vec![0.5]).unwrap();
        assert!(projection_error_sq(&p).unwrap() <= 1e-15);
        assert_eq!(projection_error_sq_closed_k1(0.7, 0.7), 0.0);
        assert!(quadrature_l2_error(0.5, &[0.5], &[1.0]).unwrap() <= 1e-12);
    }

    #[test]
    fn two_exponent_gram_matches_quadrature() {
        let p = ProjectionProblem::new(0.3, vec![0.9, 1.7]).unwrap();
        let a = projection_coeffs(&p).unwrap();
        let gram = projection_error_sq(&p).unwrap();
        let quad = quadrature_l2_error(0.3, &p.mu, &a).unwrap();
        let simpson = simpson_residual(0.3, &p.mu, &a);
        assert!(close(gram, quad, 1e-9), "{gram} vs {quad}");
        assert!(close(gram, simpson, 1e-8), "{gram} vs {simpson}");
    }

    #[test]
    fn quadrature_of_zero_approximant_is_norm() {
        let v = quadrature_l2_error(0.5, &[0.7], &[0.0]).unwrap();
        assert!(close(v, 0.5, 1e-12));
        let v = quadrature_l2_error(0.25, &[], &[]).unwrap();
        assert!(close(v, 1.0 / 1.5, 1e-12));
    }

    #[test]
    fn closed_form_local_scaling() {
        // δ²/((2α+1)(2α+1+δ)²) → δ²/(2α+1)³
        let d = 1e-3;
        let v = projection_error_sq_closed_k1(0.5, 0.5 + d);
        assert!(close(v / (d * d), 1.0 / 8.0, 1e-3 / 8.0 * 2.0));
        let ratio = projection_error_sq_closed_k1(0.5, 0.5 + 2e-4) / projection_error_sq_closed_k1(0.5, 0.5 + 1e-4);
        assert!(close(ratio, 4.0, 1e-3));
    }

    #[test]
    fn product_formula_vanishes_at_match_but_differs_from_projection() {
        let p = ProjectionProblem::new(0.4, vec![0.2, 0.4, 1.3]).unwrap();
        assert_eq!(product_formula_error(&p), 0.0);
        for (alpha, mu) in [(0.5, 1.0), (0.3, 0.9), (1.2, 0.4)] {
            let p = ProjectionProblem::new(alpha, vec![mu]).unwrap();
            let ratio = product_formula_error(&p) / projection_error_sq(&p).unwrap();
            assert!(close(ratio, (alpha + mu + 1.0) / (2.0 * mu + 1.0), 1e-10));
        }
        let p = ProjectionProblem::new(0.3, vec![0.9, 1.7]).unwrap();
        let gram = projection_error_sq(&p).unwrap();
        let product = product_formula_error(&p);
        assert!((gram - product).abs() > 1e-4, "gram {gram} product {product}");
    }

    #[test]
    fn landscape_rows_minimized_at_matching_exponent() {
        let grid = [0.25, 0.5, 1.0];
        let e = error_landscape(&grid, &grid).unwrap();
        for i in 0..3 {
            assert_eq!(e[i][i], 0.0);
        }
        // α = 0.5 row: (0.0625/(2·1.75²), 0, 0.25/(2·2.5²))
        assert!(close(e[1][0], 0.0625 / (2.0 * 1.75 * 1.75), 1e-15));
        assert!(close(e[1][2], 0.02, 1e-15));
        let q = quadrature_l2_error(0.5, &[0.25], &[(1.0 / 1.75) / (1.0 / 1.5)]).unwrap();
        assert!(close(q, e[1][0], 1e-11));

        let mu_grid: Vec<f64> = (1..=40).map(|i| 0.05 * i as f64).collect();
        let alphas = [0.33, 0.8, 1.41];
        let e = error_landscape(&alphas, &mu_grid).unwrap();
        for (row, a) in e.iter().zip(alphas) {
            let argmin = (0..mu_grid.len()).min_by(|&i, &j| row[i].total_cmp(&row[j])).unwrap();
            let nearest = (0..mu_grid.len())
                .min_by(|&i, &j| (mu_grid[i] - a).abs().total_cmp(&(mu_grid[j] - a).abs()))
                .unwrap();
            assert_eq!(argmin, nearest);
        }
        let csv = landscape_csv(&alphas, &mu_grid, &e);
        assert!(csv.starts_with("alpha,mu,error\n"));
        assert_eq!(csv.lines().count(), 1 + 3 * 40);
    }

    #[test]
    fn gap_table_examples() {
        assert_eq!(mismatch_for_error(0.5, 0.0), 0.0);
        let d = mismatch_for_error(0.5, 1e-4);
        assert!(close(projection_error_sq_closed_k1(0.5, 0.5 + d), 1e-4, 1e-10));
        let small = 1e-3;
        let ratio = projection_error_sq_closed_k1(0.5, 0.5 + 2.0 * small) / projection_error_sq_closed_k1(0.5, 0.5 + small);
        assert!(close(ratio, 4.0, 0.01));
        let rows = mlp_gap_table(0.5, &[1e-2, 1e-4, 1e-6]);
        assert_eq!(rows.len(), 3);
        assert!(rows.windows(2).all(|w| w[1].delta < w[0].delta));
        assert!(close(rows[2].relu_neurons, 1000.0, 1e-9));
        assert!(gap_table_csv(&rows).starts_with("eps,delta,sqrt_eps,relu_neurons\n"));
    }

    proptest! {
        #[test]
        fn adding_an_exponent_never_hurts(
            alpha in 0.1f64..2.0,
            mu in prop::collection::vec(0.1f64..2.0, 1..4),
            extra in 0.1f64..2.0,
        ) {
            let mut sorted = mu.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted.windows(2).all(|w| w[1] - w[0] > 0.05));
            prop_assume!(sorted.iter().all(|m| (m - extra).abs() > 0.05));
            let base = ProjectionProblem::new(alpha, sorted.clone()).unwrap();
            let mut bigger = sorted;
            bigger.push(extra);
            let bigger = ProjectionProblem::new(alpha, bigger).unwrap();
            let (e0, e1) = (projection_error_sq(&base).unwrap(), projection_error_sq(&bigger).unwrap());
            prop_assert!(e1 <= e0 + 1e-13, "{} > {}", e1, e0);
        }
    }
}
