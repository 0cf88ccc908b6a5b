//! Exponent parameterizations, Müntz edge evaluation and the divergence
//! regularizer.
//!
//! An edge computes `Σ a_k |x|^μ_k + Σ b_k sign(x) |x|^λ_k`. The exponents are
//! never trained directly: they are derived from unconstrained raw parameters
//! through either the bounded map (sigmoid, sort, affine rescale into
//! `(margin, p_max - margin)`) or the cumulative-softplus map.

use serde::{Deserialize, Serialize};

use crate::diffengine::Real;
use crate::error::{MsnError, Result};

pub const DEFAULT_MARGIN: f64 = 0.01;
pub const DEFAULT_MUNTZ_C: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentMode {
    Bounded,
    Cumsum,
}

/// Raw exponent parameters together with the map that turns them into
/// ordered positive exponents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentParams {
    pub raw: Vec<f64>,
    pub p_max: f64,
    pub margin: f64,
    pub mode: ExponentMode,
}

/// Validate the `(p_max, margin)` pair shared by both maps.
pub fn check_bounds(p_max: f64, margin: f64) -> Result<()> {
    if !(p_max > 0.0 && p_max.is_finite()) {
        return Err(MsnError::InvalidConfig(format!("p_max must be positive, got {p_max}")));
    }
    if !(margin > 0.0) || 2.0 * margin >= p_max {
        return Err(MsnError::InvalidConfig(format!(
            "margin must satisfy 0 < margin < p_max/2 (margin {margin}, p_max {p_max})"
        )));
    }
    Ok(())
}

impl ExponentParams {
    pub fn new(raw: Vec<f64>, p_max: f64, margin: f64, mode: ExponentMode) -> Result<Self> {
        if raw.is_empty() {
            return Err(MsnError::InvalidConfig("at least one exponent is required".into()));
        }
        check_bounds(p_max, margin)?;
        Ok(Self {
            raw,
            p_max,
            margin,
            mode,
        })
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Exponents for the configured mode.
    pub fn exponents(&self) -> Result<Vec<f64>> {
        check_bounds(self.p_max, self.margin)?;
        Ok(self.materialize(&self.raw))
    }

    /// Apply this parameterization to raw values of any scalar type.
    pub fn materialize<R: Real>(&self, raw: &[R]) -> Vec<R> {
        match self.mode {
            ExponentMode::Bounded => bounded_map(raw, self.p_max, self.margin),
            ExponentMode::Cumsum => cumsum_map(raw, self.p_max, self.margin),
        }
    }
}

/// `margin + (p_max - 2·margin)·sort(σ(raw))`, ascending.
pub fn bounded_exponents(params: &ExponentParams) -> Result<Vec<f64>> {
    if params.mode != ExponentMode::Bounded {
        return Err(MsnError::InvalidConfig("bounded_exponents called on cumsum parameters".into()));
    }
    params.exponents()
}

/// `min(margin + Σ_{j≤k} softplus(raw_j), p_max - margin)`.
pub fn cumsum_exponents(params: &ExponentParams) -> Result<Vec<f64>> {
    if params.mode != ExponentMode::Cumsum {
        return Err(MsnError::InvalidConfig("cumsum_exponents called on bounded parameters".into()));
    }
    params.exponents()
}

/// Bounded map on any scalar type. The sort permutes differentiable values,
/// so gradients route back to whichever raw entry landed in each slot.
pub fn bounded_map<R: Real>(raw: &[R], p_max: f64, margin: f64) -> Vec<R> {
    let span = p_max - 2.0 * margin;
    let mut squashed: Vec<R> = raw.iter().map(|&r| r.sigmoid()).collect();
    squashed.sort_by(|a, b| a.value().total_cmp(&b.value()));
    squashed.into_iter().map(|s| s * span + margin).collect()
}

pub fn cumsum_map<R: Real>(raw: &[R], p_max: f64, margin: f64) -> Vec<R> {
    let cap = p_max - margin;
    let mut out = Vec::with_capacity(raw.len());
    let mut running: Option<R> = None;
    for &r in raw {
        let step = r.softplus();
        let next = match running {
            None => step + margin,
            Some(acc) => acc + step,
        };
        running = Some(next);
        out.push(next.min_const(cap));
    }
    out
}

/// Raw values for which the cumsum map reproduces `targets` (ascending, each
/// step strictly positive). Used to seed cumsum runs with a spread comparable
/// to the bounded map.
pub fn cumsum_raw_for(targets: &[f64], margin: f64) -> Vec<f64> {
    let mut prev = margin;
    targets
        .iter()
        .map(|&t| {
            let step = (t - prev).max(1e-3);
            prev += step;
            // inverse softplus
            if step > 30.0 {
                step
            } else {
                step.exp_m1().ln()
            }
        })
        .collect()
}

/// Per-edge coefficients: `a` multiplies even terms, `b` odd terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuntzEdgeCoeffs {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl MuntzEdgeCoeffs {
    pub fn eval(&self, x: f64, mu: &[f64], lambda: &[f64]) -> Result<f64> {
        if self.a.len() != mu.len() {
            return Err(MsnError::DimensionMismatch {
                expected: mu.len(),
                got: self.a.len(),
            });
        }
        if self.b.len() != lambda.len() {
            return Err(MsnError::DimensionMismatch {
                expected: lambda.len(),
                got: self.b.len(),
            });
        }
        Ok(muntz_edge_eval(x, &self.a, &self.b, mu, lambda))
    }
}

/// `Σ a_k |x|^μ_k + Σ b_k sign(x) |x|^λ_k`.
pub fn muntz_edge_eval<R: Real>(x: R, a: &[R], b: &[R], mu: &[R], lambda: &[R]) -> R {
    let mut terms = Vec::with_capacity(a.len() + b.len());
    terms.extend(a.iter().zip(mu).map(|(&ak, &m)| (ak, x.pow_abs(m))));
    terms.extend(b.iter().zip(lambda).map(|(&bk, &l)| (bk, x.sign_pow_abs(l))));
    R::lincomb(x.lift(0.0), &terms)
}

/// `D = Σ 1/μ_k + Σ 1/λ_k`.
pub fn muntz_divergence(mu: &[f64], lambda: &[f64]) -> Result<f64> {
    if let Some(&bad) = mu.iter().chain(lambda).find(|&&e| !(e > 0.0)) {
        return Err(MsnError::Domain(format!("exponents must be positive, got {bad}")));
    }
    Ok(divergence(mu, lambda))
}

pub fn divergence<R: Real>(mu: &[R], lambda: &[R]) -> R {
    let mut it = mu.iter().chain(lambda).map(|&e| e.recip());
    let first = it.next();
    match first {
        None => panic!("divergence of an empty exponent set"),
        Some(f) => it.fold(f, |acc, t| acc + t),
    }
}

/// `max(0, C - D)`.
pub fn muntz_regularizer(mu: &[f64], lambda: &[f64], c: f64) -> f64 {
    regularizer(mu, lambda, c)
}

pub fn regularizer<R: Real>(mu: &[R], lambda: &[R], c: f64) -> R {
    (divergence(mu, lambda) * -1.0 + c).max_const(0.0)
}
