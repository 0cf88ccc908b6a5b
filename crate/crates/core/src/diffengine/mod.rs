//! Scalar differentiation: forward jets in the input, reverse accumulation in
//! the parameters.
//!
//! Network code is written once against [`Real`] and runs unchanged on plain
//! `f64` (fast evaluation), on [`Jet`] (input derivatives only) and on
//! [`DiffScalar`] (input derivatives that remain differentiable in every
//! parameter).

mod jet;
mod params;
mod tape;

use std::ops::{Add, Div, Mul, Neg, Sub};

pub use jet::{sigmoid, sign, softplus, Derivs, Jet, UnaryKind, POW_FLOOR};
pub use params::{ParamBlock, ParamGroup, ParamStore};
pub use tape::{DiffScalar, Mark, Tape};

use crate::error::{MsnError, Result};

/// Scalar arithmetic shared by `f64`, [`Jet`] and [`DiffScalar`].
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn value(&self) -> f64;
    /// A constant living in the same context as `self`.
    fn lift(&self, c: f64) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;
    /// Sign with `sign(0) = 0`; derivative 0 everywhere.
    fn signum(self) -> Self;
    fn sigmoid(self) -> Self;
    fn softplus(self) -> Self;
    fn recip(self) -> Self;
    fn max_const(self, c: f64) -> Self;
    fn min_const(self, c: f64) -> Self;
    /// `|x|^p`, exactly 0 at `x = 0`.
    fn pow_abs(self, p: Self) -> Self;
    /// `sign(x)·|x|^p`, exactly 0 at `x = 0`.
    fn sign_pow_abs(self, p: Self) -> Self;

    /// `|x|^p` for each `p` in `even`, then `sign(x)·|x|^p` for each `p` in
    /// `odd`, appended to `out`.
    fn pow_family(self, even: &[Self], odd: &[Self], out: &mut Vec<Self>) {
        out.extend(even.iter().map(|&p| self.pow_abs(p)));
        out.extend(odd.iter().map(|&p| self.sign_pow_abs(p)));
    }

    /// `bias + Σ w·v` over `terms`.
    fn lincomb(bias: Self, terms: &[(Self, Self)]) -> Self {
        terms.iter().fold(bias, |acc, &(w, v)| acc + w * v)
    }
}

impl Real for f64 {
    fn value(&self) -> f64 {
        *self
    }
    fn lift(&self, c: f64) -> f64 {
        c
    }
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    fn ln(self) -> f64 {
        f64::ln(self)
    }
    fn tanh(self) -> f64 {
        f64::tanh(self)
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    fn signum(self) -> f64 {
        sign(self)
    }
    fn sigmoid(self) -> f64 {
        sigmoid(self)
    }
    fn softplus(self) -> f64 {
        softplus(self)
    }
    fn recip(self) -> f64 {
        1.0 / self
    }
    fn max_const(self, c: f64) -> f64 {
        if self > c {
            self
        } else {
            c
        }
    }
    fn min_const(self, c: f64) -> f64 {
        if self < c {
            self
        } else {
            c
        }
    }
    fn pow_abs(self, p: f64) -> f64 {
        if self == 0.0 {
            0.0
        } else {
            (p * f64::abs(self).max(POW_FLOOR).ln()).exp()
        }
    }
    fn sign_pow_abs(self, p: f64) -> f64 {
        sign(self) * Real::pow_abs(self, p)
    }
    fn pow_family(self, even: &[f64], odd: &[f64], out: &mut Vec<f64>) {
        if self == 0.0 {
            out.extend(std::iter::repeat_n(0.0, even.len() + odd.len()));
            return;
        }
        let l = f64::abs(self).max(POW_FLOOR).ln();
        let s = sign(self);
        out.extend(even.iter().map(|p| (p * l).exp()));
        out.extend(odd.iter().map(|p| s * (p * l).exp()));
    }
}

impl Real for Jet {
    fn value(&self) -> f64 {
        self.v
    }
    fn lift(&self, c: f64) -> Jet {
        Jet::constant(c)
    }
    fn exp(self) -> Jet {
        self.unary(UnaryKind::Exp)
    }
    fn ln(self) -> Jet {
        self.unary(UnaryKind::Ln)
    }
    fn tanh(self) -> Jet {
        self.unary(UnaryKind::Tanh)
    }
    fn abs(self) -> Jet {
        self.unary(UnaryKind::Abs)
    }
    fn signum(self) -> Jet {
        self.unary(UnaryKind::Sign)
    }
    fn sigmoid(self) -> Jet {
        self.unary(UnaryKind::Sigmoid)
    }
    fn softplus(self) -> Jet {
        self.unary(UnaryKind::Softplus)
    }
    fn recip(self) -> Jet {
        self.unary(UnaryKind::Recip)
    }
    fn max_const(self, c: f64) -> Jet {
        if self.v > c {
            self
        } else {
            Jet::constant(c)
        }
    }
    fn min_const(self, c: f64) -> Jet {
        if self.v < c {
            self
        } else {
            Jet::constant(c)
        }
    }
    fn pow_abs(self, p: Jet) -> Jet {
        Jet::pow_abs(self, p)
    }
    fn sign_pow_abs(self, p: Jet) -> Jet {
        Jet::sign_pow_abs(self, p)
    }
    fn pow_family(self, even: &[Jet], odd: &[Jet], out: &mut Vec<Jet>) {
        if self.v == 0.0 {
            out.extend(std::iter::repeat_n(Jet::ZERO, even.len() + odd.len()));
            return;
        }
        let l = jet::log_abs_jet(self);
        let s = sign(self.v);
        out.extend(even.iter().map(|&p| (p * l).unary(UnaryKind::Exp)));
        out.extend(odd.iter().map(|&p| (p * l).unary(UnaryKind::Exp).scale(s)));
    }
}

impl<'t> Real for DiffScalar<'t> {
    fn value(&self) -> f64 {
        DiffScalar::value(self)
    }
    fn lift(&self, c: f64) -> Self {
        self.tape().constant(c)
    }
    fn exp(self) -> Self {
        DiffScalar::exp(self)
    }
    fn ln(self) -> Self {
        DiffScalar::ln(self)
    }
    fn tanh(self) -> Self {
        DiffScalar::tanh(self)
    }
    fn abs(self) -> Self {
        DiffScalar::abs(self)
    }
    fn signum(self) -> Self {
        DiffScalar::signum(self)
    }
    fn sigmoid(self) -> Self {
        DiffScalar::sigmoid(self)
    }
    fn softplus(self) -> Self {
        DiffScalar::softplus(self)
    }
    fn recip(self) -> Self {
        DiffScalar::recip(self)
    }
    fn max_const(self, c: f64) -> Self {
        DiffScalar::max_const(self, c)
    }
    fn min_const(self, c: f64) -> Self {
        DiffScalar::min_const(self, c)
    }
    fn pow_abs(self, p: Self) -> Self {
        DiffScalar::pow_abs(self, p)
    }
    fn sign_pow_abs(self, p: Self) -> Self {
        DiffScalar::sign_pow_abs(self, p)
    }
    fn pow_family(self, even: &[Self], odd: &[Self], out: &mut Vec<Self>) {
        DiffScalar::pow_family(self, even, odd, out)
    }
    fn lincomb(bias: Self, terms: &[(Self, Self)]) -> Self {
        bias.tape().lincomb(bias, terms.iter().copied())
    }
}

/// `u` and, depending on the requested order, `u'` and `u''` at one input.
#[derive(Clone, Copy, Debug)]
pub struct InputDerivs<'t> {
    pub u: DiffScalar<'t>,
    pub du: Option<DiffScalar<'t>>,
    pub d2u: Option<DiffScalar<'t>>,
}

/// Evaluate `f` at `x` and expose its input derivatives up to `order` as
/// differentiable scalars.
pub fn eval_with_input_derivs<'t, F>(tape: &'t Tape, f: F, x: f64, order: u8) -> Result<InputDerivs<'t>>
where
    F: FnOnce(DiffScalar<'t>) -> DiffScalar<'t>,
{
    if order > 2 {
        return Err(MsnError::Unsupported(format!(
            "input derivatives of order {order} (at most 2 are carried)"
        )));
    }
    let u = f(tape.input(x));
    Ok(InputDerivs {
        u,
        du: (order >= 1).then(|| u.input_derivative(1)),
        d2u: (order >= 2).then(|| u.input_derivative(2)),
    })
}

/// d(loss)/d(param) for every lifted parameter, in the order given.
/// Non-finite entries are returned unchanged.
pub fn param_gradient(loss: DiffScalar<'_>, params: &[DiffScalar<'_>]) -> Vec<f64> {
    loss.tape().gradient(loss, params)
}
