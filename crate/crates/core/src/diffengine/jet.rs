//! Second-order forward-mode numbers.
//!
//! A [`Jet`] carries `(f, f', f'')` with respect to one designated input
//! variable. It is the forward tower that the reverse tape stores at every
//! node, and it also works standalone as a plain forward-mode number.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Lower clamp applied to `|x|` before taking its logarithm in power terms.
pub const POW_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet {
    pub const ZERO: Jet = Jet::constant(0.0);

    pub const fn new(v: f64, d1: f64, d2: f64) -> Self {
        Self { v, d1, d2 }
    }

    pub const fn constant(v: f64) -> Self {
        Self { v, d1: 0.0, d2: 0.0 }
    }

    /// The independent variable itself: `(x, 1, 0)`.
    pub const fn variable(x: f64) -> Self {
        Self { v: x, d1: 1.0, d2: 0.0 }
    }

    #[inline]
    pub fn component(&self, k: usize) -> f64 {
        match k {
            0 => self.v,
            1 => self.d1,
            2 => self.d2,
            _ => panic!("jet component {k} out of range"),
        }
    }

    #[inline]
    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }

    /// Compose with a scalar function whose value and first two derivatives
    /// at `self.v` are `g`.
    #[inline]
    pub fn chain(self, g: &Derivs) -> Jet {
        Jet {
            v: g.g0,
            d1: g.g1 * self.d1,
            d2: g.g2 * self.d1 * self.d1 + g.g1 * self.d2,
        }
    }

    #[inline]
    pub fn scale(self, s: f64) -> Jet {
        Jet::new(self.v * s, self.d1 * s, self.d2 * s)
    }

    #[inline]
    pub fn add_assign_scaled(&mut self, other: Jet, s: f64) {
        self.v += other.v * s;
        self.d1 += other.d1 * s;
        self.d2 += other.d2 * s;
    }

    pub fn unary(self, kind: UnaryKind) -> Jet {
        self.chain(&kind.derivs(self.v))
    }

    /// `|x|^p`, exactly zero at `x = 0`.
    pub fn pow_abs(self, p: Jet) -> Jet {
        if self.v == 0.0 {
            return Jet::ZERO;
        }
        let log_abs = log_abs_jet(self);
        (p * log_abs).unary(UnaryKind::Exp)
    }

    /// `sign(x)·|x|^p`, exactly zero at `x = 0`.
    pub fn sign_pow_abs(self, p: Jet) -> Jet {
        let z = self.pow_abs(p);
        if self.v < 0.0 {
            -z
        } else {
            z
        }
    }
}

/// `ln(max(|x|, POW_FLOOR))` as a jet; tangents vanish below the floor.
#[inline]
pub(crate) fn log_abs_jet(x: Jet) -> Jet {
    x.chain(&log_abs_derivs(x.v))
}

#[inline]
pub(crate) fn log_abs_derivs(x: f64) -> Derivs {
    let ax = x.abs();
    if ax < POW_FLOOR {
        Derivs::constant(POW_FLOOR.ln())
    } else {
        let r = 1.0 / x;
        Derivs {
            g0: ax.ln(),
            g1: r,
            g2: -r * r,
            g3: 2.0 * r * r * r,
        }
    }
}

/// Value and first three derivatives of a scalar function at a point.
/// The third derivative is needed to back-propagate through `f''`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Derivs {
    pub g0: f64,
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
}

impl Derivs {
    pub const fn constant(g0: f64) -> Self {
        Self {
            g0,
            g1: 0.0,
            g2: 0.0,
            g3: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryKind {
    Exp,
    Ln,
    Tanh,
    Abs,
    Sign,
    Sigmoid,
    Softplus,
    Recip,
}

impl UnaryKind {
    pub fn derivs(self, a: f64) -> Derivs {
        match self {
            UnaryKind::Exp => {
                let e = a.exp();
                Derivs {
                    g0: e,
                    g1: e,
                    g2: e,
                    g3: e,
                }
            }
            UnaryKind::Ln => {
                let r = 1.0 / a;
                Derivs {
                    g0: a.ln(),
                    g1: r,
                    g2: -r * r,
                    g3: 2.0 * r * r * r,
                }
            }
            UnaryKind::Tanh => {
                let t = a.tanh();
                let s = 1.0 - t * t;
                Derivs {
                    g0: t,
                    g1: s,
                    g2: -2.0 * t * s,
                    g3: s * (6.0 * t * t - 2.0),
                }
            }
            // derivative at exactly 0 is taken as 0
            UnaryKind::Abs => Derivs {
                g0: a.abs(),
                g1: sign(a),
                g2: 0.0,
                g3: 0.0,
            },
            UnaryKind::Sign => Derivs::constant(sign(a)),
            UnaryKind::Sigmoid => {
                let s = sigmoid(a);
                let q = s * (1.0 - s);
                Derivs {
                    g0: s,
                    g1: q,
                    g2: q * (1.0 - 2.0 * s),
                    g3: q * (1.0 - 6.0 * s + 6.0 * s * s),
                }
            }
            UnaryKind::Softplus => {
                let s = sigmoid(a);
                let q = s * (1.0 - s);
                Derivs {
                    g0: softplus(a),
                    g1: s,
                    g2: q,
                    g3: q * (1.0 - 2.0 * s),
                }
            }
            UnaryKind::Recip => {
                let r = 1.0 / a;
                Derivs {
                    g0: r,
                    g1: -r * r,
                    g2: 2.0 * r * r * r,
                    g3: -6.0 * r * r * r * r,
                }
            }
        }
    }
}

/// `sign(0) = 0`, unlike `f64::signum`.
#[inline]
pub fn sign(a: f64) -> f64 {
    if a > 0.0 {
        1.0
    } else if a < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(a: f64) -> f64 {
    // ln(1 + e^a) without overflow
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

impl Add for Jet {
    type Output = Jet;
    #[inline]
    fn add(self, o: Jet) -> Jet {
        Jet::new(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2)
    }
}

impl Sub for Jet {
    type Output = Jet;
    #[inline]
    fn sub(self, o: Jet) -> Jet {
        Jet::new(self.v - o.v, self.d1 - o.d1, self.d2 - o.d2)
    }
}

impl Mul for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, o: Jet) -> Jet {
        Jet::new(
            self.v * o.v,
            self.d1 * o.v + self.v * o.d1,
            self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
        )
    }
}

impl Div for Jet {
    type Output = Jet;
    #[inline]
    fn div(self, o: Jet) -> Jet {
        self * o.unary(UnaryKind::Recip)
    }
}

impl Neg for Jet {
    type Output = Jet;
    #[inline]
    fn neg(self) -> Jet {
        Jet::new(-self.v, -self.d1, -self.d2)
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn add(self, c: f64) -> Jet {
        Jet::new(self.v + c, self.d1, self.d2)
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn sub(self, c: f64) -> Jet {
        Jet::new(self.v - c, self.d1, self.d2)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, c: f64) -> Jet {
        self.scale(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let x = Jet::variable(3.0);
        assert_eq!(x * x, Jet::new(9.0, 6.0, 2.0));
    }

    #[test]
    fn tanh_at_origin() {
        let t = Jet::variable(0.0).unary(UnaryKind::Tanh);
        assert_eq!(t, Jet::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn sqrt_via_pow_abs() {
        let u = Jet::variable(0.25).pow_abs(Jet::constant(0.5));
        assert!((u.v - 0.5).abs() < 1e-15);
        assert!((u.d1 - 1.0).abs() < 1e-14);
        assert!((u.d2 + 2.0).abs() < 1e-13);
    }

    #[test]
    fn pow_abs_zero_is_exact() {
        let z = Jet::variable(0.0).pow_abs(Jet::constant(0.01));
        assert_eq!(z, Jet::ZERO);
        assert_eq!(Jet::variable(0.0).sign_pow_abs(Jet::constant(1.3)), Jet::ZERO);
    }

    #[test]
    fn odd_power_negative_side() {
        let z = Jet::variable(-0.5).sign_pow_abs(Jet::constant(3.0));
        assert!((z.v + 0.125).abs() < 1e-15);
        assert!((z.d1 - 0.75).abs() < 1e-14);
        assert!((z.d2 + 3.0).abs() < 1e-13);
    }

    #[test]
    fn third_derivatives_match_finite_differences() {
        let h = 1e-4;
        for kind in [
            UnaryKind::Exp,
            UnaryKind::Ln,
            UnaryKind::Tanh,
            UnaryKind::Sigmoid,
            UnaryKind::Softplus,
            UnaryKind::Recip,
        ] {
            for &a in &[0.3, 0.9, 1.7] {
                let d = kind.derivs(a);
                let fd2 = (kind.derivs(a + h).g1 - kind.derivs(a - h).g1) / (2.0 * h);
                let fd3 = (kind.derivs(a + h).g2 - kind.derivs(a - h).g2) / (2.0 * h);
                assert!((d.g2 - fd2).abs() < 1e-6 * (1.0 + d.g2.abs()), "{kind:?} g2 at {a}");
                assert!((d.g3 - fd3).abs() < 1e-6 * (1.0 + d.g3.abs()), "{kind:?} g3 at {a}");
            }
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-16);
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
    }
}
