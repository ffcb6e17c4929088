//! Forward-mode scalars.
//!
//! [`Dual`] carries a value and a gradient with respect to up to [`MAX_DIM`]
//! seeded inputs; [`Dual2`] additionally carries the full (symmetric) Hessian.
//! Both are `Copy` with fixed-size storage: lanes beyond the number of seeded
//! variables stay zero through every operation.
//!
//! The value lane of every operation performs exactly the floating-point ops an
//! `f64` evaluation of the same expression would, in the same order, so the
//! order-0 oracle and the value slot of the derivative oracles agree bitwise.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Maximum number of simultaneously seeded input variables.
pub const MAX_DIM: usize = 8;

/// Scalar abstraction: the same map body evaluates with `f64`, [`Dual`], or
/// [`Dual2`] to produce values, Jacobians, or Hessians.
pub trait Real:
    Copy
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Embeds a constant (zero derivatives).
    fn constant(c: f64) -> Self;
    /// The underlying value.
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;
}

impl Real for f64 {
    #[inline]
    fn constant(c: f64) -> Self {
        c
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

type Grad = [f64; MAX_DIM];
type Hess = [[f64; MAX_DIM]; MAX_DIM];

const ZERO_GRAD: Grad = [0.0; MAX_DIM];
const ZERO_HESS: Hess = [[0.0; MAX_DIM]; MAX_DIM];

/// First-order forward-mode scalar: value plus gradient.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Dual {
    pub val: f64,
    pub grad: Grad,
}

impl Dual {
    /// A constant: zero gradient.
    #[inline]
    pub fn constant(val: f64) -> Self {
        Dual { val, grad: ZERO_GRAD }
    }

    /// The `i`-th input variable: unit gradient in lane `i`.
    #[inline]
    pub fn variable(val: f64, i: usize) -> Self {
        debug_assert!(i < MAX_DIM);
        let mut grad = ZERO_GRAD;
        grad[i] = 1.0;
        Dual { val, grad }
    }

    /// Chain rule for a unary elementary function with value `f0` and
    /// derivative `f1` at `self.val`.
    #[inline]
    fn unary(self, f0: f64, f1: f64) -> Self {
        let mut grad = ZERO_GRAD;
        for i in 0..MAX_DIM {
            grad[i] = f1 * self.grad[i];
        }
        Dual { val: f0, grad }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, rhs: Dual) -> Dual {
        let mut grad = ZERO_GRAD;
        for i in 0..MAX_DIM {
            grad[i] = self.grad[i] + rhs.grad[i];
        }
        Dual { val: self.val + rhs.val, grad }
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, rhs: Dual) -> Dual {
        let mut grad = ZERO_GRAD;
        for i in 0..MAX_DIM {
            grad[i] = self.grad[i] - rhs.grad[i];
        }
        Dual { val: self.val - rhs.val, grad }
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, rhs: Dual) -> Dual {
        let mut grad = ZERO_GRAD;
        for i in 0..MAX_DIM {
            grad[i] = self.grad[i] * rhs.val + self.val * rhs.grad[i];
        }
        Dual { val: self.val * rhs.val, grad }
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, rhs: Dual) -> Dual {
        // c = a/b  =>  c' = (a' - c b') / b
        let val = self.val / rhs.val;
        let mut grad = ZERO_GRAD;
        for i in 0..MAX_DIM {
            grad[i] = (self.grad[i] - val * rhs.grad[i]) / rhs.val;
        }
        Dual { val, grad }
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        let mut grad = ZERO_GRAD;
        for i in 0..MAX_DIM {
            grad[i] = -self.grad[i];
        }
        Dual { val: -self.val, grad }
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, rhs: f64) -> Dual {
        Dual { val: self.val + rhs, grad: self.grad }
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, rhs: f64) -> Dual {
        Dual { val: self.val - rhs, grad: self.grad }
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, rhs: f64) -> Dual {
        let mut grad = ZERO_GRAD;
        for i in 0..MAX_DIM {
            grad[i] = self.grad[i] * rhs;
        }
        Dual { val: self.val * rhs, grad }
    }
}

impl Div<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, rhs: f64) -> Dual {
        let mut grad = ZERO_GRAD;
        for i in 0..MAX_DIM {
            grad[i] = self.grad[i] / rhs;
        }
        Dual { val: self.val / rhs, grad }
    }
}

impl Add<Dual> for f64 {
    type Output = Dual;
    #[inline]
    fn add(self, rhs: Dual) -> Dual {
        Dual { val: self + rhs.val, grad: rhs.grad }
    }
}

impl Sub<Dual> for f64 {
    type Output = Dual;
    #[inline]
    fn sub(self, rhs: Dual) -> Dual {
        let mut grad = ZERO_GRAD;
        for i in 0..MAX_DIM {
            grad[i] = -rhs.grad[i];
        }
        Dual { val: self - rhs.val, grad }
    }
}

impl Mul<Dual> for f64 {
    type Output = Dual;
    #[inline]
    fn mul(self, rhs: Dual) -> Dual {
        let mut grad = ZERO_GRAD;
        for i in 0..MAX_DIM {
            grad[i] = self * rhs.grad[i];
        }
        Dual { val: self * rhs.val, grad }
    }
}

impl Div<Dual> for f64 {
    type Output = Dual;
    #[inline]
    fn div(self, rhs: Dual) -> Dual {
        Dual::constant(self) / rhs
    }
}

impl Real for Dual {
    #[inline]
    fn constant(c: f64) -> Self {
        Dual::constant(c)
    }
    #[inline]
    fn value(self) -> f64 {
        self.val
    }
    #[inline]
    fn sin(self) -> Self {
        self.unary(self.val.sin(), self.val.cos())
    }
    #[inline]
    fn cos(self) -> Self {
        self.unary(self.val.cos(), -self.val.sin())
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }
    #[inline]
    fn ln(self) -> Self {
        self.unary(self.val.ln(), self.val.recip())
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        let f1 = if n == 0 { 0.0 } else { f64::from(n) * self.val.powi(n - 1) };
        self.unary(self.val.powi(n), f1)
    }
}

/// Second-order forward-mode scalar: value, gradient, and Hessian.
///
/// The Hessian is propagated in full; it stays symmetric because every rule
/// below writes symmetric updates.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Dual2 {
    pub val: f64,
    pub grad: Grad,
    pub hess: Hess,
}

impl Dual2 {
    #[inline]
    pub fn constant(val: f64) -> Self {
        Dual2 { val, grad: ZERO_GRAD, hess: ZERO_HESS }
    }

    #[inline]
    pub fn variable(val: f64, i: usize) -> Self {
        debug_assert!(i < MAX_DIM);
        let mut grad = ZERO_GRAD;
        grad[i] = 1.0;
        Dual2 { val, grad, hess: ZERO_HESS }
    }

    /// Chain rule for a unary elementary function with value `f0`, first
    /// derivative `f1`, and second derivative `f2` at `self.val`.
    #[inline]
    fn unary(self, f0: f64, f1: f64, f2: f64) -> Self {
        let mut grad = ZERO_GRAD;
        let mut hess = ZERO_HESS;
        for i in 0..MAX_DIM {
            grad[i] = f1 * self.grad[i];
        }
        for i in 0..MAX_DIM {
            for j in 0..MAX_DIM {
                hess[i][j] = f1 * self.hess[i][j] + f2 * self.grad[i] * self.grad[j];
            }
        }
        Dual2 { val: f0, grad, hess }
    }
}

impl Add for Dual2 {
    type Output = Dual2;
    #[inline]
    fn add(self, rhs: Dual2) -> Dual2 {
        let mut grad = ZERO_GRAD;
        let mut hess = ZERO_HESS;
        for i in 0..MAX_DIM {
            grad[i] = self.grad[i] + rhs.grad[i];
        }
        for i in 0..MAX_DIM {
            for j in 0..MAX_DIM {
                hess[i][j] = self.hess[i][j] + rhs.hess[i][j];
            }
        }
        Dual2 { val: self.val + rhs.val, grad, hess }
    }
}

impl Sub for Dual2 {
    type Output = Dual2;
    #[inline]
    fn sub(self, rhs: Dual2) -> Dual2 {
        let mut grad = ZERO_GRAD;
        let mut hess = ZERO_HESS;
        for i in 0..MAX_DIM {
            grad[i] = self.grad[i] - rhs.grad[i];
        }
        for i in 0..MAX_DIM {
            for j in 0..MAX_DIM {
                hess[i][j] = self.hess[i][j] - rhs.hess[i][j];
            }
        }
        Dual2 { val: self.val - rhs.val, grad, hess }
    }
}

impl Mul for Dual2 {
    type Output = Dual2;
    #[inline]
    fn mul(self, rhs: Dual2) -> Dual2 {
        let mut grad = ZERO_GRAD;
        let mut hess = ZERO_HESS;
        for i in 0..MAX_DIM {
            grad[i] = self.grad[i] * rhs.val + self.val * rhs.grad[i];
        }
        for i in 0..MAX_DIM {
            for j in 0..MAX_DIM {
                hess[i][j] = self.hess[i][j] * rhs.val
                    + self.val * rhs.hess[i][j]
                    + self.grad[i] * rhs.grad[j]
                    + self.grad[j] * rhs.grad[i];
            }
        }
        Dual2 { val: self.val * rhs.val, grad, hess }
    }
}

impl Div for Dual2 {
    type Output = Dual2;
    #[inline]
    fn div(self, rhs: Dual2) -> Dual2 {
        // c = a/b: c' = (a' - c b')/b, c'' = (a'' - c'⊗b' - b'⊗c' - c b'')/b
        let val = self.val / rhs.val;
        let mut grad = ZERO_GRAD;
        let mut hess = ZERO_HESS;
        for i in 0..MAX_DIM {
            grad[i] = (self.grad[i] - val * rhs.grad[i]) / rhs.val;
        }
        for i in 0..MAX_DIM {
            for j in 0..MAX_DIM {
                hess[i][j] = (self.hess[i][j]
                    - grad[i] * rhs.grad[j]
                    - rhs.grad[i] * grad[j]
                    - val * rhs.hess[i][j])
                    / rhs.val;
            }
        }
        Dual2 { val, grad, hess }
    }
}

impl Neg for Dual2 {
    type Output = Dual2;
    #[inline]
    fn neg(self) -> Dual2 {
        let mut grad = ZERO_GRAD;
        let mut hess = ZERO_HESS;
        for i in 0..MAX_DIM {
            grad[i] = -self.grad[i];
        }
        for i in 0..MAX_DIM {
            for j in 0..MAX_DIM {
                hess[i][j] = -self.hess[i][j];
            }
        }
        Dual2 { val: -self.val, grad, hess }
    }
}

impl Add<f64> for Dual2 {
    type Output = Dual2;
    #[inline]
    fn add(self, rhs: f64) -> Dual2 {
        Dual2 { val: self.val + rhs, grad: self.grad, hess: self.hess }
    }
}

impl Sub<f64> for Dual2 {
    type Output = Dual2;
    #[inline]
    fn sub(self, rhs: f64) -> Dual2 {
        Dual2 { val: self.val - rhs, grad: self.grad, hess: self.hess }
    }
}

impl Mul<f64> for Dual2 {
    type Output = Dual2;
    #[inline]
    fn mul(self, rhs: f64) -> Dual2 {
        let mut grad = ZERO_GRAD;
        let mut hess = ZERO_HESS;
        for i in 0..MAX_DIM {
            grad[i] = self.grad[i] * rhs;
        }
        for i in 0..MAX_DIM {
            for j in 0..MAX_DIM {
                hess[i][j] = self.hess[i][j] * rhs;
            }
        }
        Dual2 { val: self.val * rhs, grad, hess }
    }
}

impl Div<f64> for Dual2 {
    type Output = Dual2;
    #[inline]
    fn div(self, rhs: f64) -> Dual2 {
        let mut grad = ZERO_GRAD;
        let mut hess = ZERO_HESS;
        for i in 0..MAX_DIM {
            grad[i] = self.grad[i] / rhs;
        }
        for i in 0..MAX_DIM {
            for j in 0..MAX_DIM {
                hess[i][j] = self.hess[i][j] / rhs;
            }
        }
        Dual2 { val: self.val / rhs, grad, hess }
    }
}

impl Add<Dual2> for f64 {
    type Output = Dual2;
    #[inline]
    fn add(self, rhs: Dual2) -> Dual2 {
        Dual2 { val: self + rhs.val, grad: rhs.grad, hess: rhs.hess }
    }
}

impl Sub<Dual2> for f64 {
    type Output = Dual2;
    #[inline]
    fn sub(self, rhs: Dual2) -> Dual2 {
        let negated = -rhs;
        Dual2 { val: self - rhs.val, grad: negated.grad, hess: negated.hess }
    }
}

impl Mul<Dual2> for f64 {
    type Output = Dual2;
    #[inline]
    fn mul(self, rhs: Dual2) -> Dual2 {
        let mut grad = ZERO_GRAD;
        let mut hess = ZERO_HESS;
        for i in 0..MAX_DIM {
            grad[i] = self * rhs.grad[i];
        }
        for i in 0..MAX_DIM {
            for j in 0..MAX_DIM {
                hess[i][j] = self * rhs.hess[i][j];
            }
        }
        Dual2 { val: self * rhs.val, grad, hess }
    }
}

impl Div<Dual2> for f64 {
    type Output = Dual2;
    #[inline]
    fn div(self, rhs: Dual2) -> Dual2 {
        Dual2::constant(self) / rhs
    }
}

impl Real for Dual2 {
    #[inline]
    fn constant(c: f64) -> Self {
        Dual2::constant(c)
    }
    #[inline]
    fn value(self) -> f64 {
        self.val
    }
    #[inline]
    fn sin(self) -> Self {
        let (s, c) = (self.val.sin(), self.val.cos());
        self.unary(s, c, -s)
    }
    #[inline]
    fn cos(self) -> Self {
        let (s, c) = (self.val.sin(), self.val.cos());
        self.unary(c, -s, -c)
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e, e)
    }
    #[inline]
    fn ln(self) -> Self {
        let r = self.val.recip();
        self.unary(self.val.ln(), r, -r * r)
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        let f1 = 0.5 / s;
        self.unary(s, f1, -0.5 * f1 / self.val)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        let f1 = if n == 0 { 0.0 } else { f64::from(n) * self.val.powi(n - 1) };
        let f2 = if n == 0 || n == 1 {
            0.0
        } else {
            f64::from(n) * f64::from(n - 1) * self.val.powi(n - 2)
        };
        self.unary(self.val.powi(n), f1, f2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn poly<S: Real>(x: S, y: S) -> S {
        // x^2 y + sin(x y) + 3
        x * x * y + (x * y).sin() + 3.0
    }

    #[test]
    fn dual_gradient_matches_hand_derivative() {
        let (a, b) = (0.7, -1.3);
        let x = Dual::variable(a, 0);
        let y = Dual::variable(b, 1);
        let out = poly(x, y);
        // d/dx = 2xy + y cos(xy), d/dy = x^2 + x cos(xy)
        assert_relative_eq!(out.grad[0], 2.0 * a * b + b * (a * b).cos(), max_relative = 1e-14);
        assert_relative_eq!(out.grad[1], a * a + a * (a * b).cos(), max_relative = 1e-14);
        assert_eq!(out.val, poly(a, b));
    }

    #[test]
    fn dual2_hessian_matches_hand_derivative() {
        let (a, b) = (0.4, 0.9);
        let x = Dual2::variable(a, 0);
        let y = Dual2::variable(b, 1);
        let out = poly(x, y);
        let s = (a * b).sin();
        let c = (a * b).cos();
        assert_relative_eq!(out.hess[0][0], 2.0 * b - b * b * s, max_relative = 1e-13);
        assert_relative_eq!(out.hess[0][1], 2.0 * a + c - a * b * s, max_relative = 1e-13);
        assert_relative_eq!(out.hess[1][1], -a * a * s, max_relative = 1e-13);
        assert_eq!(out.hess[0][1], out.hess[1][0]);
    }

    #[test]
    fn division_quotient_rule() {
        let x = Dual2::variable(2.0, 0);
        let q = (x * x + 1.0) / (x - 3.0);
        // f = (x^2+1)/(x-3): f(2) = -5, f' = (2x(x-3)-(x^2+1))/(x-3)^2 = (-4-5)/1 = -9
        assert_relative_eq!(q.val, -5.0, max_relative = 1e-15);
        assert_relative_eq!(q.grad[0], -9.0, max_relative = 1e-13);
        // f'' = 2*(x^2-6x+... ) check against finite structure: d/dx of (x^2-6x-1)/(x-3)^2
        // at x=2: f'' = (2x-6)/(x-3)^2 - 2(x^2-6x-1)/(x-3)^3 = -2 - 2*(-9)*(-1) = -20
        assert_relative_eq!(q.hess[0][0], -20.0, max_relative = 1e-12);
    }

    #[test]
    fn value_lane_is_bitwise_fp_path() {
        // Same expression, one path through f64, one through Dual2.
        let t = 0.123456789;
        let plain = poly(t, 2.0 * t - 1.0);
        let jet = poly(Dual2::variable(t, 0), Dual2::variable(t, 0) * 2.0 - 1.0);
        assert_eq!(plain.to_bits(), jet.val.to_bits());
    }

    #[test]
    fn unused_lanes_stay_zero() {
        let x = Dual2::variable(1.5, 0);
        let out = (x.sin() * x + 2.0).sqrt();
        for i in 1..MAX_DIM {
            assert_eq!(out.grad[i], 0.0);
            for j in 0..MAX_DIM {
                if i != j || i >= 1 {
                    assert_eq!(out.hess[i][j.max(1)], 0.0);
                }
            }
        }
    }
}
