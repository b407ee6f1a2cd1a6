//! Truncated Taylor jets along a single input axis.
//!
//! A [`Jet`] carries a value together with its first `order` derivatives
//! with respect to one seeded coordinate. Coefficients are stored in the
//! derivative convention: `coeffs()[k]` is the k-th derivative itself, not
//! the normalized Taylor coefficient `f^(k)/k!`. Multiply by `1/k!` to
//! convert.
//!
//! Jets are generic over [`Real`], so the same arithmetic runs on plain
//! `f64` and on tape variables ([`crate::tape::Var`]); the latter is how
//! parameter gradients flow through tangent propagation.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::JetError;

/// Highest derivative order a jet may carry.
pub const MAX_ORDER: usize = 3;

/// Scalar field that jets, networks and residual operators are written over.
pub trait Real:
    Copy
    + Debug
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
    /// Primal value.
    fn value(&self) -> f64;
    /// A constant living in the same context as `self` (same tape, if any).
    fn lift(&self, c: f64) -> Self;
    fn tanh(self) -> Self;
    fn exp(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
}

impl Real for f64 {
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn lift(&self, c: f64) -> Self {
        c
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
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
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

/// Binary operations accepted by [`jet_arith`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Elementary functions accepted by [`jet_unary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Tanh,
    Exp,
    Sin,
    Cos,
    Sech,
    Square,
    Neg,
}

/// Value plus derivatives up to `order` along one seeded axis.
///
/// Slots above `order` hold a copy of the value and are never read.
#[derive(Clone, Copy)]
pub struct Jet<T> {
    c: [T; MAX_ORDER + 1],
    order: usize,
}

pub(crate) const BINOM: [[f64; 4]; 4] = [
    [1.0, 0.0, 0.0, 0.0],
    [1.0, 1.0, 0.0, 0.0],
    [1.0, 2.0, 1.0, 0.0],
    [1.0, 3.0, 3.0, 1.0],
];

pub fn check_order(order: usize) -> Result<(), JetError> {
    if order > MAX_ORDER {
        Err(JetError::UnsupportedOrder(order))
    } else {
        Ok(())
    }
}

impl<T: Real> Jet<T> {
    /// Builds a jet from explicit derivative-convention coefficients.
    pub fn from_coeffs(coeffs: &[T]) -> Result<Self, JetError> {
        if coeffs.is_empty() {
            return Err(JetError::UnsupportedOrder(0));
        }
        let order = coeffs.len() - 1;
        check_order(order)?;
        let mut c = [coeffs[0]; MAX_ORDER + 1];
        c[..coeffs.len()].copy_from_slice(coeffs);
        Ok(Self { c, order })
    }

    /// The input variable itself: `(x, 1, 0, ...)`.
    pub fn seed(x: T, order: usize) -> Result<Self, JetError> {
        check_order(order)?;
        let mut c = [x; MAX_ORDER + 1];
        if order >= 1 {
            c[1] = x.lift(1.0);
        }
        for slot in c.iter_mut().take(order + 1).skip(2) {
            *slot = x.lift(0.0);
        }
        Ok(Self { c, order })
    }

    /// A quantity independent of the seeded axis.
    pub fn constant(x: T, order: usize) -> Result<Self, JetError> {
        check_order(order)?;
        let mut c = [x; MAX_ORDER + 1];
        for slot in c.iter_mut().take(order + 1).skip(1) {
            *slot = x.lift(0.0);
        }
        Ok(Self { c, order })
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn coeffs(&self) -> &[T] {
        &self.c[..=self.order]
    }

    #[inline]
    pub fn value(&self) -> T {
        self.c[0]
    }

    #[inline]
    pub fn coeff(&self, k: usize) -> T {
        assert!(k <= self.order, "coefficient {k} above jet order {}", self.order);
        self.c[k]
    }

    fn same_order(&self, other: &Self) -> Result<(), JetError> {
        if self.order != other.order {
            Err(JetError::OrderMismatch {
                left: self.order,
                right: other.order,
            })
        } else {
            Ok(())
        }
    }

    fn map(&self, f: impl Fn(T) -> T) -> Self {
        let mut c = self.c;
        for v in c.iter_mut().take(self.order + 1) {
            *v = f(*v);
        }
        Self { c, order: self.order }
    }

    fn zip(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        let mut c = self.c;
        for k in 0..=self.order {
            c[k] = f(self.c[k], other.c[k]);
        }
        Self { c, order: self.order }
    }

    /// Multiplies every coefficient by a scalar (which is constant along the axis).
    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    /// Adds a constant to the value slot only.
    pub fn shift(&self, s: T) -> Self {
        let mut out = *self;
        out.c[0] = self.c[0] + s;
        out
    }

    fn leibniz(&self, other: &Self) -> Self {
        let a = &self.c;
        let b = &other.c;
        let mut c = self.c;
        for k in 0..=self.order {
            let mut acc = a[0] * b[k];
            for i in 1..=k {
                let term = a[i] * b[k - i];
                acc = if BINOM[k][i] == 1.0 {
                    acc + term
                } else {
                    acc + term * BINOM[k][i]
                };
            }
            c[k] = acc;
        }
        Self { c, order: self.order }
    }

    fn quotient(&self, other: &Self) -> Self {
        let a = &self.c;
        let b = &other.c;
        let mut q = self.c;
        let inv = b[0].lift(1.0) / b[0];
        for k in 0..=self.order {
            let mut acc = a[k];
            for i in 0..k {
                let term = q[i] * b[k - i];
                acc = if BINOM[k][i] == 1.0 {
                    acc - term
                } else {
                    acc - term * BINOM[k][i]
                };
            }
            q[k] = acc * inv;
        }
        Self { c: q, order: self.order }
    }

    /// Chain rule through order 3 given `f(z0), f'(z0), f''(z0), f'''(z0)`.
    fn compose(&self, f: [T; MAX_ORDER + 1]) -> Self {
        let z = &self.c;
        let mut y = self.c;
        y[0] = f[0];
        if self.order >= 1 {
            y[1] = f[1] * z[1];
        }
        if self.order >= 2 {
            y[2] = f[2] * z[1] * z[1] + f[1] * z[2];
        }
        if self.order >= 3 {
            y[3] = f[3] * z[1] * z[1] * z[1] + f[2] * z[1] * z[2] * 3.0 + f[1] * z[3];
        }
        Self { c: y, order: self.order }
    }

    pub fn tanh(&self) -> Self {
        let t = self.c[0].tanh();
        let f1 = t.lift(1.0) - t * t;
        let f2 = -(t * f1) * 2.0;
        let f3 = -(f1 * f1 + t * f2) * 2.0;
        self.compose([t, f1, f2, f3])
    }

    pub fn exp(&self) -> Self {
        let e = self.c[0].exp();
        self.compose([e, e, e, e])
    }

    pub fn sin(&self) -> Self {
        let s = self.c[0].sin();
        let c = self.c[0].cos();
        self.compose([s, c, -s, -c])
    }

    pub fn cos(&self) -> Self {
        let s = self.c[0].sin();
        let c = self.c[0].cos();
        self.compose([c, -s, -c, s])
    }

    /// Hyperbolic secant, `1 / cosh`.
    pub fn sech(&self) -> Self {
        let t = self.c[0].tanh();
        let e = self.c[0].exp();
        let one = t.lift(1.0);
        // 2 / (e^z + e^-z)
        let s = (one * 2.0) / (e + one / e);
        let s1 = -(s * t);
        let s2 = s * (t * t * 2.0 - 1.0);
        let s3 = s * t * (one * 5.0 - t * t * 6.0);
        self.compose([s, s1, s2, s3])
    }

    pub fn square(&self) -> Self {
        self.leibniz(self)
    }
}

impl<T: Real> PartialEq for Jet<T>
where
    T: PartialEq,
{
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order && self.coeffs() == other.coeffs()
    }
}

impl<T: Real> Debug for Jet<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("Jet").field(&self.coeffs()).finish()
    }
}

fn assert_orders(a: usize, b: usize) {
    assert_eq!(a, b, "jet order mismatch: {a} vs {b}");
}

impl<T: Real> Add for Jet<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        assert_orders(self.order, rhs.order);
        self.zip(&rhs, |a, b| a + b)
    }
}

impl<T: Real> Sub for Jet<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        assert_orders(self.order, rhs.order);
        self.zip(&rhs, |a, b| a - b)
    }
}

impl<T: Real> Mul for Jet<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        assert_orders(self.order, rhs.order);
        self.leibniz(&rhs)
    }
}

impl<T: Real> Div for Jet<T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        assert_orders(self.order, rhs.order);
        self.quotient(&rhs)
    }
}

impl<T: Real> Neg for Jet<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.map(|v| -v)
    }
}

/// `(x, 1, 0, ...)` for an `f64` input.
pub fn jet_seed(x: f64, order: usize) -> Result<Jet<f64>, JetError> {
    Jet::seed(x, order)
}

/// `(x, 0, 0, ...)` for an `f64` constant.
pub fn jet_const(x: f64, order: usize) -> Result<Jet<f64>, JetError> {
    Jet::constant(x, order)
}

/// Checked binary arithmetic on jets.
pub fn jet_arith<T: Real>(a: &Jet<T>, b: &Jet<T>, op: ArithOp) -> Result<Jet<T>, JetError> {
    a.same_order(b)?;
    Ok(match op {
        ArithOp::Add => a.zip(b, |x, y| x + y),
        ArithOp::Sub => a.zip(b, |x, y| x - y),
        ArithOp::Mul => a.leibniz(b),
        ArithOp::Div => {
            if b.c[0].value() == 0.0 {
                return Err(JetError::DivisionByZero);
            }
            a.quotient(b)
        }
    })
}

/// Applies an elementary function through the chain rule.
pub fn jet_unary<T: Real>(a: &Jet<T>, f: UnaryFn) -> Jet<T> {
    match f {
        UnaryFn::Tanh => a.tanh(),
        UnaryFn::Exp => a.exp(),
        UnaryFn::Sin => a.sin(),
        UnaryFn::Cos => a.cos(),
        UnaryFn::Sech => a.sech(),
        UnaryFn::Square => a.square(),
        UnaryFn::Neg => -*a,
    }
}

/// Whether every coefficient is finite.
pub fn jet_is_finite<T: Real>(a: &Jet<T>) -> bool {
    a.coeffs().iter().all(|v| v.value().is_finite())
}
