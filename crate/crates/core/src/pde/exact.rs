//! Closed-form solutions.
//!
//! Most manufactured solutions are finite sums of products of 1-d
//! functions, so they are stored in that form: derivatives of any order
//! come from the 1-d factors, and the same factors double as exact per-axis
//! features for an [`AnalyticModel`].

use crate::error::{EvalError, ShapeError};
use crate::jet::check_order;
use crate::nets::JetBatch;
use crate::separable::FeatureSource;

/// A scalar function of one coordinate with closed-form derivatives.
#[derive(Debug, Clone, PartialEq)]
pub enum Factor1d {
    /// `sum_k c[k] x^k`.
    Poly(Vec<f64>),
    /// `amp * sin(freq * x)`.
    Sin { freq: f64, amp: f64 },
    /// `amp * cos(freq * x)`.
    Cos { freq: f64, amp: f64 },
    /// `amp * exp(rate * x)`.
    Exp { rate: f64, amp: f64 },
}

impl Factor1d {
    pub fn one() -> Self {
        Factor1d::Poly(vec![1.0])
    }

    pub fn sin(freq: f64) -> Self {
        Factor1d::Sin { freq, amp: 1.0 }
    }

    pub fn cos(freq: f64) -> Self {
        Factor1d::Cos { freq, amp: 1.0 }
    }

    /// k-th derivative at `x`.
    pub fn derivative(&self, k: usize, x: f64) -> f64 {
        match self {
            Factor1d::Poly(c) => {
                let mut d: Vec<f64> = c.clone();
                for _ in 0..k {
                    d = d.iter().enumerate().skip(1).map(|(i, &v)| v * i as f64).collect();
                }
                d.iter().rev().fold(0.0, |acc, &v| acc * x + v)
            }
            Factor1d::Sin { freq, amp } => amp * freq.powi(k as i32) * trig_cycle(k, freq * x),
            Factor1d::Cos { freq, amp } => amp * freq.powi(k as i32) * trig_cycle(k + 1, freq * x),
            Factor1d::Exp { rate, amp } => amp * rate.powi(k as i32) * (rate * x).exp(),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.derivative(0, x)
    }
}

/// k-th derivative of `sin` evaluated at `s`.
fn trig_cycle(k: usize, s: f64) -> f64 {
    match k % 4 {
        0 => s.sin(),
        1 => s.cos(),
        2 => -s.sin(),
        _ => -s.cos(),
    }
}

/// `u_c(x) = sum_j prod_i terms[c][j][i](x_i)` for every component `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableForm {
    components: Vec<Vec<Vec<Factor1d>>>,
    dim: usize,
}

impl SeparableForm {
    pub fn new(components: Vec<Vec<Vec<Factor1d>>>) -> Self {
        let dim = components[0][0].len();
        assert!(
            components.iter().flatten().all(|t| t.len() == dim),
            "every product term needs one factor per axis"
        );
        Self { components, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn out_dim(&self) -> usize {
        self.components.len()
    }

    /// Largest number of product terms over the components.
    pub fn rank(&self) -> usize {
        self.components.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// `d^alpha u_c` at `x`, summed in ascending term order.
    pub fn derivative(&self, c: usize, alpha: &[usize], x: &[f64]) -> f64 {
        let term = |t: &Vec<Factor1d>| {
            t[1..]
                .iter()
                .enumerate()
                .fold(t[0].derivative(alpha[0], x[0]), |p, (i, f)| p * f.derivative(alpha[i + 1], x[i + 1]))
        };
        let terms = &self.components[c];
        let mut acc = term(&terms[0]);
        for t in &terms[1..] {
            acc += term(t);
        }
        acc
    }

    pub fn value(&self, c: usize, x: &[f64]) -> f64 {
        self.derivative(c, &vec![0; self.dim], x)
    }
}

/// Exact per-axis features of a [`SeparableForm`]; components with fewer
/// terms than the rank are padded with zero features.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticModel {
    form: SeparableForm,
    bounds: Vec<(f64, f64)>,
}

impl AnalyticModel {
    pub fn new(form: SeparableForm, bounds: Vec<(f64, f64)>) -> Self {
        assert_eq!(form.dim(), bounds.len(), "bounds must match the form's dimension");
        Self { form, bounds }
    }

    pub fn form(&self) -> &SeparableForm {
        &self.form
    }
}

impl FeatureSource for AnalyticModel {
    fn dim(&self) -> usize {
        self.form.dim()
    }

    fn rank(&self) -> usize {
        self.form.rank()
    }

    fn out_dim(&self) -> usize {
        self.form.out_dim()
    }

    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn axis_features(&self, axis: usize, xs: &[f64], order: usize) -> Result<JetBatch, EvalError> {
        check_order(order)?;
        if axis >= self.dim() {
            return Err(ShapeError::Other(format!("axis {axis} out of range for a {}-d form", self.dim())).into());
        }
        let (r, m) = (self.rank(), self.out_dim());
        let mut out = JetBatch::zeros(order, xs.len(), r * m);
        let width = r * m;
        let n = xs.len();
        let data = out.data_mut();
        for (c, terms) in self.form.components.iter().enumerate() {
            for (j, t) in terms.iter().enumerate() {
                for (p, &x) in xs.iter().enumerate() {
                    for k in 0..=order {
                        data[(k * n + p) * width + c * r + j] = t[axis].derivative(k, x);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Flow-mixing parameters: `u = -tanh(y/2 cos(w t) - x/2 sin(w t))` with
/// `w(r) = sech^2(r) tanh(r) / (r * vt_max)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowMixing {
    pub vt_max: f64,
    pub r_min: f64,
}

/// Values and first derivatives of the flow-mixing fields at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowFields {
    pub u: f64,
    pub u_x: f64,
    pub u_y: f64,
    pub u_t: f64,
    pub a: f64,
    pub b: f64,
}

impl FlowMixing {
    fn radius(&self, x: f64, y: f64) -> f64 {
        (x * x + y * y).sqrt().max(self.r_min)
    }

    /// `v_t / v_t,max` at radius `r`.
    pub fn speed(&self, r: f64) -> f64 {
        let s = 1.0 / r.cosh();
        s * s * r.tanh() / self.vt_max
    }

    /// Advection coefficients `(a, b)`.
    pub fn coefficients(&self, x: f64, y: f64) -> (f64, f64) {
        let r = self.radius(x, y);
        let s = self.speed(r);
        (-s * y / r, s * x / r)
    }

    pub fn fields(&self, x: f64, y: f64, t: f64) -> FlowFields {
        let r = self.radius(x, y);
        let sech2 = 1.0 / (r.cosh() * r.cosh());
        let th = r.tanh();
        let g = sech2 * th;
        let dg = sech2 * (sech2 - 2.0 * th * th);
        let w = g / (r * self.vt_max);
        let dw = (dg * r - g) / (r * r * self.vt_max);
        let (w_x, w_y) = (dw * x / r, dw * y / r);
        let (sn, cs) = (w * t).sin_cos();
        let s = 0.5 * (y * cs - x * sn);
        let p = y * sn + x * cs;
        let s_t = -0.5 * w * p;
        let s_x = 0.5 * (-sn - t * w_x * p);
        let s_y = 0.5 * (cs - t * w_y * p);
        let sech_s = 1.0 / s.cosh();
        let du = -sech_s * sech_s;
        let (a, b) = self.coefficients(x, y);
        FlowFields {
            u: -s.tanh(),
            u_x: du * s_x,
            u_y: du * s_y,
            u_t: du * s_t,
            a,
            b,
        }
    }
}
