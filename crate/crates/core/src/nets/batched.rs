//! Batched jet propagation through a [`BodyNet`] and its reverse sweep.
//!
//! A [`JetBatch`] stores `order + 1` coefficient blocks, each an
//! `n x width` row-major matrix, so an affine layer is one matrix product
//! over all coefficients (the bias touches block 0 only). The forward pass
//! keeps what the reverse sweep needs in a [`BatchTrace`]; the reverse sweep
//! differentiates the parameter dependence of every coefficient, i.e.
//! reverse-over-forward at layer granularity.
//!
//! Elementwise jet operations reuse [`Jet<f64>`], so per-point results are
//! bitwise identical to [`BodyNet::forward_jet`].

use std::ops::Range;

use super::{BodyNet, Layer};
use crate::error::JetError;
use crate::jet::{check_order, Jet, BINOM};
use crate::linalg::{matmul, matmul_tn_acc, transpose};

/// Jets for a batch of points: `data[(k * n + i) * width + j]` is the k-th
/// derivative of feature `j` at point `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct JetBatch {
    order: usize,
    n: usize,
    width: usize,
    data: Vec<f64>,
}

impl JetBatch {
    pub fn zeros(order: usize, n: usize, width: usize) -> Self {
        Self {
            order,
            n,
            width,
            data: vec![0.0; (order + 1) * n * width],
        }
    }

    pub fn from_data(order: usize, n: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), (order + 1) * n * width, "jet batch size mismatch");
        Self {
            order,
            n,
            width,
            data,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The `n x width` matrix of k-th derivatives.
    pub fn block(&self, k: usize) -> &[f64] {
        let s = self.n * self.width;
        &self.data[k * s..(k + 1) * s]
    }

    pub fn block_mut(&mut self, k: usize) -> &mut [f64] {
        let s = self.n * self.width;
        &mut self.data[k * s..(k + 1) * s]
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.n + i) * self.width + j]
    }

    #[inline]
    fn jet_at(&self, i: usize, j: usize) -> Jet<f64> {
        let stride = self.n * self.width;
        let base = i * self.width + j;
        let mut c = [0.0; 4];
        for (k, slot) in c.iter_mut().enumerate().take(self.order + 1) {
            *slot = self.data[base + k * stride];
        }
        Jet::from_coeffs(&c[..=self.order]).expect("order checked at construction")
    }

    #[inline]
    fn coeffs_at(&self, i: usize, j: usize) -> [f64; 4] {
        let stride = self.n * self.width;
        let base = i * self.width + j;
        let mut c = [0.0; 4];
        for (k, slot) in c.iter_mut().enumerate().take(self.order + 1) {
            *slot = self.data[base + k * stride];
        }
        c
    }

    #[inline]
    fn set_coeffs(&mut self, i: usize, j: usize, c: &[f64]) {
        let stride = self.n * self.width;
        let base = i * self.width + j;
        for (k, &v) in c.iter().enumerate() {
            self.data[base + k * stride] = v;
        }
    }

    #[inline]
    fn add_coeffs(&mut self, i: usize, j: usize, c: &[f64]) {
        let stride = self.n * self.width;
        let base = i * self.width + j;
        for (k, &v) in c.iter().enumerate() {
            self.data[base + k * stride] += v;
        }
    }

    /// Copies block k restricted to `rows x cols` into a dense matrix.
    pub fn factor(&self, k: usize, rows: Range<usize>, cols: Range<usize>) -> Vec<f64> {
        let b = self.block(k);
        let mut out = Vec::with_capacity(rows.len() * cols.len());
        for i in rows {
            out.extend_from_slice(&b[i * self.width + cols.start..i * self.width + cols.end]);
        }
        out
    }

    /// Adds a dense `rows.len() x cols.len()` matrix into block k.
    pub fn add_factor(&mut self, k: usize, rows: Range<usize>, cols: Range<usize>, m: &[f64]) {
        debug_assert_eq!(m.len(), rows.len() * cols.len());
        let w = self.width;
        let c = cols.len();
        let b = self.block_mut(k);
        for (i, row) in rows.zip(m.chunks_exact(c)) {
            for (dst, &v) in b[i * w + cols.start..i * w + cols.end].iter_mut().zip(row) {
                *dst += v;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn map_tanh(&self) -> Self {
        let mut out = Self::zeros(self.order, self.n, self.width);
        for i in 0..self.n {
            for j in 0..self.width {
                let y = self.jet_at(i, j).tanh();
                out.set_coeffs(i, j, y.coeffs());
            }
        }
        out
    }
}

/// Intermediate activations recorded by [`BodyNet::forward_batch`].
#[derive(Debug, Clone)]
pub struct BatchTrace {
    xs: Vec<f64>,
    order: usize,
    kind: TraceKind,
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
enum TraceKind {
    Plain {
        /// Pre-activations and activations of every hidden layer, input first.
        pre: Vec<JetBatch>,
        post: Vec<JetBatch>,
    },
    Modified {
        u_pre: JetBatch,
        u: JetBatch,
        v_pre: JetBatch,
        v: JetBatch,
        h1_pre: JetBatch,
        /// `h[0] = H1`, `h[k]` is the input to hidden layer k.
        h: Vec<JetBatch>,
        d: JetBatch,
        z_pre: Vec<JetBatch>,
        z: Vec<JetBatch>,
    },
}

impl BatchTrace {
    pub fn points(&self) -> &[f64] {
        &self.xs
    }

    pub fn order(&self) -> usize {
        self.order
    }
}

/// tanh derivatives `f0..f4` from `t = tanh(z0)`.
#[inline]
fn tanh_derivs(t: f64) -> [f64; 5] {
    let f1 = 1.0 - t * t;
    let f2 = -(t * f1) * 2.0;
    let f3 = -(f1 * f1 + t * f2) * 2.0;
    let f4 = -6.0 * f1 * f2 - 2.0 * t * f3;
    [t, f1, f2, f3, f4]
}

/// Cotangent of `z` for `y = f(z)` (chain rule through order 3).
#[inline]
fn compose_vjp(f: &[f64; 5], z: &[f64; 4], ybar: &[f64; 4], order: usize) -> [f64; 4] {
    let mut g = [0.0; 4];
    g[0] = ybar[0] * f[1];
    if order >= 1 {
        g[0] += ybar[1] * f[2] * z[1];
        g[1] = ybar[1] * f[1];
    }
    if order >= 2 {
        g[0] += ybar[2] * (f[3] * z[1] * z[1] + f[2] * z[2]);
        g[1] += ybar[2] * 2.0 * f[2] * z[1];
        g[2] = ybar[2] * f[1];
    }
    if order >= 3 {
        g[0] += ybar[3] * (f[4] * z[1] * z[1] * z[1] + 3.0 * f[3] * z[1] * z[2] + f[2] * z[3]);
        g[1] += ybar[3] * (3.0 * f[3] * z[1] * z[1] + 3.0 * f[2] * z[2]);
        g[2] += ybar[3] * 3.0 * f[2] * z[1];
        g[3] = ybar[3] * f[1];
    }
    g
}

/// Cotangents of `a` and `b` for `h = a * b` (Leibniz rule).
#[inline]
fn product_vjp(a: &[f64; 4], b: &[f64; 4], hbar: &[f64; 4], order: usize) -> ([f64; 4], [f64; 4]) {
    let mut ga = [0.0; 4];
    let mut gb = [0.0; 4];
    for k in 0..=order {
        let hk = hbar[k];
        if hk == 0.0 {
            continue;
        }
        for i in 0..=k {
            let c = BINOM[k][i] * hk;
            ga[i] += c * b[k - i];
            gb[k - i] += c * a[i];
        }
    }
    (ga, gb)
}

fn tanh_backward(pre: &JetBatch, post: &JetBatch, ybar: &JetBatch) -> JetBatch {
    let mut zbar = JetBatch::zeros(pre.order, pre.n, pre.width);
    let p = pre.order;
    for i in 0..pre.n {
        for j in 0..pre.width {
            let f = tanh_derivs(post.get(0, i, j));
            let z = pre.coeffs_at(i, j);
            let yb = ybar.coeffs_at(i, j);
            let g = compose_vjp(&f, &z, &yb, p);
            zbar.set_coeffs(i, j, &g[..=p]);
        }
    }
    zbar
}

impl BodyNet {
    fn layer_params(&self, layer: &Layer) -> (&[f64], &[f64]) {
        (self.params.get(layer.weight), self.params.get(layer.bias))
    }

    /// `x * w + b` for a scalar input jet seeded at each point.
    fn first_layer(&self, layer: &Layer, xs: &[f64], order: usize) -> JetBatch {
        let (w, b) = self.layer_params(layer);
        let n = xs.len();
        let mut out = JetBatch::zeros(order, n, layer.n_out);
        for (i, &x) in xs.iter().enumerate() {
            let seed = Jet::seed(x, order).expect("order checked");
            for j in 0..layer.n_out {
                let y = seed.scale(w[j]).shift(b[j]);
                out.set_coeffs(i, j, y.coeffs());
            }
        }
        out
    }

    fn affine(&self, layer: &Layer, input: &JetBatch) -> JetBatch {
        let (w, b) = self.layer_params(layer);
        let rows = (input.order + 1) * input.n;
        let mut out = JetBatch::zeros(input.order, input.n, layer.n_out);
        matmul(&input.data, w, &mut out.data, rows, layer.n_in, layer.n_out);
        for row in out.block_mut(0).chunks_exact_mut(layer.n_out) {
            for (v, &bj) in row.iter_mut().zip(b) {
                *v += bj;
            }
        }
        out
    }

    /// Evaluates all points at once; returns output jets and the trace the
    /// reverse sweep needs.
    pub fn forward_batch(&self, xs: &[f64], order: usize) -> Result<(JetBatch, BatchTrace), JetError> {
        check_order(order)?;
        let (out, kind) = match &self.gates {
            None => {
                let mut pre = Vec::with_capacity(self.hidden.len() + 1);
                let mut post = Vec::with_capacity(self.hidden.len() + 1);
                let z = self.first_layer(&self.input, xs, order);
                post.push(z.map_tanh());
                pre.push(z);
                for layer in &self.hidden {
                    let z = self.affine(layer, post.last().unwrap());
                    post.push(z.map_tanh());
                    pre.push(z);
                }
                let out = self.affine(&self.output, post.last().unwrap());
                (out, TraceKind::Plain { pre, post })
            }
            Some((gu, gv)) => {
                let u_pre = self.first_layer(gu, xs, order);
                let u = u_pre.map_tanh();
                let v_pre = self.first_layer(gv, xs, order);
                let v = v_pre.map_tanh();
                let h1_pre = self.first_layer(&self.input, xs, order);
                let n = xs.len();
                let width = self.config.width;
                let mut d = JetBatch::zeros(order, n, width);
                for i in 0..n {
                    for j in 0..width {
                        let dj = v.jet_at(i, j) - u.jet_at(i, j);
                        d.set_coeffs(i, j, dj.coeffs());
                    }
                }
                let mut h = vec![h1_pre.map_tanh()];
                let mut z_pre = Vec::with_capacity(self.hidden.len());
                let mut z = Vec::with_capacity(self.hidden.len());
                for layer in &self.hidden {
                    let zp = self.affine(layer, h.last().unwrap());
                    let zz = zp.map_tanh();
                    let mut next = JetBatch::zeros(order, n, width);
                    for i in 0..n {
                        for j in 0..width {
                            let hj = u.jet_at(i, j) + zz.jet_at(i, j) * d.jet_at(i, j);
                            next.set_coeffs(i, j, hj.coeffs());
                        }
                    }
                    z_pre.push(zp);
                    z.push(zz);
                    h.push(next);
                }
                let out = self.affine(&self.output, h.last().unwrap());
                (
                    out,
                    TraceKind::Modified {
                        u_pre,
                        u,
                        v_pre,
                        v,
                        h1_pre,
                        h,
                        d,
                        z_pre,
                        z,
                    },
                )
            }
        };
        Ok((
            out,
            BatchTrace {
                xs: xs.to_vec(),
                order,
                kind,
            },
        ))
    }

    /// Gradient of the affine layer; returns the input cotangent.
    fn affine_backward(&self, layer: &Layer, input: &JetBatch, ybar: &JetBatch, grad: &mut [f64]) -> JetBatch {
        let rows = (input.order + 1) * input.n;
        let wr = self.params.slot(layer.weight).range();
        matmul_tn_acc(&input.data, &ybar.data, &mut grad[wr], rows, layer.n_in, layer.n_out);
        let br = self.params.slot(layer.bias).range();
        let gb = &mut grad[br];
        for row in ybar.block(0).chunks_exact(layer.n_out) {
            for (g, &v) in gb.iter_mut().zip(row) {
                *g += v;
            }
        }
        let wt = transpose(self.params.get(layer.weight), layer.n_in, layer.n_out);
        let mut xbar = JetBatch::zeros(input.order, input.n, layer.n_in);
        matmul(&ybar.data, &wt, &mut xbar.data, rows, layer.n_out, layer.n_in);
        xbar
    }

    fn first_layer_backward(&self, layer: &Layer, xs: &[f64], zbar: &JetBatch, grad: &mut [f64]) {
        let wr = self.params.slot(layer.weight).range();
        let br = self.params.slot(layer.bias).range();
        let n_out = layer.n_out;
        for (i, &x) in xs.iter().enumerate() {
            for j in 0..n_out {
                let g0 = zbar.get(0, i, j);
                let mut gw = g0 * x;
                if zbar.order >= 1 {
                    gw += zbar.get(1, i, j);
                }
                grad[wr.start + j] += gw;
                grad[br.start + j] += g0;
            }
        }
    }

    /// Accumulates into `grad` (aligned with [`BodyNet::params`]) the
    /// gradient of `<out_bar, output>` with respect to the parameters.
    pub fn backward_batch(&self, trace: &BatchTrace, out_bar: &JetBatch, grad: &mut [f64]) {
        assert_eq!(grad.len(), self.params.len(), "gradient length mismatch");
        assert_eq!(out_bar.order, trace.order, "cotangent order mismatch");
        let order = trace.order;
        match &trace.kind {
            TraceKind::Plain { pre, post } => {
                let mut abar = self.affine_backward(&self.output, post.last().unwrap(), out_bar, grad);
                for (l, layer) in self.hidden.iter().enumerate().rev() {
                    let zbar = tanh_backward(&pre[l + 1], &post[l + 1], &abar);
                    abar = self.affine_backward(layer, &post[l], &zbar, grad);
                }
                let zbar = tanh_backward(&pre[0], &post[0], &abar);
                self.first_layer_backward(&self.input, &trace.xs, &zbar, grad);
            }
            TraceKind::Modified {
                u_pre,
                u,
                v_pre,
                v,
                h1_pre,
                h,
                d,
                z_pre,
                z,
            } => {
                let (gu, gv) = self.gates.as_ref().expect("modified trace needs gates");
                let n = trace.xs.len();
                let width = self.config.width;
                let mut ubar = JetBatch::zeros(order, n, width);
                let mut dbar = JetBatch::zeros(order, n, width);
                let mut hbar = self.affine_backward(&self.output, h.last().unwrap(), out_bar, grad);
                for (l, layer) in self.hidden.iter().enumerate().rev() {
                    // h[l+1] = u + z[l] * d
                    let mut zbar_post = JetBatch::zeros(order, n, width);
                    for i in 0..n {
                        for j in 0..width {
                            let hb = hbar.coeffs_at(i, j);
                            let (gz, gd) = product_vjp(&z[l].coeffs_at(i, j), &d.coeffs_at(i, j), &hb, order);
                            zbar_post.set_coeffs(i, j, &gz[..=order]);
                            dbar.add_coeffs(i, j, &gd[..=order]);
                            ubar.add_coeffs(i, j, &hb[..=order]);
                        }
                    }
                    let zbar = tanh_backward(&z_pre[l], &z[l], &zbar_post);
                    hbar = self.affine_backward(layer, &h[l], &zbar, grad);
                }
                let h1bar = tanh_backward(h1_pre, &h[0], &hbar);
                self.first_layer_backward(&self.input, &trace.xs, &h1bar, grad);
                // d = v - u
                let mut vbar = dbar.clone();
                for (a, b) in ubar.data.iter_mut().zip(&dbar.data) {
                    *a -= b;
                }
                let upre_bar = tanh_backward(u_pre, u, &ubar);
                self.first_layer_backward(gu, &trace.xs, &upre_bar, grad);
                let vpre_bar = tanh_backward(v_pre, v, &vbar);
                vbar = vpre_bar;
                self.first_layer_backward(gv, &trace.xs, &vbar, grad);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd::{fd_gradient, max_rel_error};
    use crate::nets::{init_mlp, MlpConfig, Variant};
    use crate::tape::Tape;

    fn nets() -> Vec<BodyNet> {
        vec![
            init_mlp(MlpConfig::plain(3, 6, 4, 1)).unwrap(),
            init_mlp(MlpConfig::modified(3, 5, 3, 2)).unwrap(),
            init_mlp(MlpConfig::plain(1, 4, 2, 3)).unwrap(),
        ]
    }

    #[test]
    fn batch_matches_pointwise_bitwise() {
        let xs = [-0.8, -0.1, 0.0, 0.45, 0.9];
        for net in nets() {
            for order in 0..=3 {
                let (out, _) = net.forward_batch(&xs, order).unwrap();
                for (i, &x) in xs.iter().enumerate() {
                    let pt = net.forward_jet(Jet::seed(x, order).unwrap()).unwrap();
                    for (j, jet) in pt.iter().enumerate() {
                        for k in 0..=order {
                            assert_eq!(out.get(k, i, j), jet.coeff(k));
                        }
                    }
                }
            }
        }
    }

    /// Weighted sum of all output coefficients, as a loss.
    fn weights(order: usize, n: usize, width: usize) -> JetBatch {
        let data = (0..(order + 1) * n * width)
            .map(|i| ((i * 37 % 17) as f64 - 8.0) / 9.0)
            .collect();
        JetBatch::from_data(order, n, width, data)
    }

    #[test]
    fn reverse_sweep_matches_scalar_tape() {
        let xs = [-0.6, 0.2, 0.7];
        for net in nets() {
            for order in 0..=3 {
                let w = weights(order, xs.len(), net.out_dim());
                let (_, trace) = net.forward_batch(&xs, order).unwrap();
                let mut grad = vec![0.0; net.param_count()];
                net.backward_batch(&trace, &w, &mut grad);

                let tape = Tape::new();
                let vars = net.params().to_vars(&tape);
                let mut seeds = Vec::new();
                for (i, &x) in xs.iter().enumerate() {
                    let xj = Jet::seed(tape.var(x), order).unwrap();
                    let out = net.forward_jet_with(&vars, xj);
                    for (j, jet) in out.iter().enumerate() {
                        for k in 0..=order {
                            seeds.push((jet.coeff(k), w.get(k, i, j)));
                        }
                    }
                }
                let g = tape.vjp(&seeds).wrt_all(&vars);
                let err = max_rel_error(&grad, &g, 1e-10);
                assert!(err < 1e-10, "variant {:?} order {order}: {err}", net.config().variant);
            }
        }
    }

    #[test]
    fn reverse_sweep_matches_finite_differences() {
        let xs = [-0.3, 0.5];
        let net = init_mlp(MlpConfig {
            variant: Variant::Modified,
            ..MlpConfig::plain(2, 4, 3, 8)
        })
        .unwrap();
        let order = 2;
        let w = weights(order, xs.len(), net.out_dim());
        let (_, trace) = net.forward_batch(&xs, order).unwrap();
        let mut grad = vec![0.0; net.param_count()];
        net.backward_batch(&trace, &w, &mut grad);
        let loss = |p: &[f64]| {
            let mut n2 = net.clone();
            n2.params_mut().as_mut_slice().copy_from_slice(p);
            let (out, _) = n2.forward_batch(&xs, order).unwrap();
            out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let fd = fd_gradient(loss, net.params().as_slice(), 1e-6);
        assert!(max_rel_error(&grad, &fd, 1e-6) < 1e-5);
    }
}
