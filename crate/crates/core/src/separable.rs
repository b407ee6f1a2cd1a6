//! Separable solution representation and low-rank feature merging.
//!
//! With per-axis features `f^(i)(x_i)` of length `r * m`, output component
//! `k` is `sum_{j in block k} prod_i f^(i)_j(x_i)`. On a factorized batch the
//! whole grid is a sum of `r` outer products, computed here as Khatri-Rao
//! products of the leading axes followed by one matrix product with the last
//! axis. Partial derivatives substitute each axis's derivative slice.

use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{ConfigError, EvalError, NonFiniteError, ShapeError};
use crate::jet::check_order;
use crate::linalg::{matmul, matmul_tn_acc, transpose};
use crate::nets::{init_mlp, BatchTrace, BodyNet, JetBatch, MlpConfig};

/// Per-axis 1-d coordinates whose Cartesian product is the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedBatch {
    axes: Vec<Vec<f64>>,
}

impl FactorizedBatch {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self, ShapeError> {
        if axes.is_empty() {
            return Err(ShapeError::Other("a batch needs at least one axis".into()));
        }
        if let Some(i) = axes.iter().position(Vec::is_empty) {
            return Err(ShapeError::Other(format!("axis {i} has no coordinates")));
        }
        Ok(Self { axes })
    }

    /// `counts[i]` evenly spaced points per axis, endpoints included; a
    /// single point sits at the lower bound.
    pub fn uniform(bounds: &[(f64, f64)], counts: &[usize]) -> Result<Self, ShapeError> {
        if bounds.len() != counts.len() {
            return Err(ShapeError::Length {
                expected: bounds.len(),
                got: counts.len(),
            });
        }
        let axes = bounds
            .iter()
            .zip(counts)
            .map(|(&(lo, hi), &n)| match n {
                1 => vec![lo],
                _ => (0..n)
                    .map(|k| if k + 1 == n { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
                    .collect(),
            })
            .collect();
        Self::new(axes)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, i: usize) -> &[f64] {
        &self.axes[i]
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn dims(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    /// Number of grid nodes, `prod N_i`.
    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check_bounds(&self, bounds: &[(f64, f64)]) -> Result<(), ShapeError> {
        if bounds.len() != self.dim() {
            return Err(ShapeError::Length {
                expected: bounds.len(),
                got: self.dim(),
            });
        }
        for (axis, (xs, &(lo, hi))) in self.axes.iter().zip(bounds).enumerate() {
            if let Some(&value) = xs.iter().find(|&&x| !(lo..=hi).contains(&x)) {
                return Err(ShapeError::OutOfDomain { axis, value, lo, hi });
            }
        }
        Ok(())
    }

    /// Coordinates of grid node `flat` (first axis slowest).
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut rem = flat;
        let mut out = vec![0.0; self.dim()];
        for (i, xs) in self.axes.iter().enumerate().rev() {
            out[i] = xs[rem % xs.len()];
            rem /= xs.len();
        }
        out
    }

    /// Calls `f(flat, coords)` for every node in storage order.
    pub fn for_each_point(&self, mut f: impl FnMut(usize, &[f64])) {
        let d = self.dim();
        let mut idx = vec![0usize; d];
        let mut x: Vec<f64> = self.axes.iter().map(|a| a[0]).collect();
        for flat in 0..self.len() {
            f(flat, &x);
            for i in (0..d).rev() {
                idx[i] += 1;
                if idx[i] < self.axes[i].len() {
                    x[i] = self.axes[i][idx[i]];
                    break;
                }
                idx[i] = 0;
                x[i] = self.axes[i][0];
            }
        }
    }
}

/// Unstructured points, one coordinate array per axis, all equally long.
#[derive(Debug, Clone, PartialEq)]
pub struct PointBatch {
    axes: Vec<Vec<f64>>,
}

impl PointBatch {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self, ShapeError> {
        let n = axes.first().map(Vec::len).unwrap_or(0);
        if let Some(bad) = axes.iter().find(|a| a.len() != n) {
            return Err(ShapeError::Length {
                expected: n,
                got: bad.len(),
            });
        }
        Ok(Self { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.first().map(Vec::len).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis(&self, i: usize) -> &[f64] {
        &self.axes[i]
    }

    pub fn point(&self, p: usize) -> Vec<f64> {
        self.axes.iter().map(|a| a[p]).collect()
    }
}

/// Dense values on a factorized grid: `data[c * len + flat]`, first axis
/// slowest within each component.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionGrid {
    dims: Vec<usize>,
    components: usize,
    data: Vec<f64>,
}

impl SolutionGrid {
    pub fn new(dims: Vec<usize>, components: usize, data: Vec<f64>) -> Result<Self, ShapeError> {
        let expected = dims.iter().product::<usize>() * components;
        if data.len() != expected {
            return Err(ShapeError::Length {
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            dims,
            components,
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Nodes per component.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn get(&self, c: usize, idx: &[usize]) -> f64 {
        self.component(c)[self.flat_index(idx)]
    }
}

/// Per-axis feature jets for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureJets {
    axes: Vec<JetBatch>,
    rank: usize,
    out_dim: usize,
}

impl FeatureJets {
    pub fn new(axes: Vec<JetBatch>, rank: usize, out_dim: usize) -> Result<Self, ShapeError> {
        if let Some(bad) = axes.iter().find(|a| a.width() != rank * out_dim) {
            return Err(ShapeError::Length {
                expected: rank * out_dim,
                got: bad.width(),
            });
        }
        Ok(Self { axes, rank, out_dim })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn axis(&self, i: usize) -> &JetBatch {
        &self.axes[i]
    }

    pub fn axes(&self) -> &[JetBatch] {
        &self.axes
    }

    pub fn dims(&self) -> Vec<usize> {
        self.axes.iter().map(JetBatch::len).collect()
    }
}

/// Anything that produces per-axis feature jets of a separable function.
pub trait FeatureSource {
    fn dim(&self) -> usize;
    fn rank(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn bounds(&self) -> &[(f64, f64)];

    /// Features of `axis` at every coordinate in `xs`, derivatives to `order`.
    fn axis_features(&self, axis: usize, xs: &[f64], order: usize) -> Result<JetBatch, EvalError>;

    /// One pass per 1-d coordinate, all derivative orders of an axis at once.
    fn eval_features(&self, batch: &FactorizedBatch, orders: &[usize]) -> Result<FeatureJets, EvalError> {
        if orders.len() != self.dim() {
            return Err(ShapeError::Length {
                expected: self.dim(),
                got: orders.len(),
            }
            .into());
        }
        batch.check_bounds(self.bounds())?;
        let axes = orders
            .iter()
            .enumerate()
            .map(|(i, &p)| self.axis_features(i, batch.axis(i), p))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FeatureJets::new(axes, self.rank(), self.out_dim())?)
    }

    fn predict_grid(&self, batch: &FactorizedBatch) -> Result<SolutionGrid, EvalError> {
        let feats = self.eval_features(batch, &vec![0; self.dim()])?;
        Ok(merge_batch(&feats)?)
    }

    /// Values at unstructured points, component-major.
    fn predict_points(&self, points: &PointBatch) -> Result<Vec<f64>, EvalError> {
        if points.dim() != self.dim() {
            return Err(ShapeError::Length {
                expected: self.dim(),
                got: points.dim(),
            }
            .into());
        }
        let feats = (0..self.dim())
            .map(|i| self.axis_features(i, points.axis(i), 0))
            .collect::<Result<Vec<_>, _>>()?;
        let (r, n) = (self.rank(), points.len());
        let mut out = Vec::with_capacity(n * self.out_dim());
        for c in 0..self.out_dim() {
            let factors: Vec<Vec<f64>> = feats.iter().map(|f| f.factor(0, 0..n, c * r..(c + 1) * r)).collect();
            let refs: Vec<&[f64]> = factors.iter().map(Vec::as_slice).collect();
            out.extend(merge_zip(&refs, n, r));
        }
        Ok(out)
    }
}

/// `d` body networks merged with rank `r` into an `m`-component output.
#[derive(Debug)]
pub struct SeparableModel {
    nets: Vec<BodyNet>,
    rank: usize,
    out_dim: usize,
    bounds: Vec<(f64, f64)>,
    passes: AtomicU64,
}

impl Clone for SeparableModel {
    fn clone(&self) -> Self {
        Self {
            nets: self.nets.clone(),
            rank: self.rank,
            out_dim: self.out_dim,
            bounds: self.bounds.clone(),
            passes: AtomicU64::new(self.passes()),
        }
    }
}

impl SeparableModel {
    pub fn new(nets: Vec<BodyNet>, rank: usize, out_dim: usize, bounds: Vec<(f64, f64)>) -> Result<Self, ConfigError> {
        if nets.len() < 2 {
            return Err(ConfigError::Model(format!(
                "a separable model needs at least 2 axes, got {}",
                nets.len()
            )));
        }
        if rank == 0 || out_dim == 0 {
            return Err(ConfigError::Model("rank and output dimension must be positive".into()));
        }
        if bounds.len() != nets.len() {
            return Err(ConfigError::Model(format!(
                "{} axis bounds for {} networks",
                bounds.len(),
                nets.len()
            )));
        }
        if let Some((i, _)) = bounds.iter().enumerate().find(|(_, (lo, hi))| lo.partial_cmp(hi) != Some(std::cmp::Ordering::Less)) {
            return Err(ConfigError::Model(format!("axis {i} has an empty interval")));
        }
        if let Some((i, net)) = nets.iter().enumerate().find(|(_, n)| n.out_dim() != rank * out_dim) {
            return Err(ConfigError::Model(format!(
                "network {i} emits {} features, expected rank * out_dim = {}",
                net.out_dim(),
                rank * out_dim
            )));
        }
        Ok(Self {
            nets,
            rank,
            out_dim,
            bounds,
            passes: AtomicU64::new(0),
        })
    }

    /// One freshly initialized network per axis; axis `i` uses seed
    /// `template.seed + i`.
    pub fn init(template: MlpConfig, rank: usize, out_dim: usize, bounds: Vec<(f64, f64)>) -> Result<Self, ConfigError> {
        let nets = (0..bounds.len())
            .map(|i| {
                init_mlp(MlpConfig {
                    out_dim: rank * out_dim,
                    seed: template.seed.wrapping_add(i as u64),
                    ..template
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(nets, rank, out_dim, bounds)
    }

    pub fn nets(&self) -> &[BodyNet] {
        &self.nets
    }

    pub fn nets_mut(&mut self) -> &mut [BodyNet] {
        &mut self.nets
    }

    pub fn param_count(&self) -> usize {
        self.nets.iter().map(BodyNet::param_count).sum()
    }

    /// Parameter offset of each network in the concatenated vector.
    pub fn param_ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.nets
            .iter()
            .map(|n| {
                let r = start..start + n.param_count();
                start = r.end;
                r
            })
            .collect()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.nets.iter().flat_map(|n| n.params().as_slice().iter().copied()).collect()
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<(), ShapeError> {
        if flat.len() != self.param_count() {
            return Err(ShapeError::Length {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let ranges = self.param_ranges();
        for (net, r) in self.nets.iter_mut().zip(ranges) {
            net.params_mut().as_mut_slice().copy_from_slice(&flat[r]);
        }
        Ok(())
    }

    /// Body-network passes (one per 1-d coordinate) performed so far.
    pub fn passes(&self) -> u64 {
        self.passes.load(Ordering::Relaxed)
    }

    pub fn reset_passes(&self) {
        self.passes.store(0, Ordering::Relaxed);
    }

    /// Like [`FeatureSource::axis_features`], also returning the trace for
    /// [`SeparableModel::backward_axis`].
    pub fn axis_features_traced(&self, axis: usize, xs: &[f64], order: usize) -> Result<(JetBatch, BatchTrace), EvalError> {
        check_order(order)?;
        let (lo, hi) = self.bounds[axis];
        if let Some(&value) = xs.iter().find(|&&x| !(lo..=hi).contains(&x)) {
            return Err(ShapeError::OutOfDomain { axis, value, lo, hi }.into());
        }
        let (out, trace) = self.nets[axis].forward_batch(xs, order)?;
        self.passes.fetch_add(xs.len() as u64, Ordering::Relaxed);
        if !out.is_finite() {
            return Err(NonFiniteError(format!("features of axis {axis}")).into());
        }
        Ok((out, trace))
    }

    /// Accumulates the parameter gradient of network `axis` into `grad`
    /// (that network's slice of the concatenated parameter vector).
    pub fn backward_axis(&self, axis: usize, trace: &BatchTrace, bar: &JetBatch, grad: &mut [f64]) {
        self.nets[axis].backward_batch(trace, bar, grad);
    }

    pub fn predict_point(&self, x: &[f64]) -> Vec<f64> {
        let feats: Vec<Vec<f64>> = self.nets.iter().zip(x).map(|(n, &xi)| n.forward(xi)).collect();
        let refs: Vec<&[f64]> = feats.iter().map(Vec::as_slice).collect();
        merge_point(&refs, self.rank, self.out_dim).expect("network widths validated at construction")
    }
}

impl FeatureSource for SeparableModel {
    fn dim(&self) -> usize {
        self.nets.len()
    }

    fn rank(&self) -> usize {
        self.rank
    }

    fn out_dim(&self) -> usize {
        self.out_dim
    }

    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn axis_features(&self, axis: usize, xs: &[f64], order: usize) -> Result<JetBatch, EvalError> {
        self.axis_features_traced(axis, xs, order).map(|(f, _)| f)
    }
}

/// Merges one feature vector per axis into the `m` output components.
pub fn merge_point(features: &[&[f64]], rank: usize, out_dim: usize) -> Result<Vec<f64>, ShapeError> {
    if features.is_empty() {
        return Err(ShapeError::Other("no features to merge".into()));
    }
    if let Some(bad) = features.iter().find(|f| f.len() != rank * out_dim) {
        return Err(ShapeError::Length {
            expected: rank * out_dim,
            got: bad.len(),
        });
    }
    Ok((0..out_dim)
        .map(|c| {
            let term = |j: usize| features[1..].iter().fold(features[0][j], |p, f| p * f[j]);
            let mut acc = term(c * rank);
            for j in c * rank + 1..(c + 1) * rank {
                acc += term(j);
            }
            acc
        })
        .collect())
}

/// Value grid: all axes at derivative order 0.
pub fn merge_batch(feats: &FeatureJets) -> Result<SolutionGrid, ShapeError> {
    partial_batch(feats, &vec![0; feats.dim()])
}

/// `d^|alpha| u / dx_1^alpha_1 ... dx_d^alpha_d` on the full grid.
pub fn partial_batch(feats: &FeatureJets, alpha: &[usize]) -> Result<SolutionGrid, ShapeError> {
    if alpha.len() != feats.dim() {
        return Err(ShapeError::Length {
            expected: feats.dim(),
            got: alpha.len(),
        });
    }
    for (axis, (&a, f)) in alpha.iter().zip(feats.axes()).enumerate() {
        if a > f.order() {
            return Err(ShapeError::OrderExceeded {
                axis,
                requested: a,
                stored: f.order(),
            });
        }
    }
    let dims = feats.dims();
    let r = feats.rank();
    let mut data = Vec::with_capacity(dims.iter().product::<usize>() * feats.out_dim());
    for c in 0..feats.out_dim() {
        let factors: Vec<Vec<f64>> = feats
            .axes()
            .iter()
            .zip(alpha)
            .map(|(f, &a)| f.factor(a, 0..f.len(), c * r..(c + 1) * r))
            .collect();
        let refs: Vec<&[f64]> = factors.iter().map(Vec::as_slice).collect();
        data.extend(merge_factors(&refs, &dims, r));
    }
    SolutionGrid::new(dims, feats.out_dim(), data)
}

/// Row-wise products: `out[(a * nb + b), j] = left[a, j] * right[b, j]`.
fn khatri_rao(left: &[f64], right: &[f64], r: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(left.len() / r * right.len());
    for lrow in left.chunks_exact(r) {
        for rrow in right.chunks_exact(r) {
            out.extend(lrow.iter().zip(rrow).map(|(a, b)| a * b));
        }
    }
    out
}

/// `sum_j outer_i factors[i][:, j]` for dense `dims[i] x r` factors.
pub fn merge_factors(factors: &[&[f64]], dims: &[usize], r: usize) -> Vec<f64> {
    debug_assert_eq!(factors.len(), dims.len());
    let d = factors.len();
    if d == 1 {
        return factors[0].chunks_exact(r).map(|row| row[1..].iter().fold(row[0], |s, v| s + v)).collect();
    }
    let mut lead = factors[0].to_vec();
    for f in &factors[1..d - 1] {
        lead = khatri_rao(&lead, f, r);
    }
    let rows = lead.len() / r;
    let last_t = transpose(factors[d - 1], dims[d - 1], r);
    let mut out = vec![0.0; rows * dims[d - 1]];
    matmul(&lead, &last_t, &mut out, rows, r, dims[d - 1]);
    out
}

/// Cotangents of every factor given the grid cotangent `gbar`.
pub fn merge_factors_vjp(factors: &[&[f64]], dims: &[usize], r: usize, gbar: &[f64]) -> Vec<Vec<f64>> {
    let d = factors.len();
    if d == 1 {
        return vec![gbar.iter().flat_map(|&g| std::iter::repeat_n(g, r)).collect()];
    }
    // Forward Khatri-Rao stages: leads[k] combines axes 0..=k.
    let mut leads: Vec<Vec<f64>> = vec![factors[0].to_vec()];
    for f in &factors[1..d - 1] {
        let next = khatri_rao(leads.last().unwrap(), f, r);
        leads.push(next);
    }
    let lead = leads.last().unwrap();
    let rows = lead.len() / r;
    let n_last = dims[d - 1];
    let mut bars = vec![Vec::new(); d];
    let mut last_bar = vec![0.0; n_last * r];
    matmul_tn_acc(gbar, lead, &mut last_bar, rows, n_last, r);
    bars[d - 1] = last_bar;
    let mut lead_bar = vec![0.0; rows * r];
    matmul(gbar, factors[d - 1], &mut lead_bar, rows, n_last, r);
    for k in (1..d - 1).rev() {
        let prev = &leads[k - 1];
        let f = factors[k];
        let mut prev_bar = vec![0.0; prev.len()];
        let mut f_bar = vec![0.0; f.len()];
        let nb = dims[k];
        for (a, prow) in prev.chunks_exact(r).enumerate() {
            let pbar = &mut prev_bar[a * r..(a + 1) * r];
            for b in 0..nb {
                let g = &lead_bar[(a * nb + b) * r..(a * nb + b + 1) * r];
                let frow = &f[b * r..(b + 1) * r];
                let fbar = &mut f_bar[b * r..(b + 1) * r];
                for j in 0..r {
                    pbar[j] += g[j] * frow[j];
                    fbar[j] += g[j] * prow[j];
                }
            }
        }
        bars[k] = f_bar;
        lead_bar = prev_bar;
    }
    bars[0] = lead_bar;
    bars
}

/// Pointwise merge of `n x r` factors that share the point index.
pub fn merge_zip(factors: &[&[f64]], n: usize, r: usize) -> Vec<f64> {
    (0..n)
        .map(|p| {
            let term = |j: usize| factors[1..].iter().fold(factors[0][p * r + j], |acc, f| acc * f[p * r + j]);
            let mut acc = term(0);
            for j in 1..r {
                acc += term(j);
            }
            acc
        })
        .collect()
}

pub fn merge_zip_vjp(factors: &[&[f64]], n: usize, r: usize, gbar: &[f64]) -> Vec<Vec<f64>> {
    let d = factors.len();
    let mut bars = vec![vec![0.0; n * r]; d];
    for p in 0..n {
        for j in 0..r {
            let at = p * r + j;
            for i in 0..d {
                let others = (0..d).filter(|&k| k != i).fold(1.0, |acc, k| acc * factors[k][at]);
                bars[i][at] += gbar[p] * others;
            }
        }
    }
    bars
}
