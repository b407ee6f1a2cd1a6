#![allow(clippy::needless_range_loop)]

use spinn::fd::fd_derivative;
use spinn::nets::{MlpConfig, Variant};
use spinn::separable::{merge_batch, partial_batch, FactorizedBatch, FeatureSource, PointBatch, SeparableModel};

fn model(d: usize, rank: usize, out_dim: usize, variant: Variant, seed: u64) -> SeparableModel {
    let template = MlpConfig {
        depth: 2,
        width: 12,
        out_dim: rank * out_dim,
        variant,
        seed,
    };
    SeparableModel::init(template, rank, out_dim, vec![(-1.0, 1.0); d]).unwrap()
}

#[test]
fn grid_merge_matches_pointwise_evaluation() {
    for (d, out_dim, variant) in [(2, 1, Variant::Plain), (3, 2, Variant::Modified), (4, 3, Variant::Plain)] {
        let m = model(d, 5, out_dim, variant, 11 + d as u64);
        let batch = FactorizedBatch::new((0..d).map(|i| (0..3 + i).map(|k| -0.8 + 0.3 * k as f64).collect()).collect()).unwrap();
        let grid = m.predict_grid(&batch).unwrap();
        assert_eq!(grid.dims(), batch.dims().as_slice());
        batch.for_each_point(|flat, x| {
            let direct = m.predict_point(x);
            for c in 0..out_dim {
                let got = grid.component(c)[flat];
                assert!((got - direct[c]).abs() <= 1e-12 * direct[c].abs().max(1.0), "{got} vs {}", direct[c]);
            }
        });
    }
}

#[test]
fn scattered_points_match_pointwise_evaluation() {
    let m = model(3, 4, 2, Variant::Plain, 3);
    let axes = vec![vec![0.1, -0.5, 0.9, 0.0], vec![0.3, 0.3, -1.0, 0.7], vec![-0.2, 0.8, 0.4, 1.0]];
    let points = PointBatch::new(axes).unwrap();
    let vals = m.predict_points(&points).unwrap();
    for p in 0..points.len() {
        let direct = m.predict_point(&points.point(p));
        for c in 0..2 {
            assert!((vals[c * points.len() + p] - direct[c]).abs() < 1e-12);
        }
    }
}

#[test]
fn partial_derivatives_match_finite_differences() {
    let m = model(3, 6, 1, Variant::Plain, 21);
    let batch = FactorizedBatch::new(vec![vec![-0.4, 0.2], vec![0.5], vec![0.1, 0.6, -0.3]]).unwrap();
    let feats = m.eval_features(&batch, &[2, 2, 1]).unwrap();
    let base = merge_batch(&feats).unwrap();
    batch.for_each_point(|flat, x| {
        assert!((base.data()[flat] - m.predict_point(x)[0]).abs() < 1e-12);
    });
    for (alpha, axis, order) in [([1, 0, 0], 0, 1), ([0, 2, 0], 1, 2), ([0, 0, 1], 2, 1), ([2, 0, 0], 0, 2)] {
        let grid = partial_batch(&feats, &alpha).unwrap();
        batch.for_each_point(|flat, x| {
            let f = |t: f64| {
                let mut y = x.to_vec();
                y[axis] = t;
                m.predict_point(&y)[0]
            };
            let h = if order == 1 { 1e-5 } else { 1e-4 };
            let fd = fd_derivative(f, x[axis], order, h);
            let got = grid.data()[flat];
            assert!((got - fd).abs() <= 1e-5 * fd.abs().max(1.0), "alpha {alpha:?}: {got} vs {fd}");
        });
    }
}

#[test]
fn mixed_partial_matches_nested_differences() {
    let m = model(2, 4, 1, Variant::Modified, 8);
    let batch = FactorizedBatch::new(vec![vec![0.3], vec![-0.6]]).unwrap();
    let feats = m.eval_features(&batch, &[1, 1]).unwrap();
    let got = partial_batch(&feats, &[1, 1]).unwrap().data()[0];
    let h = 1e-4;
    let u = |a: f64, b: f64| m.predict_point(&[a, b])[0];
    let fd = (u(0.3 + h, -0.6 + h) - u(0.3 + h, -0.6 - h) - u(0.3 - h, -0.6 + h) + u(0.3 - h, -0.6 - h)) / (4.0 * h * h);
    assert!((got - fd).abs() < 1e-6 * fd.abs().max(1.0));
}

#[test]
fn one_pass_per_coordinate() {
    let m = model(3, 4, 1, Variant::Plain, 1);
    let batch = FactorizedBatch::uniform(&[(-1.0, 1.0); 3], &[7, 5, 3]).unwrap();
    m.reset_passes();
    m.predict_grid(&batch).unwrap();
    assert_eq!(m.passes(), 15);
}

#[test]
fn out_of_bounds_grid_is_rejected() {
    let m = model(2, 2, 1, Variant::Plain, 0);
    let batch = FactorizedBatch::new(vec![vec![0.0], vec![1.5]]).unwrap();
    assert!(m.predict_grid(&batch).is_err());
}
