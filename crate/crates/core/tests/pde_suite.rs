#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;

use spinn::fd::fd_derivative;
use spinn::pde::{boundary_batches, sample_factorized, BoundaryKind, BoundaryPoints, PdeProblem, ProblemId};
use spinn::separable::{FactorizedBatch, FeatureSource};

fn random_grid(p: &PdeProblem, n: usize, seed: u64) -> FactorizedBatch {
    sample_factorized(p.domain(), &vec![n; p.dim()], seed, 0).unwrap()
}

fn max_residual(p: &PdeProblem, batch: &FactorizedBatch) -> f64 {
    let grids = p.exact_term_grids(batch).unwrap();
    let refs: Vec<&[f64]> = grids.iter().map(Vec::as_slice).collect();
    let res = p.residual_grids(&refs, batch).unwrap();
    res.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[test]
fn manufactured_residuals_vanish() {
    for id in [
        ProblemId::Helmholtz3d,
        ProblemId::Kg3d,
        ProblemId::Kg4d,
        ProblemId::Diffusion6d,
        ProblemId::FlowMixing,
        ProblemId::Ns4d,
    ] {
        let p = PdeProblem::new(id);
        let batch = random_grid(&p, 5, 11);
        let r = max_residual(&p, &batch);
        assert!(r < 1e-8, "{id}: max residual {r}");
    }
}

#[test]
fn zero_field_residuals() {
    // u == 0: Helmholtz gives -q, the 6-d diffusion gives 0, NS gives -F
    // and zero divergence.
    let p = PdeProblem::new(ProblemId::Helmholtz3d);
    let batch = random_grid(&p, 3, 2);
    let zeros = vec![0.0; batch.len()];
    let refs = vec![zeros.as_slice(); p.terms().len()];
    let r = p.residual_grids(&refs, &batch).unwrap();
    let mut q = [0.0];
    for k in 0..batch.len() {
        p.coefficients(&batch.point(k), &mut q);
        assert_eq!(r[0][k], -q[0]);
    }

    let p = PdeProblem::new(ProblemId::Diffusion6d);
    let batch = random_grid(&p, 2, 2);
    let zeros = vec![0.0; batch.len()];
    let refs = vec![zeros.as_slice(); p.terms().len()];
    assert!(p.residual_grids(&refs, &batch).unwrap()[0].iter().all(|&v| v == 0.0));

    let p = PdeProblem::new(ProblemId::Ns4d);
    let batch = random_grid(&p, 3, 2);
    let zeros = vec![0.0; batch.len()];
    let refs = vec![zeros.as_slice(); p.terms().len()];
    let r = p.residual_grids(&refs, &batch).unwrap();
    let mut f = [0.0; 3];
    for k in 0..batch.len() {
        p.coefficients(&batch.point(k), &mut f);
        for i in 0..3 {
            assert_eq!(r[i][k], -f[i]);
        }
        assert_eq!(r[3][k], 0.0);
    }
}

#[test]
fn helmholtz_source_formula() {
    let p = PdeProblem::new(ProblemId::Helmholtz3d);
    let x = [0.125, 0.125, 1.0 / 6.0];
    let mut q = [0.0];
    p.coefficients(&x, &mut q);
    // u = 1 at this point, so q = k^2 - pi^2 (16 + 16 + 9).
    let expected = 1.0 - PI * PI * 41.0;
    assert!((q[0] - expected).abs() < 1e-10, "{} vs {expected}", q[0]);
    assert!((p.exact_point(&x).unwrap()[0] - 1.0).abs() < 1e-15);
}

#[test]
fn klein_gordon_source_against_finite_differences() {
    let p = PdeProblem::new(ProblemId::Kg3d);
    let u = |x1: f64, x2: f64, t: f64| (x1 + x2) * (2.0 * t).cos() + x1 * x2 * (2.0 * t).sin();
    let (x1, x2, t) = (0.3, -0.7, 2.4);
    let u_tt = fd_derivative(|v| u(x1, x2, v), t, 2, 1e-4);
    let u_11 = fd_derivative(|v| u(v, x2, t), x1, 2, 1e-4);
    let u_22 = fd_derivative(|v| u(x1, v, t), x2, 2, 1e-4);
    let f_fd = u_tt - u_11 - u_22 + u(x1, x2, t).powi(2);
    let mut f = [0.0];
    p.coefficients(&[x1, x2, t], &mut f);
    assert!((f[0] - f_fd).abs() < 1e-5, "{} vs {f_fd}", f[0]);
    // u(x, 0) = x1 + x2
    assert_eq!(p.exact_point(&[x1, x2, 0.0]).unwrap()[0], x1 + x2);
}

#[test]
fn nonlinear_diffusion_hand_expansions() {
    let p = PdeProblem::new(ProblemId::DiffusionNl3d);
    // terms: u, u_t, u_x, u_y, u_xx, u_yy
    let mut r = [0.0];
    p.residual_point(&[0.0; 6], &[], &mut r);
    assert_eq!(r[0], 0.0);
    p.residual_point(&[2.5, 0.0, 0.0, 0.0, 0.0, 0.0], &[], &mut r);
    assert_eq!(r[0], 0.0);
    // u = x^2 at x = 1
    p.residual_point(&[1.0, 0.0, 2.0, 0.0, 2.0, 0.0], &[], &mut r);
    assert!((r[0] + 0.3).abs() < 1e-15);
}

#[test]
fn six_d_diffusion_cases() {
    let p = PdeProblem::new(ProblemId::Diffusion6d);
    // terms: u_t, then u_xixi for five axes; u = 3t
    let mut r = [0.0];
    p.residual_point(&[3.0, 0.0, 0.0, 0.0, 0.0, 0.0], &[], &mut r);
    assert_eq!(r[0], 3.0);
    let mut x = [0.0; 6];
    x[5] = 0.3;
    assert!((p.exact_point(&x).unwrap()[0] - 3.0).abs() < 1e-15);
}

#[test]
fn flow_mixing_identities() {
    let p = PdeProblem::new(ProblemId::FlowMixing);
    let fm = spinn::pde::FlowMixing {
        vt_max: 0.385,
        r_min: 1e-12,
    };
    for &(x, y) in &[(0.5f64, 1.5f64), (-2.0, 0.3), (3.1, -3.9)] {
        let r: f64 = (x * x + y * y).sqrt();
        let vt = r.tanh() / r.cosh().powi(2);
        let mut ab = [0.0; 2];
        p.coefficients(&[x, y, 1.0], &mut ab);
        let lhs = ab[0] * ab[0] + ab[1] * ab[1];
        assert!((lhs - (vt / 0.385).powi(2)).abs() < 1e-12);
        assert!((fm.speed(r) - vt / 0.385).abs() < 1e-15);
    }
    // constant field
    let mut res = [0.0];
    p.residual_point(&[0.0, 0.0, 0.0], &[0.4, -0.2], &mut res);
    assert_eq!(res[0], 0.0);
}

#[test]
fn l_shape_mask() {
    let p = PdeProblem::new(ProblemId::PoissonLshape);
    assert!(!p.mask(&[0.5, 0.5]));
    assert!(p.mask(&[-0.5, 0.5]));
    let grid = FactorizedBatch::uniform(p.domain().bounds(), &[100, 100]).unwrap();
    let mut inside = 0;
    grid.for_each_point(|_, x| inside += p.mask(x) as usize);
    let frac = inside as f64 / grid.len() as f64;
    assert!((frac - 0.75).abs() < 0.01, "{frac}");
}

#[test]
fn ns_vorticity_matches_finite_differences() {
    let p = PdeProblem::new(ProblemId::Ns4d);
    let x = [PI / 8.0, PI / 8.0, PI / 3.0, 0.0];
    let uy = |z: f64| p.exact_point(&[x[0], x[1], z, x[3]]).unwrap()[1];
    let uz = |y: f64| p.exact_point(&[x[0], y, x[2], x[3]]).unwrap()[2];
    let w_fd = fd_derivative(uz, x[1], 1, 1e-5) - fd_derivative(uy, x[2], 1, 1e-5);
    let w_closed = -3.0 * (2.0 * x[0]).sin() * (2.0 * x[1]).cos() * x[2].cos();
    assert!((w_fd - w_closed).abs() < 1e-8, "{w_fd} vs {w_closed}");
}

#[test]
fn exact_solution_values() {
    let kg = PdeProblem::new(ProblemId::Kg3d);
    assert_eq!(kg.exact_point(&[0.25, -0.5, 0.0]).unwrap()[0], -0.25);
    for id in [ProblemId::DiffusionNl3d, ProblemId::PoissonLshape] {
        let err = PdeProblem::new(id).exact_point(&[0.0, 0.0, 0.0]).unwrap_err();
        assert!(err.to_string().contains("no analytic reference"));
    }
}

#[test]
fn sampling_properties() {
    let p = PdeProblem::new(ProblemId::Helmholtz3d);
    let one = sample_factorized(p.domain(), &[1, 1, 1], 5, 0).unwrap();
    assert_eq!(one.len(), 1);
    let b = sample_factorized(p.domain(), &[64, 64, 64], 5, 0).unwrap();
    assert_eq!(b.len(), 262_144);
    assert_eq!(b.axes().iter().map(Vec::len).sum::<usize>(), 192);
    assert_eq!(b, sample_factorized(p.domain(), &[64, 64, 64], 5, 0).unwrap());
    // changing one axis count never changes another axis's samples
    let c = sample_factorized(p.domain(), &[64, 10, 64], 5, 0).unwrap();
    assert_eq!(b.axis(0), c.axis(0));
    assert_eq!(b.axis(2), c.axis(2));
    assert_eq!(&b.axis(1)[..10], c.axis(1));
    // mean of U(-1, 1) is 0 with standard deviation sqrt(1/3)/sqrt(n)
    let big = sample_factorized(p.domain(), &[10_000, 1, 1], 9, 0).unwrap();
    let mean = big.axis(0).iter().sum::<f64>() / 10_000.0;
    assert!(mean.abs() < 3.0 * (1.0f64 / 3.0).sqrt() / 100.0);
    assert!(big.axis(0).iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn boundary_targets_match_exact_faces() {
    let p = PdeProblem::new(ProblemId::Helmholtz3d);
    let colloc = sample_factorized(p.domain(), &[6, 6, 6], 1, 0).unwrap();
    let faces = boundary_batches(&p, &colloc, 1, 0).unwrap();
    assert_eq!(faces.len(), 6);
    for f in &faces {
        assert_eq!(f.kind, BoundaryKind::Boundary);
        assert_eq!(f.points.len(), 36);
        assert!(f.targets.iter().all(|&v| v == 0.0));
    }
    for id in [ProblemId::Kg3d, ProblemId::Kg4d, ProblemId::Diffusion6d, ProblemId::FlowMixing, ProblemId::Ns4d] {
        let p = PdeProblem::new(id);
        let colloc = sample_factorized(p.domain(), &vec![3; p.dim()], 4, 1).unwrap();
        for f in boundary_batches(&p, &colloc, 4, 1).unwrap() {
            let BoundaryPoints::Face { batch, .. } = &f.points else {
                panic!("factorized faces expected")
            };
            let exact = p.exact_grid(batch).unwrap();
            for (a, b) in exact.data().iter().zip(&f.targets) {
                assert!((a - b).abs() < 1e-12, "{id}");
            }
        }
    }
}

#[test]
fn analytic_features_reproduce_exact_grid() {
    for id in [ProblemId::Kg3d, ProblemId::Ns4d, ProblemId::Diffusion6d] {
        let p = PdeProblem::new(id);
        let model = p.analytic_model().unwrap();
        let batch = random_grid(&p, 3, 8);
        let grid = model.predict_grid(&batch).unwrap();
        for k in 0..batch.len() {
            let x = batch.point(k);
            let v = p.exact_point(&x).unwrap();
            for (c, val) in v.iter().enumerate() {
                assert_eq!(grid.component(c)[k], *val);
            }
        }
    }
}
