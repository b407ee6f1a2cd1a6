use spinn::nets::Variant;
use spinn::pde::{boundary_batches, sample_factorized, PdeProblem, ProblemId};
use spinn::separable::{FactorizedBatch, FeatureSource, SeparableModel};
use spinn::trainer::{
    adam_step, loss_and_grad, relative_l2, rmse, solve_lshape, total_loss, train, AdamConfig, AdamState, Evaluator,
    LossBatch, ModelConfig, TrainConfig,
};

fn tiny_model(problem: &PdeProblem, seed: u64) -> SeparableModel {
    ModelConfig {
        rank: 2,
        depth: 1,
        width: 4,
        variant: Variant::Plain,
    }
    .build(problem, seed)
    .unwrap()
}

fn batch_for(problem: &PdeProblem, n: usize, seed: u64) -> LossBatch {
    let colloc = sample_factorized(problem.domain(), &vec![n; problem.dim()], seed, 0).unwrap();
    let bounds = boundary_batches(problem, &colloc, seed, 0).unwrap();
    LossBatch::new(problem, colloc, bounds).unwrap()
}

/// `||g - fd|| / ||fd||` with central differences over every parameter.
fn gradient_error(problem: &PdeProblem, model: &SeparableModel, batch: &LossBatch) -> f64 {
    let (_, grad) = loss_and_grad(model, problem, batch).unwrap();
    let base = model.params_flat();
    let mut probe = model.clone();
    let h = 1e-6;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, g) in grad.iter().enumerate() {
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_params_flat(&p).unwrap();
        let up = total_loss(&probe, problem, batch).unwrap().total;
        p[i] = base[i] - h;
        probe.set_params_flat(&p).unwrap();
        let down = total_loss(&probe, problem, batch).unwrap().total;
        let fd = (up - down) / (2.0 * h);
        num += (g - fd) * (g - fd);
        den += fd * fd;
    }
    (num / den).sqrt()
}

#[test]
fn gradient_matches_finite_differences_on_l_shape() {
    let mut problem = PdeProblem::new(ProblemId::PoissonLshape);
    problem.set_outline_points(3);
    let model = tiny_model(&problem, 11);
    let batch = batch_for(&problem, 3, 5);
    let err = gradient_error(&problem, &model, &batch);
    assert!(err < 1e-4, "relative gradient error {err}");
}

#[test]
fn gradient_matches_finite_differences_with_faces() {
    for id in [ProblemId::Helmholtz3d, ProblemId::DiffusionNl3d, ProblemId::Kg3d] {
        let problem = PdeProblem::new(id);
        let model = tiny_model(&problem, 3);
        let batch = batch_for(&problem, 3, 9);
        let err = gradient_error(&problem, &model, &batch);
        assert!(err < 1e-4, "{id}: relative gradient error {err}");
    }
}

#[test]
fn gradient_matches_finite_differences_for_vector_output() {
    let problem = PdeProblem::new(ProblemId::Ns4d);
    let model = ModelConfig {
        rank: 2,
        depth: 1,
        width: 3,
        variant: Variant::Modified,
    }
    .build(&problem, 2)
    .unwrap();
    let batch = batch_for(&problem, 2, 4);
    let err = gradient_error(&problem, &model, &batch);
    assert!(err < 1e-4, "relative gradient error {err}");
}

#[test]
fn exact_features_give_vanishing_loss() {
    for id in [
        ProblemId::Helmholtz3d,
        ProblemId::Kg3d,
        ProblemId::Kg4d,
        ProblemId::Diffusion6d,
        ProblemId::Ns4d,
    ] {
        let problem = PdeProblem::new(id);
        let exact = problem.analytic_model().unwrap();
        let n = if problem.dim() > 4 { 3 } else { 6 };
        let terms = total_loss(&exact, &problem, &batch_for(&problem, n, 1)).unwrap();
        assert!(terms.pde < 1e-18, "{id}: pde {}", terms.pde);
        assert!(terms.ic < 1e-24 && terms.bc < 1e-24, "{id}: {terms:?}");
    }
}

#[test]
fn loss_is_linear_in_the_group_weights() {
    let mut problem = PdeProblem::new(ProblemId::Kg3d);
    let model = tiny_model(&problem, 8);
    let batch = batch_for(&problem, 4, 2);
    let base = total_loss(&model, &problem, &batch).unwrap();
    problem.weights.ic = 2.0;
    let doubled = total_loss(&model, &problem, &batch).unwrap();
    assert_eq!(base.ic, doubled.ic);
    assert_eq!(base.pde, doubled.pde);
    assert_eq!(doubled.total, base.pde + 2.0 * base.ic + base.bc);
}

#[test]
fn adam_first_step_moves_by_learning_rate_against_the_sign() {
    let hyper = AdamConfig::default();
    let mut params = vec![1.0, -2.0, 0.5];
    let mut state = AdamState::new(3);
    adam_step(&mut params, &[3.0, -0.01, 0.0], &mut state, 0.1, &hyper).unwrap();
    assert!((params[0] - 0.9).abs() < 1e-7);
    assert!((params[1] + 1.9).abs() < 1e-5);
    assert_eq!(params[2], 0.5);
    assert_eq!(state.t, 1);
}

#[test]
fn adam_two_steps_with_unit_gradient_follow_the_hand_trace() {
    let hyper = AdamConfig::default();
    let mut p = vec![0.0];
    let mut state = AdamState::new(1);
    // m1 = 0.1, v1 = 0.001, mh = vh = 1: step -0.1 / (1 + 1e-8)
    adam_step(&mut p, &[1.0], &mut state, 0.1, &hyper).unwrap();
    let s1 = -0.1 / (1.0 + 1e-8);
    assert!((p[0] - s1).abs() < 1e-15);
    // m2 = 0.19, v2 = 0.001999; mh = 0.19 / 0.19, vh = 0.001999 / 0.001999
    adam_step(&mut p, &[1.0], &mut state, 0.1, &hyper).unwrap();
    assert!((p[0] - 2.0 * s1).abs() < 1e-14);
    assert!((state.m[0] - 0.19).abs() < 1e-15);
    assert!((state.v[0] - 0.001999).abs() < 1e-15);
}

#[test]
fn adam_rejects_misaligned_arrays() {
    let mut state = AdamState::new(2);
    assert!(adam_step(&mut [0.0; 3], &[0.0; 3], &mut state, 0.1, &AdamConfig::default()).is_err());
}

#[test]
fn relative_error_metrics() {
    let u = [1.0, -2.0, 3.0, 0.5];
    assert_eq!(relative_l2(&u, &u).unwrap(), 0.0);
    let scaled: Vec<f64> = u.iter().map(|v| 1.1 * v).collect();
    assert!((relative_l2(&scaled, &u).unwrap() - 0.1).abs() < 1e-15);
    assert!(relative_l2(&u, &[0.0; 4]).is_err());
    assert!((rmse(&[1.0, 3.0], &[0.0, 0.0]).unwrap() - 5.0f64.sqrt()).abs() < 1e-15);
}

#[test]
fn relative_error_matches_direct_summation() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let u: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..1000).map(|_| rng.random_range(-0.1..0.1)).collect();
    let pred: Vec<f64> = u.iter().zip(&c).map(|(a, b)| a + b).collect();
    let mut cn = 0.0;
    let mut un = 0.0;
    for i in 0..1000 {
        cn += c[i] * c[i];
        un += u[i] * u[i];
    }
    let expected = cn.sqrt() / un.sqrt();
    assert!((relative_l2(&pred, &u).unwrap() - expected).abs() < 1e-12 * expected);
}

#[test]
fn evaluator_uses_inclusive_uniform_grid_and_scores_exact_model_zero() {
    let problem = PdeProblem::new(ProblemId::Kg3d);
    let ev = Evaluator::new(&problem, 2).unwrap();
    assert_eq!(ev.batch().axis(0), &[-1.0, 1.0]);
    assert_eq!(ev.batch().axis(2), &[0.0, 10.0]);
    let ev = Evaluator::new(&problem, 9).unwrap();
    let report = ev.evaluate(&problem.analytic_model().unwrap()).unwrap();
    assert_eq!(report.rel_l2, 0.0);
    assert_eq!(report.points, 729);
    assert!(Evaluator::new(&PdeProblem::new(ProblemId::DiffusionNl3d), 8).is_err());
}

#[test]
fn exact_vorticity_scores_zero() {
    let problem = PdeProblem::new(ProblemId::Ns4d);
    let ev = Evaluator::new(&problem, 5).unwrap();
    let report = ev.evaluate(&problem.analytic_model().unwrap()).unwrap();
    assert_eq!(report.vorticity_rel_l2, Some(0.0));
}

#[test]
fn poisson_oracle_converges_under_refinement() {
    // Nodal values at (-0.5, -0.5) on successively refined grids.
    let at = |n: usize| {
        let u = solve_lshape(n);
        let i = (n - 1) / 4;
        u[i * n + i]
    };
    let (a, b, c) = (at(21), at(41), at(81));
    assert!((b - c).abs() < (a - b).abs());
    assert!((b - c).abs() < 2e-3 * c.abs());
}

#[test]
fn zero_hidden_layers_is_a_config_error() {
    let problem = PdeProblem::new(ProblemId::Helmholtz3d);
    let cfg = ModelConfig {
        depth: 0,
        ..ModelConfig::for_problem(ProblemId::Helmholtz3d)
    };
    assert!(cfg.build(&problem, 0).is_err());
}

#[test]
fn train_config_validation() {
    let problem = PdeProblem::new(ProblemId::Helmholtz3d);
    let base = TrainConfig::for_problem(&problem);
    assert!(base.validate(&problem).is_ok());
    for bad in [
        TrainConfig {
            iterations: 0,
            ..base.clone()
        },
        TrainConfig {
            resample_every: 0,
            ..base.clone()
        },
        TrainConfig {
            collocation: vec![4, 4],
            ..base.clone()
        },
    ] {
        assert!(bad.validate(&problem).is_err());
    }
}

fn short_config(problem: &PdeProblem, iterations: usize) -> TrainConfig {
    TrainConfig {
        iterations,
        collocation: vec![6; problem.dim()],
        resample_every: 5,
        log_every: 3,
        eval_every: 6,
        eval_resolution: 6,
        checkpoint_every: 0,
        learning_rate: 1e-2,
        ..TrainConfig::for_problem(problem)
    }
}

#[test]
fn training_returns_minimum_loss_snapshot_and_is_reproducible() {
    let problem = PdeProblem::new(ProblemId::Helmholtz3d);
    let cfg = short_config(&problem, 20);
    let run = || train(&problem, tiny_model(&problem, 1), &cfg).unwrap();
    let a = run();
    let b = run();
    assert!(a.aborted.is_none());
    assert_eq!(a.steps, 20);
    assert!(a.records.iter().all(|r| a.best_loss <= r.loss.total));
    let steps: Vec<usize> = a.records.iter().map(|r| r.step).collect();
    assert_eq!(steps, vec![0, 3, 6, 9, 12, 15, 18, 19]);
    for (ra, rb) in a.records.iter().zip(&b.records) {
        assert_eq!((ra.step, ra.loss, ra.eval, ra.passes), (rb.step, rb.loss, rb.eval, rb.passes));
    }
    assert_eq!(a.best.params_flat(), b.best.params_flat());
    assert_eq!(a.last.params_flat(), b.last.params_flat());
    assert!(a.records[2].eval.is_some() && a.records[1].eval.is_none());
    assert!(a.final_eval.is_some());
}

#[test]
fn training_lowers_the_loss() {
    let problem = PdeProblem::new(ProblemId::Kg3d);
    let cfg = short_config(&problem, 60);
    let out = train(&problem, tiny_model(&problem, 2), &cfg).unwrap();
    let first = out.records.first().unwrap().loss.total;
    assert!(out.best_loss < 0.5 * first, "{first} -> {}", out.best_loss);
}

#[test]
fn non_finite_parameters_abort_training() {
    let problem = PdeProblem::new(ProblemId::Helmholtz3d);
    let mut model = tiny_model(&problem, 1);
    let mut p = model.params_flat();
    p[0] = f64::NAN;
    model.set_params_flat(&p).unwrap();
    let out = train(&problem, model, &short_config(&problem, 5)).unwrap();
    assert!(out.aborted.unwrap().contains("step 0"));
    assert_eq!(out.steps, 0);
    assert!(out.final_eval.is_none());
}

#[test]
fn propagation_count_is_sum_of_axis_samples() {
    let problem = PdeProblem::new(ProblemId::Helmholtz3d);
    let model = tiny_model(&problem, 0);
    let batch = FactorizedBatch::uniform(problem.domain().bounds(), &[64, 64, 64]).unwrap();
    model.reset_passes();
    model.eval_features(&batch, problem.orders()).unwrap();
    assert_eq!(model.passes(), 192);
}
