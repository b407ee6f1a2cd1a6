//! Physics-informed training: loss assembly, Adam, collocation resampling
//! and error metrics.

mod eval;
mod loss;
mod poisson;

pub use eval::{default_resolution, relative_l2, rmse, EvalReport, Evaluator};
pub use loss::{loss_and_grad, total_loss, LossBatch, LossTerms};
pub use poisson::{poisson_reference, solve_lshape, POISSON_NODES};

use std::time::Instant;

use crate::error::{ConfigError, EvalError, ShapeError, TrainError};
use crate::nets::{MlpConfig, Variant};
use crate::pde::{boundary_batches, sample_factorized, PdeProblem, ProblemId};
use crate::separable::{FeatureSource, SeparableModel};

/// Architecture of the per-axis networks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub rank: usize,
    pub depth: usize,
    pub width: usize,
    pub variant: Variant,
}

impl ModelConfig {
    pub fn for_problem(id: ProblemId) -> Self {
        match id {
            ProblemId::Ns4d => Self {
                rank: 64,
                depth: 4,
                width: 64,
                variant: Variant::Modified,
            },
            _ => Self {
                rank: 32,
                depth: 4,
                width: 64,
                variant: Variant::Plain,
            },
        }
    }

    /// Fresh model for `problem`; axis `i` is initialized from `seed + i`.
    pub fn build(&self, problem: &PdeProblem, seed: u64) -> Result<SeparableModel, ConfigError> {
        if self.rank == 0 {
            return Err(ConfigError::Model("rank must be at least 1".into()));
        }
        let template = MlpConfig {
            depth: self.depth,
            width: self.width,
            out_dim: self.rank * problem.out_dim(),
            variant: self.variant,
            seed,
        };
        SeparableModel::init(template, self.rank, problem.out_dim(), problem.domain().bounds().to_vec())
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates aligned with the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64, hyper: &AdamConfig) -> Result<(), ShapeError> {
    let n = params.len();
    for got in [grads.len(), state.m.len(), state.v.len()] {
        if got != n {
            return Err(ShapeError::Length { expected: n, got });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - hyper.beta1.powi(t);
    let c2 = 1.0 - hyper.beta2.powi(t);
    for i in 0..n {
        let g = grads[i];
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
        state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        params[i] -= lr * mh / (vh.sqrt() + hyper.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub adam: AdamConfig,
    pub resample_every: usize,
    /// Collocation samples per axis.
    pub collocation: Vec<usize>,
    pub seed: u64,
    pub log_every: usize,
    /// Evaluation interval in steps; 0 evaluates only the final model.
    pub eval_every: usize,
    pub eval_resolution: usize,
    /// Checkpoint interval in steps; 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
}

impl TrainConfig {
    pub fn for_problem(problem: &PdeProblem) -> Self {
        let n = match problem.id() {
            ProblemId::Kg4d => 16,
            ProblemId::Diffusion6d | ProblemId::Ns4d => 8,
            ProblemId::PoissonLshape => 64,
            _ => 32,
        };
        Self {
            iterations: 50_000,
            learning_rate: 1e-3,
            adam: AdamConfig::default(),
            resample_every: 100,
            collocation: vec![n; problem.dim()],
            seed: 0,
            log_every: 100,
            eval_every: 1_000,
            eval_resolution: default_resolution(problem.dim()),
            checkpoint_every: 10_000,
        }
    }

    pub fn validate(&self, problem: &PdeProblem) -> Result<(), ConfigError> {
        let bad = |msg: &str| Err(ConfigError::Training(msg.into()));
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if self.resample_every == 0 {
            return bad("resample interval must be at least 1");
        }
        if self.log_every == 0 {
            return bad("log interval must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        let AdamConfig { beta1, beta2, eps } = self.adam;
        if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
            return bad("Adam needs 0 <= beta < 1 and eps > 0");
        }
        if self.collocation.len() != problem.dim() {
            return Err(ConfigError::Training(format!(
                "{} collocation counts for a {}-d problem",
                self.collocation.len(),
                problem.dim()
            )));
        }
        if self.collocation.contains(&0) {
            return bad("every axis needs at least one collocation sample");
        }
        if self.eval_resolution < 2 {
            return bad("evaluation resolution must be at least 2");
        }
        Ok(())
    }
}

/// One logged training step.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub step: usize,
    pub loss: LossTerms,
    pub eval: Option<EvalReport>,
    /// Body-network passes since training started.
    pub passes: u64,
    pub elapsed_ms: u128,
}

/// Callbacks raised while training.
pub enum Progress<'a> {
    Record(&'a Record),
    Checkpoint {
        step: usize,
        model: &'a SeparableModel,
        adam: &'a AdamState,
    },
}

/// Optimizer state to continue from.
#[derive(Debug, Clone)]
pub struct Resume {
    pub adam: AdamState,
    pub step: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot with the smallest total loss seen.
    pub best: SeparableModel,
    pub best_step: usize,
    pub best_loss: f64,
    /// Model and optimizer after the last completed update.
    pub last: SeparableModel,
    pub adam: AdamState,
    /// Index one past the last completed step.
    pub steps: usize,
    pub records: Vec<Record>,
    /// Metrics of `best` on the evaluation grid.
    pub final_eval: Option<EvalReport>,
    /// Set when a non-finite loss stopped training early.
    pub aborted: Option<String>,
}

/// Trains without callbacks.
pub fn train(problem: &PdeProblem, model: SeparableModel, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_with(problem, model, config, None, |_| {})
}

/// Trains `model` for steps `resume.step .. config.iterations`.
///
/// Collocation and boundary points are redrawn every `resample_every` steps
/// from streams keyed by `(seed, round)`, so a resumed run sees the same
/// points as an uninterrupted one.
pub fn train_with(
    problem: &PdeProblem,
    mut model: SeparableModel,
    config: &TrainConfig,
    resume: Option<Resume>,
    mut progress: impl FnMut(Progress<'_>),
) -> Result<TrainOutcome, TrainError> {
    config.validate(problem)?;
    if model.dim() != problem.dim() || model.out_dim() != problem.out_dim() {
        return Err(ConfigError::Model(format!(
            "model maps {} axes to {} outputs, problem needs {} and {}",
            model.dim(),
            model.out_dim(),
            problem.dim(),
            problem.out_dim()
        ))
        .into());
    }
    let evaluator = match Evaluator::new(problem, config.eval_resolution) {
        Ok(e) => Some(e),
        Err(TrainError::Pde(_)) => None,
        Err(e) => return Err(e),
    };
    let (mut adam, start) = match resume {
        Some(r) => (r.adam, r.step),
        None => (AdamState::new(model.param_count()), 0),
    };
    if adam.m.len() != model.param_count() {
        return Err(ShapeError::Length {
            expected: model.param_count(),
            got: adam.m.len(),
        }
        .into());
    }
    model.reset_passes();
    let clock = Instant::now();
    let mut best = model.clone();
    let (mut best_step, mut best_loss) = (start, f64::INFINITY);
    let mut records = Vec::new();
    let mut batch: Option<LossBatch> = None;
    let mut aborted = None;
    let mut step = start;
    while step < config.iterations {
        if batch.is_none() || step % config.resample_every == 0 {
            let round = (step / config.resample_every) as u64;
            let colloc = sample_factorized(problem.domain(), &config.collocation, config.seed, round)?;
            let bounds = boundary_batches(problem, &colloc, config.seed, round)?;
            batch = Some(LossBatch::new(problem, colloc, bounds)?);
        }
        let current = batch.as_ref().expect("sampled above");
        let (loss, grad) = match loss_and_grad(&model, problem, current) {
            Ok(v) => v,
            Err(TrainError::Eval(EvalError::NonFinite(e))) => {
                aborted = Some(TrainError::NonFinite { step, detail: e.0 }.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            aborted = Some(
                TrainError::NonFinite {
                    step,
                    detail: format!("gradient entry {i}"),
                }
                .to_string(),
            );
            break;
        }
        if loss.total < best_loss {
            best_loss = loss.total;
            best_step = step;
            best.clone_from(&model);
        }
        let last_step = step + 1 == config.iterations;
        if step % config.log_every == 0 || last_step {
            let eval = match &evaluator {
                Some(e) if config.eval_every > 0 && step % config.eval_every == 0 => Some(e.evaluate(&model)?),
                _ => None,
            };
            let record = Record {
                step,
                loss,
                eval,
                passes: model.passes(),
                elapsed_ms: clock.elapsed().as_millis(),
            };
            progress(Progress::Record(&record));
            records.push(record);
        }
        let mut params = model.params_flat();
        adam_step(&mut params, &grad, &mut adam, config.learning_rate, &config.adam)?;
        model.set_params_flat(&params)?;
        step += 1;
        if config.checkpoint_every > 0 && step % config.checkpoint_every == 0 && step < config.iterations {
            progress(Progress::Checkpoint {
                step,
                model: &model,
                adam: &adam,
            });
        }
    }
    let final_eval = match &evaluator {
        Some(e) if best_loss.is_finite() => Some(e.evaluate(&best)?),
        _ => None,
    };
    Ok(TrainOutcome {
        best,
        best_step,
        best_loss,
        last: model,
        adam,
        steps: step,
        records,
        final_eval,
        aborted,
    })
}
