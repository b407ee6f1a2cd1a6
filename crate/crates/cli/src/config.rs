//! Run configuration files.
//!
//! ```toml
//! problem = "helmholtz3d"   # required unless given on the command line
//! seed = 0
//! output = "runs/helmholtz"
//!
//! [model]                   # rank, depth, width, variant ("plain" | "modified")
//! rank = 32
//!
//! [train]                   # iterations, learning_rate, beta1, beta2, eps,
//! iterations = 50000        # resample_every, collocation (one count or one
//! collocation = 32          # per axis), log_every, checkpoint_every,
//!                           # outline_points, weight_pde, weight_ic, weight_bc
//! [eval]
//! resolution = 64
//! interval = 1000
//! ```
//!
//! Every key is optional apart from the problem; missing keys take the
//! problem's defaults. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use spinn::pde::{PdeProblem, ProblemId};
use spinn::trainer::{ModelConfig, TrainConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Option<String>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub rank: Option<usize>,
    pub depth: Option<usize>,
    pub width: Option<usize>,
    pub variant: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Counts {
    Uniform(usize),
    PerAxis(Vec<usize>),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub iterations: Option<usize>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub eps: Option<f64>,
    pub resample_every: Option<usize>,
    pub collocation: Option<Counts>,
    pub log_every: Option<usize>,
    pub checkpoint_every: Option<usize>,
    pub outline_points: Option<usize>,
    pub weight_pde: Option<f64>,
    pub weight_ic: Option<f64>,
    pub weight_bc: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub resolution: Option<usize>,
    pub interval: Option<usize>,
}

/// Fully specified run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub problem: PdeProblem,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seed: u64,
    pub output: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::ConfigFile {
            path: path.to_path_buf(),
            source: Box::new(e),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let name = self.problem.as_deref().ok_or_else(|| {
            CliError::Usage(format!("no problem given; expected one of: {}", ProblemId::ALL_NAMES.join(", ")))
        })?;
        let id: ProblemId = name.parse()?;
        let mut problem = PdeProblem::new(id);
        let t = &self.train;
        if let Some(n) = t.outline_points {
            problem.set_outline_points(n);
        }
        if let Some(w) = t.weight_pde {
            problem.weights.pde = w;
        }
        if let Some(w) = t.weight_ic {
            problem.weights.ic = w;
        }
        if let Some(w) = t.weight_bc {
            problem.weights.bc = w;
        }

        let mut model = ModelConfig::for_problem(id);
        let m = &self.model;
        model.rank = m.rank.unwrap_or(model.rank);
        model.depth = m.depth.unwrap_or(model.depth);
        model.width = m.width.unwrap_or(model.width);
        if let Some(v) = &m.variant {
            model.variant = v.parse()?;
        }

        let seed = self.seed.unwrap_or(0);
        let mut train = TrainConfig::for_problem(&problem);
        train.seed = seed;
        train.iterations = t.iterations.unwrap_or(train.iterations);
        train.learning_rate = t.learning_rate.unwrap_or(train.learning_rate);
        train.adam.beta1 = t.beta1.unwrap_or(train.adam.beta1);
        train.adam.beta2 = t.beta2.unwrap_or(train.adam.beta2);
        train.adam.eps = t.eps.unwrap_or(train.adam.eps);
        train.resample_every = t.resample_every.unwrap_or(train.resample_every);
        train.log_every = t.log_every.unwrap_or(train.log_every);
        train.checkpoint_every = t.checkpoint_every.unwrap_or(train.checkpoint_every);
        match &t.collocation {
            Some(Counts::Uniform(n)) => train.collocation = vec![*n; problem.dim()],
            Some(Counts::PerAxis(v)) => train.collocation = v.clone(),
            None => {}
        }
        train.eval_resolution = self.eval.resolution.unwrap_or(train.eval_resolution);
        train.eval_every = self.eval.interval.unwrap_or(train.eval_every);
        train.validate(&problem)?;

        let output = self.output.clone().unwrap_or_else(|| PathBuf::from("runs").join(id.name()));
        Ok(Resolved {
            problem,
            model,
            train,
            seed,
            output,
        })
    }
}
