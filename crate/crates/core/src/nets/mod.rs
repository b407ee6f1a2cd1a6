//! Per-axis body networks.
//!
//! Each network maps one scalar coordinate to a feature vector. Two
//! variants are supported, both with `tanh` hidden activations and an affine
//! output layer:
//!
//! * plain: `H1 = tanh(x W1 + b1)`, `H(k+1) = tanh(H(k) Wk + bk)`.
//! * modified (gated): `U = tanh(x Wu + bu)`, `V = tanh(x Wv + bv)`,
//!   `H1 = tanh(x W1 + b1)`, `Z(k) = tanh(H(k) Wk + bk)`,
//!   `H(k+1) = (1 - Z(k)) * U + Z(k) * V`, evaluated as `U + Z(k) * (V - U)`.
//!
//! `depth` counts the hidden layers, so a depth-`L` network has `L - 1`
//! hidden-to-hidden matrices. Gates have the hidden width.

mod batched;

pub use batched::{BatchTrace, JetBatch};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ConfigError, NonFiniteError};
use crate::jet::{jet_is_finite, Jet, Real};
use crate::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Plain,
    Modified,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::Modified => "modified",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(Variant::Plain),
            "modified" => Ok(Variant::Modified),
            other => Err(ConfigError::Network(format!(
                "unknown variant `{other}` (expected `plain` or `modified`)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpConfig {
    pub depth: usize,
    pub width: usize,
    pub out_dim: usize,
    pub variant: Variant,
    pub seed: u64,
}

impl MlpConfig {
    pub fn plain(depth: usize, width: usize, out_dim: usize, seed: u64) -> Self {
        Self {
            depth,
            width,
            out_dim,
            variant: Variant::Plain,
            seed,
        }
    }

    pub fn modified(depth: usize, width: usize, out_dim: usize, seed: u64) -> Self {
        Self {
            variant: Variant::Modified,
            ..Self::plain(depth, width, out_dim, seed)
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.depth == 0 {
            return Err(ConfigError::Network("depth must be at least 1 hidden layer".into()));
        }
        if self.width == 0 {
            return Err(ConfigError::Network("width must be at least 1".into()));
        }
        if self.out_dim == 0 {
            return Err(ConfigError::Network("out_dim must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of trainable scalars, without building the network.
    pub fn param_count(&self) -> usize {
        let (w, o) = (self.width, self.out_dim);
        let mut n = (w + w) + (self.depth - 1) * (w * w + w) + (w * o + o);
        if self.variant == Variant::Modified {
            n += 2 * (w + w);
        }
        n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layer {
    pub weight: usize,
    pub bias: usize,
    pub n_in: usize,
    pub n_out: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodyNet {
    config: MlpConfig,
    params: ParamStore,
    input: Layer,
    gates: Option<(Layer, Layer)>,
    hidden: Vec<Layer>,
    output: Layer,
}

fn add_layer(store: &mut ParamStore, name: &str, n_in: usize, n_out: usize) -> Layer {
    let weight = store.add_slot(format!("{name}.weight"), n_in, n_out);
    let bias = store.add_slot(format!("{name}.bias"), 1, n_out);
    Layer {
        weight,
        bias,
        n_in,
        n_out,
    }
}

impl BodyNet {
    /// Allocates the layer layout with all parameters zero.
    pub fn zeros(config: MlpConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let w = config.width;
        let mut store = ParamStore::new();
        let input = add_layer(&mut store, "input", 1, w);
        let gates = match config.variant {
            Variant::Plain => None,
            Variant::Modified => Some((
                add_layer(&mut store, "gate_u", 1, w),
                add_layer(&mut store, "gate_v", 1, w),
            )),
        };
        let hidden = (1..config.depth)
            .map(|k| add_layer(&mut store, &format!("hidden{k}"), w, w))
            .collect();
        let output = add_layer(&mut store, "output", w, config.out_dim);
        Ok(Self {
            config,
            params: store,
            input,
            gates,
            hidden,
            output,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn out_dim(&self) -> usize {
        self.config.out_dim
    }

    pub(crate) fn layers(&self) -> impl Iterator<Item = &Layer> {
        std::iter::once(&self.input)
            .chain(self.gates.iter().flat_map(|(u, v)| [u, v]))
            .chain(self.hidden.iter())
            .chain(std::iter::once(&self.output))
    }

    /// Plain `f64` evaluation, no derivative bookkeeping.
    pub fn forward(&self, x: f64) -> Vec<f64> {
        let p = self.params.as_slice();
        let first = |layer: &Layer| -> Vec<f64> {
            let w = &p[self.params.slot(layer.weight).range()];
            let b = &p[self.params.slot(layer.bias).range()];
            w.iter().zip(b).map(|(&wj, &bj)| (x * wj + bj).tanh()).collect()
        };
        let affine = |layer: &Layer, inp: &[f64]| -> Vec<f64> {
            let w = &p[self.params.slot(layer.weight).range()];
            let b = &p[self.params.slot(layer.bias).range()];
            (0..layer.n_out)
                .map(|j| {
                    let mut acc = inp[0] * w[j];
                    for (k, &v) in inp.iter().enumerate().skip(1) {
                        acc += v * w[k * layer.n_out + j];
                    }
                    acc + b[j]
                })
                .collect()
        };
        let mut h = first(&self.input);
        match &self.gates {
            None => {
                for layer in &self.hidden {
                    h = affine(layer, &h).into_iter().map(f64::tanh).collect();
                }
            }
            Some((gu, gv)) => {
                let u = first(gu);
                let v = first(gv);
                let d: Vec<f64> = v.iter().zip(&u).map(|(a, b)| a - b).collect();
                for layer in &self.hidden {
                    let z: Vec<f64> = affine(layer, &h).into_iter().map(f64::tanh).collect();
                    h = u
                        .iter()
                        .zip(&z)
                        .zip(&d)
                        .map(|((&u, &z), &d)| u + z * d)
                        .collect();
                }
            }
        }
        affine(&self.output, &h)
    }

    /// Jet-valued forward pass with externally supplied parameters.
    ///
    /// `params` must be laid out like [`BodyNet::params`]; passing tape
    /// variables yields reverse-mode gradients through the jets.
    pub fn forward_jet_with<T: Real>(&self, params: &[T], x: Jet<T>) -> Vec<Jet<T>> {
        assert_eq!(params.len(), self.params.len(), "parameter length mismatch");
        let slot = |i: usize| &params[self.params.slot(i).range()];
        let first = |layer: &Layer| -> Vec<Jet<T>> {
            let w = slot(layer.weight);
            let b = slot(layer.bias);
            (0..layer.n_out)
                .map(|j| x.scale(w[j]).shift(b[j]).tanh())
                .collect()
        };
        let affine = |layer: &Layer, inp: &[Jet<T>]| -> Vec<Jet<T>> {
            let w = slot(layer.weight);
            let b = slot(layer.bias);
            (0..layer.n_out)
                .map(|j| {
                    let mut acc = inp[0].scale(w[j]);
                    for (k, v) in inp.iter().enumerate().skip(1) {
                        acc = acc + v.scale(w[k * layer.n_out + j]);
                    }
                    acc.shift(b[j])
                })
                .collect()
        };
        let mut h = first(&self.input);
        match &self.gates {
            None => {
                for layer in &self.hidden {
                    h = affine(layer, &h).iter().map(Jet::tanh).collect();
                }
            }
            Some((gu, gv)) => {
                let u = first(gu);
                let v = first(gv);
                let d: Vec<Jet<T>> = v.iter().zip(&u).map(|(&a, &b)| a - b).collect();
                for layer in &self.hidden {
                    let z: Vec<Jet<T>> = affine(layer, &h).iter().map(Jet::tanh).collect();
                    h = u
                        .iter()
                        .zip(&z)
                        .zip(&d)
                        .map(|((&u, &z), &d)| u + z * d)
                        .collect();
                }
            }
        }
        affine(&self.output, &h)
    }

    /// Features and their derivatives along the seeded input axis.
    pub fn forward_jet(&self, x: Jet<f64>) -> Result<Vec<Jet<f64>>, NonFiniteError> {
        let out = self.forward_jet_with(self.params.as_slice(), x);
        if out.iter().all(jet_is_finite) {
            Ok(out)
        } else {
            Err(NonFiniteError("body network output".into()))
        }
    }
}

/// Builds a network with Glorot-uniform weights and zero biases.
pub fn init_mlp(config: MlpConfig) -> Result<BodyNet, ConfigError> {
    let mut net = BodyNet::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let layers: Vec<Layer> = net.layers().copied().collect();
    for layer in layers {
        let limit = (6.0 / (layer.n_in + layer.n_out) as f64).sqrt();
        for w in net.params.get_mut(layer.weight) {
            *w = rng.random_range(-limit..limit);
        }
    }
    Ok(net)
}
