//! The fully convolutional classifier and its dense-head comparison variant.

mod config;
mod verify;
mod weights;

pub use config::{Activation, DropoutPlacement, FcnConfig, Head, ADAPTIVE_N, GRID_DEPTHS, GRID_WIDTHS};
pub use verify::{gradcheck_suite, LayerCheck, GRADCHECK_TOLERANCE};
pub use weights::{load_weights, save_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureMatrix, Standardizer};
use crate::nn::{ActivationFn, Real, Tape, Tensor, Var};

/// How raw audio becomes model input; stored alongside the weights so a
/// saved model can be applied to new recordings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub features: FeatureConfig,
    pub standardizer: Option<Standardizer>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FcnModel {
    config: FcnConfig,
    label_set: Vec<String>,
    /// Named parameters in a fixed order (see [`FcnModel::param_names`]).
    params: Vec<(String, Tensor<f32>)>,
    pub preprocessing: Option<Preprocessing>,
}

/// Trainable-parameter budget usually quoted for the canonical network.
/// The layer arithmetic gives more; [`FcnModel::summary`] says so.
pub const QUOTED_PARAM_BUDGET: usize = 500_000;

/// Parameter names and shapes implied by a configuration.
fn param_layout(config: &FcnConfig) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    let mut in_ch = 1;
    let depth = config.depth();
    for (i, &w) in config.widths.iter().enumerate() {
        let k = if i + 1 == depth { 1 } else { config.kernel };
        out.push((format!("conv{}.kernel", i + 1), vec![w, in_ch, k, k]));
        out.push((format!("conv{}.bias", i + 1), vec![w]));
        if i + 1 < depth && config.activation == Activation::Adaptive {
            out.push((format!("act{}.slope", i + 1), vec![1]));
        }
        in_ch = w;
    }
    if let Head::Dense { fixed_frames } = config.head {
        let (h, w) = config.pooled_extent(fixed_frames);
        out.push(("dense.weight".into(), vec![config.n_classes, h * w * config.n_classes]));
        out.push(("dense.bias".into(), vec![config.n_classes]));
    }
    out
}

/// Builds a model with Glorot-uniform kernels, zero biases and adaptive
/// slopes at `1 / n`.
pub fn build_model(config: FcnConfig, label_set: Vec<String>, seed: u64) -> Result<FcnModel> {
    config.validate()?;
    if label_set.len() != config.n_classes {
        return Err(Error::Config(format!(
            "{} labels for a {}-class model",
            label_set.len(),
            config.n_classes
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::new();
    for (name, shape) in param_layout(&config) {
        let n: usize = shape.iter().product();
        let data: Vec<f32> = if name.ends_with(".bias") {
            vec![0.0; n]
        } else if name.ends_with(".slope") {
            vec![(1.0 / ADAPTIVE_N) as f32; n]
        } else {
            let (fan_in, fan_out) = if shape.len() == 4 {
                let area = shape[2] * shape[3];
                (shape[1] * area, shape[0] * area)
            } else {
                (shape[1], shape[0])
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..n).map(|_| rng.random_range(-limit..limit) as f32).collect()
        };
        params.push((name, Tensor::new(&shape, data)?));
    }
    Ok(FcnModel {
        config,
        label_set,
        params,
        preprocessing: None,
    })
}

/// Dense-head comparison model over the same convolution stack.
pub fn build_cnn_dense(
    config: FcnConfig,
    fixed_frames: usize,
    label_set: Vec<String>,
    seed: u64,
) -> Result<FcnModel> {
    build_model(config.with_head(Head::Dense { fixed_frames }), label_set, seed)
}

impl FcnModel {
    pub fn config(&self) -> &FcnConfig {
        &self.config
    }

    pub fn label_set(&self) -> &[String] {
        &self.label_set
    }

    pub fn min_frames(&self) -> usize {
        self.config.min_frames()
    }

    pub fn params(&self) -> &[(String, Tensor<f32>)] {
        &self.params
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor<f32>> {
        self.params.iter_mut().map(|(_, t)| t)
    }

    pub fn param_names(&self) -> Vec<&str> {
        self.params.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Number of trainable scalars: kernels, biases, dense weights, slopes.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(|(_, t)| t.len()).sum()
    }

    /// Per-tensor shapes and counts, the total, and a warning line when
    /// the total exceeds [`QUOTED_PARAM_BUDGET`].
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for (name, t) in &self.params {
            out.push_str(&format!("{name:<14} {:<18} {}\n", format!("{:?}", t.shape()), t.len()));
        }
        let n = self.param_count();
        out.push_str(&format!("total          {n}\n"));
        if n > QUOTED_PARAM_BUDGET {
            out.push_str(&format!(
                "warning: {n} trainable parameters exceeds the quoted budget of fewer than {QUOTED_PARAM_BUDGET}\n"
            ));
        }
        out
    }

    /// Current adaptive slope values, one per activation layer.
    pub fn slopes(&self) -> Vec<f32> {
        self.params
            .iter()
            .filter(|(n, _)| n.ends_with(".slope"))
            .map(|(_, t)| t.data()[0])
            .collect()
    }

    pub(crate) fn from_parts(
        config: FcnConfig,
        label_set: Vec<String>,
        params: Vec<(String, Tensor<f32>)>,
        preprocessing: Option<Preprocessing>,
    ) -> Result<Self> {
        config.validate()?;
        let layout = param_layout(&config);
        if layout.len() != params.len()
            || layout.iter().zip(&params).any(|((n, s), (pn, t))| n != pn || s.as_slice() != t.shape())
        {
            return Err(Error::Corruption("parameter list does not match the configuration".into()));
        }
        if label_set.len() != config.n_classes {
            return Err(Error::Corruption(format!(
                "{} labels for a {}-class model",
                label_set.len(),
                config.n_classes
            )));
        }
        Ok(Self {
            config,
            label_set,
            params,
            preprocessing,
        })
    }

    /// Checks an input matrix against the model's shape contract.
    pub fn check_input(&self, bands: usize, frames: usize) -> Result<()> {
        if bands != self.config.bands {
            return Err(Error::Shape(format!(
                "model expects {} feature bands, input has {bands}",
                self.config.bands
            )));
        }
        match self.config.head {
            Head::Dense { fixed_frames } if frames != fixed_frames => Err(Error::Shape(format!(
                "dense-head model accepts exactly {fixed_frames} frames, input has {frames}"
            ))),
            _ if frames < self.min_frames() => Err(Error::DegenerateInput(format!(
                "input has {frames} frames, model needs at least min_frames = {}",
                self.min_frames()
            ))),
            _ => Ok(()),
        }
    }

    /// Records the network on `tape` and returns the probability node.
    ///
    /// `params` are the tape nodes of [`FcnModel::params`], in order, and
    /// `input` is a `bands x frames x 1` map.
    pub fn graph<T: Real>(
        &self,
        tape: &mut Tape<T>,
        params: &[Var],
        input: Var,
        train: bool,
        rng: &mut dyn RngCore,
    ) -> Result<Var> {
        let scores = self.graph_logits(tape, params, input, train, rng)?;
        tape.softmax(scores)
    }

    /// As [`FcnModel::graph`], stopping before the softmax.
    pub fn graph_logits<T: Real>(
        &self,
        tape: &mut Tape<T>,
        params: &[Var],
        input: Var,
        train: bool,
        rng: &mut dyn RngCore,
    ) -> Result<Var> {
        let cfg = &self.config;
        if params.len() != self.params.len() {
            return Err(Error::Graph(format!(
                "{} parameter nodes for {} parameters",
                params.len(),
                self.params.len()
            )));
        }
        let mut p = params.iter().copied();
        let mut next = || p.next().expect("parameter count checked above");
        let depth = cfg.depth();
        let mut x = input;
        for i in 0..depth {
            let last = i + 1 == depth;
            if last && cfg.head == Head::Gap && cfg.dropout_placement == DropoutPlacement::BeforeProjection {
                x = tape.dropout(x, cfg.dropout_rate, train, rng)?;
            }
            let (k, b) = (next(), next());
            x = tape.conv2d(x, k, b)?;
            if last {
                break;
            }
            let f = match cfg.activation {
                Activation::Relu => ActivationFn::Relu,
                Activation::Tanh => ActivationFn::Tanh,
                Activation::Adaptive => ActivationFn::Adaptive {
                    base: cfg.activation.adaptive_base().expect("adaptive"),
                    slope: next(),
                    n: ADAPTIVE_N,
                },
            };
            x = tape.activate(x, f)?;
            let h = tape.value(x)?.shape()[0];
            x = tape.maxpool(x, if h >= 2 { 2 } else { 1 }, 2)?;
        }
        let scores = match cfg.head {
            Head::Gap => tape.global_avg_pool(x)?,
            Head::Dense { .. } => {
                let mut flat = tape.flatten(x)?;
                if cfg.dropout_placement == DropoutPlacement::BeforeProjection {
                    flat = tape.dropout(flat, cfg.dropout_rate, train, rng)?;
                }
                let (w, b) = (next(), next());
                tape.dense(flat, w, b)?
            }
        };
        if cfg.dropout_placement == DropoutPlacement::BeforeSoftmax {
            tape.dropout(scores, cfg.dropout_rate, train, rng)
        } else {
            Ok(scores)
        }
    }

    /// Puts the parameters on `tape` (trainable) in [`FcnModel::graph`] order.
    pub fn load_params<T: Real>(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.iter().map(|(_, t)| tape.param(t.cast())).collect()
    }

    /// Class probabilities for one feature matrix (standardization, if
    /// any, is the caller's job).
    pub fn forward(&self, features: &FeatureMatrix, train: bool, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        self.check_input(features.bands, features.frames)?;
        let mut tape = Tape::<f32>::inference();
        let params = self.load_params(&mut tape);
        let x = tape.constant(input_tensor(features)?);
        let z = self.graph_logits(&mut tape, &params, x, train, rng)?;
        let logits: Vec<f64> = tape.value(z)?.data().iter().map(|&v| v as f64).collect();
        softmax(&logits)
    }

    /// Evaluation-mode forward pass.
    pub fn predict(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        // dropout is the identity outside training, so the generator is unused
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.forward(features, false, &mut rng)
    }
}

/// Softmax in double precision, so probabilities sum to one within 1e-9
/// whatever precision produced the scores.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numeric(format!("non-finite class scores {logits:?}")));
    }
    let e: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / total).collect())
}

/// Views a feature matrix as a `bands x frames x 1` tensor.
pub fn input_tensor<T: Real>(features: &FeatureMatrix) -> Result<Tensor<T>> {
    Tensor::from_f64(&[features.bands, features.frames, 1], &features.values)
}
