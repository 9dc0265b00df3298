//! Trainable feature path: optional convolution stage, dense stack, and the
//! dimensionality-reduction layer keyed into the dictionary.
//!
//! Forward passes return a [`Trace`] holding every activation needed by the
//! backward pass. A trace is stamped with the parameter version it was
//! computed under; any optimizer step or layer switch bumps the version and
//! invalidates older traces.

mod adam;
mod conv;
mod reduction;

pub use adam::{AdamConfig, AdamState, Moments};
pub use conv::ConvLayer;
pub use reduction::{FcInit, ReductionLayer, ReductionMode};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{affine_into, transpose_mul_add};
use crate::random_projection::{Method, ProjectionError, ProjectorSpec};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncoderError {
    #[error("{what}: expected length {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("backward called with a trace from an older parameter version")]
    StaleTrace,
    #[error("non-finite gradient in parameter block `{block}`")]
    NonFiniteGradient { block: String },
    #[error("gradient blocks do not match the trainable parameters")]
    GradientLayout,
    #[error("reduction layer is already fully connected")]
    AlreadyFc,
    #[error("invalid encoder config: {0}")]
    Config(String),
    #[error("unsupported checkpoint version {0}")]
    CheckpointVersion(u32),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Encoder shape. The conv stage is enabled when `conv_channels` is
/// non-empty and requires a `[channels, height, width]` observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Widths of the dense layers; the last one is the embedding size. With
    /// no dense layers the embedding is the flattened conv output (or the
    /// observation itself).
    pub dense_layers: Vec<usize>,
    pub activation: Activation,
    pub conv_channels: Vec<usize>,
    pub conv_kernels: Vec<usize>,
    pub conv_strides: Vec<usize>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dense_layers: vec![64, 64],
            activation: Activation::Relu,
            conv_channels: Vec::new(),
            conv_kernels: Vec::new(),
            conv_strides: Vec::new(),
        }
    }
}

/// Shape and seed of the reduction layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReductionConfig {
    pub key_dim: usize,
    pub rp_method: Method,
    /// Fixed across agent seeds.
    pub rp_seed: u64,
    pub fc_init: FcInit,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        Self {
            key_dim: 16,
            rp_method: Method::Gaussian,
            rp_seed: 240,
            fc_init: FcInit::CopyRp,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub input_dim: usize,
    pub output_dim: usize,
    /// `output_dim × input_dim`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    /// Uniform `±1/sqrt(fan_in)` weights and biases.
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input_dim as f64).sqrt();
        Self {
            input_dim,
            output_dim,
            weight: (0..input_dim * output_dim)
                .map(|_| rng.random_range(-bound..bound))
                .collect(),
            bias: (0..output_dim).map(|_| rng.random_range(-bound..bound)).collect(),
            activation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub input_shape: Vec<usize>,
    pub conv: Vec<ConvLayer>,
    pub dense: Vec<DenseLayer>,
}

impl EncoderParams {
    pub fn new(input_shape: &[usize], config: &EncoderConfig, rng: &mut impl Rng) -> Result<Self, EncoderError> {
        if config.dense_layers.contains(&0) {
            return Err(EncoderError::Config("dense layer widths must be positive".into()));
        }
        let n_conv = config.conv_channels.len();
        if config.conv_kernels.len() != n_conv || config.conv_strides.len() != n_conv {
            return Err(EncoderError::Config(
                "conv_channels, conv_kernels and conv_strides must have equal length".into(),
            ));
        }
        let input_len: usize = input_shape.iter().product();
        if input_len == 0 {
            return Err(EncoderError::Config("observation shape is empty".into()));
        }
        let mut conv = Vec::with_capacity(n_conv);
        let mut flat = input_len;
        if n_conv > 0 {
            let &[mut c, mut h, mut w] = input_shape else {
                return Err(EncoderError::Config(format!(
                    "convolution needs a [channels, height, width] observation, got {input_shape:?}"
                )));
            };
            for i in 0..n_conv {
                let (k, s) = (config.conv_kernels[i], config.conv_strides[i]);
                let (oh, ow) = ConvLayer::output_hw(h, w, k, s).ok_or_else(|| {
                    EncoderError::Config(format!("conv layer {i}: kernel {k} stride {s} does not fit {h}x{w}"))
                })?;
                let layer = ConvLayer::new(c, config.conv_channels[i], k, s, h, w, rng);
                c = config.conv_channels[i];
                h = oh;
                w = ow;
                conv.push(layer);
            }
            flat = c * h * w;
        }
        let mut dense = Vec::with_capacity(config.dense_layers.len());
        let mut width = flat;
        for &out in &config.dense_layers {
            dense.push(DenseLayer::new(width, out, config.activation, rng));
            width = out;
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            conv,
            dense,
        })
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn embedding_dim(&self) -> usize {
        match (self.dense.last(), self.conv.last()) {
            (Some(l), _) => l.output_dim,
            (None, Some(c)) => c.output_len(),
            (None, None) => self.input_len(),
        }
    }
}

/// Activations recorded by a forward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    version: u64,
    input: Vec<f64>,
    conv_out: Vec<Vec<f64>>,
    dense_in: Vec<Vec<f64>>,
    dense_pre: Vec<Vec<f64>>,
    /// Embedding `h` before reduction.
    pub embedding: Vec<f64>,
    /// Reduced key `h′`.
    pub key: Vec<f64>,
}

/// Gradients for every trainable block, in [`Network::parameter_blocks_mut`]
/// order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    blocks: Vec<(String, Vec<f64>)>,
}

impl Gradients {
    pub fn blocks(&self) -> &[(String, Vec<f64>)] {
        &self.blocks
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|(_, v)| v.iter().copied()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(|(_, v)| v.iter().all(|x| *x == 0.0))
    }

    /// Adds `other` in place. Layouts must match.
    pub fn accumulate(&mut self, other: &Gradients) -> Result<(), EncoderError> {
        if self.blocks.len() != other.blocks.len() {
            return Err(EncoderError::GradientLayout);
        }
        for ((na, a), (nb, b)) in self.blocks.iter_mut().zip(&other.blocks) {
            if na != nb || a.len() != b.len() {
                return Err(EncoderError::GradientLayout);
            }
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

/// Encoder plus reduction layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub encoder: EncoderParams,
    pub reduction: ReductionLayer,
    version: u64,
}

impl Network {
    pub fn new(encoder: EncoderParams, reduction: ReductionLayer) -> Result<Self, EncoderError> {
        if reduction.input_dim != encoder.embedding_dim() {
            return Err(EncoderError::ShapeMismatch {
                what: "reduction input vs embedding",
                expected: encoder.embedding_dim(),
                actual: reduction.input_dim,
            });
        }
        Ok(Self {
            encoder,
            reduction,
            version: 0,
        })
    }

    /// Network whose reduction layer is the RP layer described by `reduction`.
    pub fn with_rp(
        input_shape: &[usize],
        encoder: &EncoderConfig,
        reduction: &ReductionConfig,
        rng: &mut impl Rng,
    ) -> Result<Self, EncoderError> {
        let params = EncoderParams::new(input_shape, encoder, rng)?;
        let spec = ProjectorSpec::new(
            reduction.rp_method,
            params.embedding_dim(),
            reduction.key_dim,
            reduction.rp_seed,
        );
        let layer = ReductionLayer::random_projection(spec)?;
        Self::new(params, layer)
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    pub fn mode(&self) -> ReductionMode {
        self.reduction.mode
    }

    pub fn key_dim(&self) -> usize {
        self.reduction.output_dim
    }

    /// Replaces an RP reduction layer with a trainable FC layer.
    pub fn switch_to_fc(&mut self, init: FcInit, rng: &mut impl Rng) -> Result<(), EncoderError> {
        self.reduction = self.reduction.switch(init, rng)?;
        self.bump_version();
        Ok(())
    }

    fn encode_into(&self, observation: &[f64], trace: Option<&mut Trace>) -> Result<Vec<f64>, EncoderError> {
        if observation.len() != self.encoder.input_len() {
            return Err(EncoderError::ShapeMismatch {
                what: "observation",
                expected: self.encoder.input_len(),
                actual: observation.len(),
            });
        }
        let mut x = observation.to_vec();
        let mut conv_out = Vec::new();
        let mut dense_in = Vec::new();
        let mut dense_pre = Vec::new();
        let keep = trace.is_some();
        for layer in &self.encoder.conv {
            x = layer.forward(&x);
            if keep {
                conv_out.push(x.clone());
            }
        }
        for layer in &self.encoder.dense {
            let mut z = vec![0.0; layer.output_dim];
            affine_into(
                &layer.weight,
                layer.output_dim,
                layer.input_dim,
                &x,
                &layer.bias,
                &mut z,
            );
            let a: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
            if keep {
                dense_in.push(std::mem::replace(&mut x, a));
                dense_pre.push(z);
            } else {
                x = a;
            }
        }
        if let Some(t) = trace {
            t.input = observation.to_vec();
            t.conv_out = conv_out;
            t.dense_in = dense_in;
            t.dense_pre = dense_pre;
        }
        Ok(x)
    }

    /// Embedding `h` only.
    pub fn encode(&self, observation: &[f64]) -> Result<Vec<f64>, EncoderError> {
        self.encode_into(observation, None)
    }

    /// Reduced key `h′` without recording a trace.
    pub fn embed(&self, observation: &[f64]) -> Result<Vec<f64>, EncoderError> {
        let h = self.encode_into(observation, None)?;
        self.reduction.reduce(&h)
    }

    pub fn forward(&self, observation: &[f64]) -> Result<Trace, EncoderError> {
        let mut trace = Trace {
            version: self.version,
            input: Vec::new(),
            conv_out: Vec::new(),
            dense_in: Vec::new(),
            dense_pre: Vec::new(),
            embedding: Vec::new(),
            key: Vec::new(),
        };
        let h = self.encode_into(observation, Some(&mut trace))?;
        trace.key = self.reduction.reduce(&h)?;
        trace.embedding = h;
        Ok(trace)
    }

    /// Parameter gradients of `⟨grad_key, h′⟩`. RP-mode reduction weights get
    /// no block.
    pub fn backward(&self, trace: &Trace, grad_key: &[f64]) -> Result<Gradients, EncoderError> {
        if trace.version != self.version {
            return Err(EncoderError::StaleTrace);
        }
        if grad_key.len() != self.reduction.output_dim {
            return Err(EncoderError::ShapeMismatch {
                what: "key gradient",
                expected: self.reduction.output_dim,
                actual: grad_key.len(),
            });
        }
        let mut blocks: Vec<(String, Vec<f64>)> = Vec::new();

        let red = &self.reduction;
        let mut reduction_blocks = Vec::new();
        if red.trainable() {
            let mut gw = vec![0.0; red.weight.len()];
            for (r, g) in grad_key.iter().enumerate() {
                for (c, h) in trace.embedding.iter().enumerate() {
                    gw[r * red.input_dim + c] = g * h;
                }
            }
            reduction_blocks.push(("reduction.weight".to_string(), gw));
            reduction_blocks.push(("reduction.bias".to_string(), grad_key.to_vec()));
        }
        let mut grad = red.backward_input(grad_key);

        let mut dense_blocks = Vec::new();
        for (i, layer) in self.encoder.dense.iter().enumerate().rev() {
            let pre = &trace.dense_pre[i];
            let input = &trace.dense_in[i];
            let delta: Vec<f64> = grad
                .iter()
                .zip(pre)
                .map(|(g, z)| g * layer.activation.derivative(*z))
                .collect();
            let mut gw = vec![0.0; layer.weight.len()];
            for (r, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &mut gw[r * layer.input_dim..(r + 1) * layer.input_dim];
                for (w, x) in row.iter_mut().zip(input) {
                    *w = d * x;
                }
            }
            let mut next = vec![0.0; layer.input_dim];
            transpose_mul_add(&layer.weight, layer.output_dim, layer.input_dim, &delta, &mut next);
            dense_blocks.push((format!("dense{i}.bias"), delta));
            dense_blocks.push((format!("dense{i}.weight"), gw));
            grad = next;
        }

        let mut conv_blocks = Vec::new();
        for (i, layer) in self.encoder.conv.iter().enumerate().rev() {
            let input = if i == 0 { &trace.input } else { &trace.conv_out[i - 1] };
            let mut gw = vec![0.0; layer.weight.len()];
            let mut gb = vec![0.0; layer.bias.len()];
            grad = layer.backward(input, &trace.conv_out[i], &grad, &mut gw, &mut gb);
            conv_blocks.push((format!("conv{i}.bias"), gb));
            conv_blocks.push((format!("conv{i}.weight"), gw));
        }

        conv_blocks.reverse();
        dense_blocks.reverse();
        blocks.extend(conv_blocks);
        blocks.extend(dense_blocks);
        blocks.extend(reduction_blocks);
        Ok(Gradients { blocks })
    }

    /// Zero gradients in the current trainable layout.
    pub fn zero_gradients(&self) -> Gradients {
        let mut blocks = Vec::new();
        for (i, l) in self.encoder.conv.iter().enumerate() {
            blocks.push((format!("conv{i}.weight"), vec![0.0; l.weight.len()]));
            blocks.push((format!("conv{i}.bias"), vec![0.0; l.bias.len()]));
        }
        for (i, l) in self.encoder.dense.iter().enumerate() {
            blocks.push((format!("dense{i}.weight"), vec![0.0; l.weight.len()]));
            blocks.push((format!("dense{i}.bias"), vec![0.0; l.bias.len()]));
        }
        if self.reduction.trainable() {
            blocks.push(("reduction.weight".into(), vec![0.0; self.reduction.weight.len()]));
            blocks.push(("reduction.bias".into(), vec![0.0; self.reduction.bias.len()]));
        }
        Gradients { blocks }
    }

    /// Trainable parameters by name: `conv{i}.weight`, `conv{i}.bias`,
    /// `dense{i}.weight`, `dense{i}.bias`, then `reduction.weight` and
    /// `reduction.bias` in FC mode only.
    pub fn parameter_blocks_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        let mut out = Vec::new();
        for (i, l) in self.encoder.conv.iter_mut().enumerate() {
            out.push((format!("conv{i}.weight"), &mut l.weight));
            out.push((format!("conv{i}.bias"), &mut l.bias));
        }
        for (i, l) in self.encoder.dense.iter_mut().enumerate() {
            out.push((format!("dense{i}.weight"), &mut l.weight));
            out.push((format!("dense{i}.bias"), &mut l.bias));
        }
        if self.reduction.trainable() {
            out.push(("reduction.weight".into(), &mut self.reduction.weight));
            out.push(("reduction.bias".into(), &mut self.reduction.bias));
        }
        out
    }
}

/// Serialized network + optimizer state.
///
/// JSON layout: `{"version": 1, "network": {"encoder": {"input_shape", "conv",
/// "dense"}, "reduction": {"mode", "input_dim", "output_dim", "weight",
/// "bias", "rp_spec"}, "version"}, "optimizer": {"config", "step",
/// "moments"}}`. Floats round-trip exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkCheckpoint {
    pub version: u32,
    pub network: Network,
    pub optimizer: AdamState,
}

impl NetworkCheckpoint {
    pub fn new(network: &Network, optimizer: &AdamState) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            network: network.clone(),
            optimizer: optimizer.clone(),
        }
    }

    pub fn into_parts(self) -> Result<(Network, AdamState), EncoderError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(EncoderError::CheckpointVersion(self.version));
        }
        Ok((self.network, self.optimizer))
    }
}
