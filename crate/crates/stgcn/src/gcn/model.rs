//! Parameter containers, initialization, and training configuration.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::partition::Strategy;

/// Dense row-major matrix of f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }
}

/// One spatial-temporal layer: K per-label kernel subsets W_k, a bias, an
/// optional V×V edge-importance mask, and a temporal convolution kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub in_channels: usize,
    pub out_channels: usize,
    /// K matrices of shape out_channels × in_channels.
    pub weights: Vec<Matrix>,
    /// out_channels values, added in the spatial convolution.
    pub bias: Vec<f64>,
    /// Flat V×V edge-importance mask; present only when masking is enabled.
    /// Initialized to all-ones, clamped nonnegative after updates.
    pub mask: Option<Vec<f64>>,
    /// Flat out_channels × out_channels × kernel_size tensor, indexed
    /// [out][in][tap].
    pub temporal_kernel: Vec<f64>,
    /// 1 or 2; stride 2 halves (rounding up) the frame count.
    pub temporal_stride: usize,
}

impl LayerParams {
    pub fn temporal_at(&self, kt: usize, co: usize, ci: usize, tap: usize) -> f64 {
        self.temporal_kernel[(co * self.out_channels + ci) * kt + tap]
    }
}

/// Model-wide shape and provenance data carried alongside the parameters so
/// checkpoints are self-describing.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub strategy: Strategy,
    pub layout_name: String,
    /// K: partition count of the strategy on the layout.
    pub num_partitions: usize,
    /// V: joints per frame.
    pub num_joints: usize,
    /// Input feature channels (coordinates + confidence).
    pub in_channels: usize,
    pub num_classes: usize,
    /// K_t: temporal kernel taps; must be odd so padding is symmetric.
    pub temporal_kernel_size: usize,
    pub mask_enabled: bool,
}

/// The full parameter set: the layer stack plus the affine classifier that
/// consumes the pooled feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub meta: ModelMeta,
    pub layers: Vec<LayerParams>,
    /// num_classes × last-layer-channels.
    pub classifier_weight: Matrix,
    pub classifier_bias: Vec<f64>,
}

/// What a parameter tensor is, for update rules that treat masks specially.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Mask,
    Temporal,
}

/// One parameter tensor as seen by [`ModelParams::visit_params`].
#[derive(Debug)]
pub struct ParamView<'a> {
    pub name: String,
    pub values: &'a [f64],
    pub kind: ParamKind,
    pub shape: Vec<usize>,
}

/// Sample from the He-uniform range for `fan_in`, rounded through f32 so the
/// parameter is exactly representable in checkpoints.
fn he_uniform(rng: &mut ChaCha8Rng, fan_in: usize) -> f64 {
    let bound = (6.0 / fan_in as f64).sqrt() as f32;
    rng.gen_range(-bound..=bound) as f64
}

/// Per-layer `(out_channels, temporal_stride)` plan of the reference
/// architecture used by [`ModelParams::standard`].
pub const STANDARD_PLAN: [(usize, usize); 9] = [
    (64, 1),
    (64, 1),
    (64, 1),
    (128, 2),
    (128, 1),
    (128, 1),
    (256, 2),
    (256, 1),
    (256, 1),
];

impl ModelParams {
    /// Build a model with the given per-layer plan of
    /// `(out_channels, temporal_stride)` pairs, He-uniform initialized from
    /// a seeded generator. Biases start at zero and masks at all-ones.
    pub fn new(meta: ModelMeta, plan: &[(usize, usize)], seed: u64) -> Result<Self> {
        if meta.num_classes == 0 {
            return Err(Error::InvalidValue("model needs at least one class".into()));
        }
        if meta.temporal_kernel_size % 2 == 0 || meta.temporal_kernel_size == 0 {
            return Err(Error::InvalidValue(
                "temporal kernel size must be odd so padding is symmetric".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = meta.num_partitions;
        let v = meta.num_joints;
        let kt = meta.temporal_kernel_size;

        let mut layers = Vec::with_capacity(plan.len());
        let mut c_in = meta.in_channels;
        for &(c_out, stride) in plan {
            if c_out == 0 {
                return Err(Error::InvalidValue("layer with zero channels".into()));
            }
            if stride != 1 && stride != 2 {
                return Err(Error::InvalidValue(format!(
                    "temporal stride must be 1 or 2, got {stride}"
                )));
            }
            let weights = (0..k)
                .map(|_| {
                    let mut w = Matrix::zeros(c_out, c_in);
                    for cell in &mut w.data {
                        *cell = he_uniform(&mut rng, c_in * k);
                    }
                    w
                })
                .collect();
            let mut temporal_kernel = vec![0.0; c_out * c_out * kt];
            for cell in &mut temporal_kernel {
                *cell = he_uniform(&mut rng, c_out * kt);
            }
            layers.push(LayerParams {
                in_channels: c_in,
                out_channels: c_out,
                weights,
                bias: vec![0.0; c_out],
                mask: meta.mask_enabled.then(|| vec![1.0; v * v]),
                temporal_kernel,
                temporal_stride: stride,
            });
            c_in = c_out;
        }

        let mut classifier_weight = Matrix::zeros(meta.num_classes, c_in);
        for cell in &mut classifier_weight.data {
            *cell = he_uniform(&mut rng, c_in);
        }
        let classifier_bias = vec![0.0; meta.num_classes];

        Ok(ModelParams {
            meta,
            layers,
            classifier_weight,
            classifier_bias,
        })
    }

    /// The reference architecture: a stack of 9 layers with output channels
    /// 64,64,64,128,128,128,256,256,256 and temporal stride 2 where the
    /// channel count doubles (layers 4 and 7, counting from 1).
    pub fn standard(meta: ModelMeta, seed: u64) -> Result<Self> {
        ModelParams::new(meta, &STANDARD_PLAN, seed)
    }

    /// Channel count entering the classifier.
    pub fn feature_channels(&self) -> usize {
        self.layers
            .last()
            .map(|l| l.out_channels)
            .unwrap_or(self.meta.in_channels)
    }

    /// Visit every parameter tensor in declared order (per layer: the K
    /// kernel subsets, bias, mask when present, temporal kernel; then the
    /// classifier weight and bias). Checkpoints, flattening, and SGD all
    /// rely on this single ordering.
    pub fn visit_params(&self, mut f: impl FnMut(ParamView<'_>)) {
        let v = self.meta.num_joints;
        let kt = self.meta.temporal_kernel_size;
        for (i, layer) in self.layers.iter().enumerate() {
            for (k, w) in layer.weights.iter().enumerate() {
                f(ParamView {
                    name: format!("layer{i}.weight{k}"),
                    values: &w.data,
                    kind: ParamKind::Weight,
                    shape: vec![w.rows, w.cols],
                });
            }
            f(ParamView {
                name: format!("layer{i}.bias"),
                values: &layer.bias,
                kind: ParamKind::Bias,
                shape: vec![layer.out_channels],
            });
            if let Some(mask) = &layer.mask {
                f(ParamView {
                    name: format!("layer{i}.mask"),
                    values: mask,
                    kind: ParamKind::Mask,
                    shape: vec![v, v],
                });
            }
            f(ParamView {
                name: format!("layer{i}.temporal"),
                values: &layer.temporal_kernel,
                kind: ParamKind::Temporal,
                shape: vec![layer.out_channels, layer.out_channels, kt],
            });
        }
        f(ParamView {
            name: "classifier.weight".into(),
            values: &self.classifier_weight.data,
            kind: ParamKind::Weight,
            shape: vec![self.classifier_weight.rows, self.classifier_weight.cols],
        });
        f(ParamView {
            name: "classifier.bias".into(),
            values: &self.classifier_bias,
            kind: ParamKind::Bias,
            shape: vec![self.classifier_bias.len()],
        });
    }

    /// Mutable counterpart of [`ModelParams::visit_params`], same order.
    pub fn visit_params_mut(&mut self, mut f: impl FnMut(&mut [f64], ParamKind)) {
        for layer in &mut self.layers {
            for w in &mut layer.weights {
                f(&mut w.data, ParamKind::Weight);
            }
            f(&mut layer.bias, ParamKind::Bias);
            if let Some(mask) = &mut layer.mask {
                f(mask, ParamKind::Mask);
            }
            f(&mut layer.temporal_kernel, ParamKind::Temporal);
        }
        f(&mut self.classifier_weight.data, ParamKind::Weight);
        f(&mut self.classifier_bias, ParamKind::Bias);
    }

    /// All parameters as one flat vector, in the declared tensor order.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        self.visit_params(|view| flat.extend_from_slice(view.values));
        flat
    }

    /// Overwrite all parameters from a flat vector in declared order.
    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        let mut offset = 0;
        let mut overflow = false;
        self.visit_params_mut(|values, _| {
            if offset + values.len() > flat.len() {
                overflow = true;
                return;
            }
            values.copy_from_slice(&flat[offset..offset + values.len()]);
            offset += values.len();
        });
        if overflow || offset != flat.len() {
            return Err(Error::ShapeMismatch(format!(
                "flat parameter vector has {} values, model expects {}",
                flat.len(),
                self.flatten_params().len()
            )));
        }
        Ok(())
    }
}

/// Gradients with the same shapes as one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<Matrix>,
    pub bias: Vec<f64>,
    pub mask: Option<Vec<f64>>,
    pub temporal_kernel: Vec<f64>,
}

/// Gradients mirroring every parameter tensor of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub layers: Vec<LayerGrads>,
    pub classifier_weight: Matrix,
    pub classifier_bias: Vec<f64>,
}

impl ModelGrads {
    pub fn zeros_like(model: &ModelParams) -> Self {
        let layers = model
            .layers
            .iter()
            .map(|layer| LayerGrads {
                weights: layer
                    .weights
                    .iter()
                    .map(|w| Matrix::zeros(w.rows, w.cols))
                    .collect(),
                bias: vec![0.0; layer.bias.len()],
                mask: layer.mask.as_ref().map(|m| vec![0.0; m.len()]),
                temporal_kernel: vec![0.0; layer.temporal_kernel.len()],
            })
            .collect();
        ModelGrads {
            layers,
            classifier_weight: Matrix::zeros(
                model.classifier_weight.rows,
                model.classifier_weight.cols,
            ),
            classifier_bias: vec![0.0; model.classifier_bias.len()],
        }
    }

    /// Flatten in the same declared order as [`ModelParams::flatten_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for layer in &self.layers {
            for w in &layer.weights {
                flat.extend_from_slice(&w.data);
            }
            flat.extend_from_slice(&layer.bias);
            if let Some(mask) = &layer.mask {
                flat.extend_from_slice(mask);
            }
            flat.extend_from_slice(&layer.temporal_kernel);
        }
        flat.extend_from_slice(&self.classifier_weight.data);
        flat.extend_from_slice(&self.classifier_bias);
        flat
    }
}

/// Hyperparameters of the SGD training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub decay_factor: f64,
    /// Epoch indices at which the learning rate decays (lr is multiplied by
    /// `decay_factor` once per passed entry).
    pub decay_epochs: Vec<usize>,
    pub weight_decay: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Every sequence is padded (repeating its last frame) or truncated to
    /// this many frames before training.
    pub fixed_frames: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            initial_lr: 0.1,
            decay_factor: 0.1,
            decay_epochs: vec![10, 50],
            weight_decay: 0.0001,
            dropout: 0.5,
            epochs: 80,
            batch_size: 8,
            seed: 7,
            fixed_frames: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0) {
            return Err(Error::InvalidValue("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidValue(
                "dropout must lie in [0, 1)".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidValue("batch size must be at least 1".into()));
        }
        if self.fixed_frames == 0 {
            return Err(Error::InvalidValue("fixed frame count must be at least 1".into()));
        }
        Ok(())
    }
}
