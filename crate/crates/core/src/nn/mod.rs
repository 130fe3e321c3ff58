//! Small differentiable network stack: conv2d, dense, ReLU, dropout, flatten,
//! softmax, trained with softmax cross-entropy.
//!
//! Activations are HWC tensors. `Conv2d` is a valid (unpadded) strided
//! cross-correlation; weights are laid out `[out][kr][kc][in]`, dense weights
//! `[out][in]`.

mod checkpoint;
mod train;

pub use checkpoint::{load_model, save_model, QNNM_MAGIC, QNNM_VERSION};
pub use train::{evaluate, train, EpochStats, OptimizerKind, TrainConfig, TrainReport};

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::data::DatasetName;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::invalid(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Reinterprets a rank-3 tensor as an image.
    pub fn into_image(self) -> Result<ImageTensor> {
        match self.shape[..] {
            [h, w, c] => ImageTensor::new(h, w, c, self.data),
            _ => Err(Error::invalid(format!("tensor of shape {:?} is not HWC", self.shape))),
        }
    }
}

impl From<&ImageTensor> for Tensor {
    fn from(img: &ImageTensor) -> Self {
        let (h, w, c) = img.dims();
        Tensor {
            shape: vec![h, w, c],
            data: img.data().to_vec(),
        }
    }
}

impl From<ImageTensor> for Tensor {
    fn from(img: ImageTensor) -> Self {
        let (h, w, c) = img.dims();
        Tensor {
            shape: vec![h, w, c],
            data: img.into_data(),
        }
    }
}

/// Layer description without parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Conv2d {
        kernel: usize,
        stride: usize,
        out_channels: usize,
    },
    Dense {
        units: usize,
    },
    Relu,
    Dropout {
        prob: f64,
    },
    Flatten,
    Softmax,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d {
        kernel: usize,
        stride: usize,
        in_channels: usize,
        out_channels: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Dense {
        inputs: usize,
        outputs: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Relu,
    Dropout {
        prob: f64,
    },
    Flatten,
    Softmax,
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        match *self {
            Layer::Conv2d {
                kernel,
                stride,
                out_channels,
                ..
            } => LayerSpec::Conv2d {
                kernel,
                stride,
                out_channels,
            },
            Layer::Dense { outputs, .. } => LayerSpec::Dense { units: outputs },
            Layer::Relu => LayerSpec::Relu,
            Layer::Dropout { prob } => LayerSpec::Dropout { prob },
            Layer::Flatten => LayerSpec::Flatten,
            Layer::Softmax => LayerSpec::Softmax,
        }
    }

    fn params(&self) -> Option<(&[f64], &[f64])> {
        match self {
            Layer::Conv2d { weights, bias, .. } | Layer::Dense { weights, bias, .. } => {
                Some((weights, bias))
            }
            _ => None,
        }
    }

    fn params_mut(&mut self) -> Option<(&mut Vec<f64>, &mut Vec<f64>)> {
        match self {
            Layer::Conv2d { weights, bias, .. } | Layer::Dense { weights, bias, .. } => {
                Some((weights, bias))
            }
            _ => None,
        }
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            Layer::Conv2d {
                kernel,
                stride,
                in_channels,
                out_channels,
                ..
            } => match *input {
                [h, w, c] if c == in_channels && h >= kernel && w >= kernel => Ok(vec![
                    (h - kernel) / stride + 1,
                    (w - kernel) / stride + 1,
                    out_channels,
                ]),
                _ => Err(Error::invalid(format!(
                    "conv2d(k={kernel}, in={in_channels}) cannot take input {input:?}"
                ))),
            },
            Layer::Dense { inputs, outputs, .. } => {
                if input.iter().product::<usize>() == inputs {
                    Ok(vec![outputs])
                } else {
                    Err(Error::invalid(format!("dense({inputs}) cannot take input {input:?}")))
                }
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Relu | Layer::Dropout { .. } | Layer::Softmax => Ok(input.to_vec()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Architecture {
    ClassicalCnn,
    ClassicalFc,
    QunnHead,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [
        Architecture::ClassicalCnn,
        Architecture::ClassicalFc,
        Architecture::QunnHead,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::ClassicalCnn => "classical_cnn",
            Architecture::ClassicalFc => "classical_fc",
            Architecture::QunnHead => "qunn",
        }
    }

    pub fn input_shape(self) -> [usize; 3] {
        match self {
            Architecture::ClassicalCnn | Architecture::ClassicalFc => [28, 28, 1],
            Architecture::QunnHead => [14, 14, 4],
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "classical_cnn" | "cnn" => Ok(Architecture::ClassicalCnn),
            "classical_fc" | "fc" => Ok(Architecture::ClassicalFc),
            "qunn" | "qunn_head" => Ok(Architecture::QunnHead),
            _ => Err(Error::invalid(format!("unknown architecture '{s}'"))),
        }
    }
}

/// Extra dense block inserted before the output layer for FMNIST.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadConfig {
    pub hidden_units: usize,
    pub dropout: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            hidden_units: 128,
            dropout: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    rng_seed: u64,
}

/// Per-layer `(weight grad, bias grad)`; `None` for parameter-free layers.
pub(crate) type ParamGrads = Vec<Option<(Vec<f64>, Vec<f64>)>>;

struct ForwardTrace {
    /// Input of each layer, plus the final output at the end.
    activations: Vec<Tensor>,
    /// Scaled keep-masks for dropout layers that were active.
    masks: Vec<Option<Vec<f64>>>,
}

impl Model {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    /// The last layer must be `Softmax`.
    pub fn from_specs(input_shape: &[usize], specs: &[LayerSpec], seed: u64) -> Result<Self> {
        if specs.last() != Some(&LayerSpec::Softmax) {
            return Err(Error::invalid("model must end with a softmax layer"));
        }
        if specs[..specs.len() - 1].contains(&LayerSpec::Softmax) {
            return Err(Error::invalid("softmax may only appear as the last layer"));
        }
        let mut rng = seed::rng(seed);
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let layer = match *spec {
                LayerSpec::Conv2d {
                    kernel,
                    stride,
                    out_channels,
                } => {
                    let in_channels = *shape.get(2).ok_or_else(|| {
                        Error::invalid(format!("conv2d needs an HWC input, got {shape:?}"))
                    })?;
                    if kernel == 0 || stride == 0 || out_channels == 0 {
                        return Err(Error::invalid("conv2d hyperparameters must be positive"));
                    }
                    let fan_in = kernel * kernel * in_channels;
                    let fan_out = kernel * kernel * out_channels;
                    Layer::Conv2d {
                        kernel,
                        stride,
                        in_channels,
                        out_channels,
                        weights: glorot(&mut rng, fan_in, fan_out, out_channels * fan_in),
                        bias: vec![0.0; out_channels],
                    }
                }
                LayerSpec::Dense { units } => {
                    let inputs: usize = shape.iter().product();
                    if units == 0 {
                        return Err(Error::invalid("dense layer needs at least one unit"));
                    }
                    Layer::Dense {
                        inputs,
                        outputs: units,
                        weights: glorot(&mut rng, inputs, units, inputs * units),
                        bias: vec![0.0; units],
                    }
                }
                LayerSpec::Dropout { prob } => {
                    if !(0.0..1.0).contains(&prob) {
                        return Err(Error::invalid(format!("dropout probability {prob} outside [0, 1)")));
                    }
                    Layer::Dropout { prob }
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Softmax => Layer::Softmax,
            };
            shape = layer.output_shape(&shape)?;
            layers.push(layer);
        }
        Ok(Model {
            input_shape: input_shape.to_vec(),
            layers,
            rng_seed: seed,
        })
    }

    /// Assembles a model from explicit layers, checking that shapes compose.
    pub fn from_layers(input_shape: Vec<usize>, layers: Vec<Layer>, rng_seed: u64) -> Result<Self> {
        if layers.last() != Some(&Layer::Softmax) {
            return Err(Error::invalid("model must end with a softmax layer"));
        }
        let mut shape = input_shape.clone();
        for layer in &layers {
            if let Some((w, b)) = layer.params() {
                let ok = match layer {
                    Layer::Conv2d {
                        kernel,
                        in_channels,
                        out_channels,
                        ..
                    } => w.len() == kernel * kernel * in_channels * out_channels && b.len() == *out_channels,
                    Layer::Dense { inputs, outputs, .. } => w.len() == inputs * outputs && b.len() == *outputs,
                    _ => true,
                };
                if !ok {
                    return Err(Error::invalid("layer parameter lengths do not match its shape"));
                }
            }
            shape = layer.output_shape(&shape)?;
        }
        Ok(Model {
            input_shape,
            layers,
            rng_seed,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn num_classes(&self) -> usize {
        let mut shape = self.input_shape.clone();
        for l in &self.layers {
            shape = l.output_shape(&shape).expect("validated at construction");
        }
        shape.iter().product()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// All trainable values, layer by layer, weights before biases.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(Error::invalid(format!(
                "model expects input {:?}, got {:?}",
                self.input_shape,
                input.shape()
            )));
        }
        if input.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("input contains non-finite values"));
        }
        Ok(())
    }

    fn forward_trace(&self, input: &Tensor, dropout_rng: Option<&mut seed::Rng>) -> Result<ForwardTrace> {
        self.check_input(input)?;
        let mut rng = dropout_rng;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut masks = Vec::with_capacity(self.layers.len());
        activations.push(input.clone());
        for layer in &self.layers {
            let x = activations.last().expect("non-empty");
            let mut mask = None;
            let y = match layer {
                Layer::Conv2d {
                    kernel,
                    stride,
                    in_channels,
                    out_channels,
                    weights,
                    bias,
                } => conv_forward(x, *kernel, *stride, *in_channels, *out_channels, weights, bias),
                Layer::Dense {
                    inputs,
                    outputs,
                    weights,
                    bias,
                } => {
                    let data = (0..*outputs)
                        .map(|o| {
                            let row = &weights[o * inputs..(o + 1) * inputs];
                            bias[o] + row.iter().zip(&x.data).map(|(w, v)| w * v).sum::<f64>()
                        })
                        .collect();
                    Tensor {
                        shape: vec![*outputs],
                        data,
                    }
                }
                Layer::Relu => Tensor {
                    shape: x.shape.clone(),
                    data: x.data.iter().map(|&v| v.max(0.0)).collect(),
                },
                Layer::Dropout { prob } => match rng.as_deref_mut() {
                    Some(r) if *prob > 0.0 => {
                        let keep = 1.0 - prob;
                        let m: Vec<f64> = (0..x.len())
                            .map(|_| if r.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                            .collect();
                        let data = x.data.iter().zip(&m).map(|(v, k)| v * k).collect();
                        mask = Some(m);
                        Tensor {
                            shape: x.shape.clone(),
                            data,
                        }
                    }
                    _ => x.clone(),
                },
                Layer::Flatten => Tensor {
                    shape: vec![x.len()],
                    data: x.data.clone(),
                },
                Layer::Softmax => Tensor {
                    shape: x.shape.clone(),
                    data: softmax(&x.data),
                },
            };
            masks.push(mask);
            activations.push(y);
        }
        Ok(ForwardTrace { activations, masks })
    }

    /// Class probabilities. Dropout is only applied when `training` is set,
    /// using a stream seeded from the model's seed.
    pub fn forward(&self, input: &Tensor, training: bool) -> Result<Tensor> {
        let mut rng = seed::rng(seed::derive(self.rng_seed, "forward-dropout"));
        let trace = self.forward_trace(input, training.then_some(&mut rng))?;
        Ok(trace.activations.into_iter().last().expect("non-empty"))
    }

    pub fn predict(&self, input: &Tensor) -> Result<usize> {
        Ok(argmax(self.forward(input, false)?.data()))
    }

    /// Backprop of softmax cross-entropy. Returns the loss, the input gradient
    /// and per-layer parameter gradients.
    pub(crate) fn loss_and_grads(
        &self,
        input: &Tensor,
        label: usize,
        dropout_rng: Option<&mut seed::Rng>,
    ) -> Result<(f64, Tensor, ParamGrads)> {
        let classes = self.num_classes();
        if label >= classes {
            return Err(Error::invalid(format!("label {label} outside 0..{classes}")));
        }
        let trace = self.forward_trace(input, dropout_rng)?;
        let probs = trace.activations.last().expect("non-empty");
        let loss = -probs.data[label].max(f64::MIN_POSITIVE).ln();

        // Softmax + cross-entropy: gradient at the logits is p - onehot.
        let mut grad = probs.data.clone();
        grad[label] -= 1.0;
        let mut param_grads: ParamGrads = vec![None; self.layers.len()];

        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &trace.activations[i];
            grad = match layer {
                Layer::Softmax => grad,
                Layer::Flatten => grad,
                Layer::Relu => grad
                    .iter()
                    .zip(&x.data)
                    .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                    .collect(),
                Layer::Dropout { .. } => match &trace.masks[i] {
                    Some(m) => grad.iter().zip(m).map(|(g, k)| g * k).collect(),
                    None => grad,
                },
                Layer::Dense {
                    inputs,
                    outputs,
                    weights,
                    ..
                } => {
                    let mut dw = vec![0.0; inputs * outputs];
                    let mut dx = vec![0.0; *inputs];
                    for o in 0..*outputs {
                        let g = grad[o];
                        if g == 0.0 {
                            continue;
                        }
                        let row = &weights[o * inputs..(o + 1) * inputs];
                        for j in 0..*inputs {
                            dw[o * inputs + j] = g * x.data[j];
                            dx[j] += row[j] * g;
                        }
                    }
                    param_grads[i] = Some((dw, grad.clone()));
                    dx
                }
                Layer::Conv2d {
                    kernel,
                    stride,
                    in_channels,
                    out_channels,
                    weights,
                    ..
                } => {
                    let (dx, dw, db) = conv_backward(x, &grad, *kernel, *stride, *in_channels, *out_channels, weights);
                    param_grads[i] = Some((dw, db));
                    dx
                }
            };
        }
        let input_grad = Tensor {
            shape: input.shape.clone(),
            data: grad,
        };
        Ok((loss, input_grad, param_grads))
    }

    /// Cross-entropy of one example, in eval mode.
    pub fn loss(&self, input: &Tensor, label: usize) -> Result<f64> {
        let probs = self.forward(input, false)?;
        if label >= probs.len() {
            return Err(Error::invalid(format!("label {label} outside 0..{}", probs.len())));
        }
        Ok(-probs.data[label].max(f64::MIN_POSITIVE).ln())
    }

    pub(crate) fn apply_update(&mut self, mut update: impl FnMut(usize, &mut Vec<f64>, &mut Vec<f64>)) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            if let Some((w, b)) = layer.params_mut() {
                update(i, w, b);
            }
        }
    }
}

fn glorot(rng: &mut seed::Rng, fan_in: usize, fan_out: usize, count: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..count).map(|_| rng.gen_range(-limit..=limit)).collect()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

fn conv_forward(
    x: &Tensor,
    kernel: usize,
    stride: usize,
    in_c: usize,
    out_c: usize,
    weights: &[f64],
    bias: &[f64],
) -> Tensor {
    let (h, w) = (x.shape[0], x.shape[1]);
    let (oh, ow) = ((h - kernel) / stride + 1, (w - kernel) / stride + 1);
    let mut out = vec![0.0; oh * ow * out_c];
    for r in 0..oh {
        for c in 0..ow {
            for o in 0..out_c {
                let mut acc = bias[o];
                for kr in 0..kernel {
                    for kc in 0..kernel {
                        let xi = ((r * stride + kr) * w + (c * stride + kc)) * in_c;
                        let wi = ((o * kernel + kr) * kernel + kc) * in_c;
                        for ci in 0..in_c {
                            acc += weights[wi + ci] * x.data[xi + ci];
                        }
                    }
                }
                out[(r * ow + c) * out_c + o] = acc;
            }
        }
    }
    Tensor {
        shape: vec![oh, ow, out_c],
        data: out,
    }
}

fn conv_backward(
    x: &Tensor,
    grad: &[f64],
    kernel: usize,
    stride: usize,
    in_c: usize,
    out_c: usize,
    weights: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (h, w) = (x.shape[0], x.shape[1]);
    let (oh, ow) = ((h - kernel) / stride + 1, (w - kernel) / stride + 1);
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; weights.len()];
    let mut db = vec![0.0; out_c];
    for r in 0..oh {
        for c in 0..ow {
            for o in 0..out_c {
                let g = grad[(r * ow + c) * out_c + o];
                if g == 0.0 {
                    continue;
                }
                db[o] += g;
                for kr in 0..kernel {
                    for kc in 0..kernel {
                        let xi = ((r * stride + kr) * w + (c * stride + kc)) * in_c;
                        let wi = ((o * kernel + kr) * kernel + kc) * in_c;
                        for ci in 0..in_c {
                            dw[wi + ci] += g * x.data[xi + ci];
                            dx[xi + ci] += g * weights[wi + ci];
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

/// Layer stack for one of the three compared models.
///
/// * `ClassicalCnn`: Conv2d(2×2, stride 2, 4 ch) → ReLU → Flatten → [head] → Dense(10) → Softmax
/// * `QunnHead`: the same minus the convolution, fed 14×14×4 quanvolved maps
/// * `ClassicalFc`: Flatten → [head] → Dense(10) → Softmax on raw pixels
///
/// `[head]` is `Dense(hidden) → ReLU → Dropout` and is only inserted for FMNIST.
pub fn layer_specs(arch: Architecture, dataset: DatasetName, head: &HeadConfig) -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    if arch == Architecture::ClassicalCnn {
        specs.push(LayerSpec::Conv2d {
            kernel: 2,
            stride: 2,
            out_channels: 4,
        });
        specs.push(LayerSpec::Relu);
    }
    specs.push(LayerSpec::Flatten);
    if dataset == DatasetName::Fmnist {
        specs.push(LayerSpec::Dense {
            units: head.hidden_units,
        });
        specs.push(LayerSpec::Relu);
        specs.push(LayerSpec::Dropout { prob: head.dropout });
    }
    specs.push(LayerSpec::Dense { units: 10 });
    specs.push(LayerSpec::Softmax);
    specs
}

pub fn build_model_with(
    arch: Architecture,
    dataset: DatasetName,
    head: &HeadConfig,
    seed: u64,
) -> Result<Model> {
    Model::from_specs(&arch.input_shape(), &layer_specs(arch, dataset, head), seed)
}

pub fn build_model(arch: Architecture, dataset: DatasetName, seed: u64) -> Result<Model> {
    build_model_with(arch, dataset, &HeadConfig::default(), seed)
}

/// `∂(cross-entropy)/∂input` with dropout disabled.
pub fn input_gradient(model: &Model, input: &Tensor, label: usize) -> Result<Tensor> {
    Ok(model.loss_and_grads(input, label, None)?.1)
}
