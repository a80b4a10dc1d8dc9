//! Small feedforward classifiers (optional convolutional front-end, dense
//! tail, ReLU between layers) with hand-written backpropagation.
//!
//! Images are stored height × width × channels, row-major, and every layer
//! consumes and produces flat `f64` buffers in that layout.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{distill_scale, log_softmax_into, softmax_into};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl InputShape {
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One convolution stage: `filters` square kernels, valid padding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    #[serde(default = "one")]
    pub stride: usize,
}

fn one() -> usize {
    1
}

/// Layer widths, excluding the final K-logit layer which is always appended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    #[serde(default)]
    pub conv: Vec<ConvSpec>,
    #[serde(default)]
    pub hidden: Vec<usize>,
}

impl Architecture {
    /// conv(8) → conv(16, stride 2) → dense(64) → dense(K).
    pub fn teacher_default() -> Self {
        Self {
            conv: vec![
                ConvSpec { filters: 8, kernel: 3, stride: 1 },
                ConvSpec { filters: 16, kernel: 3, stride: 2 },
            ],
            hidden: vec![64],
        }
    }

    /// dense(32) → dense(K).
    pub fn student_default() -> Self {
        Self { conv: Vec::new(), hidden: vec![32] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense { inputs: usize, outputs: usize },
    Conv { in_height: usize, in_width: usize, in_channels: usize, filters: usize, kernel: usize, stride: usize },
}

impl LayerKind {
    pub fn input_len(&self) -> usize {
        match *self {
            LayerKind::Dense { inputs, .. } => inputs,
            LayerKind::Conv { in_height, in_width, in_channels, .. } => in_height * in_width * in_channels,
        }
    }

    pub fn output_len(&self) -> usize {
        match *self {
            LayerKind::Dense { outputs, .. } => outputs,
            LayerKind::Conv { filters, .. } => {
                let (h, w) = self.conv_output_hw();
                h * w * filters
            }
        }
    }

    fn conv_output_hw(&self) -> (usize, usize) {
        match *self {
            LayerKind::Conv { in_height, in_width, kernel, stride, .. } => {
                ((in_height - kernel) / stride + 1, (in_width - kernel) / stride + 1)
            }
            LayerKind::Dense { .. } => (1, 1),
        }
    }

    pub fn weight_len(&self) -> usize {
        match *self {
            LayerKind::Dense { inputs, outputs } => inputs * outputs,
            LayerKind::Conv { in_channels, filters, kernel, .. } => filters * kernel * kernel * in_channels,
        }
    }

    pub fn bias_len(&self) -> usize {
        match *self {
            LayerKind::Dense { outputs, .. } => outputs,
            LayerKind::Conv { filters, .. } => filters,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerKind::Dense { inputs, .. } => inputs,
            LayerKind::Conv { in_channels, kernel, .. } => kernel * kernel * in_channels,
        }
    }
}

/// Weights and biases of one layer. Dense weights are `[out][in]`; conv
/// weights are `[filter][ky][kx][in_channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub input: InputShape,
    pub layers: Vec<Layer>,
}

/// Gradient buffers shaped like a [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Which objective `backward` differentiates.
#[derive(Debug, Clone, Copy)]
pub enum LossSpec<'a> {
    Hard,
    /// `teacher_probs[n]` is the teacher's softmax at `temperature` for example n.
    Distill { teacher_probs: &'a [Vec<f64>], temperature: f64, alpha: f64, t_squared_scaling: bool },
}

/// Builds the layer table for `arch` on `input`, ending in `num_classes` logits.
pub fn layer_kinds(arch: &Architecture, input: InputShape, num_classes: usize) -> Result<Vec<LayerKind>> {
    if num_classes < 2 {
        return Err(Error::Shape(format!("need at least 2 classes, got {num_classes}")));
    }
    if input.is_empty() {
        return Err(Error::Shape("empty input shape".into()));
    }
    let mut kinds = Vec::new();
    let (mut h, mut w, mut c) = (input.height, input.width, input.channels);
    for (i, spec) in arch.conv.iter().enumerate() {
        if spec.filters == 0 || spec.kernel == 0 || spec.stride == 0 {
            return Err(Error::Shape(format!("conv layer {i} has a zero dimension")));
        }
        if spec.kernel > h || spec.kernel > w {
            return Err(Error::Shape(format!("conv layer {i}: kernel {} exceeds {h}x{w} input", spec.kernel)));
        }
        let kind = LayerKind::Conv {
            in_height: h,
            in_width: w,
            in_channels: c,
            filters: spec.filters,
            kernel: spec.kernel,
            stride: spec.stride,
        };
        let (oh, ow) = kind.conv_output_hw();
        kinds.push(kind);
        h = oh;
        w = ow;
        c = spec.filters;
    }
    let mut width = h * w * c;
    for (i, &hidden) in arch.hidden.iter().enumerate() {
        if hidden == 0 {
            return Err(Error::Shape(format!("hidden layer {i} has zero width")));
        }
        kinds.push(LayerKind::Dense { inputs: width, outputs: hidden });
        width = hidden;
    }
    kinds.push(LayerKind::Dense { inputs: width, outputs: num_classes });
    Ok(kinds)
}

impl ModelParams {
    /// He-style uniform initialization, `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`,
    /// with zero biases.
    pub fn init<R: Rng>(arch: &Architecture, input: InputShape, num_classes: usize, rng: &mut R) -> Result<Self> {
        let layers = layer_kinds(arch, input, num_classes)?
            .into_iter()
            .map(|kind| {
                let bound = (6.0 / kind.fan_in() as f64).sqrt();
                let weights = (0..kind.weight_len()).map(|_| rng.gen_range(-bound..bound)).collect();
                Layer { kind, weights, bias: vec![0.0; kind.bias_len()] }
            })
            .collect();
        Ok(Self { input, layers })
    }

    /// All-zero parameters; mostly useful in tests.
    pub fn zeros(arch: &Architecture, input: InputShape, num_classes: usize) -> Result<Self> {
        let layers = layer_kinds(arch, input, num_classes)?
            .into_iter()
            .map(|kind| Layer { kind, weights: vec![0.0; kind.weight_len()], bias: vec![0.0; kind.bias_len()] })
            .collect();
        Ok(Self { input, layers })
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.kind.output_len())
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters in flat order: layer by layer, weights then bias.
    pub fn flat(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn flat_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.flat().all(|v| v.is_finite())
    }

    /// Checks that layer shapes chain and buffers have the declared sizes.
    pub fn validate(&self) -> Result<()> {
        let mut expected_in = self.input.len();
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.kind.input_len() != expected_in {
                return Err(Error::Shape(format!(
                    "layer {i} expects {} inputs, previous layer emits {expected_in}",
                    layer.kind.input_len()
                )));
            }
            if layer.weights.len() != layer.kind.weight_len() || layer.bias.len() != layer.kind.bias_len() {
                return Err(Error::Shape(format!("layer {i} parameter buffers have the wrong size")));
            }
            expected_in = layer.kind.output_len();
        }
        if self.layers.is_empty() {
            return Err(Error::Shape("model has no layers".into()));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input.len() {
            return Err(Error::Shape(format!("input has {} values, model expects {}", x.len(), self.input.len())));
        }
        Ok(())
    }

    /// Logits for a single input.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut scratch = Scratch::new(self);
        self.forward_into(x, &mut scratch);
        Ok(scratch.acts.last().cloned().unwrap_or_default())
    }

    /// Logits for every input in the batch, one row per input.
    pub fn forward(&self, batch: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let mut scratch = Scratch::new(self);
        batch
            .iter()
            .map(|x| {
                self.check_input(x)?;
                self.forward_into(x, &mut scratch);
                Ok(scratch.acts.last().cloned().unwrap_or_default())
            })
            .collect()
    }

    /// Predicted class: argmax of the logits, ties to the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(super::loss::argmax(&self.logits(x)?))
    }

    pub(crate) fn forward_into(&self, x: &[f64], scratch: &mut Scratch) {
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (before, after) = scratch.acts.split_at_mut(i);
            let input: &[f64] = if i == 0 { x } else { &before[i - 1] };
            let out = &mut after[0];
            match layer.kind {
                LayerKind::Dense { inputs, outputs } => {
                    for j in 0..outputs {
                        let row = &layer.weights[j * inputs..(j + 1) * inputs];
                        out[j] = layer.bias[j] + dot(row, input);
                    }
                }
                kind @ LayerKind::Conv { in_width, in_channels, filters, kernel, stride, .. } => {
                    let (oh, ow) = kind.conv_output_hw();
                    let patch_len = kernel * kernel * in_channels;
                    let patch = &mut scratch.patch[..patch_len];
                    for oy in 0..oh {
                        for ox in 0..ow {
                            gather_patch(input, in_width, in_channels, kernel, oy * stride, ox * stride, patch);
                            let base = (oy * ow + ox) * filters;
                            for f in 0..filters {
                                let w = &layer.weights[f * patch_len..(f + 1) * patch_len];
                                out[base + f] = layer.bias[f] + dot(w, patch);
                            }
                        }
                    }
                }
            }
            if i != last {
                for v in out.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    /// Mean loss over the batch and its gradient with respect to every parameter.
    pub fn backward(&self, inputs: &[&[f64]], labels: &[usize], loss: &LossSpec<'_>) -> Result<(f64, Gradients)> {
        if inputs.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        if inputs.len() != labels.len() {
            return Err(Error::Shape(format!("{} inputs but {} labels", inputs.len(), labels.len())));
        }
        let k = self.num_classes();
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::Shape(format!("label {bad} out of range for {k} classes")));
        }
        if let LossSpec::Distill { teacher_probs, temperature, alpha, .. } = *loss {
            if teacher_probs.len() != inputs.len() || teacher_probs.iter().any(|q| q.len() != k) {
                return Err(Error::Shape("teacher targets do not match the batch".into()));
            }
            if !(temperature > 0.0) {
                return Err(Error::InvalidInput(format!("temperature must be positive, got {temperature}")));
            }
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::InvalidInput(format!("alpha must lie in [0, 1], got {alpha}")));
            }
        }
        for x in inputs {
            self.check_input(x)?;
        }

        let mut grads = Gradients::zeros_like(self);
        let mut scratch = Scratch::new(self);
        let mut dlogits = vec![0.0; k];
        let mut probs = vec![0.0; k];
        let mut log_probs = vec![0.0; k];
        let mut total = 0.0;

        for (n, (x, &y)) in inputs.iter().zip(labels).enumerate() {
            self.forward_into(x, &mut scratch);
            let logits = scratch.acts.last().expect("model has layers");

            // Hard term: CE(softmax(z), y), d/dz = softmax(z) - onehot(y).
            log_softmax_into(logits, 1.0, &mut log_probs);
            let hard_loss = -log_probs[y];
            softmax_into(logits, 1.0, &mut probs);
            for (d, &p) in dlogits.iter_mut().zip(&probs) {
                *d = p;
            }
            dlogits[y] -= 1.0;

            match *loss {
                LossSpec::Hard => total += hard_loss,
                LossSpec::Distill { teacher_probs, temperature, alpha, t_squared_scaling } => {
                    // Soft term: CE(softmax(z / T), q), d/dz = (softmax(z / T) - q) / T.
                    let q = &teacher_probs[n];
                    log_softmax_into(logits, temperature, &mut log_probs);
                    let soft_loss = -q.iter().zip(&log_probs).map(|(qi, lp)| qi * lp).sum::<f64>();
                    softmax_into(logits, temperature, &mut probs);
                    let w_soft = alpha * distill_scale(temperature, t_squared_scaling);
                    let w_hard = 1.0 - alpha;
                    for ((d, &p), &qi) in dlogits.iter_mut().zip(&probs).zip(q) {
                        *d = w_soft * ((p - qi) / temperature) + w_hard * *d;
                    }
                    total += w_soft * soft_loss + w_hard * hard_loss;
                }
            }
            self.backprop_example(x, &dlogits, &mut scratch, &mut grads);
        }

        let scale = 1.0 / inputs.len() as f64;
        for g in grads.flat_mut() {
            *g *= scale;
        }
        Ok((total * scale, grads))
    }

    /// Accumulates the gradient for one example whose forward pass is in `scratch`.
    fn backprop_example(&self, x: &[f64], dlogits: &[f64], scratch: &mut Scratch, grads: &mut Gradients) {
        let last = self.layers.len() - 1;
        scratch.deltas[last].copy_from_slice(dlogits);
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let grad = &mut grads.layers[i];
            let input: &[f64] = if i == 0 { x } else { &scratch.acts[i - 1] };
            let (lower, upper) = scratch.deltas.split_at_mut(i);
            let delta = &upper[0];
            let need_input_delta = i > 0;
            match layer.kind {
                LayerKind::Dense { inputs, outputs } => {
                    for j in 0..outputs {
                        let d = delta[j];
                        grad.bias[j] += d;
                        if d == 0.0 {
                            continue;
                        }
                        let gw = &mut grad.weights[j * inputs..(j + 1) * inputs];
                        for (g, &xi) in gw.iter_mut().zip(input) {
                            *g += d * xi;
                        }
                    }
                    if need_input_delta {
                        let din = &mut lower[i - 1];
                        din.iter_mut().for_each(|v| *v = 0.0);
                        for j in 0..outputs {
                            let d = delta[j];
                            if d == 0.0 {
                                continue;
                            }
                            let row = &layer.weights[j * inputs..(j + 1) * inputs];
                            for (v, &w) in din.iter_mut().zip(row) {
                                *v += d * w;
                            }
                        }
                    }
                }
                kind @ LayerKind::Conv { in_width, in_channels, filters, kernel, stride, .. } => {
                    let (oh, ow) = kind.conv_output_hw();
                    let patch_len = kernel * kernel * in_channels;
                    let (patch, dpatch) = scratch.patch.split_at_mut(patch_len);
                    let dpatch = &mut dpatch[..patch_len];
                    if need_input_delta {
                        lower[i - 1].iter_mut().for_each(|v| *v = 0.0);
                    }
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let base = (oy * ow + ox) * filters;
                            let d_out = &delta[base..base + filters];
                            if d_out.iter().all(|&d| d == 0.0) {
                                continue;
                            }
                            gather_patch(input, in_width, in_channels, kernel, oy * stride, ox * stride, patch);
                            dpatch.iter_mut().for_each(|v| *v = 0.0);
                            for (f, &d) in d_out.iter().enumerate() {
                                grad.bias[f] += d;
                                if d == 0.0 {
                                    continue;
                                }
                                let gw = &mut grad.weights[f * patch_len..(f + 1) * patch_len];
                                for (g, &p) in gw.iter_mut().zip(patch.iter()) {
                                    *g += d * p;
                                }
                                if need_input_delta {
                                    let w = &layer.weights[f * patch_len..(f + 1) * patch_len];
                                    for (dp, &wv) in dpatch.iter_mut().zip(w) {
                                        *dp += d * wv;
                                    }
                                }
                            }
                            if need_input_delta {
                                scatter_patch(&mut lower[i - 1], in_width, in_channels, kernel, oy * stride, ox * stride, dpatch);
                            }
                        }
                    }
                }
            }
            if need_input_delta {
                // ReLU between layers: pass gradient only where the activation is positive.
                for (d, &a) in lower[i - 1].iter_mut().zip(&scratch.acts[i - 1]) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
        }
    }
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrad { weights: vec![0.0; l.weights.len()], bias: vec![0.0; l.bias.len()] })
                .collect(),
        }
    }

    pub fn flat(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn flat_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }
}

/// Per-layer activation and delta buffers reused across examples.
pub(crate) struct Scratch {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
    patch: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(params: &ModelParams) -> Self {
        let acts: Vec<Vec<f64>> = params.layers.iter().map(|l| vec![0.0; l.kind.output_len()]).collect();
        let max_patch = params
            .layers
            .iter()
            .map(|l| match l.kind {
                LayerKind::Conv { in_channels, kernel, .. } => kernel * kernel * in_channels,
                LayerKind::Dense { .. } => 0,
            })
            .max()
            .unwrap_or(0);
        Self { deltas: acts.clone(), acts, patch: vec![0.0; 2 * max_patch] }
    }

    pub(crate) fn logits(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gather_patch(input: &[f64], width: usize, channels: usize, kernel: usize, y0: usize, x0: usize, patch: &mut [f64]) {
    let row_len = kernel * channels;
    for ky in 0..kernel {
        let start = ((y0 + ky) * width + x0) * channels;
        patch[ky * row_len..(ky + 1) * row_len].copy_from_slice(&input[start..start + row_len]);
    }
}

fn scatter_patch(target: &mut [f64], width: usize, channels: usize, kernel: usize, y0: usize, x0: usize, patch: &[f64]) {
    let row_len = kernel * channels;
    for ky in 0..kernel {
        let start = ((y0 + ky) * width + x0) * channels;
        for (t, &p) in target[start..start + row_len].iter_mut().zip(&patch[ky * row_len..(ky + 1) * row_len]) {
            *t += p;
        }
    }
}
