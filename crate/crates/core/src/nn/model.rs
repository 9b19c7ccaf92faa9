//! Layer definitions, model construction, and hand-written
//! forward/backward passes.
//!
//! Parameters live in a flat `f64` layout: layers in declaration order,
//! each parameterized layer contributing its weight data (row-major)
//! followed by its bias. Optimizers, finite-difference checks, and the
//! checkpoint format all index into that layout.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use super::tensor::Tensor;
use crate::fmath;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub enum NnError {
    ShapeMismatch(String),
    InvalidSpec(String),
}

impl fmt::Display for NnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NnError::ShapeMismatch(m) => write!(f, "shape mismatch: {m}"),
            NnError::InvalidSpec(m) => write!(f, "invalid model spec: {m}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for NnError {}

/// Zero-padding mode for convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Pad {
    /// Output spatial size = ceil(input / stride); zero padding split
    /// evenly, extra pixel on the bottom/right.
    Same,
    Valid,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum LayerSpec {
    Conv2d { out_ch: usize, kernel: usize, stride: usize, pad: Pad },
    Relu,
    MaxPool { size: usize, stride: usize },
    GlobalAvgPool,
    Dense { out_dim: usize },
}

/// Architecture description: layer list, input shape (`[c, h, w]` for
/// images, `[dim]` for feature vectors), class count, and the parameter
/// initialization seed. The softmax cross-entropy head is implicit and
/// always last; the final layer must be `Dense` with `num_classes`
/// outputs.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
    pub seed: u64,
}

/// Hidden width of the MLP head over extracted features.
pub const MLP_HIDDEN: usize = 128;

impl ModelSpec {
    /// The reference CNN backbone:
    /// conv2d(8,3,1,same) -> relu -> maxpool(2,2) -> conv2d(16,3,1,same)
    /// -> relu -> maxpool(2,2) -> global_avg_pool -> dense(K).
    pub fn small_cnn(input_shape: [usize; 3], num_classes: usize, seed: u64) -> Self {
        ModelSpec {
            input_shape: input_shape.to_vec(),
            layers: vec![
                LayerSpec::Conv2d { out_ch: 8, kernel: 3, stride: 1, pad: Pad::Same },
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: 2, stride: 2 },
                LayerSpec::Conv2d { out_ch: 16, kernel: 3, stride: 1, pad: Pad::Same },
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: 2, stride: 2 },
                LayerSpec::GlobalAvgPool,
                LayerSpec::Dense { out_dim: num_classes },
            ],
            num_classes,
            seed,
        }
    }

    /// Linear softmax head over a feature vector.
    pub fn linear(in_dim: usize, num_classes: usize, seed: u64) -> Self {
        ModelSpec {
            input_shape: vec![in_dim],
            layers: vec![LayerSpec::Dense { out_dim: num_classes }],
            num_classes,
            seed,
        }
    }

    /// One-hidden-layer MLP head (width [`MLP_HIDDEN`], relu).
    pub fn mlp(in_dim: usize, num_classes: usize, seed: u64) -> Self {
        ModelSpec {
            input_shape: vec![in_dim],
            layers: vec![
                LayerSpec::Dense { out_dim: MLP_HIDDEN },
                LayerSpec::Relu,
                LayerSpec::Dense { out_dim: num_classes },
            ],
            num_classes,
            seed,
        }
    }
}

/// Conv/maxpool geometry resolved at build time.
#[derive(Debug, Clone)]
struct ConvGeom {
    in_ch: usize,
    in_h: usize,
    in_w: usize,
    out_ch: usize,
    out_h: usize,
    out_w: usize,
    kernel: usize,
    stride: usize,
    pad_top: usize,
    pad_left: usize,
}

#[derive(Debug, Clone)]
struct PoolGeom {
    ch: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    size: usize,
    stride: usize,
}

#[derive(Debug, Clone)]
enum Layer {
    Conv2d { weight: Vec<f64>, bias: Vec<f64>, geom: ConvGeom },
    Relu,
    MaxPool(PoolGeom),
    GlobalAvgPool { ch: usize, h: usize, w: usize },
    Dense { weight: Vec<f64>, bias: Vec<f64>, in_dim: usize, out_dim: usize },
}

impl Layer {
    fn param_count(&self) -> usize {
        match self {
            Layer::Conv2d { weight, bias, .. } => weight.len() + bias.len(),
            Layer::Dense { weight, bias, .. } => weight.len() + bias.len(),
            _ => 0,
        }
    }
}

/// A built network: resolved layers plus the `ModelSpec` that produced them.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    layers: Vec<Layer>,
    param_count: usize,
    /// Layer index of the ReLU following the last conv (Grad-CAM target).
    gradcam_target: Option<usize>,
}

/// Per-layer inputs retained by [`Model::forward`]; `layer_input(i)` is
/// the input of layer `i`, and `layer_input(num_layers)` is the final
/// logits.
pub struct Cache {
    values: Vec<Tensor>,
}

impl Cache {
    pub fn layer_input(&self, i: usize) -> &Tensor {
        &self.values[i]
    }
}

/// Everything backpropagation produces.
pub struct BackwardResult {
    /// Gradients in flat parameter layout.
    pub param_grads: Vec<f64>,
    /// Gradient with respect to the network input.
    pub input_grad: Tensor,
    /// Gradient with respect to the Grad-CAM target activation (the
    /// post-ReLU output of the last conv), when the model has one.
    pub target_activation_grad: Option<Tensor>,
}

impl Model {
    pub fn build(spec: &ModelSpec) -> Result<Model, NnError> {
        if spec.num_classes < 2 {
            return Err(NnError::InvalidSpec("need at least 2 classes".into()));
        }
        if spec.layers.is_empty() {
            return Err(NnError::InvalidSpec("empty layer list".into()));
        }
        let mut rng = SplitMix64::new(spec.seed);
        let mut shape: Vec<usize> = spec.input_shape.clone();
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(NnError::InvalidSpec(format!("bad input shape {shape:?}")));
        }
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (i, ls) in spec.layers.iter().enumerate() {
            let layer = match ls {
                LayerSpec::Conv2d { out_ch, kernel, stride, pad } => {
                    let [c, h, w] = as_chw(&shape, i, "conv2d")?;
                    if *kernel == 0 || *stride == 0 || *out_ch == 0 {
                        return Err(NnError::InvalidSpec(format!("layer {i}: zero conv geometry")));
                    }
                    let (out_h, pad_top) = conv_extent(h, *kernel, *stride, *pad, i)?;
                    let (out_w, pad_left) = conv_extent(w, *kernel, *stride, *pad, i)?;
                    let geom = ConvGeom {
                        in_ch: c,
                        in_h: h,
                        in_w: w,
                        out_ch: *out_ch,
                        out_h,
                        out_w,
                        kernel: *kernel,
                        stride: *stride,
                        pad_top,
                        pad_left,
                    };
                    let fan_in = c * kernel * kernel;
                    let weight = he_uniform(&mut rng, out_ch * fan_in, fan_in);
                    shape = vec![*out_ch, out_h, out_w];
                    Layer::Conv2d { weight, bias: vec![0.0; *out_ch], geom }
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::MaxPool { size, stride } => {
                    let [c, h, w] = as_chw(&shape, i, "maxpool")?;
                    if *size == 0 || *stride == 0 || h < *size || w < *size {
                        return Err(NnError::ShapeMismatch(format!(
                            "layer {i}: maxpool {size}x{size} does not fit {h}x{w}"
                        )));
                    }
                    let out_h = (h - size) / stride + 1;
                    let out_w = (w - size) / stride + 1;
                    let geom = PoolGeom {
                        ch: c,
                        in_h: h,
                        in_w: w,
                        out_h,
                        out_w,
                        size: *size,
                        stride: *stride,
                    };
                    shape = vec![c, out_h, out_w];
                    Layer::MaxPool(geom)
                }
                LayerSpec::GlobalAvgPool => {
                    let [c, h, w] = as_chw(&shape, i, "global_avg_pool")?;
                    shape = vec![c];
                    Layer::GlobalAvgPool { ch: c, h, w }
                }
                LayerSpec::Dense { out_dim } => {
                    if *out_dim == 0 {
                        return Err(NnError::InvalidSpec(format!("layer {i}: dense out_dim 0")));
                    }
                    let in_dim: usize = shape.iter().product();
                    let weight = he_uniform(&mut rng, out_dim * in_dim, in_dim);
                    shape = vec![*out_dim];
                    Layer::Dense { weight, bias: vec![0.0; *out_dim], in_dim, out_dim: *out_dim }
                }
            };
            layers.push(layer);
        }
        if shape != [spec.num_classes] {
            return Err(NnError::InvalidSpec(format!(
                "network output shape {shape:?} does not match {} classes; the last layer must \
                 be dense(num_classes)",
                spec.num_classes
            )));
        }
        if !matches!(layers.last(), Some(Layer::Dense { .. })) {
            return Err(NnError::InvalidSpec("the last layer must be dense".into()));
        }
        let mut gradcam_target = None;
        for i in 0..layers.len().saturating_sub(1) {
            if matches!(layers[i], Layer::Conv2d { .. }) && matches!(layers[i + 1], Layer::Relu) {
                gradcam_target = Some(i + 1);
            }
        }
        let param_count = layers.iter().map(Layer::param_count).sum();
        Ok(Model { spec: spec.clone(), layers, param_count, gradcam_target })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// Layer index of the Grad-CAM target ReLU, if the model has a conv
    /// immediately followed by a ReLU.
    pub fn gradcam_target(&self) -> Option<usize> {
        self.gradcam_target
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count);
        for layer in &self.layers {
            match layer {
                Layer::Conv2d { weight, bias, .. } | Layer::Dense { weight, bias, .. } => {
                    out.extend_from_slice(weight);
                    out.extend_from_slice(bias);
                }
                _ => {}
            }
        }
        out
    }

    /// Panics if the slice length does not match [`Model::param_count`].
    pub fn set_flat_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count, "flat parameter length mismatch");
        let mut off = 0;
        for layer in &mut self.layers {
            match layer {
                Layer::Conv2d { weight, bias, .. } | Layer::Dense { weight, bias, .. } => {
                    let (wl, bl) = (weight.len(), bias.len());
                    weight.copy_from_slice(&params[off..off + wl]);
                    bias.copy_from_slice(&params[off + wl..off + wl + bl]);
                    off += wl + bl;
                }
                _ => {}
            }
        }
    }

    /// Forward pass on one sample; returns logits and the activation
    /// cache for [`Model::backward`].
    pub fn forward(&self, x: &Tensor) -> Result<(Vec<f64>, Cache), NnError> {
        if x.shape() != self.spec.input_shape.as_slice() {
            return Err(NnError::ShapeMismatch(format!(
                "input shape {:?}, model expects {:?}",
                x.shape(),
                self.spec.input_shape
            )));
        }
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.clone());
        for layer in &self.layers {
            let next = layer_forward(layer, values.last().unwrap());
            values.push(next);
        }
        let logits = values.last().unwrap().data().to_vec();
        Ok((logits, Cache { values }))
    }

    /// Backpropagate an arbitrary gradient on the logits through the
    /// cached forward pass. Pass `softmax - onehot` (scaled) for
    /// training, or a one-hot class indicator for Grad-CAM.
    pub fn backward(&self, cache: &Cache, dlogits: &[f64]) -> BackwardResult {
        self.backward_capturing(cache, dlogits, self.gradcam_target)
    }

    /// Like [`Model::backward`] but also records the gradient flowing
    /// into the output of `capture_layer`, for activation attribution
    /// at an arbitrary depth.
    pub fn backward_capturing(
        &self,
        cache: &Cache,
        dlogits: &[f64],
        capture_layer: Option<usize>,
    ) -> BackwardResult {
        assert_eq!(dlogits.len(), self.spec.num_classes, "dlogits length mismatch");
        assert_eq!(cache.values.len(), self.layers.len() + 1, "stale cache");
        let mut param_grads = vec![0.0; self.param_count];
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            offsets.push(off);
            off += layer.param_count();
        }
        let capture_at = capture_layer.map(|t| t + 1);
        let mut target_activation_grad = None;
        let mut grad = raw_tensor(vec![self.spec.num_classes], dlogits.to_vec());
        for i in (0..self.layers.len()).rev() {
            if capture_at == Some(i + 1) {
                target_activation_grad = Some(grad.clone());
            }
            let slot = &mut param_grads[offsets[i]..offsets[i] + self.layers[i].param_count()];
            grad = layer_backward(&self.layers[i], cache.layer_input(i), &grad, slot);
        }
        BackwardResult { param_grads, input_grad: grad, target_activation_grad }
    }

    /// Mean cross-entropy loss and mean flat parameter gradients over a
    /// batch. Samples are processed in order; the division by the batch
    /// size happens once at the end.
    pub fn loss_and_grads(&self, batch: &[(&Tensor, usize)]) -> Result<(f64, Vec<f64>), NnError> {
        assert!(!batch.is_empty(), "empty batch");
        let n = batch.len() as f64;
        let mut total_loss = 0.0;
        let mut total_grads = vec![0.0; self.param_count];
        for (x, label) in batch {
            let (logits, cache) = self.forward(x)?;
            let (loss, dlogits) = xent_loss_and_dlogits(&logits, *label);
            total_loss += loss;
            let back = self.backward(&cache, &dlogits);
            for (acc, g) in total_grads.iter_mut().zip(&back.param_grads) {
                *acc += g;
            }
        }
        for g in total_grads.iter_mut() {
            *g /= n;
        }
        Ok((total_loss / n, total_grads))
    }

    /// Predicted class id (softmax argmax, ties to the lowest id) and
    /// the class probabilities.
    pub fn predict(&self, x: &Tensor) -> Result<(usize, Vec<f64>), NnError> {
        let (logits, _) = self.forward(x)?;
        let probs = softmax(&logits);
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = i;
            }
        }
        Ok((best, probs))
    }
}

fn as_chw(shape: &[usize], layer: usize, op: &str) -> Result<[usize; 3], NnError> {
    match shape {
        [c, h, w] => Ok([*c, *h, *w]),
        other => Err(NnError::ShapeMismatch(format!(
            "layer {layer}: {op} needs [c, h, w] input, got {other:?}"
        ))),
    }
}

/// Output extent and leading pad for one spatial axis.
fn conv_extent(n: usize, k: usize, stride: usize, pad: Pad, layer: usize) -> Result<(usize, usize), NnError> {
    match pad {
        Pad::Same => {
            let out = n.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(n);
            Ok((out, total / 2))
        }
        Pad::Valid => {
            if n < k {
                return Err(NnError::ShapeMismatch(format!(
                    "layer {layer}: kernel {k} exceeds input extent {n}"
                )));
            }
            Ok(((n - k) / stride + 1, 0))
        }
    }
}

fn he_uniform(rng: &mut SplitMix64, len: usize, fan_in: usize) -> Vec<f64> {
    let limit = fmath::sqrt(6.0 / fan_in as f64);
    (0..len).map(|_| rng.uniform(-limit, limit)).collect()
}

fn layer_forward(layer: &Layer, input: &Tensor) -> Tensor {
    match layer {
        Layer::Conv2d { weight, bias, geom } => {
            let g = geom;
            let x = input.data();
            let mut out = vec![0.0; g.out_ch * g.out_h * g.out_w];
            if g.stride == 1 {
                // Stride-1 fast path: for each (ic, ky, kx) tap, the
                // valid output row is a contiguous slice and the input
                // it reads is the matching contiguous slice shifted by
                // the tap offset, so the inner loop is a plain axpy.
                let plane_len = g.out_h * g.out_w;
                for o in 0..g.out_ch {
                    let plane = &mut out[o * plane_len..(o + 1) * plane_len];
                    plane.fill(bias[o]);
                    for ic in 0..g.in_ch {
                        let xplane = &x[ic * g.in_h * g.in_w..(ic + 1) * g.in_h * g.in_w];
                        for ky in 0..g.kernel {
                            let oy0 = g.pad_top.saturating_sub(ky);
                            let oy1 = (g.in_h + g.pad_top)
                                .checked_sub(ky)
                                .map_or(0, |v| v.min(g.out_h));
                            let wrow = ((o * g.in_ch + ic) * g.kernel + ky) * g.kernel;
                            for kx in 0..g.kernel {
                                let w = weight[wrow + kx];
                                let ox0 = g.pad_left.saturating_sub(kx);
                                let ox1 = (g.in_w + g.pad_left)
                                    .checked_sub(kx)
                                    .map_or(0, |v| v.min(g.out_w));
                                if ox0 >= ox1 {
                                    continue;
                                }
                                let span = ox1 - ox0;
                                for oy in oy0..oy1 {
                                    let iy = oy + ky - g.pad_top;
                                    let ix0 = ox0 + kx - g.pad_left;
                                    let in_row = &xplane[iy * g.in_w + ix0..][..span];
                                    let out_row =
                                        &mut plane[oy * g.out_w + ox0..][..span];
                                    for (ov, iv) in out_row.iter_mut().zip(in_row) {
                                        *ov += w * iv;
                                    }
                                }
                            }
                        }
                    }
                }
            } else {
                for o in 0..g.out_ch {
                    for oy in 0..g.out_h {
                        for ox in 0..g.out_w {
                            let mut acc = bias[o];
                            for ic in 0..g.in_ch {
                                for ky in 0..g.kernel {
                                    let iy = (oy * g.stride + ky) as i64 - g.pad_top as i64;
                                    if iy < 0 || iy >= g.in_h as i64 {
                                        continue;
                                    }
                                    let row = (ic * g.in_h + iy as usize) * g.in_w;
                                    let wrow =
                                        ((o * g.in_ch + ic) * g.kernel + ky) * g.kernel;
                                    for kx in 0..g.kernel {
                                        let ix =
                                            (ox * g.stride + kx) as i64 - g.pad_left as i64;
                                        if ix < 0 || ix >= g.in_w as i64 {
                                            continue;
                                        }
                                        acc += weight[wrow + kx] * x[row + ix as usize];
                                    }
                                }
                            }
                            out[(o * g.out_h + oy) * g.out_w + ox] = acc;
                        }
                    }
                }
            }
            raw_tensor(vec![g.out_ch, g.out_h, g.out_w], out)
        }
        Layer::Relu => {
            let data = input.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
            raw_tensor(input.shape().to_vec(), data)
        }
        Layer::MaxPool(g) => {
            let x = input.data();
            let mut out = vec![0.0; g.ch * g.out_h * g.out_w];
            for c in 0..g.ch {
                for py in 0..g.out_h {
                    for px in 0..g.out_w {
                        let mut best = f64::NEG_INFINITY;
                        for dy in 0..g.size {
                            let y = py * g.stride + dy;
                            for dx in 0..g.size {
                                let v = x[(c * g.in_h + y) * g.in_w + px * g.stride + dx];
                                if v > best {
                                    best = v;
                                }
                            }
                        }
                        out[(c * g.out_h + py) * g.out_w + px] = best;
                    }
                }
            }
            raw_tensor(vec![g.ch, g.out_h, g.out_w], out)
        }
        Layer::GlobalAvgPool { ch, h, w } => {
            let x = input.data();
            let area = (h * w) as f64;
            let out = (0..*ch)
                .map(|c| x[c * h * w..(c + 1) * h * w].iter().sum::<f64>() / area)
                .collect();
            raw_tensor(vec![*ch], out)
        }
        Layer::Dense { weight, bias, in_dim, out_dim } => {
            let x = input.data();
            debug_assert_eq!(x.len(), *in_dim);
            let out = (0..*out_dim)
                .map(|o| {
                    let row = &weight[o * in_dim..(o + 1) * in_dim];
                    bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
                })
                .collect();
            raw_tensor(vec![*out_dim], out)
        }
    }
}

/// Backward of one layer: writes this layer's parameter gradients into
/// `param_slot` (weight then bias) and returns the input gradient.
fn layer_backward(layer: &Layer, input: &Tensor, dout: &Tensor, param_slot: &mut [f64]) -> Tensor {
    match layer {
        Layer::Conv2d { weight, geom, .. } => {
            let g = geom;
            let x = input.data();
            let d = dout.data();
            let wlen = weight.len();
            let mut din = vec![0.0; x.len()];
            if g.stride == 1 {
                // Mirror of the forward fast path: per tap, the weight
                // gradient is a dot of contiguous rows and the input
                // gradient is an axpy into a shifted slice.
                let plane_len = g.out_h * g.out_w;
                for o in 0..g.out_ch {
                    let dplane = &d[o * plane_len..(o + 1) * plane_len];
                    param_slot[wlen + o] += dplane.iter().sum::<f64>(); // bias
                    for ic in 0..g.in_ch {
                        let xoff = ic * g.in_h * g.in_w;
                        for ky in 0..g.kernel {
                            let oy0 = g.pad_top.saturating_sub(ky);
                            let oy1 = (g.in_h + g.pad_top)
                                .checked_sub(ky)
                                .map_or(0, |v| v.min(g.out_h));
                            let wrow = ((o * g.in_ch + ic) * g.kernel + ky) * g.kernel;
                            for kx in 0..g.kernel {
                                let w = weight[wrow + kx];
                                let ox0 = g.pad_left.saturating_sub(kx);
                                let ox1 = (g.in_w + g.pad_left)
                                    .checked_sub(kx)
                                    .map_or(0, |v| v.min(g.out_w));
                                if ox0 >= ox1 {
                                    continue;
                                }
                                let span = ox1 - ox0;
                                let mut wgrad = 0.0;
                                for oy in oy0..oy1 {
                                    let iy = oy + ky - g.pad_top;
                                    let ix0 = ox0 + kx - g.pad_left;
                                    let drow = &dplane[oy * g.out_w + ox0..][..span];
                                    let xrow = &x[xoff + iy * g.in_w + ix0..][..span];
                                    let din_row =
                                        &mut din[xoff + iy * g.in_w + ix0..][..span];
                                    for i in 0..span {
                                        wgrad += drow[i] * xrow[i];
                                        din_row[i] += w * drow[i];
                                    }
                                }
                                param_slot[wrow + kx] += wgrad;
                            }
                        }
                    }
                }
            } else {
                for o in 0..g.out_ch {
                    for oy in 0..g.out_h {
                        for ox in 0..g.out_w {
                            let gv = d[(o * g.out_h + oy) * g.out_w + ox];
                            param_slot[wlen + o] += gv; // bias
                            for ic in 0..g.in_ch {
                                for ky in 0..g.kernel {
                                    let iy = (oy * g.stride + ky) as i64 - g.pad_top as i64;
                                    if iy < 0 || iy >= g.in_h as i64 {
                                        continue;
                                    }
                                    let row = (ic * g.in_h + iy as usize) * g.in_w;
                                    let wrow =
                                        ((o * g.in_ch + ic) * g.kernel + ky) * g.kernel;
                                    for kx in 0..g.kernel {
                                        let ix =
                                            (ox * g.stride + kx) as i64 - g.pad_left as i64;
                                        if ix < 0 || ix >= g.in_w as i64 {
                                            continue;
                                        }
                                        param_slot[wrow + kx] += gv * x[row + ix as usize];
                                        din[row + ix as usize] += gv * weight[wrow + kx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            raw_tensor(input.shape().to_vec(), din)
        }
        Layer::Relu => {
            let data = input
                .data()
                .iter()
                .zip(dout.data())
                .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                .collect();
            raw_tensor(input.shape().to_vec(), data)
        }
        Layer::MaxPool(g) => {
            let x = input.data();
            let d = dout.data();
            let mut din = vec![0.0; x.len()];
            for c in 0..g.ch {
                for py in 0..g.out_h {
                    for px in 0..g.out_w {
                        // Route to the first maximum in scan order, the
                        // same element forward selected.
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0;
                        for dy in 0..g.size {
                            let y = py * g.stride + dy;
                            for dx in 0..g.size {
                                let idx = (c * g.in_h + y) * g.in_w + px * g.stride + dx;
                                if x[idx] > best {
                                    best = x[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        din[best_idx] += d[(c * g.out_h + py) * g.out_w + px];
                    }
                }
            }
            raw_tensor(input.shape().to_vec(), din)
        }
        Layer::GlobalAvgPool { ch, h, w } => {
            let d = dout.data();
            let area = (h * w) as f64;
            let mut din = vec![0.0; ch * h * w];
            for c in 0..*ch {
                let gv = d[c] / area;
                for v in din[c * h * w..(c + 1) * h * w].iter_mut() {
                    *v = gv;
                }
            }
            raw_tensor(input.shape().to_vec(), din)
        }
        Layer::Dense { weight, in_dim, out_dim, .. } => {
            let x = input.data();
            let d = dout.data();
            let wlen = weight.len();
            let mut din = vec![0.0; *in_dim];
            for o in 0..*out_dim {
                let gv = d[o];
                param_slot[wlen + o] += gv; // bias
                let row = &weight[o * in_dim..(o + 1) * in_dim];
                for i in 0..*in_dim {
                    param_slot[o * in_dim + i] += gv * x[i];
                    din[i] += gv * row[i];
                }
            }
            raw_tensor(vec![*in_dim], din)
        }
    }
}

/// Internal tensor construction without the debug finiteness check:
/// diverging training legitimately produces non-finite activations,
/// which the training loop reports as an error rather than a panic.
fn raw_tensor(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
    Tensor::from_raw(shape, data)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| fmath::exp(l - m)).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Cross-entropy of a single sample against `label`, with the gradient
/// on the logits (`softmax - onehot`). Uses the log-sum-exp form, so the
/// loss stays finite for any finite logits.
pub fn xent_loss_and_dlogits(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    assert!(label < logits.len(), "label out of range");
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&l| fmath::exp(l - m)).sum();
    let lse = m + fmath::ln(sum);
    let loss = lse - logits[label];
    let mut dlogits: Vec<f64> = logits.iter().map(|&l| fmath::exp(l - m) / sum).collect();
    dlogits[label] -= 1.0;
    (loss, dlogits)
}
