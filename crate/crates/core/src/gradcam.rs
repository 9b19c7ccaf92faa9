//! Gradient-weighted Class Activation Mapping over the CNN backbone:
//! per-channel weights are the spatial mean of the target-class logit's
//! gradient on the designated conv activation, the raw map is the
//! ReLU of the weighted channel sum, and the result is normalized by
//! its maximum (an all-zero map stays all-zero).

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::imaging::{ImageBuffer, resize_bilinear};
use crate::nn::{Model, NnError, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum GradCamError {
    InvalidClassId { class_id: usize, num_classes: usize },
    /// Image or heatmap dimensions do not match what the operation
    /// expects.
    ResolutionMismatch { expected: (u32, u32), actual: (u32, u32) },
    /// The model has no conv-followed-by-ReLU activation to target.
    NoTargetLayer,
    Model(NnError),
}

impl fmt::Display for GradCamError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GradCamError::InvalidClassId { class_id, num_classes } => {
                write!(f, "class id {class_id} out of range for {num_classes} classes")
            }
            GradCamError::ResolutionMismatch { expected, actual } => write!(
                f,
                "resolution mismatch: expected {}x{}, got {}x{}",
                expected.0, expected.1, actual.0, actual.1
            ),
            GradCamError::NoTargetLayer => {
                write!(f, "model has no conv+relu activation to target")
            }
            GradCamError::Model(e) => write!(f, "model error: {e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for GradCamError {}

impl From<NnError> for GradCamError {
    fn from(e: NnError) -> Self {
        GradCamError::Model(e)
    }
}

/// Single-channel activation map. Values are finite and lie in [0, 1]
/// after normalization; the maximum is 1 unless the map is identically
/// zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl Heatmap {
    /// Builds a heatmap from row-major values.
    ///
    /// # Panics
    /// Panics when `values.len() != width * height`.
    pub fn from_values(width: u32, height: u32, values: Vec<f64>) -> Self {
        assert_eq!(
            values.len(),
            (width as usize) * (height as usize),
            "heatmap value count must match width * height"
        );
        Heatmap { width, height, values }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Row-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[(y * self.width + x) as usize]
    }
}

/// Lay an image out as a planar `[c, h, w]` tensor (the layout the
/// network consumes).
pub fn image_to_tensor(img: &ImageBuffer) -> Tensor {
    let (w, h, c) = (img.width() as usize, img.height() as usize, img.channels() as usize);
    let mut data = vec![0.0f64; c * h * w];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                data[(ch * h + y) * w + x] = img.get(x as u32, y as u32, ch as u32) as f64;
            }
        }
    }
    Tensor::new(vec![c, h, w], data)
}

/// Heatmap for `target_class` at the model's designated target layer
/// (the ReLU after the last conv).
pub fn gradcam_heatmap(
    model: &Model,
    image: &ImageBuffer,
    target_class: usize,
) -> Result<Heatmap, GradCamError> {
    let target = model.gradcam_target().ok_or(GradCamError::NoTargetLayer)?;
    gradcam_heatmap_at(model, image, target_class, target)
}

/// Heatmap against the output of an arbitrary layer index, which must
/// produce a `[c, h, w]` activation.
pub fn gradcam_heatmap_at(
    model: &Model,
    image: &ImageBuffer,
    target_class: usize,
    target_layer: usize,
) -> Result<Heatmap, GradCamError> {
    let k = model.num_classes();
    if target_class >= k {
        return Err(GradCamError::InvalidClassId { class_id: target_class, num_classes: k });
    }
    let expected = model.spec().input_shape.as_slice();
    let x = tensor_for_model(image, expected)?;

    let (_, cache) = model.forward(&x)?;
    // Gradient of the raw logit, not the softmax probability.
    let mut dlogits = vec![0.0; k];
    dlogits[target_class] = 1.0;
    let back = model.backward_capturing(&cache, &dlogits, Some(target_layer));
    let activation = cache.layer_input(target_layer + 1);
    let grad = back
        .target_activation_grad
        .expect("capture requested for an existing layer");

    let shape = activation.shape();
    assert_eq!(shape.len(), 3, "grad-cam target must be a [c, h, w] activation");
    let (channels, h, w) = (shape[0], shape[1], shape[2]);
    let area = (h * w) as f64;
    let mut map = vec![0.0f64; h * w];
    for ch in 0..channels {
        let plane = &activation.data()[ch * h * w..(ch + 1) * h * w];
        let gplane = &grad.data()[ch * h * w..(ch + 1) * h * w];
        let alpha = gplane.iter().sum::<f64>() / area;
        for (m, a) in map.iter_mut().zip(plane) {
            *m += alpha * a;
        }
    }
    for m in map.iter_mut() {
        if *m < 0.0 {
            *m = 0.0;
        }
    }
    let max = map.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 {
        for m in map.iter_mut() {
            *m /= max;
        }
    }
    Ok(Heatmap { width: w as u32, height: h as u32, values: map })
}

fn tensor_for_model(image: &ImageBuffer, expected: &[usize]) -> Result<Tensor, GradCamError> {
    let [c, h, w] = match expected {
        [c, h, w] => [*c, *h, *w],
        _ => return Err(GradCamError::NoTargetLayer),
    };
    if image.width() as usize != w || image.height() as usize != h {
        return Err(GradCamError::ResolutionMismatch {
            expected: (w as u32, h as u32),
            actual: (image.width(), image.height()),
        });
    }
    let img = if image.channels() as usize == c {
        image.clone()
    } else if c == 1 {
        crate::imaging::to_grayscale(image)
    } else {
        return Err(GradCamError::Model(NnError::ShapeMismatch(alloc::format!(
            "cannot feed {}-channel image to a {c}-channel model",
            image.channels()
        ))));
    };
    Ok(image_to_tensor(&img))
}

/// Bilinear upsample with the same semantics as
/// [`crate::imaging::resize_bilinear`], re-clamped to [0, 1].
pub fn upsample_heatmap(h: &Heatmap, out_w: u32, out_h: u32) -> Heatmap {
    let as_image = ImageBuffer::new(
        h.width,
        h.height,
        1,
        h.values.iter().map(|&v| v as f32).collect(),
    )
    .expect("heatmap values are valid image data");
    let resized = resize_bilinear(&as_image, out_w, out_h);
    let values = resized
        .data()
        .iter()
        .map(|&v| (v as f64).clamp(0.0, 1.0))
        .collect();
    Heatmap { width: out_w, height: out_h, values }
}

/// Jet colormap breakpoints: t=0 -> (0,0,0.5), 0.125 -> (0,0,1),
/// 0.375 -> (0,1,1), 0.625 -> (1,1,0), 0.875 -> (1,0,0), 1 -> (0.5,0,0).
const JET_STOPS: [(f64, [f64; 3]); 6] = [
    (0.0, [0.0, 0.0, 0.5]),
    (0.125, [0.0, 0.0, 1.0]),
    (0.375, [0.0, 1.0, 1.0]),
    (0.625, [1.0, 1.0, 0.0]),
    (0.875, [1.0, 0.0, 0.0]),
    (1.0, [0.5, 0.0, 0.0]),
];

/// Piecewise-linear jet colormap; input is clamped to [0, 1].
pub fn jet(t: f64) -> [f64; 3] {
    let t = t.clamp(0.0, 1.0);
    for pair in JET_STOPS.windows(2) {
        let (t0, c0) = pair[0];
        let (t1, c1) = pair[1];
        if t <= t1 {
            let f = (t - t0) / (t1 - t0);
            return [
                c0[0] + f * (c1[0] - c0[0]),
                c0[1] + f * (c1[1] - c0[1]),
                c0[2] + f * (c1[2] - c0[2]),
            ];
        }
    }
    JET_STOPS[5].1
}

/// Blend `alpha * jet(heatmap)` over the image:
/// `out = (1 - alpha) * rgb(img) + alpha * jet(h)`. Grayscale input is
/// replicated to RGB first. The heatmap must be at image resolution.
pub fn render_overlay(
    img: &ImageBuffer,
    h: &Heatmap,
    alpha: f64,
) -> Result<ImageBuffer, GradCamError> {
    assert!((0.0..=1.0).contains(&alpha), "alpha must be in [0, 1]");
    if h.width != img.width() || h.height != img.height() {
        return Err(GradCamError::ResolutionMismatch {
            expected: (img.width(), img.height()),
            actual: (h.width, h.height),
        });
    }
    let (w, ht) = (img.width(), img.height());
    let mut out = Vec::with_capacity((w * ht * 3) as usize);
    for y in 0..ht {
        for x in 0..w {
            let color = jet(h.get(x, y));
            for c in 0..3u32 {
                let src = if img.channels() == 3 { img.get(x, y, c) } else { img.get(x, y, 0) };
                out.push(((1.0 - alpha) * src as f64 + alpha * color[c as usize]) as f32);
            }
        }
    }
    Ok(ImageBuffer::new(w, ht, 3, out).expect("blend of in-range values stays in range"))
}
