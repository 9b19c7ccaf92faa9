//! Image representation, PNM codecs, grayscale conversion, and bilinear
//! resampling.
//!
//! [`ImageBuffer`] is the substrate every other module consumes: a dense
//! row-major, channel-interleaved raster of `f32` values in `[0, 1]`,
//! either 1 (gray) or 3 (RGB) channels. Buffers are immutable after
//! construction and all operations here are pure functions.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::fmath;

/// Errors produced by image construction, decoding, and encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImagingError {
    /// Stream is not a format this decoder understands (or a feature of
    /// the format we do not support, e.g. 16-bit samples).
    UnsupportedFormat(String),
    /// Stream claims a supported format but is truncated or malformed.
    CorruptStream(String),
    /// Encoder channel requirement violated (PGM wants 1, PPM wants 3).
    ChannelMismatch { expected: u32, actual: u32 },
    /// Buffer invariant violated at construction.
    InvalidBuffer(String),
}

impl fmt::Display for ImagingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImagingError::UnsupportedFormat(m) => write!(f, "unsupported format: {m}"),
            ImagingError::CorruptStream(m) => write!(f, "corrupt stream: {m}"),
            ImagingError::ChannelMismatch { expected, actual } => {
                write!(f, "channel mismatch: expected {expected}, got {actual}")
            }
            ImagingError::InvalidBuffer(m) => write!(f, "invalid buffer: {m}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ImagingError {}

/// Dense float raster. Invariants: `data.len() == width * height * channels`,
/// `channels` is 1 or 3, every element finite and in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    channels: u32,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, channels: u32, data: Vec<f32>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::InvalidBuffer(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(ImagingError::InvalidBuffer(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(ImagingError::InvalidBuffer(format!(
                "data length {} != {width}x{height}x{channels} = {expected}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(ImagingError::InvalidBuffer(format!(
                "pixel value {bad} outside [0, 1]"
            )));
        }
        Ok(ImageBuffer { width, height, channels, data })
    }

    /// Constant-valued image.
    pub fn filled(width: u32, height: u32, channels: u32, value: f32) -> Result<Self, ImagingError> {
        let len = width as usize * height as usize * channels as usize;
        ImageBuffer::new(width, height, channels, vec![value; len])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u32 {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, c: u32) -> f32 {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        let idx = (y as usize * self.width as usize + x as usize) * self.channels as usize
            + c as usize;
        self.data[idx]
    }
}

/// Formats [`encode_pnm`] can produce. PGM is single-channel, PPM is RGB.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnmFormat {
    Pgm,
    Ppm,
}

/// Quantizes a unit-interval value to 8 bits, rounding half up.
#[inline]
pub fn quantize_u8(v: f32) -> u8 {
    let scaled = fmath::floor(v as f64 * 255.0 + 0.5);
    scaled.clamp(0.0, 255.0) as u8
}

/// Encodes a binary PGM (P5) or PPM (P6) stream with maxval 255 and a
/// single-whitespace-separated header.
pub fn encode_pnm(img: &ImageBuffer, format: PnmFormat) -> Result<Vec<u8>, ImagingError> {
    let expected = match format {
        PnmFormat::Pgm => 1,
        PnmFormat::Ppm => 3,
    };
    if img.channels() != expected {
        return Err(ImagingError::ChannelMismatch {
            expected,
            actual: img.channels(),
        });
    }
    let magic = match format {
        PnmFormat::Pgm => "P5",
        PnmFormat::Ppm => "P6",
    };
    let header = format!("{magic}\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.data().len());
    out.extend_from_slice(header.as_bytes());
    out.extend(img.data().iter().map(|&v| quantize_u8(v)));
    Ok(out)
}

/// Decodes a binary PGM (P5) or PPM (P6) stream. Values are scaled from
/// the file's maxval to `[0, 1]`; only 8-bit maxvals are supported.
pub fn decode_pnm(bytes: &[u8]) -> Result<ImageBuffer, ImagingError> {
    if bytes.is_empty() {
        return Err(ImagingError::CorruptStream("empty stream".into()));
    }
    if bytes.len() < 2 {
        return Err(ImagingError::CorruptStream("truncated header".into()));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1u32,
        b"P6" => 3u32,
        _ => return Err(ImagingError::UnsupportedFormat("not a P5/P6 stream".into())),
    };
    let mut pos = 2;
    let width = read_pnm_int(bytes, &mut pos)?;
    let height = read_pnm_int(bytes, &mut pos)?;
    let maxval = read_pnm_int(bytes, &mut pos)?;
    if maxval == 0 || maxval > 255 {
        return Err(ImagingError::UnsupportedFormat(format!(
            "maxval {maxval} not in 1..=255"
        )));
    }
    if width == 0 || height == 0 {
        return Err(ImagingError::CorruptStream("zero dimension".into()));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(ImagingError::CorruptStream("missing raster separator".into())),
    }
    let n = width as usize * height as usize * channels as usize;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| ImagingError::CorruptStream("truncated raster".into()))?;
    let scale = 1.0 / maxval as f32;
    let data = raster.iter().map(|&b| b as f32 * scale).collect();
    ImageBuffer::new(width, height, channels, data)
}

fn read_pnm_int(bytes: &[u8], pos: &mut usize) -> Result<u32, ImagingError> {
    // Skip whitespace and '#' comment lines.
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(b) = bytes.get(*pos) {
                    *pos += 1;
                    if *b == b'\n' {
                        break;
                    }
                }
            }
            Some(_) => break,
            None => return Err(ImagingError::CorruptStream("truncated header".into())),
        }
    }
    let start = *pos;
    while let Some(b) = bytes.get(*pos) {
        if b.is_ascii_digit() {
            *pos += 1;
        } else {
            break;
        }
    }
    if *pos == start {
        return Err(ImagingError::CorruptStream("expected integer in header".into()));
    }
    let mut value: u64 = 0;
    for &b in &bytes[start..*pos] {
        value = value * 10 + (b - b'0') as u64;
        if value > u32::MAX as u64 {
            return Err(ImagingError::CorruptStream("header integer overflow".into()));
        }
    }
    Ok(value as u32)
}

/// BT.601 luma conversion. Identity (bitwise) for already-gray input.
pub fn to_grayscale(img: &ImageBuffer) -> ImageBuffer {
    if img.channels() == 1 {
        return img.clone();
    }
    let mut data = Vec::with_capacity(img.width() as usize * img.height() as usize);
    for px in img.data().chunks_exact(3) {
        let gray = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
        data.push(gray as f32);
    }
    ImageBuffer::new(img.width(), img.height(), 1, data)
        .expect("grayscale of a valid buffer is valid")
}

/// Linear interpolation clamped to the hull of its endpoints, so the
/// result can never escape `[min(a,b), max(a,b)]` through rounding.
#[inline]
pub(crate) fn lerp(a: f64, b: f64, t: f64) -> f64 {
    let v = a + t * (b - a);
    v.clamp(a.min(b), a.max(b))
}

/// Reflects an out-of-range index into `[0, n)` with edge repetition
/// (… 1 0 | 0 1 2 … n-1 | n-1 n-2 …), period `2n`.
#[inline]
pub(crate) fn reflect_index(i: i64, n: u32) -> u32 {
    let n = n as i64;
    let period = 2 * n;
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - 1 - j;
    }
    j as u32
}

/// Bilinear sample at index-space coordinates with reflect padding.
pub(crate) fn sample_bilinear_reflect(img: &ImageBuffer, x: f64, y: f64, c: u32) -> f64 {
    let x0 = fmath::floor(x);
    let y0 = fmath::floor(y);
    let fx = x - x0;
    let fy = y - y0;
    let xi = x0 as i64;
    let yi = y0 as i64;
    let (x0r, x1r) = (reflect_index(xi, img.width()), reflect_index(xi + 1, img.width()));
    let (y0r, y1r) = (reflect_index(yi, img.height()), reflect_index(yi + 1, img.height()));
    let top = lerp(img.get(x0r, y0r, c) as f64, img.get(x1r, y0r, c) as f64, fx);
    let bottom = lerp(img.get(x0r, y1r, c) as f64, img.get(x1r, y1r, c) as f64, fx);
    lerp(top, bottom, fy)
}

/// Bilinear resize with half-pixel-center alignment: the source
/// coordinate for output `x` is `(x + 0.5) * in_w / out_w - 0.5`, clamped
/// to the borders. Same-size resize is an exact identity.
pub fn resize_bilinear(img: &ImageBuffer, out_w: u32, out_h: u32) -> ImageBuffer {
    assert!(out_w >= 1 && out_h >= 1, "output dimensions must be positive");
    let (in_w, in_h, ch) = (img.width(), img.height(), img.channels());
    let scale_x = in_w as f64 / out_w as f64;
    let scale_y = in_h as f64 / out_h as f64;
    let mut data = Vec::with_capacity(out_w as usize * out_h as usize * ch as usize);
    for y in 0..out_h {
        let sy = ((y as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (in_h - 1) as f64);
        let y0 = fmath::floor(sy);
        let fy = sy - y0;
        let y0 = y0 as u32;
        let y1 = (y0 + 1).min(in_h - 1);
        for x in 0..out_w {
            let sx = ((x as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (in_w - 1) as f64);
            let x0 = fmath::floor(sx);
            let fx = sx - x0;
            let x0 = x0 as u32;
            let x1 = (x0 + 1).min(in_w - 1);
            for c in 0..ch {
                let top = lerp(img.get(x0, y0, c) as f64, img.get(x1, y0, c) as f64, fx);
                let bottom = lerp(img.get(x0, y1, c) as f64, img.get(x1, y1, c) as f64, fx);
                data.push(lerp(top, bottom, fy) as f32);
            }
        }
    }
    ImageBuffer::new(out_w, out_h, ch, data).expect("resize of a valid buffer is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_image(rng: &mut SplitMix64, w: u32, h: u32, ch: u32) -> ImageBuffer {
        let n = (w * h * ch) as usize;
        let data = (0..n).map(|_| rng.next_f64() as f32).collect();
        ImageBuffer::new(w, h, ch, data).unwrap()
    }

    #[test]
    fn buffer_rejects_bad_shapes_and_values() {
        assert!(ImageBuffer::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(ImageBuffer::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(ImageBuffer::new(1, 1, 1, vec![1.5]).is_err());
        assert!(ImageBuffer::new(1, 1, 1, vec![f32::NAN]).is_err());
        assert!(ImageBuffer::new(0, 1, 1, vec![]).is_err());
    }

    #[test]
    fn decode_pgm_scales_to_unit_interval() {
        let bytes = b"P5 2 2 255 \x00\xff\x80\x40";
        let img = decode_pnm(bytes).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (2, 2, 1));
        assert_eq!(img.data(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn decode_rejects_empty_and_truncated_streams() {
        assert!(matches!(decode_pnm(b""), Err(ImagingError::CorruptStream(_))));
        assert!(matches!(decode_pnm(b"P5 2 2 255 \x00\x01"), Err(ImagingError::CorruptStream(_))));
        assert!(matches!(decode_pnm(b"P5 2 2"), Err(ImagingError::CorruptStream(_))));
        assert!(matches!(decode_pnm(b"GIF89a"), Err(ImagingError::UnsupportedFormat(_))));
    }

    #[test]
    fn decode_rejects_16bit_maxval() {
        assert!(matches!(
            decode_pnm(b"P5 1 1 65535 \x00\x00"),
            Err(ImagingError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn encode_pgm_rounds_half_up() {
        let img = ImageBuffer::new(1, 1, 1, vec![0.5]).unwrap();
        let bytes = encode_pnm(&img, PnmFormat::Pgm).unwrap();
        assert_eq!(bytes, b"P5\n1 1\n255\n\x80");
    }

    #[test]
    fn encode_ppm_zeros() {
        let img = ImageBuffer::new(2, 2, 3, vec![0.0; 12]).unwrap();
        let bytes = encode_pnm(&img, PnmFormat::Ppm).unwrap();
        assert_eq!(&bytes[..bytes.len() - 12], b"P6\n2 2\n255\n");
        assert_eq!(&bytes[bytes.len() - 12..], &[0u8; 12]);
    }

    #[test]
    fn encode_channel_mismatch() {
        let gray = ImageBuffer::filled(2, 2, 1, 0.5).unwrap();
        let rgb = ImageBuffer::filled(2, 2, 3, 0.5).unwrap();
        assert!(matches!(
            encode_pnm(&gray, PnmFormat::Ppm),
            Err(ImagingError::ChannelMismatch { expected: 3, actual: 1 })
        ));
        assert!(matches!(
            encode_pnm(&rgb, PnmFormat::Pgm),
            Err(ImagingError::ChannelMismatch { expected: 1, actual: 3 })
        ));
    }

    #[test]
    fn pnm_round_trip_within_quantization_bound() {
        let mut rng = SplitMix64::new(17);
        let img = random_image(&mut rng, 16, 16, 3);
        let decoded = decode_pnm(&encode_pnm(&img, PnmFormat::Ppm).unwrap()).unwrap();
        let max_err = img
            .data()
            .iter()
            .zip(decoded.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_err <= 1.0 / 510.0 + 1e-7, "max quantization error {max_err}");
    }

    #[test]
    fn pnm_decode_encode_is_value_exact_on_decoded_data() {
        // Values originating from 8-bit data survive a second round trip
        // bit-exactly.
        let bytes = b"P6 2 1 255 \x01\x02\x03\xfc\xfd\xfe";
        let img = decode_pnm(bytes).unwrap();
        let again = decode_pnm(&encode_pnm(&img, PnmFormat::Ppm).unwrap()).unwrap();
        assert_eq!(img.data(), again.data());
    }

    #[test]
    fn grayscale_weights() {
        let img = ImageBuffer::new(2, 1, 3, vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        let gray = to_grayscale(&img);
        assert_eq!(gray.channels(), 1);
        assert_eq!(gray.get(0, 0, 0), 1.0);
        assert_eq!(gray.get(1, 0, 0), 0.299);
    }

    #[test]
    fn grayscale_of_gray_is_identity() {
        let mut rng = SplitMix64::new(3);
        let img = random_image(&mut rng, 8, 8, 1);
        let gray = to_grayscale(&img);
        assert_eq!(img.data(), gray.data());
    }

    #[test]
    fn grayscale_is_idempotent_and_in_range() {
        let mut rng = SplitMix64::new(4);
        let img = random_image(&mut rng, 12, 9, 3);
        let g1 = to_grayscale(&img);
        let g2 = to_grayscale(&g1);
        assert_eq!(g1.data(), g2.data());
        assert!(g1.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn resize_same_size_is_identity() {
        let mut rng = SplitMix64::new(9);
        let img = random_image(&mut rng, 224, 31, 3);
        let out = resize_bilinear(&img, 224, 31);
        assert_eq!(img.data(), out.data());
    }

    #[test]
    fn resize_half_pixel_centers() {
        let img = ImageBuffer::new(2, 1, 1, vec![0.0, 1.0]).unwrap();
        let out = resize_bilinear(&img, 4, 1);
        assert_eq!(out.data(), &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn resize_stays_within_input_hull() {
        let mut rng = SplitMix64::new(12);
        for _ in 0..100 {
            let img = random_image(&mut rng, 64, 64, 1);
            let lo = img.data().iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = img.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let out = resize_bilinear(&img, 224, 224);
            for &v in out.data() {
                assert!(v >= lo && v <= hi, "{v} escapes [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn resize_downscale_in_hull_too() {
        let mut rng = SplitMix64::new(13);
        let img = random_image(&mut rng, 37, 23, 3);
        let out = resize_bilinear(&img, 5, 4);
        let lo = img.data().iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = img.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        assert!(out.data().iter().all(|&v| v >= lo && v <= hi));
    }

    #[test]
    fn reflect_index_edge_repeats() {
        // n = 4: ... 1 0 | 0 1 2 3 | 3 2 ...
        assert_eq!(reflect_index(-2, 4), 1);
        assert_eq!(reflect_index(-1, 4), 0);
        assert_eq!(reflect_index(0, 4), 0);
        assert_eq!(reflect_index(3, 4), 3);
        assert_eq!(reflect_index(4, 4), 3);
        assert_eq!(reflect_index(5, 4), 2);
        assert_eq!(reflect_index(8, 4), 0);
        assert_eq!(reflect_index(-8, 4), 0);
    }
}
