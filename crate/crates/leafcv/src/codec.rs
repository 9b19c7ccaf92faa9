//! Image file IO. PGM/PPM are decoded by the native codec; PNG and
//! JPEG go through the `image` crate. The container is picked by magic
//! bytes, not file extension.

use std::fs;
use std::path::Path;

use leafcv_core::imaging::{decode_pnm, encode_pnm, ImageBuffer, PnmFormat};

use crate::error::{PipelineError, Result};

/// Decodes a PGM, PPM, PNG, or JPEG file into a unit-interval buffer
/// (grayscale stays single-channel, everything else becomes RGB).
pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    decode_image(&bytes).map_err(|msg| {
        PipelineError::data(format!("{}: {msg}", path.display()))
    })
}

fn decode_image(bytes: &[u8]) -> std::result::Result<ImageBuffer, String> {
    match bytes {
        [b'P', b'5', ..] | [b'P', b'6', ..] => {
            decode_pnm(bytes).map_err(|e| e.to_string())
        }
        [0x89, b'P', b'N', b'G', ..] | [0xFF, 0xD8, ..] => {
            let decoded =
                image::load_from_memory(bytes).map_err(|e| e.to_string())?;
            Ok(from_dynamic(decoded))
        }
        _ => Err("unrecognized image format (want PGM, PPM, PNG, or JPEG)".into()),
    }
}

fn from_dynamic(img: image::DynamicImage) -> ImageBuffer {
    use image::DynamicImage::*;
    let (w, h) = (img.width(), img.height());
    match img {
        ImageLuma8(_) | ImageLuma16(_) => {
            let gray = img.to_luma8();
            let data = gray.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
            ImageBuffer::new(w, h, 1, data).expect("decoded gray raster is valid")
        }
        other => {
            let rgb = other.to_rgb8();
            let data = rgb.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
            ImageBuffer::new(w, h, 3, data).expect("decoded rgb raster is valid")
        }
    }
}

/// Writes a binary PGM (1 channel) or PPM (3 channels) file.
pub fn save_pnm(path: &Path, img: &ImageBuffer) -> Result<()> {
    let format = match img.channels() {
        1 => PnmFormat::Pgm,
        3 => PnmFormat::Ppm,
        c => {
            return Err(PipelineError::data(format!(
                "cannot write a {c}-channel image as PNM"
            )))
        }
    };
    let bytes = encode_pnm(img, format)
        .map_err(|e| PipelineError::data(e.to_string()))?;
    fs::write(path, bytes).map_err(|e| PipelineError::io(path, e))
}
