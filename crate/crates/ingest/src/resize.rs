//! The long/short-side downscaling rule and JPEG preparation.

use std::io::Cursor;
use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use image::imageops::FilterType;
use serde::{Deserialize, Serialize};

use crate::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResizeRule {
    pub max_long_side: u32,
    pub max_short_side: u32,
}

impl Default for ResizeRule {
    fn default() -> Self {
        ResizeRule {
            max_long_side: 1024,
            max_short_side: 768,
        }
    }
}

impl ResizeRule {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.max_short_side == 0 || self.max_long_side < self.max_short_side {
            return Err(IngestError::Config(format!(
                "resize rule needs 1 <= max_short_side <= max_long_side, got {} / {}",
                self.max_short_side, self.max_long_side
            )));
        }
        Ok(())
    }
}

/// Largest size within the rule's bounds with the same aspect ratio; never upscales.
///
/// The scale is `min(1, L/long, S/short)`; each side is rounded half-up and
/// floored at one pixel. Integer arithmetic keeps the rule exact.
pub fn compute_target_dimensions(width: u32, height: u32, rule: ResizeRule) -> (u32, u32) {
    let (w, h) = (width.max(1) as u64, height.max(1) as u64);
    let (long, short) = (w.max(h), w.min(h));
    let (bl, bs) = (rule.max_long_side as u64, rule.max_short_side as u64);
    // Scale as a fraction num/den, picking the smallest of 1, bl/long, bs/short.
    let (mut num, mut den) = (1u64, 1u64);
    if bl * den < num * long {
        (num, den) = (bl, long);
    }
    if bs * den < num * short {
        (num, den) = (bs, short);
    }
    let scale = |x: u64| -> u32 { ((2 * x * num + den) / (2 * den)).max(1) as u32 };
    (scale(w), scale(h))
}

/// Decodes `path`, downsizes per `rule` and re-encodes as baseline JPEG.
pub fn prepare_jpeg(path: &Path, rule: ResizeRule, quality: u8) -> Result<Vec<u8>, IngestError> {
    let img = image::open(path).map_err(|e| IngestError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (tw, th) = compute_target_dimensions(img.width(), img.height(), rule);
    let img = if (tw, th) == (img.width(), img.height()) {
        img
    } else {
        img.resize_exact(tw, th, FilterType::Lanczos3)
    };
    encode_jpeg(&img, quality).map_err(|message| IngestError::Image {
        path: path.to_path_buf(),
        message,
    })
}

pub fn encode_jpeg(img: &image::DynamicImage, quality: u8) -> Result<Vec<u8>, String> {
    let mut out = Cursor::new(Vec::new());
    let rgb = img.to_rgb8();
    JpegEncoder::new_with_quality(&mut out, quality)
        .encode_image(&rgb)
        .map_err(|e| e.to_string())?;
    Ok(out.into_inner())
}

/// Pixel dimensions without decoding the whole image.
pub fn image_dimensions(path: &Path) -> Result<(u32, u32), IngestError> {
    image::image_dimensions(path).map_err(|e| IngestError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
