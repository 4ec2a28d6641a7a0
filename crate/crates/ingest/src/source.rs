//! Where caption requests get their pixels from.

use std::path::PathBuf;

use capsight_core::ImageRecord;

use crate::resize::{prepare_jpeg, ResizeRule};

pub trait ImageSource: Send + Sync {
    /// The image as it should be sent to the captioner.
    fn load_jpeg(&self, record: &ImageRecord) -> Result<Vec<u8>, String>;
}

/// Reads `root/<source_path>`, applies the resize rule and re-encodes as JPEG.
#[derive(Debug, Clone)]
pub struct FsImageSource {
    pub root: PathBuf,
    pub rule: ResizeRule,
    pub quality: u8,
}

impl ImageSource for FsImageSource {
    fn load_jpeg(&self, record: &ImageRecord) -> Result<Vec<u8>, String> {
        prepare_jpeg(&self.root.join(&record.source_path), self.rule, self.quality)
            .map_err(|e| e.to_string())
    }
}

/// Sends no pixels; pairs with the mock captioner.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubImageSource;

impl ImageSource for StubImageSource {
    fn load_jpeg(&self, _record: &ImageRecord) -> Result<Vec<u8>, String> {
        Ok(Vec::new())
    }
}
