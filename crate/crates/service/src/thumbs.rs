//! On-disk thumbnail cache keyed by (image id, long side).

use std::path::{Component, Path, PathBuf};

use capsight_ingest::resize::{compute_target_dimensions, encode_jpeg, ResizeRule};

/// Resolves `source_path` under `root`, refusing absolute paths and `..`.
pub fn resolve_source(root: &Path, source_path: &str) -> Option<PathBuf> {
    let rel = Path::new(source_path);
    if rel.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir)) {
        Some(root.join(rel))
    } else {
        None
    }
}

pub fn cache_path(dir: &Path, id: &str, size: u32) -> PathBuf {
    let hex: String = id.bytes().map(|b| format!("{b:02x}")).collect();
    dir.join(format!("{hex}_{size}.jpg"))
}

/// Returns the cached thumbnail, rendering and storing it first if needed.
pub fn thumbnail(source: &Path, cache: &Path, size: u32, quality: u8) -> Result<Vec<u8>, String> {
    if let Ok(bytes) = std::fs::read(cache) {
        return Ok(bytes);
    }
    let img = image::open(source).map_err(|e| e.to_string())?;
    let rule = ResizeRule {
        max_long_side: size,
        max_short_side: size,
    };
    let (w, h) = compute_target_dimensions(img.width(), img.height(), rule);
    let img = img.resize_exact(w, h, image::imageops::FilterType::Triangle);
    let bytes = encode_jpeg(&img, quality)?;
    if let Some(dir) = cache.parent() {
        std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    }
    // Concurrent renders of the same key race harmlessly: the rename is atomic.
    let tmp = cache.with_extension(format!("{}.tmp", std::process::id()));
    std::fs::write(&tmp, &bytes)
        .and_then(|_| std::fs::rename(&tmp, cache))
        .map_err(|e| e.to_string())?;
    Ok(bytes)
}
