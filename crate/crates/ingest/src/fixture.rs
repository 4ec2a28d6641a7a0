//! Synthetic corpora with planted vocabularies, for demos and tests.
//!
//! Every caption is built from one theme's nouns plus generic scene nouns
//! shared by all themes, so a working pipeline should group captions by theme
//! and label each group with theme nouns.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use capsight_core::cluster::{cluster_and_label, project_2d, Points, WardStorage};
use capsight_core::corpus::{ArtifactStore, Manifest, CAPTION_SPACE, VISUAL_SPACE};
use capsight_core::textlab::{CaptionTerms, RuleTagger};
use capsight_core::{EmbeddingSpace, Execution};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RetryPolicy;
use crate::mock::{MockCaptionProvider, MockEmbeddingProvider};
use crate::pipeline::{caption_store, embed_store, ingest_directory, CaptionSettings, EmbedSettings};
use crate::resize::ResizeRule;
use crate::source::StubImageSource;
use crate::IngestError;

#[derive(Debug, Clone, Copy)]
pub struct Theme {
    pub name: &'static str,
    pub nouns: &'static [&'static str],
    pub rgb: [u8; 3],
}

pub const THEMES: [Theme; 4] = [
    Theme {
        name: "farm",
        nouns: &[
            "barn", "cow", "tractor", "hay", "pasture", "silo", "farmer", "fence", "cornfield",
            "wheelbarrow", "orchard", "calf",
        ],
        rgb: [120, 160, 60],
    },
    Theme {
        name: "city",
        nouns: &[
            "subway", "skyscraper", "taxi", "sidewalk", "pedestrian", "storefront", "bus",
            "billboard", "crosswalk", "streetlight", "newsstand", "hydrant",
        ],
        rgb: [110, 110, 130],
    },
    Theme {
        name: "coast",
        nouns: &[
            "beach", "wave", "sailboat", "pier", "sand", "shoreline", "gull", "harbor",
            "lighthouse", "dune", "surfer", "seaweed",
        ],
        rgb: [60, 140, 200],
    },
    Theme {
        name: "industry",
        nouns: &[
            "smokestack", "factory", "refinery", "pipeline", "chimney", "smog", "furnace",
            "crane", "warehouse", "forklift", "boiler", "conveyor",
        ],
        rgb: [150, 90, 50],
    },
];

const GENERIC: &[&str] = &[
    "sky", "tree", "person", "building", "road", "car", "cloud", "wall", "window", "shadow",
    "ground", "hill",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureCaption {
    pub id: String,
    pub theme: usize,
    pub text: String,
}

fn sentence(rng: &mut ChaCha8Rng, theme: &Theme) -> String {
    let t: Vec<&str> = theme.nouns.choose_multiple(rng, 8).copied().collect();
    let g: Vec<&str> = GENERIC.choose_multiple(rng, 3).copied().collect();
    let verb = if rng.random_bool(0.3) { "possibly shows" } else { "shows" };
    format!(
        "The photograph {verb} a {} and a {} beside the {}. In the background there is a {}, a {} and the {}. The scene also includes a {}, a {}, a {} and a {}.",
        t[0], t[1], t[2], g[0], t[3], g[1], t[4], t[5], t[6], t[7]
    )
}

/// `n` captions cycling through the four themes.
pub fn synthetic_captions(n: usize, seed: u64) -> Vec<FixtureCaption> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let theme = i % THEMES.len();
            FixtureCaption {
                id: format!("p{i:04}"),
                theme,
                text: sentence(&mut rng, &THEMES[theme]),
            }
        })
        .collect()
}

/// Writes one PNG per caption plus a JSON sidecar carrying the caption text
/// as `metadata.caption`, which the mock captioner echoes back.
pub fn write_fixture_images(
    dir: &Path,
    captions: &[FixtureCaption],
    size: (u32, u32),
) -> Result<(), IngestError> {
    std::fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
    for (i, c) in captions.iter().enumerate() {
        let [r, g, b] = THEMES[c.theme].rgb;
        let shade = (i % 40) as u8;
        let img = image::RgbImage::from_fn(size.0, size.1, |x, y| {
            let v = ((x + y) % 16) as u8;
            image::Rgb([r.saturating_add(shade + v), g.saturating_add(v), b.saturating_add(shade)])
        });
        let path = dir.join(format!("{}.png", c.id));
        img.save(&path).map_err(|e| IngestError::Image {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let mut metadata = BTreeMap::new();
        metadata.insert("caption".to_string(), c.text.clone());
        metadata.insert("theme".to_string(), THEMES[c.theme].name.to_string());
        let sidecar = serde_json::json!({
            "title": format!("{} scene {}", THEMES[c.theme].name, i),
            "metadata": metadata,
        });
        let sp = dir.join(format!("{}.json", c.id));
        std::fs::write(&sp, sidecar.to_string()).map_err(|e| IngestError::io(&sp, e))?;
    }
    Ok(())
}

/// Random unit-free vectors standing in for a visual embedding: theme mean
/// plus noise, so visual neighbors agree with caption neighbors only loosely.
pub fn synthetic_visual_space(
    captions: &[FixtureCaption],
    dim: usize,
    seed: u64,
) -> Result<EmbeddingSpace, IngestError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let centers: Vec<Vec<f32>> = (0..THEMES.len())
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect())
        .collect();
    let mut space = EmbeddingSpace::new(VISUAL_SPACE, dim)?;
    for c in captions {
        let v: Vec<f32> = centers[c.theme]
            .iter()
            .map(|m| m + rng.random_range(-1.5f32..1.5))
            .collect();
        space.push(c.id.clone(), &v)?;
    }
    Ok(space)
}

#[derive(Debug, Clone, Copy)]
pub struct FixtureOptions {
    pub n: usize,
    pub seed: u64,
    pub dimension: usize,
    pub k: usize,
    pub image_size: (u32, u32),
    /// Ids `p0000`.. of this many images are refused by the mock captioner.
    pub rejected: usize,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        FixtureOptions {
            n: 80,
            seed: 7,
            dimension: 256,
            k: 4,
            image_size: (320, 240),
            rejected: 0,
        }
    }
}

/// Runs the full mock pipeline into `artifacts`: scan, caption, embed, a
/// synthetic visual space, clusters with labels and a projection.
pub async fn build_fixture_corpus(
    images: &Path,
    artifacts: &Path,
    opts: FixtureOptions,
) -> Result<(ArtifactStore, Vec<FixtureCaption>), IngestError> {
    let captions = synthetic_captions(opts.n, opts.seed);
    write_fixture_images(images, &captions, opts.image_size)?;
    let store = ArtifactStore::new(artifacts);
    std::fs::create_dir_all(artifacts).map_err(|e| IngestError::io(artifacts, e))?;

    let mut manifest = Manifest::new();
    ingest_directory(&mut manifest, images, ResizeRule::default())?;
    store.save_manifest(&manifest)?;

    let mut captioner = MockCaptionProvider::new();
    for c in captions.iter().take(opts.rejected) {
        captioner = captioner.script(
            c.id.clone(),
            crate::mock::MockScript::Reject(crate::mock::SAFETY_REFUSAL.into()),
        );
    }
    let mut cs = CaptionSettings::from_config(&crate::Config::default());
    cs.retry = RetryPolicy::immediate(1);
    caption_store(&store, &captioner, Arc::new(StubImageSource), &cs).await?;

    let embedder = MockEmbeddingProvider::new(opts.dimension, opts.seed);
    let mut es = EmbedSettings::from_config(&crate::Config::default());
    es.retry = RetryPolicy::immediate(1);
    let (space, _) = embed_store(&store, &embedder, &es, true).await?;

    let kept: Vec<FixtureCaption> = captions.iter().skip(opts.rejected).cloned().collect();
    store.save_space(&synthetic_visual_space(&kept, 32, opts.seed)?)?;

    let manifest = store.load_manifest()?;
    let terms = CaptionTerms::build(
        manifest.captions().map(|c| (c.image_id.as_str(), c.text.as_str())),
        &RuleTagger::default(),
    );
    let assignment = cluster_and_label(
        Points::from(&space),
        space.ids(),
        CAPTION_SPACE,
        opts.k,
        &terms,
        WardStorage::Auto,
        Execution::default(),
    )
    .map_err(|e| IngestError::Config(format!("fixture clustering: {e}")))?;
    store.save_json(&store.clusters_path(), &assignment)?;
    let projection =
        project_2d(&space).map_err(|e| IngestError::Config(format!("fixture projection: {e}")))?;
    store.save_json(&store.projection_path(), &projection)?;
    Ok((store, captions))
}
