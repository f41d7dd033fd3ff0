//! Seeded synthetic scenes and detector/teacher simulators.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`), seeded per image with
//! `seed ^ image_index`, so each image can be generated independently and
//! output is identical on every platform and thread count.
//!
//! Every scene becomes one labeled RGB image; configured geometry-cue
//! modalities add depth/normal views of the same frame with the same boxes
//! (ids from [`modality_image_id`]).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{
    modality_image_id, Annotation, Category, ClassSplit, Dataset, ImageRecord, Modality, Source,
    SplitKind,
};
use crate::error::{Error, Result};
use crate::evaluation::Detection;
use crate::geometry::{iou, BBox};
use crate::pseudolabel::Proposal;

/// Common classes of the default pool.
pub const COMMON_CLASSES: [&str; 7] = [
    "pedestrian",
    "cyclist",
    "car",
    "truck",
    "tram",
    "tricycle",
    "bus",
];

/// Stand-in road-hazard classes for the novel part of the default pool.
pub const NOVEL_CLASSES: [&str; 22] = [
    "traffic_cone",
    "barrier",
    "bollard",
    "warning_triangle",
    "dog",
    "cat",
    "bird",
    "stroller",
    "wheelchair",
    "debris",
    "concrete_block",
    "garbage_bin",
    "machinery",
    "misc_sign",
    "traffic_island",
    "fire_hydrant",
    "pipe",
    "plastic_bag",
    "sawhorse",
    "handcart",
    "animal_other",
    "misc_object",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub id: u64,
    pub name: String,
    pub split: SplitKind,
}

/// The 7 common + 22 novel class pool, ids 1..=29.
pub fn default_categories() -> Vec<CategorySpec> {
    COMMON_CLASSES
        .iter()
        .map(|n| (n, SplitKind::Common))
        .chain(NOVEL_CLASSES.iter().map(|n| (n, SplitKind::Novel)))
        .enumerate()
        .map(|(i, (name, split))| CategorySpec {
            id: i as u64 + 1,
            name: name.to_string(),
            split,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub width: u32,
    pub height: u32,
    /// Inclusive range of objects per image.
    pub objects_per_image: (usize, usize),
    pub categories: Vec<CategorySpec>,
    /// Inclusive range of box side lengths in pixels.
    pub box_size: (u32, u32),
    /// Largest IoU allowed between two ground-truth boxes of one image.
    pub max_iou: f64,
    /// Views generated per scene; must include `rgb`.
    pub modalities: Vec<Modality>,
    pub seed: u64,
    /// Placement attempts per object before giving up.
    pub max_attempts: usize,
    /// Reserved id for class-agnostic labels.
    pub agnostic_id: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            objects_per_image: (2, 8),
            categories: default_categories(),
            box_size: (16, 96),
            max_iou: 0.3,
            modalities: vec![Modality::Rgb],
            seed: 0,
            max_attempts: 1000,
            agnostic_id: 1000,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("image size must be positive");
        }
        if self.objects_per_image.0 > self.objects_per_image.1 {
            return bad("objects_per_image range is empty");
        }
        if self.box_size.0 == 0 || self.box_size.0 > self.box_size.1 {
            return bad("box_size range must be nonempty and positive");
        }
        if self.box_size.0 > self.width.min(self.height) {
            return bad("smallest box does not fit in the image");
        }
        if self.categories.is_empty() && self.objects_per_image.1 > 0 {
            return bad("category pool is empty");
        }
        if !(0.0..1.0).contains(&self.max_iou) {
            return bad("max_iou must lie in [0, 1)");
        }
        if !self.modalities.contains(&Modality::Rgb) {
            return bad("modalities must include rgb");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive");
        }
        self.class_split().map(|_| ())
    }

    pub fn class_split(&self) -> Result<ClassSplit> {
        let ids = |k: SplitKind| {
            self.categories
                .iter()
                .filter(move |c| c.split == k)
                .map(|c| c.id)
                .collect::<Vec<_>>()
        };
        ClassSplit::new(
            ids(SplitKind::Common),
            ids(SplitKind::Novel),
            self.agnostic_id,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScoreModel {
    /// Every emitted box scores 1.0.
    Perfect,
    /// True positives ~ U[0.6, 1.0]; false positives ~ U[0, 0.6 - margin].
    Calibrated { margin: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Std-dev of the Gaussian added to each corner, in pixels.
    pub jitter: f64,
    pub miss_rate_common: f64,
    pub miss_rate_novel: f64,
    /// Mean of the Poisson number of false positives per image.
    pub fp_rate: f64,
    pub score: ScoreModel,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::none()
    }
}

impl NoiseModel {
    /// A perfect detector.
    pub fn none() -> Self {
        Self {
            jitter: 0.0,
            miss_rate_common: 0.0,
            miss_rate_novel: 0.0,
            fp_rate: 0.0,
            score: ScoreModel::Perfect,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return Err(Error::Config(format!(
                "jitter must be >= 0, got {}",
                self.jitter
            )));
        }
        if !in_unit(self.miss_rate_common) || !in_unit(self.miss_rate_novel) {
            return Err(Error::Config("miss rates must lie in [0, 1]".into()));
        }
        if !(self.fp_rate.is_finite() && self.fp_rate >= 0.0) {
            return Err(Error::Config(format!(
                "fp_rate must be >= 0, got {}",
                self.fp_rate
            )));
        }
        if let ScoreModel::Calibrated { margin } = self.score {
            if !(0.0..=0.6).contains(&margin) {
                return Err(Error::Config(format!(
                    "score margin must lie in [0, 0.6], got {margin}"
                )));
            }
        }
        Ok(())
    }

    fn miss_rate(&self, split: Option<SplitKind>) -> f64 {
        match split {
            Some(SplitKind::Novel) => self.miss_rate_novel,
            _ => self.miss_rate_common,
        }
    }

    fn tp_score(&self, rng: &mut impl Rng) -> f64 {
        match self.score {
            ScoreModel::Perfect => 1.0,
            ScoreModel::Calibrated { .. } => rng.gen_range(0.6..=1.0),
        }
    }

    fn fp_score(&self, rng: &mut impl Rng) -> f64 {
        match self.score {
            ScoreModel::Perfect => 1.0,
            ScoreModel::Calibrated { margin } => rng.gen_range(0.0..=(0.6 - margin)),
        }
    }
}

fn image_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ index)
}

fn random_box(rng: &mut impl Rng, cfg_w: u32, cfg_h: u32, size: (u32, u32)) -> BBox {
    let w = rng.gen_range(size.0..=size.1.min(cfg_w));
    let h = rng.gen_range(size.0..=size.1.min(cfg_h));
    let x = rng.gen_range(0..=cfg_w - w);
    let y = rng.gen_range(0..=cfg_h - h);
    BBox::from_xywh(x as f64, y as f64, w as f64, h as f64).expect("positive size")
}

fn place_objects(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Result<Vec<(u64, BBox)>> {
    let count = rng.gen_range(cfg.objects_per_image.0..=cfg.objects_per_image.1);
    let mut placed: Vec<(u64, BBox)> = Vec::with_capacity(count);
    for _ in 0..count {
        let cat = cfg.categories[rng.gen_range(0..cfg.categories.len())].id;
        let mut attempt = 0;
        loop {
            let bbox = random_box(rng, cfg.width, cfg.height, cfg.box_size);
            if placed.iter().all(|(_, p)| iou(p, &bbox) <= cfg.max_iou) {
                placed.push((cat, bbox));
                break;
            }
            attempt += 1;
            if attempt >= cfg.max_attempts {
                return Err(Error::Unsatisfiable {
                    objects: count,
                    max_iou: cfg.max_iou,
                    attempts: cfg.max_attempts,
                });
            }
        }
    }
    Ok(placed)
}

/// Generate `n` scenes. Scene `k` (0-based) has RGB image id
/// `modality_image_id(k + 1, Rgb)`; annotation ids follow image order.
pub fn generate_scenes(cfg: &SceneConfig, n: usize) -> Result<Dataset> {
    cfg.validate()?;
    let scenes: Vec<Vec<(u64, BBox)>> = (0..n as u64)
        .into_par_iter()
        .map(|k| place_objects(cfg, &mut image_rng(cfg.seed, k)))
        .collect::<Result<_>>()?;

    let mut modalities = cfg.modalities.clone();
    modalities.sort();
    modalities.dedup();

    let mut images = Vec::new();
    let mut annotations = Vec::new();
    for (k, objects) in scenes.iter().enumerate() {
        for &m in &modalities {
            let id = modality_image_id(k as u64 + 1, m);
            images.push(ImageRecord {
                id,
                width: cfg.width,
                height: cfg.height,
                file_name: format!("scene_{:06}_{m}.png", k + 1),
                modality: m,
                source: Source::Labeled,
            });
            for &(cat, bbox) in objects {
                annotations.push(Annotation::new(annotations.len() as u64 + 1, id, cat, bbox));
            }
        }
    }
    let categories = cfg
        .categories
        .iter()
        .map(|c| Category {
            id: c.id,
            name: c.name.clone(),
            split: Some(c.split),
        })
        .collect();
    Dataset::new(images, annotations, categories)
}

fn jitter_box(
    rng: &mut impl Rng,
    bbox: &BBox,
    sigma: f64,
    width: f64,
    height: f64,
) -> Option<BBox> {
    if sigma == 0.0 {
        return Some(*bbox);
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let c = bbox.corners();
    let mut j = [0.0; 4];
    for (out, v) in j.iter_mut().zip(c) {
        *out = v + normal.sample(rng);
    }
    BBox::new(
        j[0].min(j[2]),
        j[1].min(j[3]),
        j[0].max(j[2]),
        j[1].max(j[3]),
    )
    .ok()
    .and_then(|b| b.clamp_to(width, height))
}

/// Noisy detections for the images of `ds`, keyed by an image filter.
fn simulate(
    ds: &Dataset,
    noise: &NoiseModel,
    seed: u64,
    keep_image: impl Fn(&ImageRecord) -> bool + Sync,
) -> Vec<Detection> {
    let split_of: BTreeMap<u64, Option<SplitKind>> =
        ds.categories.iter().map(|c| (c.id, c.split)).collect();
    let category_ids: Vec<u64> = ds.categories.iter().map(|c| c.id).collect();
    let by_image = ds.annotations_by_image();
    let per_image: Vec<Vec<Detection>> = ds
        .images
        .par_iter()
        .enumerate()
        .map(|(index, img)| {
            if !keep_image(img) {
                return vec![];
            }
            let mut rng = image_rng(seed, index as u64);
            let (w, h) = (img.width as f64, img.height as f64);
            let mut out = Vec::new();
            for ann in by_image.get(&img.id).into_iter().flatten() {
                let split = split_of.get(&ann.source_category()).copied().flatten();
                if rng.gen::<f64>() < noise.miss_rate(split) {
                    continue;
                }
                let Some(bbox) = jitter_box(&mut rng, &ann.bbox, noise.jitter, w, h) else {
                    continue;
                };
                out.push(Detection {
                    image_id: img.id,
                    category_id: ann.category_id,
                    bbox,
                    score: noise.tp_score(&mut rng),
                });
            }
            if noise.fp_rate > 0.0 && !category_ids.is_empty() {
                let count = Poisson::new(noise.fp_rate)
                    .expect("positive rate")
                    .sample(&mut rng) as usize;
                let side = (img.width.min(img.height) / 4).max(1);
                for _ in 0..count {
                    let bbox = random_box(&mut rng, img.width, img.height, (1, side));
                    let category_id = category_ids[rng.gen_range(0..category_ids.len())];
                    out.push(Detection {
                        image_id: img.id,
                        category_id,
                        bbox,
                        score: noise.fp_score(&mut rng),
                    });
                }
            }
            out
        })
        .collect();
    per_image.into_iter().flatten().collect()
}

/// Simulated class-aware detector over every image of `ds`.
pub fn simulate_detector(ds: &Dataset, noise: &NoiseModel, seed: u64) -> Result<Vec<Detection>> {
    noise.validate()?;
    Ok(simulate(ds, noise, seed, |_| true))
}

/// Simulated class-agnostic teacher on the geometry-cue images of `ds`.
/// Each modality draws from its own seed stream, so the views of one scene
/// get different boxes.
pub fn simulate_teacher(
    ds: &Dataset,
    noise: &BTreeMap<Modality, NoiseModel>,
    seed: u64,
) -> Result<Vec<Proposal>> {
    let mut out = Vec::new();
    for (&m, model) in noise {
        if !m.is_geometry_cue() {
            return Err(Error::Config(
                "teacher noise applies to depth/normal only".into(),
            ));
        }
        model.validate()?;
        let stream = seed ^ (m.code() << 56).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        out.extend(
            simulate(ds, model, stream, |img| img.modality == m)
                .into_iter()
                .map(|d| Proposal {
                    image_id: d.image_id,
                    modality: m,
                    bbox: d.bbox,
                    score: d.score,
                }),
        );
    }
    out.sort_by_key(|p| p.image_id);
    Ok(out)
}

/// Everything `cornercase synth` reads from its config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub scenes: SceneConfig,
    pub count: usize,
    pub detector: NoiseModel,
    pub teacher: BTreeMap<Modality, NoiseModel>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            scenes: SceneConfig {
                modalities: vec![Modality::Rgb, Modality::Depth, Modality::Normal],
                ..SceneConfig::default()
            },
            count: 20,
            detector: NoiseModel::none(),
            teacher: BTreeMap::from([
                (Modality::Depth, NoiseModel::none()),
                (Modality::Normal, NoiseModel::none()),
            ]),
        }
    }
}
