//! Teacher proposals on depth/normal views become agnostic pseudo labels
//! and are merged with the labeled RGB frames.
//!
//!     cargo run --example pseudo_label_pipeline

use std::collections::BTreeMap;

use cornercase::datamodel::{ImageRecord, Modality};
use cornercase::pseudolabel::{
    generate_pseudo_records, merge_datasets, pseudo_dataset, PseudoLabelConfig,
};
use cornercase::synth::{generate_scenes, simulate_teacher, NoiseModel, SceneConfig, ScoreModel};

fn main() -> cornercase::Result<()> {
    let scenes = SceneConfig {
        modalities: vec![Modality::Rgb, Modality::Depth, Modality::Normal],
        seed: 42,
        ..SceneConfig::default()
    };
    let split = scenes.class_split()?;
    let full = generate_scenes(&scenes, 20)?;
    let labeled = full.filter_modality(Modality::Rgb);

    let teacher = NoiseModel {
        jitter: 2.0,
        miss_rate_common: 0.05,
        miss_rate_novel: 0.15,
        fp_rate: 2.0,
        score: ScoreModel::Calibrated { margin: 0.1 },
    };
    let noise = BTreeMap::from([(Modality::Depth, teacher), (Modality::Normal, teacher)]);
    let proposals = simulate_teacher(&full, &noise, 7)?;

    let cfg = PseudoLabelConfig::default();
    let records = generate_pseudo_records(&proposals, &cfg, &split);
    println!(
        "{} proposals -> {} pseudo labels (tau {}, nms {})",
        proposals.len(),
        records.annotations.len(),
        cfg.score_threshold,
        cfg.nms_iou
    );

    let geometry: Vec<ImageRecord> = full
        .images
        .iter()
        .filter(|i| i.modality.is_geometry_cue())
        .cloned()
        .collect();
    let pseudo = pseudo_dataset(&geometry, records.annotations, &split)?;
    let merged = merge_datasets(&labeled, std::slice::from_ref(&pseudo))?;
    println!(
        "merged: {} images, {} = {} labeled + {} pseudo annotations",
        merged.images.len(),
        merged.annotations.len(),
        labeled.annotations.len(),
        pseudo.annotations.len()
    );
    Ok(())
}
