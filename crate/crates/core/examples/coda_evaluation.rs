//! Open-world metrics on a synthetic scene set with a noisy detector.
//!
//!     cargo run --example coda_evaluation

use cornercase::datamodel::Modality;
use cornercase::evaluation::{evaluate_coda, evaluate_common, EvalConfig};
use cornercase::synth::{generate_scenes, simulate_detector, NoiseModel, SceneConfig, ScoreModel};

fn main() -> cornercase::Result<()> {
    let scenes = SceneConfig {
        modalities: vec![Modality::Rgb],
        seed: 1,
        ..SceneConfig::default()
    };
    let split = scenes.class_split()?;
    let ds = generate_scenes(&scenes, 50)?;
    let cfg = EvalConfig::coco();

    // a detector that knows the common classes well and misses most novel ones
    for (label, miss_novel) in [("closed-set-ish", 0.8), ("open-world-ish", 0.2)] {
        let noise = NoiseModel {
            jitter: 2.0,
            miss_rate_common: 0.1,
            miss_rate_novel: miss_novel,
            fp_rate: 1.0,
            score: ScoreModel::Calibrated { margin: 0.1 },
        };
        let dets = simulate_detector(&ds, &noise, 3)?;
        let r = evaluate_coda(&dets, &ds, &split, &cfg)?;
        let common = evaluate_common(&dets, &ds, &cfg)?;
        let f = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
        println!(
            "{label:<15} AR-corner {}  AR-agn {}  AP-agn {}  AP-common {}  | recall@.5 {}  mAP50 {}",
            f(r.ar_agnostic_corner),
            f(r.ar_agnostic),
            f(r.ap_agnostic),
            f(r.ap_common),
            f(common.recall),
            f(common.map50)
        );
    }
    Ok(())
}
