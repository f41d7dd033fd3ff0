//! A perfect detector scores exactly 1 on every metric; no detections score 0.
//!
//!     cargo run --example synthetic_closure

use cornercase::evaluation::{evaluate_coda, EvalConfig};
use cornercase::synth::{generate_scenes, simulate_detector, NoiseModel, SceneConfig};

fn main() -> cornercase::Result<()> {
    let scenes = SceneConfig {
        seed: 2024,
        ..SceneConfig::default()
    };
    let split = scenes.class_split()?;
    let ds = generate_scenes(&scenes, 30)?;
    let dets = simulate_detector(&ds, &NoiseModel::none(), 0)?;
    let cfg = EvalConfig::coco();

    let perfect = evaluate_coda(&dets, &ds, &split, &cfg)?;
    let empty = evaluate_coda(&[], &ds, &split, &cfg)?;
    println!(
        "{} images, {} objects",
        ds.images.len(),
        ds.annotations.len()
    );
    println!("perfect: {:?}", perfect.headline());
    println!("empty:   {:?}", empty.headline());
    assert_eq!(perfect.headline(), [Some(1.0); 4]);
    assert_eq!(empty.headline(), [Some(0.0); 4]);
    Ok(())
}
