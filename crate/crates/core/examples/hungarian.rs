//! Optimal prediction-to-object assignment with the matcher cost.
//!
//!     cargo run --example hungarian

use std::collections::BTreeMap;

use cornercase::datamodel::{Annotation, ImageRecord};
use cornercase::matching::{
    cost_matrix, hungarian, match_predictions, CostMatrix, MatchWeights, ScoredPrediction,
};
use cornercase::BBox;

fn main() -> cornercase::Result<()> {
    // a raw cost matrix: three predictions, two objects
    let c = CostMatrix::from_rows(&[vec![4.0, 1.0], vec![2.0, 0.5], vec![3.0, 2.0]])?;
    let a = hungarian(&c);
    println!(
        "pairs {:?}, cost {}, unmatched {:?}",
        a.pairs, a.total_cost, a.unmatched_predictions
    );

    // the same thing driven by boxes and class probabilities
    let image = ImageRecord::new(1, 200, 100);
    let gts = vec![
        Annotation::new(1, 1, 3, BBox::new(10.0, 10.0, 60.0, 50.0)?),
        Annotation::new(2, 1, 7, BBox::new(120.0, 20.0, 180.0, 90.0)?),
    ];
    let pred = |x1, y1, x2, y2, p3, p7| -> cornercase::Result<ScoredPrediction> {
        Ok(ScoredPrediction {
            bbox: BBox::new(x1, y1, x2, y2)?,
            class_probs: BTreeMap::from([(3, p3), (7, p7)]),
        })
    };
    let preds = vec![
        pred(118.0, 25.0, 175.0, 88.0, 0.1, 0.8)?,
        pred(0.0, 0.0, 30.0, 30.0, 0.4, 0.4)?,
        pred(12.0, 8.0, 62.0, 52.0, 0.7, 0.2)?,
    ];
    let w = MatchWeights::default();
    for row in cost_matrix(&preds, &gts, &w, &image)?.to_rows() {
        println!(
            "{:?}",
            row.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()
        );
    }
    let m = match_predictions(&preds, &gts, &w, &image)?;
    println!(
        "matched {:?}, no-object predictions {:?}",
        m.pairs, m.unmatched_predictions
    );
    Ok(())
}
