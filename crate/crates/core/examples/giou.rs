//! IoU, GIoU and the GIoU loss for a few box pairs.
//!
//!     cargo run --example giou

use cornercase::geometry::{enclosing_box, giou, iou};
use cornercase::losses::giou_loss;
use cornercase::BBox;

fn main() -> cornercase::Result<()> {
    let a = BBox::new(0.0, 0.0, 1.0, 1.0)?;
    let pairs = [
        ("identical", a),
        ("half overlap", BBox::new(0.5, 0.0, 1.5, 1.0)?),
        ("touching", BBox::new(1.0, 0.0, 2.0, 1.0)?),
        ("gap of one", BBox::new(2.0, 0.0, 3.0, 1.0)?),
        ("far away", BBox::new(20.0, 20.0, 21.0, 21.0)?),
    ];
    println!(
        "{:<14} {:>8} {:>8} {:>8}  hull",
        "pair", "iou", "giou", "loss"
    );
    for (name, b) in pairs {
        println!(
            "{name:<14} {:>8.4} {:>8.4} {:>8.4}  {:?}",
            iou(&a, &b),
            giou(&a, &b),
            giou_loss(&a, &b),
            enclosing_box(&a, &b).corners()
        );
    }
    // disjoint boxes still get a graded signal: giou keeps falling as they separate
    Ok(())
}
