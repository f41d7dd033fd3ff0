//! Analytic loss gradients against central differences.
//!
//!     cargo run --example gradient_check

use cornercase::cli::{loss_check, LossKind};
use cornercase::datamodel::ImageRecord;
use cornercase::losses::{grad_check, DiffLoss, LossWeights};
use cornercase::BBox;

fn main() -> cornercase::Result<()> {
    // one box-loss case by hand
    let target = BBox::new(40.0, 30.0, 120.0, 90.0)?;
    let loss = DiffLoss::Box {
        target,
        weights: LossWeights::default(),
        image: ImageRecord::new(1, 640, 480),
    };
    let pred = [35.0, 41.0, 113.0, 97.0];
    println!("box loss      {:.6}", loss.value(&pred)?);
    println!("gradient      {:?}", loss.grad(&pred)?);
    println!("rel. error    {:.2e}", grad_check(&loss, &pred, 1e-5)?);

    // identical boxes sit on a kink: no gradient there
    match loss.grad(&target.corners()) {
        Err(e) => println!("at identity   {e}"),
        Ok(g) => println!("at identity   {g:?}"),
    }

    println!();
    for kind in [
        LossKind::Giou,
        LossKind::L1,
        LossKind::Box,
        LossKind::Focal,
        LossKind::SoftToken,
    ] {
        let worst = loss_check(kind, 100, 1e-5, 0)?;
        println!("{kind:<10?} worst of 100 random points: {worst:.2e}");
    }
    Ok(())
}
