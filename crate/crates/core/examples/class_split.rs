//! Load a COCO-style file, tag common/novel classes and collapse novel
//! classes to the agnostic id.
//!
//!     cargo run --example class_split

use std::path::Path;

use cornercase::datamodel::{
    apply_class_split, load_dataset, remap_agnostic, ClassSplitFile, RemapMode,
};

fn main() -> cornercase::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let ingested = load_dataset(dir.join("coda_mini.json"))?;
    let ds = ingested.dataset;
    println!(
        "{} images, {} annotations, {} categories, {} dropped",
        ds.images.len(),
        ds.annotations.len(),
        ds.categories.len(),
        ingested.dropped.len()
    );

    let split = ClassSplitFile::load(dir.join("coda_split.json"))?.resolve(&ds)?;
    let tagged = apply_class_split(&ds, &split)?;
    for ann in &tagged.annotations {
        let cat = tagged.category(ann.category_id).expect("validated");
        println!(
            "  ann {:>2}  {:<14} {:?}",
            ann.id,
            cat.name,
            cat.split.expect("tagged")
        );
    }

    let remapped = remap_agnostic(&tagged, &split, RemapMode::NovelOnly);
    let agnostic = remapped
        .annotations
        .iter()
        .filter(|a| a.category_id == split.agnostic_id())
        .count();
    println!(
        "novel-only remap: {agnostic} annotations now use id {}",
        split.agnostic_id()
    );
    assert_eq!(
        remap_agnostic(&remapped, &split, RemapMode::NovelOnly),
        remapped
    );
    Ok(())
}
