use cornercase::datamodel::{remap_agnostic, ClassSplit, Dataset, RemapMode};
use proptest::prelude::*;

/// A COCO-style document with `n_img` images, categories 1..=6 and random
/// boxes, some of which spill past the image edge.
fn arb_coco() -> impl Strategy<Value = String> {
    let ann = (
        1u64..4,
        1u64..7,
        -20.0..300f64,
        -20.0..300f64,
        0.1..200f64,
        0.1..200f64,
    );
    proptest::collection::vec(ann, 0..25).prop_map(|anns| {
        let anns: Vec<String> = anns
            .iter()
            .enumerate()
            .map(|(i, (img, cat, x, y, w, h))| {
                format!(
                    r#"{{"id": {}, "image_id": {img}, "category_id": {cat}, "bbox": [{x}, {y}, {w}, {h}]}}"#,
                    i + 1
                )
            })
            .collect();
        let images: Vec<String> = (1..4)
            .map(|i| format!(r#"{{"id": {i}, "width": 257, "height": 193, "file_name": "{i}.png"}}"#))
            .collect();
        let cats: Vec<String> = (1..7).map(|c| format!(r#"{{"id": {c}, "name": "c{c}"}}"#)).collect();
        format!(
            r#"{{"images": [{}], "annotations": [{}], "categories": [{}]}}"#,
            images.join(","),
            anns.join(","),
            cats.join(",")
        )
    })
}

fn split() -> ClassSplit {
    ClassSplit::new([1, 2, 3], [4, 5, 6], 1000).unwrap()
}

proptest! {
    #[test]
    fn load_serialize_load_is_fixed_point(doc in arb_coco()) {
        let first = Dataset::from_json(&doc, "gen").unwrap().dataset;
        let second = Dataset::from_json(&first.to_json(), "round").unwrap();
        prop_assert!(second.dropped.is_empty());
        prop_assert_eq!(&second.dataset, &first);
        prop_assert_eq!(second.dataset.to_json(), first.to_json());
    }

    #[test]
    fn clamped_boxes_stay_inside(doc in arb_coco()) {
        let ds = Dataset::from_json(&doc, "gen").unwrap().dataset;
        for a in &ds.annotations {
            prop_assert!(a.bbox.contained_in(257.0, 193.0));
        }
    }

    #[test]
    fn remap_is_idempotent(doc in arb_coco(), novel_only in any::<bool>()) {
        let ds = Dataset::from_json(&doc, "gen").unwrap().dataset;
        let mode = if novel_only { RemapMode::NovelOnly } else { RemapMode::All };
        let once = remap_agnostic(&ds, &split(), mode);
        let twice = remap_agnostic(&once, &split(), mode);
        prop_assert_eq!(&once, &twice);
        once.validate().unwrap();
        for (a, b) in ds.annotations.iter().zip(&once.annotations) {
            prop_assert_eq!(b.source_category(), a.category_id);
        }
    }
}
