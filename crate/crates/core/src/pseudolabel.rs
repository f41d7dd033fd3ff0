//! Teacher proposals to pseudo-annotations, and merging pseudo-labeled
//! geometry-cue images into the labeled set.
//!
//! Pseudo boxes are class-agnostic: every one carries the split's agnostic
//! category id and `is_pseudo = true`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::{
    base_image_id, modality_image_id, Annotation, Category, ClassSplit, Dataset, ImageRecord,
    Modality, Source, AGNOSTIC_NAME,
};
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub image_id: u64,
    pub modality: Modality,
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoLabelConfig {
    pub score_threshold: f64,
    pub nms_iou: f64,
    pub max_per_image: usize,
}

impl PseudoLabelConfig {
    pub fn new(score_threshold: f64, nms_iou: f64, max_per_image: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&score_threshold) {
            return Err(Error::Config(format!(
                "score threshold must be in [0, 1], got {score_threshold}"
            )));
        }
        if !(nms_iou > 0.0 && nms_iou <= 1.0) {
            return Err(Error::Config(format!(
                "NMS IoU must be in (0, 1], got {nms_iou}"
            )));
        }
        if max_per_image == 0 {
            return Err(Error::Config("max_per_image must be positive".into()));
        }
        Ok(Self {
            score_threshold,
            nms_iou,
            max_per_image,
        })
    }
}

impl Default for PseudoLabelConfig {
    fn default() -> Self {
        Self {
            score_threshold: 0.7,
            nms_iou: 0.5,
            max_per_image: 100,
        }
    }
}

/// Proposals with `score >= tau`, in input order.
pub fn filter_proposals(props: &[Proposal], tau: f64) -> Vec<Proposal> {
    props.iter().filter(|p| p.score >= tau).cloned().collect()
}

/// Greedy non-maximum suppression.
///
/// Returns indices of kept boxes ordered by descending score (ties by
/// smaller index). A box is suppressed when its IoU with an already kept
/// box exceeds `iou_thresh`.
pub fn nms(dets: &[(BBox, f64)], iou_thresh: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].1.total_cmp(&dets[a].1).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept
            .iter()
            .all(|&k| iou(&dets[k].0, &dets[i].0) <= iou_thresh)
        {
            kept.push(i);
        }
    }
    kept
}

/// Output of [`generate_pseudo_records`].
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoRecords {
    pub annotations: Vec<Annotation>,
    /// Proposals rejected for sitting on RGB images.
    pub rejected: usize,
}

/// Filter, suppress per image, truncate, and emit agnostic pseudo
/// annotations. Annotation ids run from 1 in (image id, rank) order.
pub fn generate_pseudo_records(
    props: &[Proposal],
    cfg: &PseudoLabelConfig,
    split: &ClassSplit,
) -> PseudoRecords {
    let mut rejected = 0;
    let mut per_image: BTreeMap<u64, Vec<(BBox, f64)>> = BTreeMap::new();
    for p in filter_proposals(props, cfg.score_threshold) {
        if !p.modality.is_geometry_cue() {
            rejected += 1;
            continue;
        }
        per_image
            .entry(p.image_id)
            .or_default()
            .push((p.bbox, p.score));
    }
    if rejected > 0 {
        log::warn!("rejected {rejected} proposal(s) on RGB images");
    }
    let mut annotations = Vec::new();
    for (image_id, boxes) in per_image {
        for k in nms(&boxes, cfg.nms_iou).into_iter().take(cfg.max_per_image) {
            let mut ann = Annotation::new(
                annotations.len() as u64 + 1,
                image_id,
                split.agnostic_id(),
                boxes[k].0,
            );
            ann.is_pseudo = true;
            annotations.push(ann);
        }
    }
    PseudoRecords {
        annotations,
        rejected,
    }
}

/// Label geometry-cue images with the annotations of their RGB frame
/// instead of teacher boxes. Labels stay class-agnostic and pseudo.
pub fn pseudo_records_from_rgb(
    labeled: &Dataset,
    images: &[ImageRecord],
    split: &ClassSplit,
) -> Result<Vec<Annotation>> {
    let by_image = labeled.annotations_by_image();
    let mut out = Vec::new();
    for img in images {
        let rgb = modality_image_id(base_image_id(img.id), Modality::Rgb);
        if labeled.image(rgb).is_none() {
            return Err(Error::DanglingReference {
                kind: "rgb image",
                id: rgb,
            });
        }
        for src in by_image.get(&rgb).into_iter().flatten() {
            let Some(bbox) = src.bbox.clamp_to(img.width as f64, img.height as f64) else {
                continue;
            };
            let mut ann = Annotation::new(out.len() as u64 + 1, img.id, split.agnostic_id(), bbox);
            ann.is_pseudo = true;
            ann.original_category_id = Some(src.source_category());
            out.push(ann);
        }
    }
    Ok(out)
}

/// Wrap pseudo annotations for `images` as a dataset carrying the agnostic
/// category.
pub fn pseudo_dataset(
    images: &[ImageRecord],
    annotations: Vec<Annotation>,
    split: &ClassSplit,
) -> Result<Dataset> {
    let images = images
        .iter()
        .cloned()
        .map(|mut i| {
            i.source = Source::Pseudo;
            i
        })
        .collect();
    Dataset::new(
        images,
        annotations,
        vec![Category {
            id: split.agnostic_id(),
            name: AGNOSTIC_NAME.to_string(),
            split: None,
        }],
    )
}

/// Merge pseudo-labeled image sets into the labeled dataset.
///
/// Pseudo annotation ids are renumbered after the largest id already
/// present, set by set. Output is sorted by image id, then annotation id.
pub fn merge_datasets(labeled: &Dataset, pseudo_sets: &[Dataset]) -> Result<Dataset> {
    let mut merged = labeled.clone();
    let mut image_ids: HashSet<u64> = merged.images.iter().map(|i| i.id).collect();
    let mut categories: HashMap<u64, String> = merged
        .categories
        .iter()
        .map(|c| (c.id, c.name.clone()))
        .collect();

    for set in pseudo_sets {
        for img in &set.images {
            if !image_ids.insert(img.id) {
                return Err(Error::DuplicateId {
                    kind: "image",
                    id: img.id,
                });
            }
            merged.images.push(img.clone());
        }
        for cat in &set.categories {
            match categories.get(&cat.id) {
                Some(name) if name != &cat.name => {
                    return Err(Error::Invalid(format!(
                        "category {} is {name:?} in one set and {:?} in another",
                        cat.id, cat.name
                    )))
                }
                Some(_) => {}
                None => {
                    categories.insert(cat.id, cat.name.clone());
                    merged.categories.push(cat.clone());
                }
            }
        }
        let first = merged.annotations.iter().map(|a| a.id).max().unwrap_or(0) + 1;
        let mut anns: Vec<&Annotation> = set.annotations.iter().collect();
        anns.sort_by_key(|a| (a.image_id, a.id));
        for (id, a) in (first..).zip(anns) {
            merged.annotations.push(Annotation { id, ..a.clone() });
        }
    }
    merged.images.sort_by_key(|i| i.id);
    merged.annotations.sort_by_key(|a| (a.image_id, a.id));
    merged.validate()?;
    Ok(merged)
}

#[derive(Debug, Serialize, Deserialize)]
struct ProposalLine {
    image_id: u64,
    modality: Modality,
    bbox: [f64; 4],
    score: f64,
}

/// Parse newline-delimited proposal records.
pub fn parse_proposals(text: &str, origin: &str) -> Result<Vec<Proposal>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for (n, line) in text.split_inclusive('\n').enumerate() {
        let start = offset;
        offset += line.len();
        if line.trim().is_empty() {
            continue;
        }
        let rec: ProposalLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: origin.to_string(),
            offset: start + e.column().saturating_sub(1),
            line: n + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        if !(0.0..=1.0).contains(&rec.score) {
            return Err(Error::Invalid(format!(
                "{origin}:{}: score {} outside [0, 1]",
                n + 1,
                rec.score
            )));
        }
        let [x, y, w, h] = rec.bbox;
        let bbox = BBox::from_xywh(x, y, w, h)
            .map_err(|e| Error::Invalid(format!("{origin}:{}: {e}", n + 1)))?;
        out.push(Proposal {
            image_id: rec.image_id,
            modality: rec.modality,
            bbox,
            score: rec.score,
        });
    }
    Ok(out)
}

pub fn load_proposals(path: impl AsRef<Path>) -> Result<Vec<Proposal>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_proposals(&text, &path.display().to_string())
}

pub fn write_proposals(mut w: impl Write, props: &[Proposal]) -> std::io::Result<()> {
    for p in props {
        let line = ProposalLine {
            image_id: p.image_id,
            modality: p.modality,
            bbox: p.bbox.to_xywh(),
            score: p.score,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Check proposals against the image table: the image must exist and
/// have the proposal's modality.
pub fn check_proposal_images(props: &[Proposal], images: &[ImageRecord]) -> Result<()> {
    let index: HashMap<u64, &ImageRecord> = images.iter().map(|i| (i.id, i)).collect();
    for p in props {
        let img = index.get(&p.image_id).ok_or(Error::DanglingReference {
            kind: "image",
            id: p.image_id,
        })?;
        if img.modality != p.modality {
            return Err(Error::Invalid(format!(
                "proposal says image {} is {}, image table says {}",
                p.image_id, p.modality, img.modality
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn prop(image_id: u64, modality: Modality, bbox: BBox, score: f64) -> Proposal {
        Proposal {
            image_id,
            modality,
            bbox,
            score,
        }
    }

    fn split() -> ClassSplit {
        ClassSplit::new([1], [2], 99).unwrap()
    }

    #[test]
    fn filter_examples() {
        let props: Vec<_> = [0.5, 0.71, 0.9]
            .iter()
            .map(|&s| prop(1, Modality::Depth, b(0.0, 0.0, 1.0, 1.0), s))
            .collect();
        assert_eq!(filter_proposals(&props, 0.0), props);
        assert_eq!(filter_proposals(&props, 0.7).len(), 2);
        let two: Vec<_> = [0.3, 0.9]
            .iter()
            .map(|&s| prop(1, Modality::Depth, b(0.0, 0.0, 1.0, 1.0), s))
            .collect();
        assert!(filter_proposals(&two, 1.0).is_empty());
        let mut exact = two.clone();
        exact[0].score = 1.0;
        assert_eq!(filter_proposals(&exact, 1.0).len(), 1);
    }

    #[test]
    fn nms_examples() {
        let single = [(b(0.0, 0.0, 1.0, 1.0), 0.4)];
        assert_eq!(nms(&single, 0.5), vec![0]);

        let dup = [(b(0.0, 0.0, 4.0, 4.0), 0.8), (b(0.0, 0.0, 4.0, 4.0), 0.9)];
        assert_eq!(nms(&dup, 0.5), vec![1]);

        // IoU(A,B) = IoU(B,C) = 0.6, IoU(A,C) = 1/3
        let chain = [
            (b(0.0, 0.0, 10.0, 10.0), 0.9),
            (b(2.5, 0.0, 12.5, 10.0), 0.8),
            (b(5.0, 0.0, 15.0, 10.0), 0.7),
        ];
        assert!((iou(&chain[0].0, &chain[1].0) - 0.6).abs() < 1e-12);
        assert!((iou(&chain[1].0, &chain[2].0) - 0.6).abs() < 1e-12);
        assert_eq!(nms(&chain, 0.5), vec![0, 2]);
    }

    #[test]
    fn nms_ties_keep_input_order() {
        let boxes = [
            (b(0.0, 0.0, 1.0, 1.0), 0.5),
            (b(5.0, 5.0, 6.0, 6.0), 0.5),
            (b(0.0, 0.0, 1.0, 1.0), 0.5),
        ];
        assert_eq!(nms(&boxes, 0.5), vec![0, 1]);
    }

    #[test]
    fn empty_proposals_give_nothing() {
        let out = generate_pseudo_records(&[], &PseudoLabelConfig::default(), &split());
        assert!(out.annotations.is_empty());
    }

    #[test]
    fn disjoint_proposals_all_survive() {
        let props: Vec<_> = (0..5)
            .map(|i| {
                let x = 20.0 * i as f64;
                prop(11, Modality::Depth, b(x, 0.0, x + 10.0, 10.0), 0.9)
            })
            .collect();
        let out = generate_pseudo_records(&props, &PseudoLabelConfig::default(), &split());
        assert_eq!(out.annotations.len(), 5);
        assert!(out
            .annotations
            .iter()
            .all(|a| a.category_id == 99 && a.is_pseudo));
    }

    #[test]
    fn hand_traced_fixture() {
        // image 11 (depth): A 0.95, A' (IoU 0.81 with A) 0.9, B 0.8, C 0.65
        // image 12 (normal): D 0.75, E 0.72 (IoU 0.6 with D), F 0.99, G 0.3
        // image 20 (rgb):   H 0.9 -> rejected
        // image 11 (depth): I 0.71 overlapping B at IoU 1/3 -> kept
        let props = vec![
            prop(11, Modality::Depth, b(0.0, 0.0, 10.0, 10.0), 0.95),
            prop(11, Modality::Depth, b(0.0, 0.0, 9.0, 9.0), 0.9),
            prop(11, Modality::Depth, b(50.0, 50.0, 60.0, 60.0), 0.8),
            prop(11, Modality::Depth, b(20.0, 20.0, 30.0, 30.0), 0.65),
            prop(12, Modality::Normal, b(0.0, 0.0, 10.0, 10.0), 0.75),
            prop(12, Modality::Normal, b(2.5, 0.0, 12.5, 10.0), 0.72),
            prop(12, Modality::Normal, b(40.0, 0.0, 50.0, 10.0), 0.99),
            prop(12, Modality::Normal, b(70.0, 0.0, 80.0, 10.0), 0.3),
            prop(20, Modality::Rgb, b(0.0, 0.0, 5.0, 5.0), 0.9),
            prop(11, Modality::Depth, b(55.0, 50.0, 65.0, 60.0), 0.71),
        ];
        let cfg = PseudoLabelConfig::new(0.7, 0.5, 100).unwrap();
        let out = generate_pseudo_records(&props, &cfg, &split());
        assert_eq!(out.rejected, 1);
        let got: Vec<(u64, u64, [f64; 4])> = out
            .annotations
            .iter()
            .map(|a| (a.id, a.image_id, a.bbox.corners()))
            .collect();
        assert_eq!(
            got,
            vec![
                (1, 11, [0.0, 0.0, 10.0, 10.0]),
                (2, 11, [50.0, 50.0, 60.0, 60.0]),
                (3, 11, [55.0, 50.0, 65.0, 60.0]),
                (4, 12, [40.0, 0.0, 50.0, 10.0]),
                (5, 12, [0.0, 0.0, 10.0, 10.0]),
            ]
        );
    }

    #[test]
    fn max_per_image_truncates() {
        let props: Vec<_> = (0..10)
            .map(|i| {
                let x = 20.0 * i as f64;
                prop(
                    11,
                    Modality::Depth,
                    b(x, 0.0, x + 10.0, 10.0),
                    0.8 + i as f64 * 0.01,
                )
            })
            .collect();
        let cfg = PseudoLabelConfig::new(0.7, 0.5, 3).unwrap();
        let out = generate_pseudo_records(&props, &cfg, &split());
        let xs: Vec<f64> = out.annotations.iter().map(|a| a.bbox.x1()).collect();
        assert_eq!(xs, vec![180.0, 160.0, 140.0]);
    }

    fn labeled(n: u64) -> Dataset {
        let images = (1..=n)
            .map(|k| ImageRecord::new(modality_image_id(k, Modality::Rgb), 100, 100))
            .collect();
        let anns = (1..=n)
            .map(|k| {
                Annotation::new(
                    k,
                    modality_image_id(k, Modality::Rgb),
                    1,
                    b(1.0, 1.0, 9.0, 9.0),
                )
            })
            .collect();
        let cats = vec![
            Category {
                id: 1,
                name: "car".into(),
                split: None,
            },
            Category {
                id: 2,
                name: "cone".into(),
                split: None,
            },
        ];
        Dataset::new(images, anns, cats).unwrap()
    }

    fn geometry_set(n: u64, m: Modality) -> Dataset {
        let images: Vec<_> = (1..=n)
            .map(|k| {
                let mut i = ImageRecord::new(modality_image_id(k, m), 100, 100);
                i.modality = m;
                i
            })
            .collect();
        let props: Vec<_> = images
            .iter()
            .map(|i| prop(i.id, m, b(2.0, 2.0, 8.0, 8.0), 0.9))
            .collect();
        let recs = generate_pseudo_records(&props, &PseudoLabelConfig::default(), &split());
        pseudo_dataset(&images, recs.annotations, &split()).unwrap()
    }

    #[test]
    fn merge_counts() {
        let l = labeled(4);
        assert_eq!(merge_datasets(&l, &[]).unwrap(), l);

        let d = geometry_set(4, Modality::Depth);
        let nm = geometry_set(4, Modality::Normal);
        let merged = merge_datasets(&l, &[d.clone(), nm.clone()]).unwrap();
        assert_eq!(merged.images.len(), 12);
        assert_eq!(merged.annotations.len(), 12);
        assert_eq!(
            merged
                .images
                .iter()
                .filter(|i| i.source == Source::Pseudo)
                .count(),
            8
        );
        assert_eq!(merged.annotations.iter().filter(|a| a.is_pseudo).count(), 8);

        let stepwise = merge_datasets(&merge_datasets(&l, &[d]).unwrap(), &[nm]).unwrap();
        assert_eq!(stepwise, merged);
    }

    #[test]
    fn merge_rejects_colliding_images() {
        let l = labeled(2);
        let d = geometry_set(2, Modality::Depth);
        assert!(matches!(
            merge_datasets(&l, &[d.clone(), d]),
            Err(Error::DuplicateId { kind: "image", .. })
        ));
    }

    #[test]
    fn rgb_label_path() {
        let l = labeled(2);
        let depth = geometry_set(2, Modality::Depth);
        let anns = pseudo_records_from_rgb(&l, &depth.images, &split()).unwrap();
        assert_eq!(anns.len(), 2);
        assert!(anns.iter().all(|a| a.is_pseudo && a.category_id == 99));
        assert_eq!(anns[0].original_category_id, Some(1));
        assert_eq!(anns[0].bbox, l.annotations[0].bbox);
    }

    #[test]
    fn proposal_lines() {
        let text = "{\"image_id\": 11, \"modality\": \"depth\", \"bbox\": [1, 2, 3, 4], \"score\": 0.5}\n\n\
                    {\"image_id\": 12, \"modality\": \"normal\", \"bbox\": [0, 0, 1, 1], \"score\": 1.0}\n";
        let props = parse_proposals(text, "p").unwrap();
        assert_eq!(props.len(), 2);
        assert_eq!(props[0].bbox, b(1.0, 2.0, 4.0, 6.0));
        let mut buf = Vec::new();
        write_proposals(&mut buf, &props).unwrap();
        assert_eq!(
            parse_proposals(std::str::from_utf8(&buf).unwrap(), "p").unwrap(),
            props
        );

        let bad =
            "{\"image_id\": 11, \"modality\": \"depth\", \"bbox\": [1, 2, 3, 4], \"score\": 1.5}\n";
        assert!(parse_proposals(bad, "p").is_err());
        let broken = "{\"image_id\": 11,\n";
        assert!(matches!(
            parse_proposals(broken, "p"),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
