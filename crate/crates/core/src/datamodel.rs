//! Dataset representation, COCO-format ingestion, class splits and
//! class-agnostic remapping.
//!
//! Boxes arrive as `[x, y, w, h]` and are stored in canonical corner form.
//! Boxes that stick out of their image are clamped; boxes with nothing left
//! after clamping are dropped and reported in [`Ingested::dropped`].
//!
//! Geometry-cue images derived from an RGB frame use modality-suffixed ids:
//! the last decimal digit encodes the modality (see [`modality_image_id`]).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Name given to the shared class-agnostic category.
pub const AGNOSTIC_NAME: &str = "object";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Rgb,
    Depth,
    Normal,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Rgb, Modality::Depth, Modality::Normal];

    pub fn code(self) -> u64 {
        match self {
            Modality::Rgb => 0,
            Modality::Depth => 1,
            Modality::Normal => 2,
        }
    }

    pub fn is_geometry_cue(self) -> bool {
        !matches!(self, Modality::Rgb)
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Rgb => "rgb",
            Modality::Depth => "depth",
            Modality::Normal => "normal",
        })
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgb" => Ok(Modality::Rgb),
            "depth" => Ok(Modality::Depth),
            "normal" => Ok(Modality::Normal),
            other => Err(Error::Invalid(format!("unknown modality {other:?}"))),
        }
    }
}

/// Image id of the `modality` view of frame `base`: `base * 10 + code`.
pub fn modality_image_id(base: u64, modality: Modality) -> u64 {
    base * 10 + modality.code()
}

/// Inverse of [`modality_image_id`].
pub fn base_image_id(id: u64) -> u64 {
    id / 10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Labeled,
    Pseudo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Common,
    Novel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Category {
    pub id: u64,
    pub name: String,
    pub split: Option<SplitKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    pub file_name: String,
    pub modality: Modality,
    pub source: Source,
}

impl ImageRecord {
    pub fn new(id: u64, width: u32, height: u32) -> Self {
        Self {
            id,
            width,
            height,
            file_name: String::new(),
            modality: Modality::Rgb,
            source: Source::Labeled,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: BBox,
    pub is_pseudo: bool,
    /// Category before class-agnostic remapping, if remapped.
    pub original_category_id: Option<u64>,
}

impl Annotation {
    pub fn new(id: u64, image_id: u64, category_id: u64, bbox: BBox) -> Self {
        Self {
            id,
            image_id,
            category_id,
            bbox,
            is_pseudo: false,
            original_category_id: None,
        }
    }

    /// Category as annotated, ignoring any agnostic remap.
    pub fn source_category(&self) -> u64 {
        self.original_category_id.unwrap_or(self.category_id)
    }
}

/// Partition of category ids into common and novel, plus the reserved id
/// that all agnostic annotations share.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSplit {
    common: BTreeSet<u64>,
    novel: BTreeSet<u64>,
    agnostic_id: u64,
}

impl ClassSplit {
    pub fn new(
        common: impl IntoIterator<Item = u64>,
        novel: impl IntoIterator<Item = u64>,
        agnostic_id: u64,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut duplicated = BTreeSet::new();
        let mut take = |ids: &mut dyn Iterator<Item = u64>| -> BTreeSet<u64> {
            let mut out = BTreeSet::new();
            for id in ids {
                if !seen.insert(id) {
                    duplicated.insert(id);
                }
                out.insert(id);
            }
            out
        };
        let common = take(&mut common.into_iter());
        let novel = take(&mut novel.into_iter());
        if !duplicated.is_empty() {
            return Err(Error::SplitCoverage {
                uncovered: vec![],
                duplicated: duplicated.into_iter().collect(),
                unknown: vec![],
            });
        }
        if agnostic_id == 0 || common.contains(&agnostic_id) || novel.contains(&agnostic_id) {
            return Err(Error::Config(format!(
                "agnostic id {agnostic_id} must be positive and not a common or novel id"
            )));
        }
        Ok(Self {
            common,
            novel,
            agnostic_id,
        })
    }

    pub fn common_ids(&self) -> &BTreeSet<u64> {
        &self.common
    }

    pub fn novel_ids(&self) -> &BTreeSet<u64> {
        &self.novel
    }

    pub fn agnostic_id(&self) -> u64 {
        self.agnostic_id
    }

    pub fn is_common(&self, id: u64) -> bool {
        self.common.contains(&id)
    }

    pub fn is_novel(&self, id: u64) -> bool {
        self.novel.contains(&id)
    }
}

/// Category reference in a split file: numeric id or category name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CategoryRef {
    Id(u64),
    Name(String),
}

/// Class-split file contents before names are resolved against a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSplitFile {
    pub common: Vec<CategoryRef>,
    #[serde(default)]
    pub novel: Vec<CategoryRef>,
    pub agnostic_id: u64,
}

impl ClassSplitFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::parse(&path.display().to_string(), &text, &e))
    }

    /// Resolve names against the dataset's category table.
    pub fn resolve(&self, ds: &Dataset) -> Result<ClassSplit> {
        let by_name: HashMap<&str, u64> = ds
            .categories
            .iter()
            .map(|c| (c.name.as_str(), c.id))
            .collect();
        let mut unknown = Vec::new();
        let mut lookup = |refs: &[CategoryRef]| -> Vec<u64> {
            refs.iter()
                .filter_map(|r| match r {
                    CategoryRef::Id(id) => Some(*id),
                    CategoryRef::Name(n) => {
                        let id = by_name.get(n.as_str()).copied();
                        if id.is_none() {
                            unknown.push(n.clone());
                        }
                        id
                    }
                })
                .collect()
        };
        let common = lookup(&self.common);
        let novel = lookup(&self.novel);
        if !unknown.is_empty() {
            return Err(Error::SplitCoverage {
                uncovered: vec![],
                duplicated: vec![],
                unknown,
            });
        }
        ClassSplit::new(common, novel, self.agnostic_id)
    }

    /// Resolve without a dataset; only numeric references are accepted.
    pub fn resolve_ids(&self) -> Result<ClassSplit> {
        let ids = |refs: &[CategoryRef]| -> Result<Vec<u64>> {
            refs.iter()
                .map(|r| match r {
                    CategoryRef::Id(id) => Ok(*id),
                    CategoryRef::Name(n) => Err(Error::Config(format!(
                        "category name {n:?} needs a dataset to resolve"
                    ))),
                })
                .collect()
        };
        ClassSplit::new(ids(&self.common)?, ids(&self.novel)?, self.agnostic_id)
    }

    pub fn from_split(split: &ClassSplit) -> Self {
        Self {
            common: split.common.iter().map(|&id| CategoryRef::Id(id)).collect(),
            novel: split.novel.iter().map(|&id| CategoryRef::Id(id)).collect(),
            agnostic_id: split.agnostic_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemapMode {
    /// Every annotation gets the agnostic id.
    All,
    /// Only annotations of novel categories get the agnostic id.
    NovelOnly,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub images: Vec<ImageRecord>,
    pub annotations: Vec<Annotation>,
    pub categories: Vec<Category>,
}

/// Result of ingesting an annotation file.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    /// Ids of annotations rejected because nothing was left after clamping.
    pub dropped: Vec<u64>,
}

impl Dataset {
    /// Build a dataset and check all invariants.
    pub fn new(
        images: Vec<ImageRecord>,
        annotations: Vec<Annotation>,
        categories: Vec<Category>,
    ) -> Result<Self> {
        let ds = Self {
            images,
            annotations,
            categories,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Check id uniqueness, referential integrity and box bounds.
    pub fn validate(&self) -> Result<()> {
        let mut images = HashMap::new();
        for img in &self.images {
            if img.id == 0 {
                return Err(Error::Invalid("image id must be positive".into()));
            }
            if img.width == 0 || img.height == 0 {
                return Err(Error::Invalid(format!("image {} has zero size", img.id)));
            }
            if images.insert(img.id, img).is_some() {
                return Err(Error::DuplicateId {
                    kind: "image",
                    id: img.id,
                });
            }
        }
        let mut categories = HashSet::new();
        for cat in &self.categories {
            if cat.id == 0 {
                return Err(Error::Invalid("category id must be positive".into()));
            }
            if !categories.insert(cat.id) {
                return Err(Error::DuplicateId {
                    kind: "category",
                    id: cat.id,
                });
            }
        }
        let mut anns = HashSet::new();
        for ann in &self.annotations {
            if ann.id == 0 {
                return Err(Error::Invalid("annotation id must be positive".into()));
            }
            if !anns.insert(ann.id) {
                return Err(Error::DuplicateId {
                    kind: "annotation",
                    id: ann.id,
                });
            }
            let img = images.get(&ann.image_id).ok_or(Error::DanglingReference {
                kind: "image",
                id: ann.image_id,
            })?;
            if !categories.contains(&ann.category_id) {
                return Err(Error::DanglingReference {
                    kind: "category",
                    id: ann.category_id,
                });
            }
            if !ann.bbox.contained_in(img.width as f64, img.height as f64) {
                return Err(Error::Invalid(format!(
                    "annotation {} lies outside image {}",
                    ann.id, img.id
                )));
            }
        }
        Ok(())
    }

    pub fn image(&self, id: u64) -> Option<&ImageRecord> {
        self.images.iter().find(|i| i.id == id)
    }

    pub fn category(&self, id: u64) -> Option<&Category> {
        self.categories.iter().find(|c| c.id == id)
    }

    pub fn image_index(&self) -> HashMap<u64, &ImageRecord> {
        self.images.iter().map(|i| (i.id, i)).collect()
    }

    /// Annotations grouped by image id.
    pub fn annotations_by_image(&self) -> BTreeMap<u64, Vec<&Annotation>> {
        let mut out: BTreeMap<u64, Vec<&Annotation>> = BTreeMap::new();
        for ann in &self.annotations {
            out.entry(ann.image_id).or_default().push(ann);
        }
        out
    }

    /// Images of one modality together with their annotations.
    pub fn filter_modality(&self, modality: Modality) -> Dataset {
        let images: Vec<_> = self
            .images
            .iter()
            .filter(|i| i.modality == modality)
            .cloned()
            .collect();
        let keep: HashSet<u64> = images.iter().map(|i| i.id).collect();
        Dataset {
            images,
            annotations: self
                .annotations
                .iter()
                .filter(|a| keep.contains(&a.image_id))
                .cloned()
                .collect(),
            categories: self.categories.clone(),
        }
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Ingested> {
        let file: CocoFile =
            serde_json::from_str(text).map_err(|e| Error::parse(origin, text, &e))?;
        file.into_dataset()
    }

    /// Canonical COCO-format document with stable key order.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&CocoFile::from_dataset(self))
            .expect("dataset serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Read a COCO-format annotation file.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Ingested> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Dataset::from_json(&text, &path.display().to_string())
}

/// Mark every category common or novel. The agnostic category, if present,
/// is left unmarked.
pub fn apply_class_split(ds: &Dataset, split: &ClassSplit) -> Result<Dataset> {
    let mut uncovered = Vec::new();
    let mut duplicated = Vec::new();
    let mut out = ds.clone();
    for cat in &mut out.categories {
        if cat.id == split.agnostic_id {
            cat.split = None;
            continue;
        }
        match (split.is_common(cat.id), split.is_novel(cat.id)) {
            (true, false) => cat.split = Some(SplitKind::Common),
            (false, true) => cat.split = Some(SplitKind::Novel),
            (false, false) => uncovered.push(cat.id),
            (true, true) => duplicated.push(cat.id),
        }
    }
    if !uncovered.is_empty() || !duplicated.is_empty() {
        return Err(Error::SplitCoverage {
            uncovered,
            duplicated,
            unknown: vec![],
        });
    }
    Ok(out)
}

/// Collapse categories onto the agnostic id, keeping the original in
/// `original_category_id`. Idempotent.
pub fn remap_agnostic(ds: &Dataset, split: &ClassSplit, mode: RemapMode) -> Dataset {
    let mut out = ds.clone();
    let agnostic = split.agnostic_id;
    let mut remapped = false;
    for ann in &mut out.annotations {
        let original = ann.source_category();
        let hit = match mode {
            RemapMode::All => true,
            RemapMode::NovelOnly => split.is_novel(original),
        };
        if hit {
            ann.original_category_id = Some(original);
            ann.category_id = agnostic;
            remapped = true;
        }
    }
    if remapped && out.category(agnostic).is_none() {
        out.categories.push(Category {
            id: agnostic,
            name: AGNOSTIC_NAME.to_string(),
            split: None,
        });
    }
    out
}

// COCO wire format.

#[derive(Debug, Serialize, Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoImage {
    id: u64,
    width: u32,
    height: u32,
    #[serde(default)]
    file_name: String,
    #[serde(default)]
    modality: Option<Modality>,
    #[serde(default)]
    source: Option<Source>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoAnnotation {
    id: u64,
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    is_pseudo: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    original_category_id: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoCategory {
    id: u64,
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<SplitKind>,
}

impl CocoFile {
    fn from_dataset(ds: &Dataset) -> Self {
        CocoFile {
            images: ds
                .images
                .iter()
                .map(|i| CocoImage {
                    id: i.id,
                    width: i.width,
                    height: i.height,
                    file_name: i.file_name.clone(),
                    modality: Some(i.modality),
                    source: Some(i.source),
                })
                .collect(),
            annotations: ds
                .annotations
                .iter()
                .map(|a| CocoAnnotation {
                    id: a.id,
                    image_id: a.image_id,
                    category_id: a.category_id,
                    bbox: a.bbox.to_xywh(),
                    is_pseudo: a.is_pseudo,
                    original_category_id: a.original_category_id,
                })
                .collect(),
            categories: ds
                .categories
                .iter()
                .map(|c| CocoCategory {
                    id: c.id,
                    name: c.name.clone(),
                    split: c.split,
                })
                .collect(),
        }
    }

    fn into_dataset(self) -> Result<Ingested> {
        let images: Vec<ImageRecord> = self
            .images
            .into_iter()
            .map(|i| ImageRecord {
                id: i.id,
                width: i.width,
                height: i.height,
                file_name: i.file_name,
                modality: i.modality.unwrap_or(Modality::Rgb),
                source: i.source.unwrap_or(Source::Labeled),
            })
            .collect();
        let categories: Vec<Category> = self
            .categories
            .into_iter()
            .map(|c| Category {
                id: c.id,
                name: c.name,
                split: c.split,
            })
            .collect();

        let sizes: HashMap<u64, (f64, f64)> = images
            .iter()
            .map(|i| (i.id, (i.width as f64, i.height as f64)))
            .collect();
        let known_categories: HashSet<u64> = categories.iter().map(|c| c.id).collect();

        let mut annotations = Vec::with_capacity(self.annotations.len());
        let mut dropped = Vec::new();
        for a in self.annotations {
            let &(w, h) = sizes.get(&a.image_id).ok_or(Error::DanglingReference {
                kind: "image",
                id: a.image_id,
            })?;
            if !known_categories.contains(&a.category_id) {
                return Err(Error::DanglingReference {
                    kind: "category",
                    id: a.category_id,
                });
            }
            let [x, y, bw, bh] = a.bbox;
            let bbox = BBox::from_xywh(x, y, bw, bh)
                .ok()
                .and_then(|b| b.clamp_to(w, h));
            match bbox {
                Some(bbox) => annotations.push(Annotation {
                    id: a.id,
                    image_id: a.image_id,
                    category_id: a.category_id,
                    bbox,
                    is_pseudo: a.is_pseudo,
                    original_category_id: a.original_category_id,
                }),
                None => dropped.push(a.id),
            }
        }
        if !dropped.is_empty() {
            log::warn!(
                "dropped {} annotation(s) with no area inside their image",
                dropped.len()
            );
        }
        let dataset = Dataset::new(images, annotations, categories)?;
        Ok(Ingested { dataset, dropped })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "images": [{"id": 1, "width": 100, "height": 80, "file_name": "a.jpg"}],
        "annotations": [{"id": 7, "image_id": 1, "category_id": 3, "bbox": [10, 20, 30, 40], "area": 1200, "iscrowd": 0}],
        "categories": [{"id": 3, "name": "car", "supercategory": "vehicle"}],
        "info": {"year": 2024}
    }"#;

    fn three_class_dataset() -> Dataset {
        let img = ImageRecord::new(1, 100, 100);
        let anns = (1..=8)
            .map(|i| {
                let cat = if i <= 5 { 3 } else { 1 };
                let x = (i * 10) as f64;
                Annotation::new(i, 1, cat, BBox::new(x, 0.0, x + 5.0, 5.0).unwrap())
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
                name: "bus".into(),
                split: None,
            },
            Category {
                id: 3,
                name: "stroller".into(),
                split: None,
            },
        ];
        Dataset::new(vec![img], anns, cats).unwrap()
    }

    fn split() -> ClassSplit {
        ClassSplit::new([1, 2], [3], 99).unwrap()
    }

    #[test]
    fn minimal_file_loads() {
        let ing = Dataset::from_json(MINIMAL, "minimal").unwrap();
        let ds = ing.dataset;
        assert_eq!(
            (ds.images.len(), ds.annotations.len(), ds.categories.len()),
            (1, 1, 1)
        );
        assert_eq!(
            ds.annotations[0].bbox,
            BBox::new(10.0, 20.0, 40.0, 60.0).unwrap()
        );
        assert_eq!(ds.images[0].modality, Modality::Rgb);
        assert!(ing.dropped.is_empty());
    }

    #[test]
    fn dangling_image_reference() {
        let text = MINIMAL.replace("\"image_id\": 1", "\"image_id\": 99");
        match Dataset::from_json(&text, "x") {
            Err(Error::DanglingReference {
                kind: "image",
                id: 99,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dangling_category_reference() {
        let text = MINIMAL.replace("\"category_id\": 3", "\"category_id\": 4");
        assert!(matches!(
            Dataset::from_json(&text, "x"),
            Err(Error::DanglingReference {
                kind: "category",
                id: 4
            })
        ));
    }

    #[test]
    fn parse_error_reports_byte_offset() {
        let text = "{\"images\": [}";
        match Dataset::from_json(text, "broken.json") {
            Err(Error::Parse { offset, line, .. }) => {
                assert_eq!(line, 1);
                assert_eq!(offset, 12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn boxes_are_clamped_or_dropped() {
        let text = r#"{
            "images": [{"id": 1, "width": 50, "height": 50}],
            "annotations": [
                {"id": 1, "image_id": 1, "category_id": 1, "bbox": [40, 40, 20, 20]},
                {"id": 2, "image_id": 1, "category_id": 1, "bbox": [60, 10, 5, 5]},
                {"id": 3, "image_id": 1, "category_id": 1, "bbox": [5, 5, 0, 5]}
            ],
            "categories": [{"id": 1, "name": "cone"}]
        }"#;
        let ing = Dataset::from_json(text, "x").unwrap();
        assert_eq!(ing.dropped, vec![2, 3]);
        assert_eq!(
            ing.dataset.annotations[0].bbox,
            BBox::new(40.0, 40.0, 50.0, 50.0).unwrap()
        );
    }

    #[test]
    fn duplicate_annotation_ids_rejected() {
        let text = MINIMAL.replace(
            "\"annotations\": [",
            "\"annotations\": [{\"id\": 7, \"image_id\": 1, \"category_id\": 3, \"bbox\": [0, 0, 5, 5]},",
        );
        assert!(matches!(
            Dataset::from_json(&text, "x"),
            Err(Error::DuplicateId {
                kind: "annotation",
                id: 7
            })
        ));
    }

    #[test]
    fn canonical_round_trip() {
        let ds = Dataset::from_json(MINIMAL, "m").unwrap().dataset;
        let again = Dataset::from_json(&ds.to_json(), "m").unwrap().dataset;
        assert_eq!(ds, again);
        assert_eq!(ds.to_json(), again.to_json());
    }

    #[test]
    fn split_marks_categories() {
        let ds = apply_class_split(&three_class_dataset(), &split()).unwrap();
        let kinds: Vec<_> = ds.categories.iter().map(|c| c.split).collect();
        assert_eq!(
            kinds,
            vec![
                Some(SplitKind::Common),
                Some(SplitKind::Common),
                Some(SplitKind::Novel)
            ]
        );
    }

    #[test]
    fn split_listing_category_twice_is_error() {
        assert!(matches!(
            ClassSplit::new([1, 2], [2, 3], 99),
            Err(Error::SplitCoverage { .. })
        ));
        assert!(ClassSplit::new([1, 1], [3], 99).is_err());
    }

    #[test]
    fn uncovered_category_is_error() {
        let s = ClassSplit::new([1], [3], 99).unwrap();
        match apply_class_split(&three_class_dataset(), &s) {
            Err(Error::SplitCoverage { uncovered, .. }) => assert_eq!(uncovered, vec![2]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_novel_set_is_valid() {
        let s = ClassSplit::new([1, 2, 3], [], 99).unwrap();
        let ds = apply_class_split(&three_class_dataset(), &s).unwrap();
        assert!(ds
            .categories
            .iter()
            .all(|c| c.split == Some(SplitKind::Common)));
    }

    #[test]
    fn agnostic_id_must_be_reserved() {
        assert!(ClassSplit::new([1, 2], [3], 3).is_err());
    }

    #[test]
    fn remap_all_leaves_one_category() {
        let ds = apply_class_split(&three_class_dataset(), &split()).unwrap();
        let r = remap_agnostic(&ds, &split(), RemapMode::All);
        let ids: BTreeSet<_> = r.annotations.iter().map(|a| a.category_id).collect();
        assert_eq!(ids.len(), 1);
        r.validate().unwrap();
    }

    #[test]
    fn remap_novel_only_counts() {
        let ds = apply_class_split(&three_class_dataset(), &split()).unwrap();
        let r = remap_agnostic(&ds, &split(), RemapMode::NovelOnly);
        let remapped = r.annotations.iter().filter(|a| a.category_id == 99).count();
        let untouched = r
            .annotations
            .iter()
            .zip(&ds.annotations)
            .filter(|(a, b)| a == b)
            .count();
        assert_eq!((remapped, untouched), (5, 3));
        assert!(r
            .annotations
            .iter()
            .filter(|a| a.category_id == 99)
            .all(|a| a.original_category_id == Some(3)));
    }

    #[test]
    fn remap_novel_only_without_novel_is_identity() {
        let mut ds = three_class_dataset();
        ds.annotations.retain(|a| a.category_id != 3);
        let ds = apply_class_split(&ds, &split()).unwrap();
        assert_eq!(remap_agnostic(&ds, &split(), RemapMode::NovelOnly), ds);
    }

    #[test]
    fn split_file_resolves_names_and_ids() {
        let file: ClassSplitFile = serde_json::from_str(
            r#"{"common": ["car", 2], "novel": ["stroller"], "agnostic_id": 99}"#,
        )
        .unwrap();
        let s = file.resolve(&three_class_dataset()).unwrap();
        assert_eq!(s, split());
        let bad: ClassSplitFile =
            serde_json::from_str(r#"{"common": ["tank"], "novel": [], "agnostic_id": 99}"#)
                .unwrap();
        assert!(matches!(
            bad.resolve(&three_class_dataset()),
            Err(Error::SplitCoverage { unknown, .. }) if unknown == vec!["tank".to_string()]
        ));
    }

    #[test]
    fn modality_ids_round_trip() {
        for m in Modality::ALL {
            let id = modality_image_id(42, m);
            assert_eq!(base_image_id(id), 42);
            assert_eq!(id % 10, m.code());
        }
    }
}
