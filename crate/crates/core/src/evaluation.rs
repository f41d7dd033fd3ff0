//! Open-world detection metrics.
//!
//! AP and AR follow the COCO conventions: IoU thresholds 0.50:0.05:0.95,
//! 101-point interpolated precision, at most 100 detections per image.
//! Classes without ground truth are left out of class means.
//!
//! Ground truth can be marked *ignore*. An ignored box is a region: it is
//! never counted as a positive, it matches detections of any category, and
//! a detection whose only match is an ignored box is neither a true nor a
//! false positive. Ignored boxes are not consumed by a match.
//!
//! [`evaluate_coda`] produces the four class-agnostic open-world metrics;
//! [`evaluate_common`] the single-threshold recall / mAP50 pair.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::{ClassSplit, Dataset};
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: BBox,
    pub score: f64,
}

/// Ground-truth box as seen by the evaluator.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGt {
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: BBox,
    pub ignore: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchFlag {
    /// Matched the ground truth at this index.
    Tp(usize),
    Fp,
    /// Only overlaps ignored ground truth.
    Ignored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    /// Per image, across categories. `usize::MAX` disables truncation.
    pub max_dets: usize,
    pub recall_points: usize,
}

impl EvalConfig {
    pub fn new(iou_thresholds: Vec<f64>, max_dets: usize, recall_points: usize) -> Result<Self> {
        if iou_thresholds.is_empty() {
            return Err(Error::Config(
                "at least one IoU threshold is required".into(),
            ));
        }
        if iou_thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(Error::Config(format!(
                "IoU thresholds must lie in (0, 1]: {iou_thresholds:?}"
            )));
        }
        if iou_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "IoU thresholds must be strictly increasing: {iou_thresholds:?}"
            )));
        }
        if max_dets == 0 || recall_points < 2 {
            return Err(Error::Config(
                "max_dets must be positive and recall_points at least 2".into(),
            ));
        }
        Ok(Self {
            iou_thresholds,
            max_dets,
            recall_points,
        })
    }

    /// COCO protocol.
    pub fn coco() -> Self {
        Self {
            iou_thresholds: (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect(),
            max_dets: 100,
            recall_points: 101,
        }
    }

    /// Single IoU threshold, otherwise COCO.
    pub fn single(iou_t: f64) -> Self {
        Self {
            iou_thresholds: vec![iou_t],
            ..Self::coco()
        }
    }

    pub fn unlimited(mut self) -> Self {
        self.max_dets = usize::MAX;
        self
    }

    /// Recall levels at which precision is sampled: `k / (R - 1)`.
    pub fn recall_levels(&self) -> Vec<f64> {
        let last = (self.recall_points - 1) as f64;
        (0..self.recall_points).map(|k| k as f64 / last).collect()
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self::coco()
    }
}

/// Greedy matching for one image at one IoU threshold.
///
/// `dets` must be sorted by descending score. Each detection takes the
/// unmatched, non-ignored gt of its category with the highest IoU `>= iou_t`
/// (ties to the lower index); failing that it is [`MatchFlag::Ignored`] if
/// it overlaps an ignored gt at `>= iou_t`, else [`MatchFlag::Fp`].
pub fn match_for_eval(dets: &[Detection], gts: &[EvalGt], iou_t: f64) -> Vec<MatchFlag> {
    let mut taken = vec![false; gts.len()];
    dets.iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if gt.ignore || taken[g] || gt.category_id != d.category_id {
                    continue;
                }
                let v = iou(&d.bbox, &gt.bbox);
                if v >= iou_t && best.is_none_or(|(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
                return MatchFlag::Tp(g);
            }
            if gts
                .iter()
                .any(|gt| gt.ignore && iou(&d.bbox, &gt.bbox) >= iou_t)
            {
                MatchFlag::Ignored
            } else {
                MatchFlag::Fp
            }
        })
        .collect()
}

/// Per-class results, one entry per IoU threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCurve {
    pub positives: usize,
    pub ap: Vec<f64>,
    pub recall: Vec<f64>,
}

impl ClassCurve {
    pub fn mean_ap(&self) -> f64 {
        mean(&self.ap)
    }
    pub fn mean_recall(&self) -> f64 {
        mean(&self.recall)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn mean_opt(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| mean(&v))
}

/// Descending score, stable on input order.
fn sort_by_score(dets: &mut [&Detection]) {
    dets.sort_by(|a, b| b.score.total_cmp(&a.score));
}

/// AP/recall curves for every category that has non-ignored ground truth.
pub fn class_curves(
    dets: &[Detection],
    gts: &[EvalGt],
    cfg: &EvalConfig,
) -> BTreeMap<u64, ClassCurve> {
    let mut det_by_image: BTreeMap<u64, Vec<&Detection>> = BTreeMap::new();
    for d in dets {
        det_by_image.entry(d.image_id).or_default().push(d);
    }
    for list in det_by_image.values_mut() {
        sort_by_score(list);
        list.truncate(cfg.max_dets);
    }
    let mut gt_by_image: BTreeMap<u64, Vec<&EvalGt>> = BTreeMap::new();
    for g in gts {
        gt_by_image.entry(g.image_id).or_default().push(g);
    }
    let classes: BTreeSet<u64> = gts
        .iter()
        .filter(|g| !g.ignore)
        .map(|g| g.category_id)
        .collect();
    let images: BTreeSet<u64> = det_by_image
        .keys()
        .chain(gt_by_image.keys())
        .copied()
        .collect();
    let levels = cfg.recall_levels();

    let mut out = BTreeMap::new();
    for &class in &classes {
        // per image: this class's detections and the gts they may match
        let per_image: Vec<(u64, Vec<Detection>, Vec<EvalGt>)> = images
            .iter()
            .map(|&img| {
                let d: Vec<Detection> = det_by_image
                    .get(&img)
                    .into_iter()
                    .flatten()
                    .filter(|d| d.category_id == class)
                    .map(|d| (*d).clone())
                    .collect();
                let g: Vec<EvalGt> = gt_by_image
                    .get(&img)
                    .into_iter()
                    .flatten()
                    .filter(|g| g.ignore || g.category_id == class)
                    .map(|g| (*g).clone())
                    .collect();
                (img, d, g)
            })
            .collect();
        let positives: usize = per_image
            .iter()
            .map(|(_, _, g)| g.iter().filter(|g| !g.ignore).count())
            .sum();

        let mut ap = Vec::with_capacity(cfg.iou_thresholds.len());
        let mut recall = Vec::with_capacity(cfg.iou_thresholds.len());
        for &t in &cfg.iou_thresholds {
            // (score, image, rank, is_tp)
            let mut scored: Vec<(f64, u64, usize, bool)> = Vec::new();
            for (img, d, g) in &per_image {
                for (rank, (det, flag)) in d.iter().zip(match_for_eval(d, g, t)).enumerate() {
                    match flag {
                        MatchFlag::Tp(_) => scored.push((det.score, *img, rank, true)),
                        MatchFlag::Fp => scored.push((det.score, *img, rank, false)),
                        MatchFlag::Ignored => {}
                    }
                }
            }
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let flags: Vec<bool> = scored.iter().map(|s| s.3).collect();
            ap.push(interpolated_ap(&flags, positives, &levels));
            recall.push(flags.iter().filter(|f| **f).count() as f64 / positives as f64);
        }
        out.insert(
            class,
            ClassCurve {
                positives,
                ap,
                recall,
            },
        );
    }
    out
}

/// Interpolated AP from TP/FP flags in descending-score order.
fn interpolated_ap(flags: &[bool], positives: usize, levels: &[f64]) -> f64 {
    let n = flags.len();
    let mut recall = Vec::with_capacity(n);
    let mut precision = Vec::with_capacity(n);
    let mut tp = 0usize;
    for (i, &f) in flags.iter().enumerate() {
        if f {
            tp += 1;
        }
        recall.push(tp as f64 / positives as f64);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    for i in (1..n).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let total: f64 = levels
        .iter()
        .map(|&r| {
            let idx = recall.partition_point(|&x| x < r);
            if idx < n {
                precision[idx]
            } else {
                0.0
            }
        })
        .sum();
    total / levels.len() as f64
}

/// Class-averaged AP at a single IoU threshold. `None` when no class has
/// ground truth.
pub fn average_precision(
    dets: &[Detection],
    gts: &[EvalGt],
    iou_t: f64,
    cfg: &EvalConfig,
) -> Option<f64> {
    let single = EvalConfig {
        iou_thresholds: vec![iou_t],
        ..cfg.clone()
    };
    mean_opt(class_curves(dets, gts, &single).values().map(|c| c.ap[0]))
}

/// AP averaged over the configured thresholds and over classes.
pub fn mean_average_precision(dets: &[Detection], gts: &[EvalGt], cfg: &EvalConfig) -> Option<f64> {
    mean_opt(
        class_curves(dets, gts, cfg)
            .values()
            .map(ClassCurve::mean_ap),
    )
}

/// Recall averaged over the configured thresholds and over classes.
pub fn average_recall(dets: &[Detection], gts: &[EvalGt], cfg: &EvalConfig) -> Option<f64> {
    mean_opt(
        class_curves(dets, gts, cfg)
            .values()
            .map(ClassCurve::mean_recall),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub ap: Option<f64>,
    pub ar: Option<f64>,
}

/// The four open-world metrics plus a class-aware breakdown. A metric is
/// `None` when its ground-truth pool is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub ar_agnostic_corner: Option<f64>,
    pub ar_agnostic: Option<f64>,
    pub ap_agnostic: Option<f64>,
    pub ap_common: Option<f64>,
    pub per_class: BTreeMap<u64, ClassMetrics>,
}

impl EvalResult {
    pub fn headline(&self) -> [Option<f64>; 4] {
        [
            self.ar_agnostic_corner,
            self.ar_agnostic,
            self.ap_agnostic,
            self.ap_common,
        ]
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result serialization cannot fail");
        s.push('\n');
        s
    }
}

/// Recall and AP at IoU 0.5, class-aware.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonResult {
    pub recall: Option<f64>,
    pub map50: Option<f64>,
    pub per_class: BTreeMap<u64, ClassMetrics>,
}

impl CommonResult {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result serialization cannot fail");
        s.push('\n');
        s
    }
}

fn check_references(dets: &[Detection], ds: &Dataset, extra_category: Option<u64>) -> Result<()> {
    let images: HashSet<u64> = ds.images.iter().map(|i| i.id).collect();
    let mut cats: HashSet<u64> = ds.categories.iter().map(|c| c.id).collect();
    cats.extend(extra_category);
    for d in dets {
        if !images.contains(&d.image_id) {
            return Err(Error::DanglingReference {
                kind: "image",
                id: d.image_id,
            });
        }
        if !cats.contains(&d.category_id) {
            return Err(Error::DanglingReference {
                kind: "category",
                id: d.category_id,
            });
        }
    }
    Ok(())
}

fn per_class_metrics(
    dets: &[Detection],
    ds: &Dataset,
    cfg: &EvalConfig,
) -> BTreeMap<u64, ClassMetrics> {
    let gts: Vec<EvalGt> = ds
        .annotations
        .iter()
        .map(|a| EvalGt {
            image_id: a.image_id,
            category_id: a.category_id,
            bbox: a.bbox,
            ignore: false,
        })
        .collect();
    class_curves(dets, &gts, cfg)
        .into_iter()
        .map(|(id, c)| {
            let name = ds.category(id).map(|c| c.name.clone()).unwrap_or_default();
            (
                id,
                ClassMetrics {
                    name,
                    ap: Some(c.mean_ap()),
                    ar: Some(c.mean_recall()),
                },
            )
        })
        .collect()
}

/// Class-agnostic open-world evaluation.
///
/// - `ar_agnostic_corner`: recall over novel-class objects, everything
///   else ignored, categories collapsed.
/// - `ar_agnostic` / `ap_agnostic`: recall / AP over all objects,
///   categories collapsed.
/// - `ap_common`: class-aware AP over the common classes, with novel-class
///   objects ignored.
pub fn evaluate_coda(
    dets: &[Detection],
    ds: &Dataset,
    split: &ClassSplit,
    cfg: &EvalConfig,
) -> Result<EvalResult> {
    check_references(dets, ds, Some(split.agnostic_id()))?;
    let agnostic = split.agnostic_id();
    let collapsed: Vec<Detection> = dets
        .iter()
        .map(|d| Detection {
            category_id: agnostic,
            ..d.clone()
        })
        .collect();
    let gt = |ignore: &dyn Fn(u64) -> bool, collapse: bool| -> Vec<EvalGt> {
        ds.annotations
            .iter()
            .map(|a| {
                let source = a.source_category();
                EvalGt {
                    image_id: a.image_id,
                    category_id: if collapse { agnostic } else { source },
                    bbox: a.bbox,
                    ignore: ignore(source),
                }
            })
            .collect()
    };

    let corner = gt(&|c| !split.is_novel(c), true);
    let all = gt(&|_| false, true);
    let common = gt(&|c| split.is_novel(c), false);
    let common_dets: Vec<Detection> = dets
        .iter()
        .filter(|d| split.is_common(d.category_id))
        .cloned()
        .collect();
    let common_ap = class_curves(&common_dets, &common, cfg);
    let all_curves = class_curves(&collapsed, &all, cfg);

    Ok(EvalResult {
        ar_agnostic_corner: average_recall(&collapsed, &corner, cfg),
        ar_agnostic: all_curves.get(&agnostic).map(ClassCurve::mean_recall),
        ap_agnostic: all_curves.get(&agnostic).map(ClassCurve::mean_ap),
        ap_common: mean_opt(
            common_ap
                .iter()
                .filter(|(id, _)| split.is_common(**id))
                .map(|(_, c)| c.mean_ap()),
        ),
        per_class: per_class_metrics(dets, ds, cfg),
    })
}

/// Class-aware recall and AP at IoU 0.5, averaged over classes.
pub fn evaluate_common(dets: &[Detection], ds: &Dataset, cfg: &EvalConfig) -> Result<CommonResult> {
    check_references(dets, ds, None)?;
    let single = EvalConfig {
        iou_thresholds: vec![0.5],
        ..cfg.clone()
    };
    let per_class = per_class_metrics(dets, ds, &single);
    Ok(CommonResult {
        recall: mean_opt(per_class.values().filter_map(|c| c.ar)),
        map50: mean_opt(per_class.values().filter_map(|c| c.ap)),
        per_class,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectionLine {
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    score: f64,
}

/// Parse newline-delimited detection records.
pub fn parse_detections(text: &str, origin: &str) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for (n, line) in text.split_inclusive('\n').enumerate() {
        let start = offset;
        offset += line.len();
        if line.trim().is_empty() {
            continue;
        }
        let rec: DetectionLine = serde_json::from_str(line).map_err(|e| Error::Parse {
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
        out.push(Detection {
            image_id: rec.image_id,
            category_id: rec.category_id,
            bbox,
            score: rec.score,
        });
    }
    Ok(out)
}

pub fn load_detections(path: impl AsRef<Path>) -> Result<Vec<Detection>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&text, &path.display().to_string())
}

pub fn write_detections(mut w: impl Write, dets: &[Detection]) -> std::io::Result<()> {
    for d in dets {
        let line = DetectionLine {
            image_id: d.image_id,
            category_id: d.category_id,
            bbox: d.bbox.to_xywh(),
            score: d.score,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
