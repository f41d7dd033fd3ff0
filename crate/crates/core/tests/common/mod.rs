//! Brute-force reference implementations shared by the integration tests.
//! None of these call into the library's algorithms; they only use its
//! plain data types.

#![allow(dead_code)]

use std::collections::BTreeSet;

use cornercase::evaluation::{Detection, EvalGt};
use cornercase::BBox;

/// IoU from raw corners.
pub fn iou_ref(a: &BBox, b: &BBox) -> f64 {
    let [ax1, ay1, ax2, ay2] = a.corners();
    let [bx1, by1, bx2, by2] = b.corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    let union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
    inter / union
}

/// GIoU written directly from its definition.
pub fn giou_ref(a: &BBox, b: &BBox) -> f64 {
    let [ax1, ay1, ax2, ay2] = a.corners();
    let [bx1, by1, bx2, by2] = b.corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    let union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
    let hull = (ax2.max(bx2) - ax1.min(bx1)) * (ay2.max(by2) - ay1.min(by1));
    inter / union - (hull - union) / hull
}

/// Minimum cost over every injection of the shorter side into the longer,
/// with ties (within `tol`) broken toward the lexicographically smallest
/// `(prediction, gt)` pair list. Returns `(pairs, cost)`.
pub fn brute_force_assignment(c: &[Vec<f64>], tol: f64) -> (Vec<(usize, usize)>, f64) {
    let n = c.len();
    let m = if n == 0 { 0 } else { c[0].len() };
    if n == 0 || m == 0 {
        return (vec![], 0.0);
    }
    let mut all: Vec<(Vec<(usize, usize)>, f64)> = Vec::new();
    if n <= m {
        let mut used = vec![false; m];
        let mut cur = Vec::new();
        rows_into_cols(c, 0, &mut used, &mut cur, &mut all, false);
    } else {
        let t: Vec<Vec<f64>> = (0..m).map(|j| (0..n).map(|i| c[i][j]).collect()).collect();
        let mut used = vec![false; n];
        let mut cur = Vec::new();
        rows_into_cols(&t, 0, &mut used, &mut cur, &mut all, true);
    }
    let best = all.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
    all.into_iter()
        .filter(|(_, v)| *v <= best + tol)
        .min_by(|a, b| a.0.cmp(&b.0))
        .map(|(p, _)| (p, best))
        .expect("at least one injection")
}

fn rows_into_cols(
    c: &[Vec<f64>],
    row: usize,
    used: &mut [bool],
    cur: &mut Vec<usize>,
    out: &mut Vec<(Vec<(usize, usize)>, f64)>,
    transposed: bool,
) {
    if row == c.len() {
        let mut pairs: Vec<(usize, usize)> = cur
            .iter()
            .enumerate()
            .map(|(r, &col)| if transposed { (col, r) } else { (r, col) })
            .collect();
        pairs.sort();
        let cost = cur.iter().enumerate().map(|(r, &col)| c[r][col]).sum();
        out.push((pairs, cost));
        return;
    }
    for col in 0..used.len() {
        if !used[col] {
            used[col] = true;
            cur.push(col);
            rows_into_cols(c, row + 1, used, cur, out, transposed);
            cur.pop();
            used[col] = false;
        }
    }
}

/// Greedy NMS by repeated arg-max: keep the best remaining box, drop
/// everything overlapping it by more than `thresh`. Returns kept indices in
/// keep order.
pub fn nms_ref(boxes: &[(BBox, f64)], thresh: f64) -> Vec<usize> {
    let mut alive: BTreeSet<usize> = (0..boxes.len()).collect();
    let mut kept = Vec::new();
    while !alive.is_empty() {
        let mut best = *alive.iter().next().unwrap();
        for &i in &alive {
            if boxes[i].1 > boxes[best].1 {
                best = i;
            }
        }
        kept.push(best);
        alive.remove(&best);
        alive.retain(|&i| iou_ref(&boxes[i].0, &boxes[best].0) <= thresh);
    }
    kept
}

pub const COCO_THRESHOLDS: [f64; 10] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];

/// Per-class `(ap, recall)` at one threshold, or `None` when the class has
/// no non-ignored ground truth.
///
/// Detections are ranked by score (ties: image id, then input order),
/// truncated to `max_dets` per image, matched greedily per image to the
/// best-IoU free gt of their class, and AP is the mean over recall levels
/// `k/100` of the best precision among ranking prefixes reaching that
/// recall. Prefix counts are recomputed from scratch for every prefix.
pub fn class_pr_ref(
    dets: &[Detection],
    gts: &[EvalGt],
    class: u64,
    t: f64,
    max_dets: usize,
) -> Option<(f64, f64)> {
    let positives = gts
        .iter()
        .filter(|g| !g.ignore && g.category_id == class)
        .count();
    if positives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap()
            .then(dets[a].image_id.cmp(&dets[b].image_id))
            .then(a.cmp(&b))
    });
    // per-image cap, counted in rank order within each image
    let mut seen: std::collections::HashMap<u64, usize> = Default::default();
    let mut ranked = Vec::new();
    for &i in &order {
        let k = seen.entry(dets[i].image_id).or_default();
        if *k < max_dets {
            *k += 1;
            ranked.push(i);
        }
    }

    let mut taken = vec![false; gts.len()];
    // true = TP, false = FP; ignored detections are left out
    let mut outcome: Vec<bool> = Vec::new();
    for &i in &ranked {
        let d = &dets[i];
        if d.category_id != class {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt.image_id != d.image_id || gt.ignore || gt.category_id != class || taken[g] {
                continue;
            }
            let v = iou_ref(&d.bbox, &gt.bbox);
            if v >= t && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((g, v));
            }
        }
        match best {
            Some((g, _)) => {
                taken[g] = true;
                outcome.push(true);
            }
            None => {
                let on_ignored = gts.iter().any(|gt| {
                    gt.image_id == d.image_id && gt.ignore && iou_ref(&d.bbox, &gt.bbox) >= t
                });
                if !on_ignored {
                    outcome.push(false);
                }
            }
        }
    }

    let prefix = |k: usize| {
        let tp = outcome[..k].iter().filter(|x| **x).count();
        (tp as f64 / positives as f64, tp as f64 / k as f64)
    };
    let mut ap = 0.0;
    for level in 0..=100 {
        let r = level as f64 / 100.0;
        let mut best = 0.0f64;
        for k in 1..=outcome.len() {
            let (rec, prec) = prefix(k);
            if rec >= r {
                best = best.max(prec);
            }
        }
        ap += best;
    }
    let recall = outcome.iter().filter(|x| **x).count() as f64 / positives as f64;
    Some((ap / 101.0, recall))
}

/// Class-mean AP at one threshold.
pub fn ap_ref(dets: &[Detection], gts: &[EvalGt], t: f64, max_dets: usize) -> Option<f64> {
    let classes: BTreeSet<u64> = gts
        .iter()
        .filter(|g| !g.ignore)
        .map(|g| g.category_id)
        .collect();
    let v: Vec<f64> = classes
        .iter()
        .filter_map(|&c| class_pr_ref(dets, gts, c, t, max_dets).map(|x| x.0))
        .collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Recall averaged over the COCO thresholds, then over classes.
pub fn ar_ref(dets: &[Detection], gts: &[EvalGt], max_dets: usize) -> Option<f64> {
    let classes: BTreeSet<u64> = gts
        .iter()
        .filter(|g| !g.ignore)
        .map(|g| g.category_id)
        .collect();
    let v: Vec<f64> = classes
        .iter()
        .map(|&c| {
            COCO_THRESHOLDS
                .iter()
                .map(|&t| class_pr_ref(dets, gts, c, t, max_dets).unwrap().1)
                .sum::<f64>()
                / COCO_THRESHOLDS.len() as f64
        })
        .collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Central finite differences.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let up = f(&probe);
            probe[i] = x[i] - eps;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, c)| (a - c).abs() / c.abs().max(1e-8))
        .fold(0.0, f64::max)
}
