//! One-to-one assignment of predictions to ground truth.
//!
//! [`hungarian`] solves the rectangular linear assignment problem with the
//! shortest-augmenting-path form of the Hungarian algorithm, then walks the
//! rows in order to pick the lexicographically smallest pair list among all
//! optimal assignments. The dual potentials from the first solve restrict
//! that walk to zero-reduced-cost edges, so tie-breaking costs almost nothing
//! when the optimum is unique.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datamodel::{Annotation, ImageRecord};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::losses::{giou_loss, l1_box};

/// Rows are predictions, columns are ground-truth objects.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Invalid(format!(
                "{} entries for a {rows}x{cols} cost matrix",
                data.len()
            )));
        }
        for (i, &v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteCost {
                    row: i / cols.max(1),
                    col: i % cols.max(1),
                    value: v,
                });
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::RaggedCostMatrix {
                    row: r,
                    len: row.len(),
                    expected: cols,
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks(self.cols.max(1))
            .take(self.rows)
            .map(<[f64]>::to_vec)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `(prediction, ground truth)` sorted by prediction index.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
    pub unmatched_predictions: Vec<usize>,
}

/// Minimum-cost assignment of size `min(rows, cols)`; ties go to the
/// lexicographically smallest pair list.
pub fn hungarian(c: &CostMatrix) -> Assignment {
    let (n, m) = (c.rows, c.cols);
    if n == 0 || m == 0 {
        return Assignment {
            pairs: vec![],
            total_cost: 0.0,
            unmatched_predictions: (0..n).collect(),
        };
    }
    let transposed = n > m;
    let cost = |r: usize, col: usize| {
        if transposed {
            c.get(col, r)
        } else {
            c.get(r, col)
        }
    };
    let (short, long) = if transposed { (m, n) } else { (n, m) };
    let solver = Lsap::new(short, long, &cost);
    let (assign, opt, u, v) = solver.solve_full();

    let scale = c.data.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let tol = 1e-9 * (1.0 + scale * short as f64);

    // map an optimal assignment into prediction-major form
    let as_pred_map = |assign: &[usize]| -> Vec<Option<usize>> {
        let mut pred = vec![None; n];
        for (s, &l) in assign.iter().enumerate() {
            if transposed {
                pred[l] = Some(s);
            } else {
                pred[s] = Some(l);
            }
        }
        pred
    };
    let reduced = |pred: usize, gt: usize| {
        if transposed {
            c.get(pred, gt) - u[gt] - v[pred]
        } else {
            c.get(pred, gt) - u[pred] - v[gt]
        }
    };

    // Walk predictions in order, trying to pin each to the smallest gt
    // index that still admits an optimal completion.
    let mut fixed: Vec<Option<Option<usize>>> = vec![None; n];
    let mut incumbent = as_pred_map(&assign);
    for p in 0..n {
        let current = incumbent[p];
        let limit = current.unwrap_or(m);
        let mut chosen = current;
        for g in 0..limit {
            if fixed.contains(&Some(Some(g))) || reduced(p, g) > tol {
                continue;
            }
            fixed[p] = Some(Some(g));
            if let Some(sol) = solve_pinned(c, &fixed) {
                if (sol.1 - opt).abs() <= tol {
                    incumbent = sol.0;
                    chosen = Some(g);
                    break;
                }
            }
            fixed[p] = None;
        }
        fixed[p] = Some(chosen);
        debug_assert_eq!(incumbent[p], chosen);
    }

    let mut pairs = Vec::with_capacity(short);
    let mut unmatched = Vec::new();
    for (p, g) in incumbent.iter().enumerate() {
        match g {
            Some(g) => pairs.push((p, *g)),
            None => unmatched.push(p),
        }
    }
    let total_cost = pairs.iter().map(|&(p, g)| c.get(p, g)).sum();
    Assignment {
        pairs,
        total_cost,
        unmatched_predictions: unmatched,
    }
}

/// Solve with some predictions pinned (to a gt, or to "unmatched").
/// Returns the prediction-major assignment and its cost, or `None` if the
/// pins leave no assignment of full size.
fn solve_pinned(
    c: &CostMatrix,
    fixed: &[Option<Option<usize>>],
) -> Option<(Vec<Option<usize>>, f64)> {
    let (n, m) = (c.rows, c.cols);
    let mut used_gt = vec![false; m];
    let mut base = 0.0;
    let mut out = vec![None; n];
    let mut pinned = 0;
    for (p, f) in fixed.iter().enumerate() {
        if let Some(Some(g)) = f {
            used_gt[*g] = true;
            base += c.get(p, *g);
            out[p] = Some(*g);
            pinned += 1;
        }
    }
    let free_preds: Vec<usize> = (0..n).filter(|&p| fixed[p].is_none()).collect();
    let free_gts: Vec<usize> = (0..m).filter(|&g| !used_gt[g]).collect();
    let need = n.min(m) - pinned;
    if free_preds.len().min(free_gts.len()) != need {
        return None;
    }
    if need == 0 {
        return Some((out, base));
    }
    let preds_are_rows = free_preds.len() <= free_gts.len();
    let (rows, cols) = if preds_are_rows {
        (&free_preds, &free_gts)
    } else {
        (&free_gts, &free_preds)
    };
    let cost = |r: usize, col: usize| {
        if preds_are_rows {
            c.get(rows[r], cols[col])
        } else {
            c.get(cols[col], rows[r])
        }
    };
    let (assign, total, _, _) = Lsap::new(rows.len(), cols.len(), &cost).solve_full();
    for (r, &col) in assign.iter().enumerate() {
        if preds_are_rows {
            out[rows[r]] = Some(cols[col]);
        } else {
            out[cols[col]] = Some(rows[r]);
        }
    }
    Some((out, base + total))
}

/// Dense rectangular LSAP with `rows <= cols`.
struct Lsap<'a, F: Fn(usize, usize) -> f64> {
    rows: usize,
    cols: usize,
    cost: &'a F,
}

impl<'a, F: Fn(usize, usize) -> f64> Lsap<'a, F> {
    fn new(rows: usize, cols: usize, cost: &'a F) -> Self {
        debug_assert!(rows <= cols);
        Self { rows, cols, cost }
    }

    /// Returns `(col of each row, total cost, row potentials, col potentials)`.
    fn solve_full(&self) -> (Vec<usize>, f64, Vec<f64>, Vec<f64>) {
        let (n, m) = (self.rows, self.cols);
        // 1-based with a virtual column 0
        let mut u = vec![0.0; n + 1];
        let mut v = vec![0.0; m + 1];
        let mut p = vec![0usize; m + 1];
        let mut way = vec![0usize; m + 1];
        for i in 1..=n {
            p[0] = i;
            let mut j0 = 0;
            let mut minv = vec![f64::INFINITY; m + 1];
            let mut used = vec![false; m + 1];
            loop {
                used[j0] = true;
                let i0 = p[j0];
                let mut delta = f64::INFINITY;
                let mut j1 = 0;
                for j in 1..=m {
                    if used[j] {
                        continue;
                    }
                    let cur = (self.cost)(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
                for j in 0..=m {
                    if used[j] {
                        u[p[j]] += delta;
                        v[j] -= delta;
                    } else {
                        minv[j] -= delta;
                    }
                }
                j0 = j1;
                if p[j0] == 0 {
                    break;
                }
            }
            loop {
                let j1 = way[j0];
                p[j0] = p[j1];
                j0 = j1;
                if j0 == 0 {
                    break;
                }
            }
        }
        let mut assign = vec![0usize; n];
        for j in 1..=m {
            if p[j] != 0 {
                assign[p[j] - 1] = j - 1;
            }
        }
        let total = assign
            .iter()
            .enumerate()
            .map(|(r, &c)| (self.cost)(r, c))
            .sum();
        (assign, total, u[1..].to_vec(), v[1..].to_vec())
    }
}

/// Weights of the matching cost terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchWeights {
    pub w_cls: f64,
    pub w_l1: f64,
    pub w_giou: f64,
}

impl MatchWeights {
    pub fn new(w_cls: f64, w_l1: f64, w_giou: f64) -> Result<Self> {
        let all = [w_cls, w_l1, w_giou];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!(
                "match weights must be finite and >= 0, got {all:?}"
            )));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::Config("match weights cannot all be zero".into()));
        }
        Ok(Self {
            w_cls,
            w_l1,
            w_giou,
        })
    }
}

impl Default for MatchWeights {
    fn default() -> Self {
        Self {
            w_cls: 2.0,
            w_l1: 5.0,
            w_giou: 2.0,
        }
    }
}

/// A predicted box with per-class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPrediction {
    pub bbox: BBox,
    pub class_probs: BTreeMap<u64, f64>,
}

/// `w_cls * (1 - p[gt class]) + w_l1 * L1 + w_giou * (1 - GIoU)`.
pub fn match_cost(
    pred: &ScoredPrediction,
    gt: &Annotation,
    w: &MatchWeights,
    norm: &ImageRecord,
) -> Result<f64> {
    let p = *pred
        .class_probs
        .get(&gt.category_id)
        .ok_or(Error::MissingClassProbability {
            prediction: 0,
            class: gt.category_id,
        })?;
    Ok(w.w_cls * (1.0 - p)
        + w.w_l1 * l1_box(&gt.bbox, &pred.bbox, norm)
        + w.w_giou * giou_loss(&gt.bbox, &pred.bbox))
}

pub fn cost_matrix(
    preds: &[ScoredPrediction],
    gts: &[Annotation],
    w: &MatchWeights,
    norm: &ImageRecord,
) -> Result<CostMatrix> {
    let mut data = Vec::with_capacity(preds.len() * gts.len());
    for (i, pred) in preds.iter().enumerate() {
        for gt in gts {
            data.push(match_cost(pred, gt, w, norm).map_err(|e| match e {
                Error::MissingClassProbability { class, .. } => Error::MissingClassProbability {
                    prediction: i,
                    class,
                },
                other => other,
            })?);
        }
    }
    CostMatrix::new(preds.len(), gts.len(), data)
}

/// Optimal matching of predictions to ground truth under [`match_cost`].
pub fn match_predictions(
    preds: &[ScoredPrediction],
    gts: &[Annotation],
    w: &MatchWeights,
    norm: &ImageRecord,
) -> Result<Assignment> {
    if preds.is_empty() {
        return Err(Error::Invalid(
            "matching needs at least one prediction".into(),
        ));
    }
    Ok(hungarian(&cost_matrix(preds, gts, w, norm)?))
}
