//! Detection losses and their analytic gradients.
//!
//! Box regression is `lambda1 * (1 - GIoU) + lambda2 * L1`, where the L1 term
//! is taken over normalized `(cx/W, cy/H, w/W, h/H)`. Classification uses the
//! focal loss; the grounding head uses a soft-token cross-entropy against a
//! uniform target over the span of tokens naming the object.
//!
//! Gradients are with respect to the prediction: the four corner coordinates
//! of the predicted box, the probability for focal loss, or the token logits.

use crate::datamodel::ImageRecord;
use crate::error::{Error, Result};
use crate::geometry::{self, BBox};

/// Probability clamp applied before taking logs.
pub const PROB_EPS: f64 = 1e-7;

/// Default number of token positions for the soft-token head.
pub const DEFAULT_TOKEN_LEN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// GIoU weight.
    pub lambda1: f64,
    /// L1 weight.
    pub lambda2: f64,
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        for (what, v) in [("lambda1", lambda1), ("lambda2", lambda2)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "{what} must be finite and >= 0, got {v}"
                )));
            }
        }
        if lambda1 == 0.0 && lambda2 == 0.0 {
            return Err(Error::Config("loss weights cannot both be zero".into()));
        }
        Ok(Self { lambda1, lambda2 })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 2.0,
            lambda2: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl FocalParams {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!(
                "focal alpha must be in [0, 1], got {alpha}"
            )));
        }
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::Config(format!(
                "focal gamma must be >= 0, got {gamma}"
            )));
        }
        Ok(Self { alpha, gamma })
    }
}

impl Default for FocalParams {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 2.0,
        }
    }
}

/// Half-open span `[start, end)` over `len` token positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenSpan {
    start: usize,
    end: usize,
    len: usize,
}

impl TokenSpan {
    pub fn new(start: usize, end: usize, len: usize) -> Result<Self> {
        if start >= end || end > len {
            return Err(Error::Config(format!(
                "token span [{start}, {end}) invalid for {len} positions"
            )));
        }
        Ok(Self { start, end, len })
    }

    /// Target for a prediction with no matched object: the last position.
    pub fn no_object(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Config("token length must be positive".into()));
        }
        Self::new(len - 1, len, len)
    }

    pub fn start(&self) -> usize {
        self.start
    }
    pub fn end(&self) -> usize {
        self.end
    }
    pub fn len(&self) -> usize {
        self.len
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn width(&self) -> usize {
        self.end - self.start
    }
    pub fn contains(&self, i: usize) -> bool {
        (self.start..self.end).contains(&i)
    }
}

pub fn giou_loss(b: &BBox, bhat: &BBox) -> f64 {
    1.0 - geometry::giou(b, bhat)
}

fn normalized_cxcywh(b: &BBox, w: f64, h: f64) -> [f64; 4] {
    let [cx, cy, bw, bh] = b.to_cxcywh();
    [cx / w, cy / h, bw / w, bh / h]
}

/// L1 distance in normalized center-size coordinates.
pub fn l1_box(b: &BBox, bhat: &BBox, norm: &ImageRecord) -> f64 {
    let (w, h) = (norm.width as f64, norm.height as f64);
    let t = normalized_cxcywh(b, w, h);
    let p = normalized_cxcywh(bhat, w, h);
    t.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum()
}

pub fn box_loss(b: &BBox, bhat: &BBox, w: &LossWeights, norm: &ImageRecord) -> f64 {
    w.lambda1 * giou_loss(b, bhat) + w.lambda2 * l1_box(b, bhat, norm)
}

/// Sigmoid of a logit, clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub fn prob_from_logit(z: f64) -> f64 {
    (1.0 / (1.0 + (-z).exp())).clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// `-alpha_t (1 - p_t)^gamma ln(p_t)`.
///
/// `p` may lie anywhere in `[0, 1]`; it is clamped by [`PROB_EPS`] first.
pub fn focal_loss(p: f64, y: bool, fp: &FocalParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain {
            what: "probability must lie in [0, 1]",
            value: p,
        });
    }
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let (pt, at) = if y {
        (p, fp.alpha)
    } else {
        (1.0 - p, 1.0 - fp.alpha)
    };
    Ok(-at * (1.0 - pt).powf(fp.gamma) * pt.ln())
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Cross-entropy between `softmax(logits)` and the uniform distribution on
/// `span`.
pub fn soft_token_loss(logits: &[f64], span: &TokenSpan) -> Result<f64> {
    if logits.len() != span.len {
        return Err(Error::Config(format!(
            "{} logits for a span over {} positions",
            logits.len(),
            span.len
        )));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::Domain {
            what: "logits must be finite",
            value: f64::NAN,
        });
    }
    let ls = log_softmax(logits);
    let k = span.width() as f64;
    Ok(-ls[span.start..span.end].iter().sum::<f64>() / k)
}

/// Uniform-weight reduction of per-decoder-block losses.
pub fn auxiliary_sum(per_block: &[f64]) -> f64 {
    per_block.iter().sum()
}

/// Weighting between classification and box terms in the student objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveWeights {
    pub classification: f64,
    pub boxes: LossWeights,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self {
            classification: 1.0,
            boxes: LossWeights::default(),
        }
    }
}

impl ObjectiveWeights {
    /// `classification * cls + box_loss`, for one matched pair.
    pub fn total(&self, cls: f64, target: &BBox, pred: &BBox, norm: &ImageRecord) -> f64 {
        self.classification * cls + box_loss(target, pred, &self.boxes, norm)
    }
}

/// A loss with a fixed target, differentiable in its prediction parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum DiffLoss {
    /// Parameters: predicted corners `[x1, y1, x2, y2]`.
    Giou { target: BBox },
    /// Parameters: predicted corners.
    L1 { target: BBox, image: ImageRecord },
    /// Parameters: predicted corners.
    Box {
        target: BBox,
        weights: LossWeights,
        image: ImageRecord,
    },
    /// Parameters: `[p]`.
    Focal { label: bool, params: FocalParams },
    /// Parameters: the token logits.
    SoftToken { span: TokenSpan },
}

impl DiffLoss {
    pub fn name(&self) -> &'static str {
        match self {
            DiffLoss::Giou { .. } => "giou",
            DiffLoss::L1 { .. } => "l1",
            DiffLoss::Box { .. } => "box",
            DiffLoss::Focal { .. } => "focal",
            DiffLoss::SoftToken { .. } => "soft-token",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DiffLoss::Giou { .. } | DiffLoss::L1 { .. } | DiffLoss::Box { .. } => 4,
            DiffLoss::Focal { .. } => 1,
            DiffLoss::SoftToken { span } => span.len,
        }
    }

    fn check_dim(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim() {
            return Err(Error::Config(format!(
                "{} loss takes {} parameters, got {}",
                self.name(),
                self.dim(),
                point.len()
            )));
        }
        Ok(())
    }

    pub fn value(&self, point: &[f64]) -> Result<f64> {
        self.check_dim(point)?;
        match self {
            DiffLoss::Giou { target } => Ok(giou_loss(target, &as_box(point)?)),
            DiffLoss::L1 { target, image } => Ok(l1_box(target, &as_box(point)?, image)),
            DiffLoss::Box {
                target,
                weights,
                image,
            } => Ok(box_loss(target, &as_box(point)?, weights, image)),
            DiffLoss::Focal { label, params } => focal_loss(point[0], *label, params),
            DiffLoss::SoftToken { span } => soft_token_loss(point, span),
        }
    }

    /// Analytic gradient. Points on a kink of the loss are reported as
    /// [`Error::NonDifferentiable`].
    pub fn grad(&self, point: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(point)?;
        match self {
            DiffLoss::Giou { target } => {
                let pred = as_box(point)?;
                ensure_smooth(giou_kink_distance(target, &pred), "GIoU")?;
                Ok(giou_loss_grad(target, &pred).to_vec())
            }
            DiffLoss::L1 { target, image } => {
                let pred = as_box(point)?;
                ensure_smooth(l1_kink_distance(target, &pred), "L1")?;
                Ok(l1_grad(target, &pred, image).to_vec())
            }
            DiffLoss::Box {
                target,
                weights,
                image,
            } => {
                let pred = as_box(point)?;
                ensure_smooth(l1_kink_distance(target, &pred), "L1")?;
                ensure_smooth(giou_kink_distance(target, &pred), "GIoU")?;
                let g = giou_loss_grad(target, &pred);
                let l = l1_grad(target, &pred, image);
                Ok((0..4)
                    .map(|i| weights.lambda1 * g[i] + weights.lambda2 * l[i])
                    .collect())
            }
            DiffLoss::Focal { label, params } => Ok(vec![focal_grad(point[0], *label, params)?]),
            DiffLoss::SoftToken { span } => soft_token_grad(point, span),
        }
    }

    /// Distance from `point` to the nearest locus where the loss is not
    /// smooth, in parameter units. `f64::INFINITY` when there is none.
    pub fn kink_distance(&self, point: &[f64]) -> Result<f64> {
        self.check_dim(point)?;
        Ok(match self {
            DiffLoss::Giou { target } => giou_kink_distance(target, &as_box(point)?),
            DiffLoss::L1 { target, .. } => l1_kink_distance(target, &as_box(point)?),
            DiffLoss::Box { target, .. } => {
                let p = as_box(point)?;
                giou_kink_distance(target, &p).min(l1_kink_distance(target, &p))
            }
            DiffLoss::Focal { .. } => {
                let p = point[0];
                (p - PROB_EPS).min(1.0 - PROB_EPS - p)
            }
            DiffLoss::SoftToken { .. } => f64::INFINITY,
        })
    }
}

/// Finite-difference check of [`DiffLoss::grad`].
///
/// Returns `max_i |analytic_i - central_i| / max(1e-8, |central_i|)` with
/// central differences of step `eps`. Refuses points closer than `10 * eps`
/// to a kink.
pub fn grad_check(loss: &DiffLoss, point: &[f64], eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    let dist = loss.kink_distance(point)?;
    if dist < 10.0 * eps {
        return Err(Error::NonDifferentiable(format!(
            "{} loss: point is {dist:.3e} from a non-smooth locus, need at least {:.3e}",
            loss.name(),
            10.0 * eps
        )));
    }
    let analytic = loss.grad(point)?;
    let mut worst: f64 = 0.0;
    let mut probe = point.to_vec();
    for i in 0..point.len() {
        probe[i] = point[i] + eps;
        let up = loss.value(&probe)?;
        probe[i] = point[i] - eps;
        let down = loss.value(&probe)?;
        probe[i] = point[i];
        let central = (up - down) / (2.0 * eps);
        let err = (analytic[i] - central).abs() / central.abs().max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}

fn as_box(point: &[f64]) -> Result<BBox> {
    BBox::new(point[0], point[1], point[2], point[3])
}

fn ensure_smooth(dist: f64, what: &str) -> Result<()> {
    if dist == 0.0 {
        return Err(Error::NonDifferentiable(format!(
            "{what} term at a kink (coordinate difference is exactly zero)"
        )));
    }
    Ok(())
}

fn giou_kink_distance(t: &BBox, p: &BBox) -> f64 {
    // min/max switches, and intersection extent crossing zero, per axis
    [
        p.x1() - t.x1(),
        p.x2() - t.x2(),
        p.y1() - t.y1(),
        p.y2() - t.y2(),
        p.x1() - t.x2(),
        p.x2() - t.x1(),
        p.y1() - t.y2(),
        p.y2() - t.y1(),
    ]
    .iter()
    .fold(f64::INFINITY, |m, d| m.min(d.abs()))
}

fn l1_kink_distance(t: &BBox, p: &BBox) -> f64 {
    [
        (p.x1() + p.x2()) - (t.x1() + t.x2()),
        (p.y1() + p.y2()) - (t.y1() + t.y2()),
        p.width() - t.width(),
        p.height() - t.height(),
    ]
    .iter()
    .fold(f64::INFINITY, |m, d| m.min(d.abs()))
}

/// d(1 - GIoU)/d(pred corners).
fn giou_loss_grad(t: &BBox, p: &BBox) -> [f64; 4] {
    let (pw, ph) = (p.width(), p.height());
    let iw_raw = p.x2().min(t.x2()) - p.x1().max(t.x1());
    let ih_raw = p.y2().min(t.y2()) - p.y1().max(t.y1());
    let (iw, ih) = (iw_raw.max(0.0), ih_raw.max(0.0));
    let inter = iw * ih;
    let union = p.area() + t.area() - inter;
    let hull = geometry::enclosing_box(t, p);
    let (cw, ch) = (hull.width(), hull.height());
    let c = cw * ch;

    // d iw / d(x1, x2), d ih / d(y1, y2)
    let overlap = iw_raw > 0.0 && ih_raw > 0.0;
    let diw = if overlap {
        [
            if p.x1() > t.x1() { -1.0 } else { 0.0 },
            if p.x2() < t.x2() { 1.0 } else { 0.0 },
        ]
    } else {
        [0.0, 0.0]
    };
    let dih = if overlap {
        [
            if p.y1() > t.y1() { -1.0 } else { 0.0 },
            if p.y2() < t.y2() { 1.0 } else { 0.0 },
        ]
    } else {
        [0.0, 0.0]
    };
    let d_inter = [ih * diw[0], iw * dih[0], ih * diw[1], iw * dih[1]];
    let d_area = [-ph, -pw, ph, pw];
    let dcw = [
        if p.x1() < t.x1() { -1.0 } else { 0.0 },
        if p.x2() > t.x2() { 1.0 } else { 0.0 },
    ];
    let dch = [
        if p.y1() < t.y1() { -1.0 } else { 0.0 },
        if p.y2() > t.y2() { 1.0 } else { 0.0 },
    ];
    let d_hull = [ch * dcw[0], cw * dch[0], ch * dcw[1], cw * dch[1]];

    // loss = 2 - inter/union - union/hull
    let mut g = [0.0; 4];
    for i in 0..4 {
        let d_union = d_area[i] - d_inter[i];
        let d_iou = (d_inter[i] * union - inter * d_union) / (union * union);
        let d_ratio = (d_union * c - union * d_hull[i]) / (c * c);
        g[i] = -d_iou - d_ratio;
    }
    g
}

fn l1_grad(t: &BBox, p: &BBox, image: &ImageRecord) -> [f64; 4] {
    let (w, h) = (image.width as f64, image.height as f64);
    let tn = normalized_cxcywh(t, w, h);
    let pn = normalized_cxcywh(p, w, h);
    let s: Vec<f64> = (0..4).map(|i| (pn[i] - tn[i]).signum()).collect();
    // cx = (x1 + x2) / 2W, w = (x2 - x1) / W
    [
        s[0] * 0.5 / w - s[2] / w,
        s[1] * 0.5 / h - s[3] / h,
        s[0] * 0.5 / w + s[2] / w,
        s[1] * 0.5 / h + s[3] / h,
    ]
}

fn focal_grad(p: f64, y: bool, fp: &FocalParams) -> Result<f64> {
    if !(p > PROB_EPS && p < 1.0 - PROB_EPS) {
        return Err(Error::NonDifferentiable(format!(
            "focal loss is clamped at p = {p}"
        )));
    }
    let (pt, at, sign) = if y {
        (p, fp.alpha, 1.0)
    } else {
        (1.0 - p, 1.0 - fp.alpha, -1.0)
    };
    let q = 1.0 - pt;
    let mut d = -at * q.powf(fp.gamma) / pt;
    if fp.gamma != 0.0 {
        d += at * fp.gamma * q.powf(fp.gamma - 1.0) * pt.ln();
    }
    Ok(sign * d)
}

fn soft_token_grad(logits: &[f64], span: &TokenSpan) -> Result<Vec<f64>> {
    soft_token_loss(logits, span)?;
    let k = span.width() as f64;
    Ok(log_softmax(logits)
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.exp() - if span.contains(i) { 1.0 / k } else { 0.0 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn unit_image() -> ImageRecord {
        ImageRecord::new(1, 1, 1)
    }

    #[test]
    fn giou_loss_examples() {
        let u = b(0.0, 0.0, 1.0, 1.0);
        assert_eq!(giou_loss(&u, &u), 0.0);
        assert_eq!(giou_loss(&u, &b(1.0, 0.0, 2.0, 1.0)), 1.0);
        assert_abs_diff_eq!(
            giou_loss(&u, &b(2.0, 0.0, 3.0, 1.0)),
            4.0 / 3.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn l1_examples() {
        let img = unit_image();
        let u = b(0.0, 0.0, 1.0, 1.0);
        assert_eq!(l1_box(&u, &u, &img), 0.0);
        assert_abs_diff_eq!(
            l1_box(&u, &b(0.0, 0.0, 1.0, 0.5), &img),
            0.75,
            epsilon = 1e-15
        );

        let img = ImageRecord::new(1, 200, 100);
        let t = b(20.0, 10.0, 60.0, 50.0);
        let shifted = t.translate(0.1 * 200.0, 0.0).unwrap();
        assert_abs_diff_eq!(l1_box(&t, &shifted, &img), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn box_loss_examples() {
        let w = LossWeights::default();
        let img = unit_image();
        let u = b(0.0, 0.0, 1.0, 1.0);
        assert_eq!(box_loss(&u, &u, &w, &img), 0.0);
        assert_abs_diff_eq!(
            box_loss(&u, &b(1.0, 0.0, 2.0, 1.0), &w, &img),
            7.0,
            epsilon = 1e-12
        );

        let only_l1 = LossWeights::new(0.0, 1.0).unwrap();
        let p = b(0.2, 0.1, 0.7, 0.9);
        assert_eq!(box_loss(&u, &p, &only_l1, &img), l1_box(&u, &p, &img));
    }

    #[test]
    fn weights_validated() {
        assert!(LossWeights::new(0.0, 0.0).is_err());
        assert!(LossWeights::new(-1.0, 1.0).is_err());
        assert!(LossWeights::new(f64::NAN, 1.0).is_err());
        assert!(FocalParams::new(1.5, 2.0).is_err());
        assert!(FocalParams::new(0.5, -1.0).is_err());
    }

    #[test]
    fn focal_examples() {
        let fp = FocalParams::default();
        assert!(focal_loss(1.0, true, &fp).unwrap() < 1e-20);
        let ce = FocalParams::new(0.5, 0.0).unwrap();
        assert_abs_diff_eq!(
            focal_loss(0.5, true, &ce).unwrap(),
            0.5 * 2f64.ln(),
            epsilon = 1e-15
        );
        let v = focal_loss(0.9, true, &FocalParams::new(0.25, 2.0).unwrap()).unwrap();
        let expected = 0.25 * 0.01 * -(0.9f64.ln());
        assert_abs_diff_eq!(v, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(v, 2.634e-4, epsilon = 1e-7);
    }

    #[test]
    fn focal_domain_error() {
        let fp = FocalParams::default();
        assert!(matches!(
            focal_loss(1.2, true, &fp),
            Err(Error::Domain { .. })
        ));
        assert!(matches!(
            focal_loss(-0.1, false, &fp),
            Err(Error::Domain { .. })
        ));
        assert!(focal_loss(f64::NAN, false, &fp).is_err());
    }

    #[test]
    fn focal_is_cross_entropy_for_gamma_zero_alpha_one() {
        let fp = FocalParams::new(1.0, 0.0).unwrap();
        for i in 1..100 {
            let p = i as f64 / 100.0;
            assert_abs_diff_eq!(focal_loss(p, true, &fp).unwrap(), -p.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn soft_token_examples() {
        let span = TokenSpan::new(0, 4, 4).unwrap();
        assert_abs_diff_eq!(
            soft_token_loss(&[0.3; 4], &span).unwrap(),
            4f64.ln(),
            epsilon = 1e-12
        );
        let first = TokenSpan::new(0, 1, 4).unwrap();
        let v = soft_token_loss(&[50.0, -50.0, -50.0, -50.0], &first).unwrap();
        assert!(v < 1e-40);
        let two = TokenSpan::new(0, 1, 2).unwrap();
        assert_abs_diff_eq!(
            soft_token_loss(&[0.0, 0.0], &two).unwrap(),
            2f64.ln(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn token_span_validation() {
        assert!(TokenSpan::new(2, 2, 4).is_err());
        assert!(TokenSpan::new(0, 5, 4).is_err());
        let none = TokenSpan::no_object(DEFAULT_TOKEN_LEN).unwrap();
        assert_eq!((none.start(), none.end()), (255, 256));
        assert!(soft_token_loss(&[0.0; 3], &TokenSpan::new(0, 1, 4).unwrap()).is_err());
    }

    #[test]
    fn focal_grad_matches_cross_entropy_derivative() {
        let loss = DiffLoss::Focal {
            label: true,
            params: FocalParams::new(1.0, 0.0).unwrap(),
        };
        assert_abs_diff_eq!(loss.grad(&[0.5]).unwrap()[0], -2.0, epsilon = 1e-15);
    }

    #[test]
    fn soft_token_grad_sums_to_zero() {
        let span = TokenSpan::new(1, 3, 5).unwrap();
        let g = DiffLoss::SoftToken { span }
            .grad(&[0.3, -1.2, 2.0, 0.1, 0.7])
            .unwrap();
        assert_abs_diff_eq!(g.iter().sum::<f64>(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn l1_kink_is_reported() {
        let t = b(0.0, 0.0, 10.0, 10.0);
        let loss = DiffLoss::L1 {
            target: t,
            image: ImageRecord::new(1, 20, 20),
        };
        assert!(matches!(
            loss.grad(&t.corners()),
            Err(Error::NonDifferentiable(_))
        ));
        assert!(matches!(
            grad_check(&loss, &t.corners(), 1e-5),
            Err(Error::NonDifferentiable(_))
        ));
    }

    #[test]
    fn box_grad_one_sided_at_identity() {
        // At identical boxes only one-sided derivatives exist. Moving x2 to
        // the right: the GIoU term grows like 1/width, the L1 term like
        // (1/2 + 1)/W.
        let img = ImageRecord::new(1, 40, 30);
        let t = b(4.0, 3.0, 14.0, 9.0);
        let weights = LossWeights::default();
        let loss = DiffLoss::Box {
            target: t,
            weights,
            image: img.clone(),
        };
        assert!(loss.grad(&t.corners()).is_err());

        let h = 1e-7;
        let mut p = t.corners();
        p[2] += h;
        let probe = (loss.value(&p).unwrap() - loss.value(&t.corners()).unwrap()) / h;
        let expected = weights.lambda1 / t.width() + weights.lambda2 * 1.5 / img.width as f64;
        assert_abs_diff_eq!(probe, expected, epsilon = 1e-6);
        // x1, y1 and y2 still coincide with the target, so this is a kink too
        assert!(loss.grad(&p).is_err());
    }

    #[test]
    fn constant_slice_has_zero_error() {
        let loss = DiffLoss::SoftToken {
            span: TokenSpan::new(0, 1, 1).unwrap(),
        };
        assert_eq!(grad_check(&loss, &[0.37], 1e-5).unwrap(), 0.0);
    }

    #[test]
    fn auxiliary_and_total() {
        assert_eq!(auxiliary_sum(&[1.0, 2.5, 0.5]), 4.0);
        let w = ObjectiveWeights::default();
        let u = b(0.0, 0.0, 1.0, 1.0);
        assert_eq!(w.total(0.3, &u, &u, &unit_image()), 0.3);
    }
}
