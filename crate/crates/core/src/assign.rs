//! Bipartite assignment and the training losses, evaluated as plain scalar
//! functions (no gradients).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lane::{BevExtent, LaneSegment, Point3, Polyline};
use crate::matrix::Matrix;

/// Result of [`hungarian`]: `(row, col)` pairs sorted by row, and their
/// summed cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
    pub cost: f64,
}

/// Minimum-cost assignment of rows (predictions) to columns (ground truth).
///
/// Rectangular matrices leave `|rows - cols|` rows or columns unassigned.
/// Shortest augmenting path with potentials, O(n^2 m).
pub fn hungarian(cost: &Matrix) -> Result<Assignment> {
    if !cost.all_finite() {
        return Err(Error::NonFinite("cost matrix"));
    }
    let (rows, cols) = cost.shape();
    if rows == 0 || cols == 0 {
        return Ok(Assignment { pairs: Vec::new(), cost: 0.0 });
    }
    let mut pairs = if rows <= cols {
        solve_wide(cost)
    } else {
        let t = cost.transpose();
        solve_wide(&t).into_iter().map(|(c, r)| (r, c)).collect()
    };
    pairs.sort_unstable();
    let total = pairs.iter().map(|&(r, c)| cost.get(r, c)).sum();
    Ok(Assignment { pairs, cost: total })
}

fn solve_wide(a: &Matrix) -> Vec<(usize, usize)> {
    let (n, m) = a.shape();
    debug_assert!(n <= m);
    // 1-based with a virtual column 0.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a.get(i0 - 1, j - 1) - u[i0] - v[j];
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
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=m).filter(|&j| owner[j] != 0).map(|j| (owner[j] - 1, j - 1)).collect()
}

/// Every target repeated `k` times in stable round order:
/// `g0, g1, .., g0, g1, ..`.
pub fn one_to_many_targets<T: Clone>(gt: &[T], k: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(gt.len() * k);
    for _ in 0..k {
        out.extend_from_slice(gt);
    }
    out
}

/// One-to-many matching: the cost columns are repeated `k` times and the
/// returned pairs map back to original ground-truth indices.
pub fn one_to_many_assign(cost: &Matrix, k: usize) -> Result<Assignment> {
    if k == 0 {
        return Err(Error::Param("one-to-many k must be >= 1".into()));
    }
    let n_gt = cost.cols();
    let expanded = Matrix::from_fn(cost.rows(), n_gt * k, |i, j| cost.get(i, j % n_gt.max(1)));
    let a = hungarian(&expanded)?;
    Ok(Assignment { pairs: a.pairs.into_iter().map(|(r, c)| (r, c % n_gt)).collect(), cost: a.cost })
}

pub const FOCAL_GAMMA: f64 = 2.0;
pub const FOCAL_ALPHA: f64 = 0.25;
/// Default one-to-many repetition factor.
pub const O2M_K: usize = 3;

const PROB_EPS: f64 = 1e-12;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn manhattan(a: &Polyline, b: &Polyline) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(alloc::format!("{} vs {} points", a.len(), b.len())));
    }
    Ok(a.points().iter().zip(b.points()).map(|(p, q)| (p.x - q.x).abs() + (p.y - q.y).abs() + (p.z - q.z).abs()).sum())
}

/// Summed Manhattan distance over centerline, left and right boundaries.
pub fn loss_vec(pred: &LaneSegment, gt: &LaneSegment) -> Result<f64> {
    Ok(manhattan(&pred.centerline, &gt.centerline)?
        + manhattan(&pred.left, &gt.left)?
        + manhattan(&pred.right, &gt.right)?)
}

/// Summed Manhattan distance between two road-boundary polylines.
pub fn loss_vec_polyline(pred: &Polyline, gt: &Polyline) -> Result<f64> {
    manhattan(pred, gt)
}

fn same_shape(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(alloc::format!("mask {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Mean binary cross-entropy of a probability mask against a binary mask.
pub fn loss_ce(pred: &Matrix, gt: &Matrix) -> Result<f64> {
    same_shape(pred, gt)?;
    let n = pred.as_slice().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .map(|(&p, &g)| {
            let p = clamp_prob(p);
            -(g * p.ln() + (1.0 - g) * (1.0 - p).ln())
        })
        .sum();
    Ok(sum / n as f64)
}

/// Soft dice loss `1 - 2|P∩G| / (|P| + |G|)`.
pub fn loss_dice(pred: &Matrix, gt: &Matrix) -> Result<f64> {
    same_shape(pred, gt)?;
    let (mut inter, mut sp, mut sg) = (0.0, 0.0, 0.0);
    for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
        inter += p * g;
        sp += p;
        sg += g;
    }
    if sp + sg == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 - 2.0 * inter / (sp + sg))
}

/// Binary focal loss for probability `p` and label `y`.
pub fn loss_focal(p: f64, y: bool, gamma: f64, alpha: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::OutOfRange(alloc::format!("probability {p} outside (0, 1)")));
    }
    Ok(if y { -alpha * (1.0 - p).powf(gamma) * p.ln() } else { -(1.0 - alpha) * p.powf(gamma) * (1.0 - p).ln() })
}

/// Focal classification matching cost for the probability assigned to the
/// target class: positive focal term minus negative focal term.
pub fn focal_class_cost(p: f64, gamma: f64, alpha: f64) -> f64 {
    let p = clamp_prob(p);
    let pos = alpha * (1.0 - p).powf(gamma) * -(p.ln());
    let neg = (1.0 - alpha) * p.powf(gamma) * -((1.0 - p).ln());
    pos - neg
}

/// `-ln p[target]`.
pub fn cross_entropy(probs: &[f64], target: usize) -> Result<f64> {
    let p = probs
        .get(target)
        .ok_or_else(|| Error::Shape(alloc::format!("target {target} with {} classes", probs.len())))?;
    Ok(-clamp_prob(*p).ln())
}

/// One-vs-all focal classification loss summed over classes; `target`
/// `None` means no object (every class negative).
pub fn loss_cls(probs: &[f64], target: Option<usize>, gamma: f64, alpha: f64) -> Result<f64> {
    probs.iter().enumerate().map(|(c, &p)| loss_focal(clamp_prob(p), Some(c) == target, gamma, alpha)).sum()
}

/// Mean focal loss over every entry of a predicted relationship matrix.
pub fn loss_top(pred: &Matrix, gt: &Matrix, gamma: f64, alpha: f64) -> Result<f64> {
    same_shape(pred, gt)?;
    let n = pred.as_slice().len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
        sum += loss_focal(clamp_prob(p), g > 0.5, gamma, alpha)?;
    }
    Ok(sum / n as f64)
}

/// Loss weights; the same values weight the matching cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub vec_ls: f64,
    pub seg_ls: f64,
    pub ce: f64,
    pub dice: f64,
    pub cls_ls: f64,
    pub type_: f64,
    pub top: f64,
    pub o2m: f64,
    pub dn: f64,
    pub vec_rb: f64,
    pub seg_rb: f64,
    pub cls_rb: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            vec_ls: 0.025,
            seg_ls: 3.0,
            ce: 1.0,
            dice: 1.0,
            cls_ls: 1.5,
            type_: 0.01,
            top: 5.0,
            o2m: 1.0,
            dn: 1.0,
            vec_rb: 0.0125,
            seg_rb: 1.5,
            cls_rb: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.vec_ls,
            self.seg_ls,
            self.ce,
            self.dice,
            self.cls_ls,
            self.type_,
            self.top,
            self.o2m,
            self.dn,
            self.vec_rb,
            self.seg_rb,
            self.cls_rb,
        ];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::OutOfRange("loss weights must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Raw (unweighted) lane-head loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LaneLossTerms {
    pub vec: f64,
    pub ce: f64,
    pub dice: f64,
    pub cls: f64,
    pub type_: f64,
    pub top: f64,
    pub o2m: f64,
    pub dn: f64,
}

/// Raw road-boundary loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundaryLossTerms {
    pub vec: f64,
    pub ce: f64,
    pub dice: f64,
    pub cls: f64,
    pub o2m: f64,
}

/// Weighted contributions in a fixed order; `total` is their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub items: Vec<(&'static str, f64)>,
    pub total: f64,
}

impl LossBreakdown {
    fn from_items(items: Vec<(&'static str, f64)>) -> Self {
        let total = items.iter().map(|(_, v)| v).sum();
        Self { items, total }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.items.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

pub fn total_loss_ls(t: &LaneLossTerms, w: &LossWeights) -> LossBreakdown {
    LossBreakdown::from_items(vec![
        ("vec", w.vec_ls * t.vec),
        ("seg", w.seg_ls * (w.ce * t.ce + w.dice * t.dice)),
        ("cls", w.cls_ls * t.cls),
        ("type", w.type_ * t.type_),
        ("top", w.top * t.top),
        ("o2m", w.o2m * t.o2m),
        ("dn", w.dn * t.dn),
    ])
}

pub fn total_loss_rb(t: &BoundaryLossTerms, w: &LossWeights) -> LossBreakdown {
    LossBreakdown::from_items(vec![
        ("vec", w.vec_rb * t.vec),
        ("seg", w.seg_rb * (w.ce * t.ce + w.dice * t.dice)),
        ("cls", w.cls_rb * t.cls),
        ("o2m", w.o2m * t.o2m),
    ])
}

/// Focal constants shared by classification and topology losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalParams {
    pub gamma: f64,
    pub alpha: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self { gamma: FOCAL_GAMMA, alpha: FOCAL_ALPHA }
    }
}

/// A lane-head prediction as seen by the losses.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneQuery {
    pub segment: LaneSegment,
    /// One probability per [`crate::lane::SegClass`].
    pub class_probs: Vec<f64>,
    pub left_type_probs: [f64; 3],
    pub right_type_probs: [f64; 3],
    /// Probability mask over the BEV raster.
    pub mask: Matrix,
}

/// Per-pair terms shared by the main, one-to-many and denoising sets.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MatchedTerms {
    pub vec: f64,
    pub ce: f64,
    pub dice: f64,
    pub cls: f64,
    pub type_: f64,
}

impl MatchedTerms {
    /// The lane loss restricted to geometry, mask, class and type; used for
    /// the auxiliary one-to-many and denoising sets.
    pub fn weighted(&self, w: &LossWeights) -> f64 {
        w.vec_ls * self.vec
            + w.seg_ls * (w.ce * self.ce + w.dice * self.dice)
            + w.cls_ls * self.cls
            + w.type_ * self.type_
    }
}

/// Averages the matched-pair losses. Unmatched predictions contribute a
/// no-object classification term.
pub fn matched_terms(
    preds: &[LaneQuery],
    gts: &[LaneSegment],
    gt_masks: &[Matrix],
    pairs: &[(usize, usize)],
    focal: FocalParams,
) -> Result<MatchedTerms> {
    if gts.len() != gt_masks.len() {
        return Err(Error::Shape("one mask per ground-truth segment required".into()));
    }
    let mut t = MatchedTerms::default();
    let mut target = vec![None; preds.len()];
    for &(p, g) in pairs {
        let (pred, gt) = (&preds[p], &gts[g]);
        target[p] = Some(gt.seg_class.index());
        t.vec += loss_vec(&pred.segment, gt)?;
        t.ce += loss_ce(&pred.mask, &gt_masks[g])?;
        t.dice += loss_dice(&pred.mask, &gt_masks[g])?;
        t.type_ += 0.5
            * (cross_entropy(&pred.left_type_probs, gt.left_type.index())?
                + cross_entropy(&pred.right_type_probs, gt.right_type.index())?);
    }
    if !pairs.is_empty() {
        let n = pairs.len() as f64;
        t.vec /= n;
        t.ce /= n;
        t.dice /= n;
        t.type_ /= n;
    }
    if !preds.is_empty() {
        for (pred, tgt) in preds.iter().zip(&target) {
            t.cls += loss_cls(&pred.class_probs, *tgt, focal.gamma, focal.alpha)?;
        }
        t.cls /= preds.len() as f64;
    }
    Ok(t)
}

/// Matching cost `λ_cls · focal + λ_vec · L_vec`, predictions as rows.
pub fn lane_matching_cost(
    preds: &[LaneQuery],
    gts: &[LaneSegment],
    w: &LossWeights,
    focal: FocalParams,
) -> Result<Matrix> {
    let mut c = Matrix::zeros(preds.len(), gts.len());
    for (i, p) in preds.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            let prob = p.class_probs.get(g.seg_class.index()).copied().unwrap_or(0.0);
            let cls = focal_class_cost(prob, focal.gamma, focal.alpha);
            c.set(i, j, w.cls_ls * cls + w.vec_ls * loss_vec(&p.segment, g)?);
        }
    }
    Ok(c)
}

/// Binary raster of a lane segment's area (left boundary then reversed
/// right boundary), sampled at cell centres. Rows run along y, columns
/// along x.
pub fn rasterize_segment(seg: &LaneSegment, extent: &BevExtent, rows: usize, cols: usize) -> Matrix {
    let poly: Vec<Point3> = seg.left.points().iter().chain(seg.right.points().iter().rev()).copied().collect();
    let (cw, ch) = (extent.width() / cols as f64, extent.height() / rows as f64);
    Matrix::from_fn(rows, cols, |r, c| {
        let x = extent.x_min + (c as f64 + 0.5) * cw;
        let y = extent.y_min + (r as f64 + 0.5) * ch;
        if point_in_polygon(x, y, &poly) {
            1.0
        } else {
            0.0
        }
    })
}

fn point_in_polygon(x: f64, y: f64, poly: &[Point3]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}
