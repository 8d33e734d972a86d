//! Detection AP, topology TOP and the OLUS aggregate.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lane::{
    chamfer, lane_segment_distance, Frame, LaneGraph, Polyline, SegClass, TeAssociation, TrafficElement,
};
use crate::matrix::Matrix;

pub const DISTANCE_THRESHOLDS: [f64; 3] = [1.0, 2.0, 3.0];
pub const TE_IOU: f64 = 0.5;

/// Ranked detections for one class at one threshold.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionResult {
    /// `(confidence, is_true_positive)`
    pub scored: Vec<(f64, bool)>,
    pub n_gt: usize,
}

impl DetectionResult {
    pub fn new(n_gt: usize) -> Self {
        Self { scored: Vec::new(), n_gt }
    }

    /// Flags in rank order; confidences are assigned strictly decreasing.
    pub fn from_flags(flags: &[bool], n_gt: usize) -> Self {
        let n = flags.len() as f64;
        let scored = flags.iter().enumerate().map(|(i, &t)| ((n - i as f64) / n, t)).collect();
        Self { scored, n_gt }
    }

    pub fn n_tp(&self) -> usize {
        self.scored.iter().filter(|s| s.1).count()
    }

    pub fn merge(&mut self, other: &DetectionResult) {
        self.scored.extend_from_slice(&other.scored);
        self.n_gt += other.n_gt;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub result: DetectionResult,
    /// `pairing[p]` is the gt index matched to prediction `p`.
    pub pairing: Vec<Option<usize>>,
}

/// Greedy matching: predictions by descending confidence (stable on index),
/// each taking the nearest unmatched gt within `threshold`, lowest index on
/// ties. `dist` is `n_pred x n_gt`.
pub fn match_dets(confidences: &[f64], dist: &Matrix, threshold: f64) -> Result<Matching> {
    let (np, ng) = dist.shape();
    if np != confidences.len() {
        return Err(Error::Shape(alloc::format!("{} confidences for {np} predictions", confidences.len())));
    }
    let mut order: Vec<usize> = (0..np).collect();
    order.sort_by(|&a, &b| confidences[b].total_cmp(&confidences[a]));
    let mut taken = vec![false; ng];
    let mut pairing = vec![None; np];
    let mut scored = Vec::with_capacity(np);
    for p in order {
        let mut best: Option<(usize, f64)> = None;
        for g in (0..ng).filter(|&g| !taken[g]) {
            let d = dist.get(p, g);
            if d <= threshold && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((g, d));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            pairing[p] = Some(g);
        }
        scored.push((confidences[p], best.is_some()));
    }
    Ok(Matching { result: DetectionResult { scored, n_gt: ng }, pairing })
}

/// All-point interpolated AP. Equal confidences rank false positives first.
/// `None` when there is no ground truth.
pub fn average_precision(r: &DetectionResult) -> Option<f64> {
    if r.n_gt == 0 {
        return None;
    }
    let mut s = r.scored.clone();
    s.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut tp = 0usize;
    let mut prec: Vec<f64> = s
        .iter()
        .enumerate()
        .map(|(i, &(_, t))| {
            tp += t as usize;
            tp as f64 / (i + 1) as f64
        })
        .collect();
    for i in (0..prec.len().saturating_sub(1)).rev() {
        prec[i] = prec[i].max(prec[i + 1]);
    }
    let sum: f64 = s.iter().zip(&prec).filter(|(x, _)| x.1).map(|(_, p)| p).sum();
    Some((sum / r.n_gt as f64).min(1.0))
}

/// Mean of the defined APs, in key order.
pub fn mean_ap<K>(results: &BTreeMap<K, DetectionResult>) -> Option<f64> {
    let aps: Vec<f64> = results.values().filter_map(average_precision).collect();
    if aps.is_empty() {
        None
    } else {
        Some(aps.iter().sum::<f64>() / aps.len() as f64)
    }
}

fn sub_matrix(m: &Matrix, rows: &[usize], cols: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), cols.len(), |i, j| m.get(rows[i], cols[j]))
}

fn indices_of<K: PartialEq>(classes: &[K], k: &K) -> Vec<usize> {
    classes.iter().enumerate().filter(|(_, c)| *c == k).map(|(i, _)| i).collect()
}

/// Per `(class, threshold index)` detection results; predictions only match
/// ground truth of their own class.
pub fn class_results<K: Ord + Copy>(
    pred_class: &[K],
    confidences: &[f64],
    gt_class: &[K],
    dist: &Matrix,
    thresholds: &[f64],
) -> Result<BTreeMap<(K, usize), DetectionResult>> {
    if dist.shape() != (pred_class.len(), gt_class.len()) || confidences.len() != pred_class.len() {
        return Err(Error::Shape(alloc::format!(
            "distance {:?} vs {} predictions and {} gts",
            dist.shape(),
            pred_class.len(),
            gt_class.len()
        )));
    }
    let mut classes: Vec<K> = pred_class.iter().chain(gt_class).copied().collect();
    classes.sort();
    classes.dedup();
    let mut out = BTreeMap::new();
    for k in classes {
        let pi = indices_of(pred_class, &k);
        let gi = indices_of(gt_class, &k);
        let d = sub_matrix(dist, &pi, &gi);
        let c: Vec<f64> = pi.iter().map(|&i| confidences[i]).collect();
        for (ti, &t) in thresholds.iter().enumerate() {
            out.insert((k, ti), match_dets(&c, &d, t)?.result);
        }
    }
    Ok(out)
}

/// Mean AP over classes and thresholds.
pub fn det_map<K: Ord + Copy>(
    pred_class: &[K],
    confidences: &[f64],
    gt_class: &[K],
    dist: &Matrix,
    thresholds: &[f64],
) -> Result<Option<f64>> {
    Ok(mean_ap(&class_results(pred_class, confidences, gt_class, dist, thresholds)?))
}

/// Class-restricted greedy pairing at a single threshold, in full index space.
pub fn class_pairing<K: Ord + Copy>(
    pred_class: &[K],
    confidences: &[f64],
    gt_class: &[K],
    dist: &Matrix,
    threshold: f64,
) -> Result<Vec<Option<usize>>> {
    let mut pairing = vec![None; pred_class.len()];
    let mut classes: Vec<K> = pred_class.to_vec();
    classes.sort();
    classes.dedup();
    for k in classes {
        let pi = indices_of(pred_class, &k);
        let gi = indices_of(gt_class, &k);
        let c: Vec<f64> = pi.iter().map(|&i| confidences[i]).collect();
        let m = match_dets(&c, &sub_matrix(dist, &pi, &gi), threshold)?;
        for (local, g) in m.pairing.into_iter().enumerate() {
            pairing[pi[local]] = g.map(|g| gi[g]);
        }
    }
    Ok(pairing)
}

/// Per-vertex APs for TOP. The predicted matrix is projected into gt index
/// space through the row and column pairings; every gt row with at least one
/// gt edge (`> 0.5`) contributes one AP, ranking its strictly positive
/// projected scores. `skip_self` drops the diagonal for square graphs.
pub fn top_vertex_aps(
    pred: &Matrix,
    gt: &Matrix,
    row_pairing: &[Option<usize>],
    col_pairing: &[Option<usize>],
    skip_self: bool,
) -> Result<Vec<f64>> {
    if pred.shape() != (row_pairing.len(), col_pairing.len()) {
        return Err(Error::Shape(alloc::format!(
            "predicted matrix {:?} vs pairings {}x{}",
            pred.shape(),
            row_pairing.len(),
            col_pairing.len()
        )));
    }
    let (gr, gc) = gt.shape();
    let mut proj = Matrix::zeros(gr, gc);
    for (p, g) in row_pairing.iter().enumerate() {
        let Some(g) = *g else { continue };
        if g >= gr {
            return Err(Error::OutOfRange("row pairing beyond the gt graph".into()));
        }
        for (q, h) in col_pairing.iter().enumerate() {
            let Some(h) = *h else { continue };
            if h >= gc {
                return Err(Error::OutOfRange("column pairing beyond the gt graph".into()));
            }
            proj.set(g, h, pred.get(p, q));
        }
    }
    let mut aps = Vec::new();
    for i in 0..gr {
        let cols = (0..gc).filter(|&j| !(skip_self && i == j));
        let n_edges = cols.clone().filter(|&j| gt.get(i, j) > 0.5).count();
        if n_edges == 0 {
            continue;
        }
        let scored = cols.filter(|&j| proj.get(i, j) > 0.0).map(|j| (proj.get(i, j), gt.get(i, j) > 0.5)).collect();
        aps.push(average_precision(&DetectionResult { scored, n_gt: n_edges }).unwrap_or(0.0));
    }
    Ok(aps)
}

/// Mean per-vertex AP; `None` when the gt graph has no edges.
pub fn top_score(
    pred: &Matrix,
    gt: &Matrix,
    row_pairing: &[Option<usize>],
    col_pairing: &[Option<usize>],
    skip_self: bool,
) -> Result<Option<f64>> {
    let aps = top_vertex_aps(pred, gt, row_pairing, col_pairing, skip_self)?;
    Ok(if aps.is_empty() { None } else { Some(aps.iter().sum::<f64>() / aps.len() as f64) })
}

/// Lane-lane TOP over a pairing of predicted to gt lane segments.
pub fn top_ll(pred: &LaneGraph, gt: &LaneGraph, pairing: &[Option<usize>]) -> Result<Option<f64>> {
    top_score(&pred.adjacency, &gt.adjacency, pairing, pairing, true)
}

/// Lane-traffic element TOP on the bipartite association.
pub fn top_lt(
    pred: &TeAssociation,
    gt: &TeAssociation,
    lane_pairing: &[Option<usize>],
    te_pairing: &[Option<usize>],
) -> Result<Option<f64>> {
    top_score(&pred.matrix, &gt.matrix, lane_pairing, te_pairing, false)
}

/// The six OLUS inputs, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OlusComponents {
    pub det_ls: f64,
    pub det_ped: f64,
    pub det_b: f64,
    pub det_te: f64,
    pub top_ll: f64,
    pub top_lt: f64,
}

impl OlusComponents {
    pub fn det_a(&self) -> f64 {
        (self.det_ped + self.det_b) / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("det_ls", self.det_ls),
            ("det_ped", self.det_ped),
            ("det_b", self.det_b),
            ("det_te", self.det_te),
            ("top_ll", self.top_ll),
            ("top_lt", self.top_lt),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange(alloc::format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// `(det_ls + det_a + det_te + sqrt(top_ll) + sqrt(top_lt)) / 5`
pub fn olus(c: &OlusComponents) -> Result<f64> {
    c.validate()?;
    Ok((c.det_ls + c.det_a() + c.det_te + c.top_ll.sqrt() + c.top_lt.sqrt()) / 5.0)
}

/// Model output for one frame, in the same shape as the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub graph: LaneGraph,
    /// `(polyline, confidence)`
    pub boundaries: Vec<(Polyline, f64)>,
    pub traffic_elements: Vec<TrafficElement>,
    pub te_assoc: TeAssociation,
}

impl Prediction {
    /// The ground truth itself, every confidence 1.
    pub fn from_frame(f: &Frame) -> Self {
        Self {
            graph: f.gt.clone(),
            boundaries: f.gt_boundaries.iter().map(|b| (b.clone(), 1.0)).collect(),
            traffic_elements: f.traffic_elements.clone(),
            te_assoc: f.te_assoc.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
    pub te_iou: f64,
    /// Distance threshold for the lane pairing that TOP is computed over.
    pub pair_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { thresholds: DISTANCE_THRESHOLDS.to_vec(), te_iou: TE_IOU, pair_threshold: 3.0 }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() || !self.thresholds.iter().all(|t| *t > 0.0 && t.is_finite()) {
            return Err(Error::Param("distance thresholds must be positive".into()));
        }
        if !(self.te_iou > 0.0 && self.te_iou <= 1.0) {
            return Err(Error::OutOfRange(alloc::format!("te_iou {} outside (0, 1]", self.te_iou)));
        }
        if !(self.pair_threshold > 0.0) {
            return Err(Error::Param("pair threshold must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DetMetric {
    LaneSegment,
    Pedestrian,
    Boundary,
    TrafficElement,
}

impl DetMetric {
    pub fn as_str(&self) -> &'static str {
        match self {
            DetMetric::LaneSegment => "det_ls",
            DetMetric::Pedestrian => "det_ped",
            DetMetric::Boundary => "det_b",
            DetMetric::TrafficElement => "det_te",
        }
    }
}

/// `(metric, class name, threshold index)`
pub type DetKey = (DetMetric, &'static str, usize);

/// Unreduced evaluation of one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameScore {
    pub det: BTreeMap<DetKey, DetectionResult>,
    pub top_ll: Vec<f64>,
    pub top_lt: Vec<f64>,
}

fn insert_results<K: Copy>(
    out: &mut BTreeMap<DetKey, DetectionResult>,
    metric: DetMetric,
    name: impl Fn(K) -> &'static str,
    res: BTreeMap<(K, usize), DetectionResult>,
) {
    for ((k, t), r) in res {
        out.entry((metric, name(k), t)).or_default().merge(&r);
    }
}

pub fn score_frame(pred: &Prediction, gt: &Frame, cfg: &EvalConfig) -> Result<FrameScore> {
    cfg.validate()?;
    let mut det = BTreeMap::new();

    let (ps, gs) = (&pred.graph.segments, &gt.gt.segments);
    let ls_dist = Matrix::from_fn(ps.len(), gs.len(), |i, j| lane_segment_distance(&ps[i], &gs[j]));
    let ls_conf: Vec<f64> = ps.iter().map(|s| s.confidence).collect();
    let pc: Vec<SegClass> = ps.iter().map(|s| s.seg_class).collect();
    let gc: Vec<SegClass> = gs.iter().map(|s| s.seg_class).collect();
    for (class, metric) in
        [(SegClass::Lane, DetMetric::LaneSegment), (SegClass::PedestrianCrossing, DetMetric::Pedestrian)]
    {
        let pi = indices_of(&pc, &class);
        let gi = indices_of(&gc, &class);
        let res = class_results(
            &vec![class; pi.len()],
            &pi.iter().map(|&i| ls_conf[i]).collect::<Vec<_>>(),
            &vec![class; gi.len()],
            &sub_matrix(&ls_dist, &pi, &gi),
            &cfg.thresholds,
        )?;
        insert_results(&mut det, metric, |c: SegClass| c.as_str(), res);
    }

    let (pb, gb) = (&pred.boundaries, &gt.gt_boundaries);
    let b_dist = Matrix::from_fn(pb.len(), gb.len(), |i, j| chamfer(pb[i].0.points(), gb[j].points()));
    let b_conf: Vec<f64> = pb.iter().map(|b| b.1).collect();
    let res = class_results(&vec![0u8; pb.len()], &b_conf, &vec![0u8; gb.len()], &b_dist, &cfg.thresholds)?;
    insert_results(&mut det, DetMetric::Boundary, |_| "road_boundary", res);

    let (pt, gt_te) = (&pred.traffic_elements, &gt.traffic_elements);
    let te_dist = Matrix::from_fn(pt.len(), gt_te.len(), |i, j| 1.0 - pt[i].iou(&gt_te[j]));
    let te_conf: Vec<f64> = pt.iter().map(|t| t.confidence).collect();
    let ptc: Vec<_> = pt.iter().map(|t| t.te_class).collect();
    let gtc: Vec<_> = gt_te.iter().map(|t| t.te_class).collect();
    let te_thr = 1.0 - cfg.te_iou;
    let res = class_results(&ptc, &te_conf, &gtc, &te_dist, &[te_thr])?;
    insert_results(&mut det, DetMetric::TrafficElement, |c: crate::lane::TeClass| c.as_str(), res);

    let lane_pairing = class_pairing(&pc, &ls_conf, &gc, &ls_dist, cfg.pair_threshold)?;
    let te_pairing = class_pairing(&ptc, &te_conf, &gtc, &te_dist, te_thr)?;
    let top_ll = top_vertex_aps(&pred.graph.adjacency, &gt.gt.adjacency, &lane_pairing, &lane_pairing, true)?;
    let top_lt = top_vertex_aps(&pred.te_assoc.matrix, &gt.te_assoc.matrix, &lane_pairing, &te_pairing, false)?;
    Ok(FrameScore { det, top_ll, top_lt })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApRow {
    pub metric: DetMetric,
    pub class: &'static str,
    pub threshold: f64,
    pub ap: Option<f64>,
    pub n_gt: usize,
    pub n_pred: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub frames: usize,
    pub det_ls: Option<f64>,
    pub det_ped: Option<f64>,
    pub det_b: Option<f64>,
    pub det_te: Option<f64>,
    pub top_ll: Option<f64>,
    pub top_lt: Option<f64>,
    /// Set only when every component is defined.
    pub components: Option<OlusComponents>,
    pub olus: Option<f64>,
    pub rows: Vec<ApRow>,
}

impl EvalReport {
    pub fn det_a(&self) -> Option<f64> {
        Some((self.det_ped? + self.det_b?) / 2.0)
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Pools frame scores in slice order. Detection results are pooled per key
/// before AP; TOP averages all contributing vertices.
pub fn reduce(scores: &[FrameScore], cfg: &EvalConfig) -> Result<EvalReport> {
    let mut det: BTreeMap<DetKey, DetectionResult> = BTreeMap::new();
    let (mut ll, mut lt) = (Vec::new(), Vec::new());
    for s in scores {
        for (k, r) in &s.det {
            det.entry(*k).or_default().merge(r);
        }
        ll.extend_from_slice(&s.top_ll);
        lt.extend_from_slice(&s.top_lt);
    }
    let rows: Vec<ApRow> = det
        .iter()
        .map(|(&(metric, class, t), r)| ApRow {
            metric,
            class,
            threshold: if metric == DetMetric::TrafficElement { cfg.te_iou } else { cfg.thresholds[t] },
            ap: average_precision(r),
            n_gt: r.n_gt,
            n_pred: r.scored.len(),
        })
        .collect();
    let metric_mean = |m: DetMetric| {
        let aps: Vec<f64> = rows.iter().filter(|r| r.metric == m).filter_map(|r| r.ap).collect();
        mean(&aps)
    };
    let (det_ls, det_ped, det_b, det_te) = (
        metric_mean(DetMetric::LaneSegment),
        metric_mean(DetMetric::Pedestrian),
        metric_mean(DetMetric::Boundary),
        metric_mean(DetMetric::TrafficElement),
    );
    let (top_ll, top_lt) = (mean(&ll), mean(&lt));
    let components = (|| {
        Some(OlusComponents {
            det_ls: det_ls?,
            det_ped: det_ped?,
            det_b: det_b?,
            det_te: det_te?,
            top_ll: top_ll?,
            top_lt: top_lt?,
        })
    })();
    let olus = components.as_ref().map(olus).transpose()?;
    Ok(EvalReport { frames: scores.len(), det_ls, det_ped, det_b, det_te, top_ll, top_lt, components, olus, rows })
}
