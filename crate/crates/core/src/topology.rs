//! Pairwise relationship scoring, the distance-based lane adjacency, score
//! fusion and hard-graph extraction.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lane::LaneSegment;
use crate::matrix::Matrix;

pub const ALPHA: f64 = 2.5;
pub const BETA: f64 = 0.8;
pub const TAU: f64 = 0.5;

/// Which endpoints define the distance between two lane segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EndpointMode {
    /// End of segment `i` to start of segment `j`.
    #[default]
    Successor,
    /// Smallest distance over all four start/end pairings.
    MinPairing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopoConfig {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub endpoints: EndpointMode,
}

impl Default for TopoConfig {
    fn default() -> Self {
        Self { alpha: ALPHA, beta: BETA, tau: TAU, endpoints: EndpointMode::Successor }
    }
}

impl TopoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::OutOfRange(alloc::format!("alpha {} must be > 0", self.alpha)));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::OutOfRange(alloc::format!("beta {} must be >= 0", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::OutOfRange(alloc::format!("tau {} must lie in [0, 1]", self.tau)));
        }
        Ok(())
    }
}

/// `N_a x N_b` grid of concatenated query pairs, each `2C` wide.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatures {
    n_a: usize,
    n_b: usize,
    channels: usize,
    data: Vec<f64>,
}

impl PairFeatures {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n_a, self.n_b, 2 * self.channels)
    }

    pub fn pair(&self, i: usize, j: usize) -> &[f64] {
        let w = 2 * self.channels;
        let start = (i * self.n_b + j) * w;
        &self.data[start..start + w]
    }
}

/// Repeats `qa` across columns and `qb` across rows and stacks them.
pub fn pairwise_stack(qa: &[Vec<f64>], qb: &[Vec<f64>]) -> Result<PairFeatures> {
    let channels = qa.first().or(qb.first()).map_or(0, Vec::len);
    if let Some(v) = qa.iter().chain(qb).find(|v| v.len() != channels) {
        return Err(Error::Shape(alloc::format!("query of length {} among queries of length {channels}", v.len())));
    }
    let mut data = Vec::with_capacity(qa.len() * qb.len() * 2 * channels);
    for a in qa {
        for b in qb {
            data.extend_from_slice(a);
            data.extend_from_slice(b);
        }
    }
    Ok(PairFeatures { n_a: qa.len(), n_b: qb.len(), channels, data })
}

/// Stand-in for the similarity head: a pair vector to a logit.
pub trait ScoreFn {
    fn logit(&self, pair: &[f64]) -> f64;
}

/// Ignores the pair and returns a fixed logit.
#[derive(Debug, Clone, Copy)]
pub struct ConstScore(pub f64);

impl ScoreFn for ConstScore {
    fn logit(&self, _pair: &[f64]) -> f64 {
        self.0
    }
}

/// `w . pair + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScore {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ScoreFn for LinearScore {
    fn logit(&self, pair: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(pair).map(|(w, x)| w * x).sum::<f64>()
    }
}

impl<F: Fn(&[f64]) -> f64> ScoreFn for F {
    fn logit(&self, pair: &[f64]) -> f64 {
        self(pair)
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `sigmoid(f(pair))` for every pair.
pub fn score_similarity<F: ScoreFn + ?Sized>(pairs: &PairFeatures, f: &F) -> Matrix {
    Matrix::from_fn(pairs.n_a, pairs.n_b, |i, j| sigmoid(f.logit(pairs.pair(i, j))))
}

/// `2 / (1 + exp(d / alpha))`.
#[inline]
pub fn distance_score(d: f64, alpha: f64) -> f64 {
    2.0 / (1.0 + (d / alpha).exp())
}

fn endpoint_distance(a: &LaneSegment, b: &LaneSegment, mode: EndpointMode) -> f64 {
    match mode {
        EndpointMode::Successor => a.centerline.last().distance(&b.centerline.first()),
        EndpointMode::MinPairing => {
            let (a0, a1) = (a.centerline.first(), a.centerline.last());
            let (b0, b1) = (b.centerline.first(), b.centerline.last());
            [a0.distance(&b0), a0.distance(&b1), a1.distance(&b0), a1.distance(&b1)]
                .into_iter()
                .fold(f64::INFINITY, f64::min)
        }
    }
}

/// Distance-based adjacency between every ordered pair of segments.
pub fn distance_adjacency(segments: &[LaneSegment], alpha: f64, mode: EndpointMode) -> Result<Matrix> {
    if !(alpha > 0.0) {
        return Err(Error::OutOfRange(alloc::format!("alpha {alpha} must be > 0")));
    }
    let n = segments.len();
    Ok(Matrix::from_fn(n, n, |i, j| distance_score(endpoint_distance(&segments[i], &segments[j], mode), alpha)))
}

/// `min(A_s + beta * A_d, 1)` entrywise.
pub fn fuse_topology(similarity: &Matrix, distance: &Matrix, beta: f64) -> Result<Matrix> {
    if similarity.shape() != distance.shape() {
        return Err(Error::Shape(alloc::format!(
            "similarity {:?} vs distance {:?}",
            similarity.shape(),
            distance.shape()
        )));
    }
    let data = similarity.as_slice().iter().zip(distance.as_slice()).map(|(s, d)| (s + beta * d).min(1.0)).collect();
    Matrix::from_vec(similarity.rows(), similarity.cols(), data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub score: f64,
}

/// Directed edges with `score >= tau`, highest first; self-edges excluded.
pub fn extract_graph(adjacency: &Matrix, tau: f64) -> Result<Vec<Edge>> {
    if !adjacency.is_square() {
        return Err(Error::Shape(alloc::format!("adjacency {:?} is not square", adjacency.shape())));
    }
    let n = adjacency.rows();
    let mut edges: Vec<Edge> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j)
        .map(|(i, j)| Edge { from: i, to: j, score: adjacency.get(i, j) })
        .filter(|e| e.score >= tau)
        .collect();
    edges.sort_by(|a, b| b.score.total_cmp(&a.score).then((a.from, a.to).cmp(&(b.from, b.to))));
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lane::{BoundaryType, Point3, Polyline, SegClass};
    use alloc::vec;

    fn seg(start: (f64, f64), end: (f64, f64)) -> LaneSegment {
        let line = |dy: f64| {
            Polyline::new(
                (0..10)
                    .map(|k| {
                        let t = k as f64 / 9.0;
                        Point3::new(start.0 + t * (end.0 - start.0), start.1 + t * (end.1 - start.1) + dy, 0.0)
                    })
                    .collect(),
            )
            .unwrap()
        };
        LaneSegment {
            centerline: line(0.0),
            left: line(1.75),
            right: line(-1.75),
            seg_class: SegClass::Lane,
            left_type: BoundaryType::Dashed,
            right_type: BoundaryType::Dashed,
            confidence: 1.0,
        }
    }

    #[test]
    fn stacking_layout() {
        let qa = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let qb = vec![vec![5.0, 6.0], vec![7.0, 8.0], vec![9.0, 10.0]];
        let p = pairwise_stack(&qa, &qb).unwrap();
        assert_eq!(p.shape(), (2, 3, 4));
        assert_eq!(p.pair(1, 2), &[3.0, 4.0, 9.0, 10.0]);
        let single = pairwise_stack(&qa[..1], &qb[..1]).unwrap();
        assert_eq!(single.pair(0, 0), &[1.0, 2.0, 5.0, 6.0]);
        let selfp = pairwise_stack(&qa, &qa).unwrap();
        assert_eq!(selfp.pair(1, 1), &[3.0, 4.0, 3.0, 4.0]);
        assert!(pairwise_stack(&qa, &[vec![1.0]]).is_err());
    }

    #[test]
    fn similarity_scores() {
        let q = vec![vec![0.5, -1.0], vec![2.0, 0.25]];
        let p = pairwise_stack(&q, &q).unwrap();
        let s = score_similarity(&p, &ConstScore(0.0));
        assert!(s.as_slice().iter().all(|&v| v == 0.5));
        let s = score_similarity(&p, &ConstScore(1e3));
        assert!(s.as_slice().iter().all(|&v| (1.0 - v) < 1e-9));
        let w = LinearScore { weights: vec![0.3, -0.2, 0.1, 0.4], bias: -0.05 };
        let s = score_similarity(&p, &w);
        for i in 0..2 {
            for j in 0..2 {
                let z = -0.05 + 0.3 * q[i][0] - 0.2 * q[i][1] + 0.1 * q[j][0] + 0.4 * q[j][1];
                let want = 1.0 / (1.0 + libm::exp(-z));
                assert!((s.get(i, j) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn distance_score_values() {
        assert_eq!(distance_score(0.0, 2.5), 1.0);
        assert!((distance_score(2.5, 2.5) - 0.537883).abs() < 5e-7);
        assert!((distance_score(25.0, 2.5) - 9.079e-5).abs() < 1e-8);
    }

    #[test]
    fn distance_adjacency_successor_convention() {
        let segs = vec![seg((0.0, 0.0), (10.0, 0.0)), seg((10.0, 0.0), (20.0, 0.0))];
        let a = distance_adjacency(&segs, 2.5, EndpointMode::Successor).unwrap();
        assert_eq!(a.get(0, 1), 1.0);
        assert!((a.get(1, 0) - distance_score(20.0, 2.5)).abs() < 1e-15);
        let m = distance_adjacency(&segs, 2.5, EndpointMode::MinPairing).unwrap();
        assert_eq!(m.get(1, 0), 1.0);
        assert!(distance_adjacency(&segs, 0.0, EndpointMode::Successor).is_err());
    }

    #[test]
    fn fusion_values() {
        let f = fuse_topology(&Matrix::filled(1, 1, 0.5), &Matrix::filled(1, 1, 0.8), 0.8).unwrap();
        assert_eq!(f.get(0, 0), 1.0);
        let f = fuse_topology(&Matrix::filled(1, 1, 0.2), &Matrix::filled(1, 1, 0.1), 0.8).unwrap();
        assert!((f.get(0, 0) - 0.28).abs() < 1e-15);
        let s = Matrix::from_rows(&[vec![0.1, 0.7], vec![0.3, 0.9]]).unwrap();
        assert_eq!(fuse_topology(&s, &Matrix::filled(2, 2, 0.6), 0.0).unwrap(), s);
        assert!(fuse_topology(&s, &Matrix::zeros(1, 2), 0.8).is_err());
    }

    #[test]
    fn graph_extraction() {
        let mut a = Matrix::zeros(3, 3);
        for i in 0..3 {
            a.set(i, i, 1.0);
        }
        assert!(extract_graph(&a, 0.5).unwrap().is_empty());
        a.set(0, 1, 0.9);
        assert_eq!(extract_graph(&a, 0.5).unwrap(), vec![Edge { from: 0, to: 1, score: 0.9 }]);
        assert_eq!(extract_graph(&a, 0.0).unwrap().len(), 6);
        assert!(extract_graph(&Matrix::zeros(2, 3), 0.5).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn distance_monotone(d1 in 0.0f64..100.0, d2 in 0.0f64..100.0, alpha in 0.1f64..10.0) {
                let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
                prop_assert!(distance_score(lo, alpha) >= distance_score(hi, alpha));
                prop_assert!(distance_score(hi, alpha) >= 0.0 && distance_score(lo, alpha) <= 1.0);
                // Past d/alpha ~ 745 the exact value is below the smallest subnormal.
                if hi / alpha < 700.0 {
                    prop_assert!(distance_score(hi, alpha) > 0.0);
                }
            }

            #[test]
            fn alpha_scaling(d in 0.0f64..100.0, alpha in 0.1f64..10.0) {
                prop_assert_eq!(distance_score(d, 2.0 * alpha), distance_score(d / 2.0, alpha));
            }

            #[test]
            fn rigid_invariance(
                pts in proptest::collection::vec((-30.0f64..30.0, -20.0f64..20.0, -30.0f64..30.0, -20.0f64..20.0), 1..6),
                tx in -10.0f64..10.0, ty in -10.0f64..10.0, th in -3.1f64..3.1,
            ) {
                let segs: Vec<LaneSegment> = pts.iter().map(|&(a, b, c, d)| seg((a, b), (c, d))).collect();
                let (s, c) = (libm::sin(th), libm::cos(th));
                let moved: Vec<LaneSegment> = pts
                    .iter()
                    .map(|&(a, b, x, y)| {
                        let r = |px: f64, py: f64| (c * px - s * py + tx, s * px + c * py + ty);
                        seg(r(a, b), r(x, y))
                    })
                    .collect();
                let a1 = distance_adjacency(&segs, 2.5, EndpointMode::Successor).unwrap();
                let a2 = distance_adjacency(&moved, 2.5, EndpointMode::Successor).unwrap();
                for (x, y) in a1.as_slice().iter().zip(a2.as_slice()) {
                    prop_assert!((x - y).abs() < 1e-9);
                }
            }

            #[test]
            fn fusion_bounded_and_monotone(s in 0.0f64..=1.0, d in 0.0f64..=1.0, ds in 0.0f64..0.5, dd in 0.0f64..0.5, beta in 0.0f64..2.0) {
                let f = |s: f64, d: f64| fuse_topology(&Matrix::filled(1, 1, s), &Matrix::filled(1, 1, d), beta).unwrap().get(0, 0);
                let base = f(s, d);
                prop_assert!((0.0..=1.0).contains(&base));
                prop_assert!(f((s + ds).min(1.0), d) >= base);
                prop_assert!(f(s, (d + dd).min(1.0)) >= base);
            }

            #[test]
            fn extraction_nested(vals in proptest::collection::vec(0.0f64..=1.0, 16), t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
                let a = Matrix::from_vec(4, 4, vals).unwrap();
                let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                let big = extract_graph(&a, lo).unwrap();
                for e in extract_graph(&a, hi).unwrap() {
                    prop_assert!(big.contains(&e));
                }
            }
        }
    }
}
