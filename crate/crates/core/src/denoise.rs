//! Lane denoising groups, the hybrid query bundle (SD / base / denoising
//! blocks) and the attention mask that keeps the blocks from leaking into
//! each other.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embed::Embed;
use crate::error::{Error, Result};
use crate::lane::{normalize_point, BevExtent, LaneGraph, Point3, ZRange};

pub const N_DN: usize = 60;
pub const N_BASE: usize = 200;
pub const LAMBDA_DN: f64 = 0.5;

/// How noise offsets are drawn for a ground-truth segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    /// One `(dx, dy, dz)` per polyline point.
    #[default]
    PerPoint,
    /// One `(dx, dy, dz)` shared by every point of the segment.
    PerSegment,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiseConfig {
    pub n_dn: usize,
    pub lambda_dn: f64,
    pub seed: u64,
    pub noise: NoiseMode,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self { n_dn: N_DN, lambda_dn: LAMBDA_DN, seed: 0, noise: NoiseMode::PerPoint }
    }
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_dn > 0.0 && self.lambda_dn < 1.0) {
            return Err(Error::OutOfRange(alloc::format!("lambda_dn {} must lie in (0, 1)", self.lambda_dn)));
        }
        Ok(())
    }
}

/// `floor(n_dn / n_gt)`, zero when there is no ground truth.
pub fn group_count(n_dn: usize, n_gt: usize) -> usize {
    n_dn.checked_div(n_gt).unwrap_or(0)
}

/// Noisy ground-truth copies, one query per (group, segment), group-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenoiseOutput {
    pub groups: usize,
    pub n_gt: usize,
    /// Normalized, clamped reference points (centerline, left, right).
    pub refpoints: Vec<Vec<Point3>>,
    pub group_of: Vec<usize>,
    pub gt_of: Vec<usize>,
    /// The raw uniform(-1, 1) offsets, one per reference point.
    pub noise: Vec<Vec<Point3>>,
}

impl DenoiseOutput {
    pub fn len(&self) -> usize {
        self.refpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refpoints.is_empty()
    }
}

/// `clamp(lambda * (p + noise))` per point.
pub fn apply_noise(points: &[Point3], noise: &[Point3], lambda_dn: f64) -> Vec<Point3> {
    points.iter().zip(noise).map(|(&p, &d)| ((p + d) * lambda_dn).clamp_unit()).collect()
}

fn normalized_points(graph: &LaneGraph, extent: &BevExtent, z: &ZRange) -> Result<Vec<Vec<Point3>>> {
    graph.segments.iter().map(|s| s.all_points().map(|&p| normalize_point(p, extent, z)).collect()).collect()
}

/// Builds `floor(n_dn / N_GT)` denoising groups, each a noisy copy of every
/// ground-truth segment.
pub fn make_denoising_groups(
    gt: &LaneGraph,
    extent: &BevExtent,
    z: &ZRange,
    cfg: &DenoiseConfig,
) -> Result<DenoiseOutput> {
    cfg.validate()?;
    let n_gt = gt.len();
    let groups = group_count(cfg.n_dn, n_gt);
    if groups == 0 {
        return Ok(DenoiseOutput { n_gt, ..Default::default() });
    }
    let base = normalized_points(gt, extent, z)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let draw = |rng: &mut ChaCha8Rng| {
        Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    };
    let mut out = DenoiseOutput { groups, n_gt, ..Default::default() };
    for g in 0..groups {
        for (s, pts) in base.iter().enumerate() {
            let noise: Vec<Point3> = match cfg.noise {
                NoiseMode::PerPoint => pts.iter().map(|_| draw(&mut rng)).collect(),
                NoiseMode::PerSegment => vec![draw(&mut rng); pts.len()],
            };
            out.refpoints.push(apply_noise(pts, &noise, cfg.lambda_dn));
            out.group_of.push(g);
            out.gt_of.push(s);
            out.noise.push(noise);
        }
    }
    Ok(out)
}

/// Recomputes the denoised reference points from a recorded noise draw.
pub fn rebuild_from_noise(
    gt: &LaneGraph,
    extent: &BevExtent,
    z: &ZRange,
    lambda_dn: f64,
    record: &DenoiseOutput,
) -> Result<Vec<Vec<Point3>>> {
    let base = normalized_points(gt, extent, z)?;
    record
        .gt_of
        .iter()
        .zip(&record.noise)
        .map(|(&s, noise)| {
            let pts = base.get(s).ok_or_else(|| Error::Shape(alloc::format!("no gt segment {s}")))?;
            Ok(apply_noise(pts, noise, lambda_dn))
        })
        .collect()
}

/// `q_dn + f(flatten(p))` for each denoising query.
pub fn embed_denoising_queries<F: Embed>(refpoints: &[Vec<Point3>], base: &[f64], f: &F) -> Result<Vec<Vec<f64>>> {
    if f.channels() != base.len() {
        return Err(Error::Shape(alloc::format!(
            "embedding has {} channels, base query has {}",
            f.channels(),
            base.len()
        )));
    }
    Ok(refpoints
        .iter()
        .map(|pts| {
            let flat: Vec<f64> = pts.iter().flat_map(|p| p.to_array()).collect();
            f.embed(&flat).iter().zip(base).map(|(d, q)| q + d).collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QueryGroup {
    Sd,
    Base,
    Dn(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BundleCounts {
    pub n_sd: usize,
    pub n_base: usize,
    pub n_dn: usize,
}

impl BundleCounts {
    pub fn total(&self) -> usize {
        self.n_sd + self.n_base + self.n_dn
    }
}

/// Hybrid queries in block order SD, base, denoising.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryBundle {
    pub refpoints: Vec<Vec<Point3>>,
    pub group: Vec<QueryGroup>,
    pub embeddings: Option<Vec<Vec<f64>>>,
    pub counts: BundleCounts,
}

impl QueryBundle {
    pub fn len(&self) -> usize {
        self.group.len()
    }

    pub fn is_empty(&self) -> bool {
        self.group.is_empty()
    }

    pub fn with_embeddings(mut self, embeddings: Vec<Vec<f64>>) -> Result<Self> {
        if embeddings.len() != self.len() {
            return Err(Error::Shape(alloc::format!("{} embeddings for {} queries", embeddings.len(), self.len())));
        }
        self.embeddings = Some(embeddings);
        Ok(self)
    }
}

/// Concatenates SD reference points, `n_base` uniformly drawn base points
/// and the denoising block.
pub fn assemble_bundle<R: Rng + ?Sized>(
    sd: &[Point3],
    n_base: usize,
    dn: Option<&DenoiseOutput>,
    rng: &mut R,
) -> Result<QueryBundle> {
    if n_base == 0 {
        return Err(Error::Param("n_base must be >= 1".into()));
    }
    let n_dn = dn.map_or(0, DenoiseOutput::len);
    let total = sd.len() + n_base + n_dn;
    let mut refpoints = Vec::with_capacity(total);
    let mut group = Vec::with_capacity(total);
    for &p in sd {
        refpoints.push(vec![p]);
        group.push(QueryGroup::Sd);
    }
    for _ in 0..n_base {
        refpoints.push(vec![Point3::new(rng.random(), rng.random(), rng.random())]);
        group.push(QueryGroup::Base);
    }
    if let Some(dn) = dn {
        for (pts, &g) in dn.refpoints.iter().zip(&dn.group_of) {
            refpoints.push(pts.clone());
            group.push(QueryGroup::Dn(g));
        }
    }
    Ok(QueryBundle { refpoints, group, embeddings: None, counts: BundleCounts { n_sd: sd.len(), n_base, n_dn } })
}

/// How SD queries relate to the rest of the bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SdMaskPolicy {
    /// SD and non-SD queries never attend each other.
    #[default]
    Isolated,
    /// SD queries may read base queries; nothing reads SD queries.
    SdReadsBase,
}

/// `allow[i][j]`: query `i` may attend query `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    size: usize,
    allow: Vec<bool>,
}

impl AttentionMask {
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.allow[i * self.size + j]
    }

    /// Row-major bits, least significant bit first within each byte.
    pub fn to_bitset(&self) -> Vec<u8> {
        let mut bytes = vec![0u8; self.allow.len().div_ceil(8)];
        for (k, &a) in self.allow.iter().enumerate() {
            if a {
                bytes[k / 8] |= 1 << (k % 8);
            }
        }
        bytes
    }

    pub fn from_bitset(size: usize, bytes: &[u8]) -> Result<Self> {
        let n = size * size;
        if bytes.len() != n.div_ceil(8) {
            return Err(Error::Shape(alloc::format!("{} bytes for a {size}x{size} mask", bytes.len())));
        }
        let allow = (0..n).map(|k| bytes[k / 8] & (1 << (k % 8)) != 0).collect();
        Ok(Self { size, allow })
    }
}

fn may_attend(q: QueryGroup, k: QueryGroup, policy: SdMaskPolicy) -> bool {
    use QueryGroup::*;
    match (q, k) {
        (Sd, Sd) | (Base, Base) => true,
        (Dn(a), Dn(b)) => a == b,
        (Dn(_), Base) => true,
        (Base, Dn(_)) => false,
        (Sd, Base) => policy == SdMaskPolicy::SdReadsBase,
        (Sd, Dn(_)) | (Base, Sd) | (Dn(_), Sd) => false,
    }
}

pub fn build_attention_mask(bundle: &QueryBundle, policy: SdMaskPolicy) -> AttentionMask {
    let n = bundle.len();
    let mut allow = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            allow.push(i == j || may_attend(bundle.group[i], bundle.group[j], policy));
        }
    }
    AttentionMask { size: n, allow }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{Linear, Truncate, ZeroEmbed};
    use crate::lane::{BoundaryType, LaneSegment, Polyline, SegClass};
    use crate::matrix::Matrix;

    fn graph(n: usize) -> LaneGraph {
        let seg = |k: usize| {
            let line =
                |y: f64| Polyline::new((0..10).map(|i| Point3::new(i as f64 * 3.0 - 20.0, y, 0.0)).collect()).unwrap();
            let y = k as f64 * 0.5 - 10.0;
            LaneSegment {
                centerline: line(y),
                left: line(y + 1.75),
                right: line(y - 1.75),
                seg_class: SegClass::Lane,
                left_type: BoundaryType::Solid,
                right_type: BoundaryType::Dashed,
                confidence: 1.0,
            }
        };
        LaneGraph::new((0..n).map(seg).collect(), Matrix::zeros(n, n)).unwrap()
    }

    #[test]
    fn group_counts() {
        let out =
            make_denoising_groups(&graph(20), &BevExtent::default(), &ZRange::default(), &DenoiseConfig::default())
                .unwrap();
        assert_eq!(out.groups, 3);
        assert_eq!(out.len(), 60);
        assert!(out.refpoints.iter().all(|r| r.len() == 30));
        let out =
            make_denoising_groups(&graph(70), &BevExtent::default(), &ZRange::default(), &DenoiseConfig::default())
                .unwrap();
        assert_eq!(out.groups, 0);
        assert!(out.is_empty());
        let out =
            make_denoising_groups(&graph(0), &BevExtent::default(), &ZRange::default(), &DenoiseConfig::default())
                .unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn noise_formula() {
        let p = apply_noise(&[Point3::new(0.4, 0.4, 0.0)], &[Point3::new(0.2, -0.2, 0.0)], 0.5);
        assert!((p[0].x - 0.3).abs() < 1e-15);
        assert!((p[0].y - 0.1).abs() < 1e-15);
        assert_eq!(p[0].z, 0.0);
    }

    #[test]
    fn lambda_validated() {
        let cfg = DenoiseConfig { lambda_dn: 1.0, ..Default::default() };
        assert!(make_denoising_groups(&graph(2), &BevExtent::default(), &ZRange::default(), &cfg).is_err());
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let cfg = DenoiseConfig { seed: 42, ..Default::default() };
        let g = graph(7);
        let (e, z) = (BevExtent::default(), ZRange::default());
        let a = make_denoising_groups(&g, &e, &z, &cfg).unwrap();
        let b = make_denoising_groups(&g, &e, &z, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(rebuild_from_noise(&g, &e, &z, cfg.lambda_dn, &a).unwrap(), a.refpoints);
    }

    #[test]
    fn per_segment_noise_is_shared() {
        let cfg = DenoiseConfig { noise: NoiseMode::PerSegment, ..Default::default() };
        let out = make_denoising_groups(&graph(4), &BevExtent::default(), &ZRange::default(), &cfg).unwrap();
        for n in &out.noise {
            assert!(n.iter().all(|d| d == &n[0]));
        }
    }

    #[test]
    fn embedding_additive() {
        let refs = vec![vec![Point3::new(0.1, 0.2, 0.3), Point3::new(0.4, 0.5, 0.6)]];
        let q = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(embed_denoising_queries(&refs, &q, &ZeroEmbed(4)).unwrap(), vec![q.clone()]);
        let zero = vec![0.0; 4];
        assert_eq!(embed_denoising_queries(&refs, &zero, &Truncate(4)).unwrap(), vec![vec![0.1, 0.2, 0.3, 0.4]]);
        assert!(embed_denoising_queries(&refs, &q, &ZeroEmbed(3)).is_err());
    }

    #[test]
    fn embedding_linearity_probe() {
        let f =
            Linear::new(Matrix::from_fn(4, 6, |i, j| (i as f64 + 1.0) * 0.1 - j as f64 * 0.05), vec![0.0; 4]).unwrap();
        let q = vec![0.7, -0.3, 0.2, 1.1];
        let p1 = vec![Point3::new(0.1, 0.2, 0.3), Point3::new(0.05, 0.0, 0.4)];
        let p2 = vec![Point3::new(0.3, 0.1, 0.0), Point3::new(0.2, 0.25, 0.1)];
        let sum: Vec<Point3> = p1.iter().zip(&p2).map(|(&a, &b)| a + b).collect();
        let zero = vec![Point3::ZERO; 2];
        let e = |p: &Vec<Point3>| embed_denoising_queries(core::slice::from_ref(p), &q, &f).unwrap().remove(0);
        let (a, b, c, d) = (e(&sum), e(&p1), e(&p2), e(&zero));
        for k in 0..4 {
            assert!((a[k] - b[k] - c[k] + d[k]).abs() < 1e-12);
        }
    }

    fn bundle(n_sd: usize, n_base: usize, n_gt: usize, n_dn: usize) -> QueryBundle {
        let sd: Vec<Point3> = (0..n_sd).map(|i| Point3::new(i as f64 / 100.0, 0.5, 0.5)).collect();
        let cfg = DenoiseConfig { n_dn, ..Default::default() };
        let dn = make_denoising_groups(&graph(n_gt), &BevExtent::default(), &ZRange::default(), &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assemble_bundle(&sd, n_base, Some(&dn), &mut rng).unwrap()
    }

    #[test]
    fn bundle_block_layout() {
        let b = bundle(50, 200, 20, 60);
        assert_eq!(b.len(), 310);
        assert_eq!(b.counts, BundleCounts { n_sd: 50, n_base: 200, n_dn: 60 });
        assert!(b.group[..50].iter().all(|g| *g == QueryGroup::Sd));
        assert!(b.group[50..250].iter().all(|g| *g == QueryGroup::Base));
        assert!(b.group[250..].iter().all(|g| matches!(g, QueryGroup::Dn(_))));
        assert_eq!(bundle(0, 200, 20, 60).len(), 260);
        assert_eq!(bundle(50, 200, 0, 60).len(), 250);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(assemble_bundle(&[], 0, None, &mut rng).is_err());
    }

    #[test]
    fn mask_rules() {
        let b = bundle(5, 8, 4, 12);
        let m = build_attention_mask(&b, SdMaskPolicy::Isolated);
        let idx =
            |pred: &dyn Fn(QueryGroup) -> bool| -> Vec<usize> { (0..b.len()).filter(|&i| pred(b.group[i])).collect() };
        let base = idx(&|g| g == QueryGroup::Base);
        let dn0 = idx(&|g| g == QueryGroup::Dn(0));
        let dn1 = idx(&|g| g == QueryGroup::Dn(1));
        let sd = idx(&|g| g == QueryGroup::Sd);
        for &i in &base {
            for &j in dn0.iter().chain(&dn1) {
                assert!(!m.allowed(i, j));
            }
            for &j in &base {
                assert!(m.allowed(i, j));
            }
        }
        for &i in &dn0 {
            for &j in &dn1 {
                assert!(!m.allowed(i, j));
                assert!(!m.allowed(j, i));
            }
            for &j in &base {
                assert!(m.allowed(i, j));
            }
        }
        for &i in &sd {
            for &j in base.iter().chain(&dn0) {
                assert!(!m.allowed(i, j) && !m.allowed(j, i));
            }
        }
        let alt = build_attention_mask(&b, SdMaskPolicy::SdReadsBase);
        assert!(alt.allowed(sd[0], base[0]));
        assert!(!alt.allowed(base[0], sd[0]));
    }

    #[test]
    fn bitset_roundtrip() {
        let b = bundle(3, 4, 2, 4);
        let m = build_attention_mask(&b, SdMaskPolicy::Isolated);
        let bits = m.to_bitset();
        assert_eq!(AttentionMask::from_bitset(m.size(), &bits).unwrap(), m);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn group_count_formula(n_gt in 1usize..=100, n_dn in 0usize..=200) {
                prop_assert_eq!(group_count(n_dn, n_gt), n_dn / n_gt);
                prop_assert!(group_count(n_dn, n_gt) * n_gt <= n_dn);
            }

            #[test]
            fn denoised_points_in_unit_cube(n_gt in 1usize..12, seed in any::<u64>(), lambda in 0.01f64..0.99) {
                let cfg = DenoiseConfig { n_dn: 60, lambda_dn: lambda, seed, noise: NoiseMode::PerPoint };
                let out = make_denoising_groups(&graph(n_gt), &BevExtent::default(), &ZRange::default(), &cfg).unwrap();
                prop_assert_eq!(out.groups, 60 / n_gt);
                for p in out.refpoints.iter().flatten() {
                    prop_assert!((0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y) && (0.0..=1.0).contains(&p.z));
                }
            }

            #[test]
            fn mask_is_pure_and_diagonal(n_sd in 0usize..6, n_base in 1usize..6, n_gt in 1usize..4, n_dn in 0usize..10) {
                let b = bundle(n_sd, n_base, n_gt, n_dn);
                let m1 = build_attention_mask(&b, SdMaskPolicy::Isolated);
                let m2 = build_attention_mask(&b, SdMaskPolicy::Isolated);
                prop_assert_eq!(&m1, &m2);
                for i in 0..m1.size() {
                    prop_assert!(m1.allowed(i, i));
                }
            }
        }
    }
}
