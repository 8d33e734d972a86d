//! Synthetic scenes, perturbed predictions and turn-aware dataset resampling.
//!
//! Roads are built in a world frame from a dense reference path; lanes and
//! boundaries are normal offsets of it. Each road is cut into segments of
//! roughly [`SEGMENT_LENGTH`] metres. Frames place the ego on its path and
//! keep every segment whose centerline midpoint falls in the BEV extent.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::lane::{
    BevExtent, BoundaryType, Frame, LaneGraph, LaneSegment, Point3, Polyline, Pose2, Scene, SdClass, SdElement, SdMap,
    SegClass, TeAssociation, TeClass, TrafficElement, N_PTS, N_RB,
};
use crate::matrix::Matrix;
use crate::metrics::Prediction;
use crate::sdmap::clip_polyline;
use crate::temporal::resample_equidistant;

pub const SEGMENT_LENGTH: f64 = 10.0;
pub const FRAME_DT: f64 = 0.5;
pub const TURN_RADIUS: f64 = 20.0;
pub const WHEELBASE: f64 = 2.8;
pub const TURN_THRESHOLD_DEG: f64 = 7.0;
pub const DUPLICATION_K: usize = 10;

const STEP: f64 = 0.1;
const MARGIN: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Template {
    Straight,
    TurnLeft,
    TurnRight,
    Merge,
    Split,
    Intersection,
}

impl Template {
    pub const ALL: [Template; 6] = [
        Template::Straight,
        Template::TurnLeft,
        Template::TurnRight,
        Template::Merge,
        Template::Split,
        Template::Intersection,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Template::Straight => "straight",
            Template::TurnLeft => "turn_left",
            Template::TurnRight => "turn_right",
            Template::Merge => "merge",
            Template::Split => "split",
            Template::Intersection => "intersection",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub template: Template,
    pub n_lanes: usize,
    pub lane_width: f64,
    pub frames: usize,
    /// m/s
    pub speed: f64,
    pub seed: u64,
    pub radius: f64,
    pub extent: BevExtent,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            template: Template::Straight,
            n_lanes: 2,
            lane_width: 3.5,
            frames: 10,
            speed: 10.0,
            seed: 0,
            radius: TURN_RADIUS,
            extent: BevExtent::default(),
        }
    }
}

impl SceneSpec {
    pub fn new(template: Template, seed: u64) -> Self {
        Self { template, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.extent.validate()?;
        if self.n_lanes == 0 {
            return Err(Error::Param("n_lanes must be >= 1".into()));
        }
        if !(self.lane_width > 0.0 && self.lane_width.is_finite()) {
            return Err(Error::Param("lane_width must be positive".into()));
        }
        if self.frames == 0 {
            return Err(Error::Param("frames must be >= 1".into()));
        }
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return Err(Error::Param("speed must be non-negative".into()));
        }
        if !(self.radius > self.n_lanes as f64 * self.lane_width && self.radius.is_finite()) {
            return Err(Error::Param("turn radius must exceed the road width".into()));
        }
        Ok(())
    }
}

/// Dense world-frame path with cumulative arclength.
#[derive(Debug, Clone)]
struct Path {
    pts: Vec<(f64, f64)>,
    cum: Vec<f64>,
}

impl Path {
    fn from_points(pts: Vec<(f64, f64)>) -> Self {
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            let d = libm::hypot(w[1].0 - w[0].0, w[1].1 - w[0].1);
            cum.push(cum.last().copied().unwrap_or(0.0) + d);
        }
        Self { pts, cum }
    }

    fn length(&self) -> f64 {
        *self.cum.last().unwrap_or(&0.0)
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let s = s.clamp(0.0, self.length());
        let i = self.cum.partition_point(|&c| c <= s).clamp(1, self.pts.len() - 1) - 1;
        let len = self.cum[i + 1] - self.cum[i];
        (i, if len > 0.0 { (s - self.cum[i]) / len } else { 0.0 })
    }

    fn at(&self, s: f64) -> (f64, f64) {
        if s >= self.length() {
            return *self.pts.last().unwrap();
        }
        let (i, t) = self.locate(s);
        let (a, b) = (self.pts[i], self.pts[i + 1]);
        (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
    }

    fn heading(&self, s: f64) -> f64 {
        let (i, _) = self.locate(s);
        let (a, b) = (self.pts[i], self.pts[i + 1]);
        libm::atan2(b.1 - a.1, b.0 - a.0)
    }

    /// Point offset `d` metres to the left of the path at arclength `s`.
    fn offset(&self, s: f64, d: f64) -> (f64, f64) {
        let (x, y) = self.at(s);
        let h = self.heading(s);
        (x - d * h.sin(), y + d * h.cos())
    }

    fn curvature(&self, s: f64) -> f64 {
        let ds = 1.0;
        let (a, b) = ((s - ds).max(0.0), (s + ds).min(self.length()));
        if b <= a {
            return 0.0;
        }
        crate::lane::wrap_angle(self.heading(b) - self.heading(a)) / (b - a)
    }

    fn sampled(&self, spacing: f64, d: f64) -> Vec<(f64, f64)> {
        let n = (self.length() / spacing).ceil().max(1.0) as usize;
        (0..=n).map(|k| self.offset(self.length() * k as f64 / n as f64, d)).collect()
    }
}

struct PathBuilder {
    pts: Vec<(f64, f64)>,
    heading: f64,
}

impl PathBuilder {
    fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { pts: vec![(x, y)], heading }
    }

    fn cursor(&self) -> (f64, f64) {
        *self.pts.last().unwrap()
    }

    fn line(mut self, len: f64) -> Self {
        let (x, y) = self.cursor();
        let n = (len / STEP).ceil().max(1.0) as usize;
        let (s, c) = self.heading.sin_cos();
        for k in 1..=n {
            let t = len * k as f64 / n as f64;
            self.pts.push((x + c * t, y + s * t));
        }
        self
    }

    /// Circular arc; positive `angle` turns left.
    fn arc(mut self, radius: f64, angle: f64) -> Self {
        let (x, y) = self.cursor();
        let side = angle.signum();
        let (cx, cy) = (x - side * radius * self.heading.sin(), y + side * radius * self.heading.cos());
        let start = libm::atan2(y - cy, x - cx);
        let n = (radius * angle.abs() / STEP).ceil().max(1.0) as usize;
        for k in 1..=n {
            let a = start + angle * k as f64 / n as f64;
            self.pts.push((cx + radius * a.cos(), cy + radius * a.sin()));
        }
        self.heading += angle;
        self
    }

    fn build(self) -> Path {
        Path::from_points(self.pts)
    }
}

fn bezier(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64)) -> Path {
    let n = 400;
    let pts = (0..=n)
        .map(|k| {
            let t = k as f64 / n as f64;
            let (a, b, c) = ((1.0 - t) * (1.0 - t), 2.0 * t * (1.0 - t), t * t);
            (a * p0.0 + b * p1.0 + c * p2.0, a * p0.1 + b * p1.1 + c * p2.1)
        })
        .collect();
    Path::from_points(pts)
}

/// A road: lanes stacked leftwards from the reference path (lane 0 is on it).
struct Road {
    path: Path,
    n_lanes: usize,
    width: f64,
    connector: bool,
}

impl Road {
    fn segment_count(&self) -> usize {
        ((self.path.length() / SEGMENT_LENGTH).round() as usize).max(1)
    }

    fn lane_segment(&self, lane: usize, k: usize) -> LaneSegment {
        let piece = self.path.length() / self.segment_count() as f64;
        let base = lane as f64 * self.width;
        let line = |d: f64| {
            let pts = (0..N_PTS)
                .map(|m| {
                    let s = piece * (k as f64 + m as f64 / (N_PTS - 1) as f64);
                    let (x, y) = self.path.offset(s, base + d);
                    Point3::new(x, y, 0.0)
                })
                .collect();
            Polyline::new(pts).expect("finite synthetic geometry")
        };
        let (left_type, right_type) = if self.connector {
            (BoundaryType::Invisible, BoundaryType::Invisible)
        } else {
            (
                if lane + 1 == self.n_lanes { BoundaryType::Solid } else { BoundaryType::Dashed },
                if lane == 0 { BoundaryType::Solid } else { BoundaryType::Dashed },
            )
        };
        LaneSegment {
            centerline: line(0.0),
            left: line(self.width / 2.0),
            right: line(-self.width / 2.0),
            seg_class: SegClass::Lane,
            left_type,
            right_type,
            confidence: 1.0,
        }
    }

    /// Road edges: right of lane 0 and left of the last lane.
    fn edges(&self) -> [Vec<(f64, f64)>; 2] {
        let w = self.width;
        [self.path.sampled(1.0, -w / 2.0), self.path.sampled(1.0, self.n_lanes as f64 * w - w / 2.0)]
    }

    fn skeleton(&self) -> Vec<(f64, f64)> {
        self.path.sampled(5.0, (self.n_lanes as f64 - 1.0) * self.width / 2.0)
    }

    fn sidewalk(&self) -> Vec<(f64, f64)> {
        self.path.sampled(5.0, -self.width / 2.0 - 2.0)
    }

    fn crosswalk(&self, s: f64) -> LaneSegment {
        let (lo, hi) = (-self.width / 2.0 - 1.0, self.n_lanes as f64 * self.width - self.width / 2.0 + 1.0);
        let line = |ds: f64| {
            let pts = (0..N_PTS)
                .map(|m| {
                    let d = lo + (hi - lo) * m as f64 / (N_PTS - 1) as f64;
                    let (x, y) = self.path.offset(s + ds, d);
                    Point3::new(x, y, 0.0)
                })
                .collect();
            Polyline::new(pts).expect("finite synthetic geometry")
        };
        LaneSegment {
            centerline: line(0.0),
            left: line(-2.0),
            right: line(2.0),
            seg_class: SegClass::PedestrianCrossing,
            left_type: BoundaryType::Invisible,
            right_type: BoundaryType::Invisible,
            confidence: 1.0,
        }
    }
}

/// World-frame lane network.
struct Network {
    roads: Vec<Road>,
    /// `(road_a, lane_a, road_b, lane_b)`: last segment of a feeds first of b.
    links: Vec<(usize, usize, usize, usize)>,
    crosswalks: Vec<(usize, f64)>,
    ego: Path,
    /// Ego arclength at the middle frame.
    ego_mid: f64,
}

fn build_network(spec: &SceneSpec) -> Network {
    let half = spec.speed * FRAME_DT * (spec.frames.saturating_sub(1)) as f64 / 2.0;
    let reach = SEGMENT_LENGTH * ((half + MARGIN) / SEGMENT_LENGTH).ceil();
    let (n, w) = (spec.n_lanes, spec.lane_width);
    let road = |path: Path| Road { path, n_lanes: n, width: w, connector: false };
    let single = |path: Path, connector: bool| Road { path, n_lanes: 1, width: w, connector };
    let straight = |x0: f64, x1: f64| PathBuilder::new(x0, 0.0, 0.0).line(x1 - x0).build();

    match spec.template {
        Template::Straight => Network {
            roads: vec![road(straight(-reach, reach))],
            links: vec![],
            crosswalks: vec![(0, reach - 20.0)],
            ego: straight(-reach, reach),
            ego_mid: reach,
        },
        Template::TurnLeft | Template::TurnRight => {
            let sign = if spec.template == Template::TurnLeft { 1.0 } else { -1.0 };
            let path =
                PathBuilder::new(-reach, 0.0, 0.0).line(reach).arc(spec.radius, sign * FRAC_PI_2).line(reach).build();
            let mid = reach + spec.radius * FRAC_PI_2 / 2.0;
            Network {
                roads: vec![road(path.clone())],
                links: vec![],
                crosswalks: vec![(0, reach - 20.0)],
                ego: path,
                ego_mid: mid,
            }
        }
        Template::Merge | Template::Split => {
            let mut links: Vec<_> = (0..n).map(|i| (0, i, 1, i)).collect();
            let ramp = if spec.template == Template::Merge {
                links.push((2, 0, 1, 0));
                bezier((-40.0, -10.0), (-20.0, 0.0), (0.0, 0.0))
            } else {
                links.push((0, 0, 2, 0));
                bezier((0.0, 0.0), (20.0, 0.0), (40.0, -10.0))
            };
            Network {
                roads: vec![road(straight(-reach, 0.0)), road(straight(0.0, reach)), single(ramp, false)],
                links,
                crosswalks: vec![(0, reach - 20.0)],
                ego: straight(-reach, reach),
                ego_mid: reach,
            }
        }
        Template::Intersection => {
            let b = 12.0;
            let up = |y0: f64, y1: f64| PathBuilder::new(0.0, y0, FRAC_PI_2).line(y1 - y0).build();
            let mut links: Vec<_> = (0..n).flat_map(|i| [(0, i, 1, i), (2, i, 3, i)]).collect();
            links.push((0, 0, 4, 0));
            links.push((4, 0, 3, 0));
            Network {
                roads: vec![
                    road(straight(-reach, -b)),
                    road(straight(-b, reach)),
                    road(up(-reach, b)),
                    road(up(b, reach)),
                    single(bezier((-b, 0.0), (0.0, 0.0), (0.0, b)), true),
                ],
                links,
                crosswalks: vec![(0, reach - 20.0 - b), (2, reach - 20.0)],
                ego: straight(-reach, reach),
                ego_mid: reach,
            }
        }
    }
}

fn te_pattern(spec: &SceneSpec) -> Vec<TrafficElement> {
    let light = if spec.seed.is_multiple_of(2) { TeClass::TrafficLightGreen } else { TeClass::TrafficLightRed };
    let sign = match spec.template {
        Template::TurnLeft | Template::Intersection => TeClass::TurnLeft,
        Template::TurnRight => TeClass::TurnRight,
        _ => TeClass::GoStraight,
    };
    vec![
        TrafficElement { bbox: [880.0, 300.0, 920.0, 390.0], te_class: light, confidence: 1.0, embedding: None },
        TrafficElement { bbox: [1000.0, 320.0, 1060.0, 380.0], te_class: sign, confidence: 1.0, embedding: None },
    ]
}

fn to_ego(pose: &Pose2, p: (f64, f64)) -> Point3 {
    let (x, y) = pose.inverse().apply(p.0, p.1);
    Point3::new(x, y, 0.0)
}

fn segment_to_ego(seg: &LaneSegment, inv: &Pose2) -> LaneSegment {
    let f = |p: Point3| {
        let (x, y) = inv.apply(p.x, p.y);
        Point3::new(x, y, p.z)
    };
    LaneSegment {
        centerline: seg.centerline.map_points(f).expect("finite"),
        left: seg.left.map_points(f).expect("finite"),
        right: seg.right.map_points(f).expect("finite"),
        ..seg.clone()
    }
}

fn clipped(points: &[(f64, f64)], pose: &Pose2, extent: &BevExtent, min_len: f64) -> Vec<Polyline> {
    let ego: Vec<Point3> = points.iter().map(|&p| to_ego(pose, p)).collect();
    clip_polyline(&ego, extent).into_iter().filter(|r| r.length() >= min_len).collect()
}

/// Deterministic scene for the given spec; lane graph adjacency is exactly
/// 1.0 on successor edges.
pub fn gen_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let net = build_network(spec);

    // World segments with (road, lane, index) ids, then successor edges.
    let mut world = Vec::new();
    let mut first_last = Vec::new();
    let mut tags = Vec::new();
    for (ri, road) in net.roads.iter().enumerate() {
        let k = road.segment_count();
        let mut lanes = Vec::new();
        for lane in 0..road.n_lanes {
            let start = world.len();
            for j in 0..k {
                world.push(road.lane_segment(lane, j));
                tags.push((ri, lane));
            }
            lanes.push((start, start + k - 1));
        }
        first_last.push(lanes);
    }
    let mut edges = Vec::new();
    for i in 0..world.len().saturating_sub(1) {
        if tags[i] == tags[i + 1] {
            edges.push((i, i + 1));
        }
    }
    for &(ra, la, rb, lb) in &net.links {
        edges.push((first_last[ra][la].1, first_last[rb][lb].0));
    }
    for &(ri, s) in &net.crosswalks {
        world.push(net.roads[ri].crosswalk(s));
        tags.push((usize::MAX, 0));
    }
    let te = te_pattern(spec);

    let mut frames = Vec::with_capacity(spec.frames);
    let step = spec.speed * FRAME_DT;
    let centre = (spec.frames - 1) as f64 / 2.0;
    for fi in 0..spec.frames {
        let s = net.ego_mid + step * (fi as f64 - centre);
        let (x, y) = net.ego.at(s);
        let pose = Pose2::new(x, y, net.ego.heading(s));
        let inv = pose.inverse();
        let kappa = net.ego.curvature(s);
        let wheel = libm::atan(WHEELBASE * kappa) * 180.0 / PI;

        let visible: Vec<usize> = (0..world.len())
            .filter(|&i| {
                let c = &world[i].centerline;
                let m = c.point_at(c.length() / 2.0);
                let (mx, my) = inv.apply(m.x, m.y);
                spec.extent.contains_half_open(mx, my)
            })
            .collect();
        let mut local = vec![usize::MAX; world.len()];
        for (li, &wi) in visible.iter().enumerate() {
            local[wi] = li;
        }
        let segments: Vec<LaneSegment> = visible.iter().map(|&i| segment_to_ego(&world[i], &inv)).collect();
        let mut adjacency = Matrix::zeros(visible.len(), visible.len());
        for &(a, b) in &edges {
            if local[a] != usize::MAX && local[b] != usize::MAX {
                adjacency.set(local[a], local[b], 1.0);
            }
        }

        let mut assoc = Matrix::zeros(visible.len(), te.len());
        for (li, &wi) in visible.iter().enumerate() {
            let (ri, lane) = tags[wi];
            if ri == 0 {
                assoc.set(li, 0, 1.0);
                if lane == 0 {
                    assoc.set(li, 1, 1.0);
                }
            }
        }

        let mut boundaries = Vec::new();
        let mut sd = Vec::new();
        for road in net.roads.iter().filter(|r| !r.connector) {
            for edge in road.edges() {
                for run in clipped(&edge, &pose, &spec.extent, 2.0) {
                    boundaries.push(resample_equidistant(&run, N_RB)?);
                }
            }
            for (pts, class) in [(road.skeleton(), SdClass::Road), (road.sidewalk(), SdClass::Sidewalk)] {
                for run in clipped(&pts, &pose, &spec.extent, 1.0) {
                    sd.push(SdElement { polyline: run, class });
                }
            }
        }

        frames.push(Frame {
            timestamp: fi as f64 * FRAME_DT,
            ego_pose: pose,
            wheel_angle_deg: wheel,
            gt: LaneGraph::new(segments, adjacency)?,
            gt_boundaries: boundaries,
            sd_map: SdMap { elements: sd },
            traffic_elements: te.clone(),
            te_assoc: TeAssociation { matrix: assoc },
        });
    }
    Ok(Scene { frames })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionSpec {
    /// metres
    pub jitter_sigma: f64,
    pub drop_prob: f64,
    pub confidence_noise: f64,
    pub sd_dropout: f64,
    /// metres
    pub sd_jitter: f64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        Self { jitter_sigma: 0.0, drop_prob: 0.0, confidence_noise: 0.0, sd_dropout: 0.0, sd_jitter: 0.0 }
    }
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("drop_prob", self.drop_prob),
            ("confidence_noise", self.confidence_noise),
            ("sd_dropout", self.sd_dropout),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::OutOfRange(alloc::format!("{name} = {p} outside [0, 1]")));
            }
        }
        for (name, s) in [("jitter_sigma", self.jitter_sigma), ("sd_jitter", self.sd_jitter)] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::OutOfRange(alloc::format!("{name} = {s} must be >= 0")));
            }
        }
        Ok(())
    }
}

fn jitter_line<R: Rng + ?Sized>(p: &Polyline, sigma: f64, planar: bool, rng: &mut R) -> Result<Polyline> {
    if sigma == 0.0 {
        return Ok(p.clone());
    }
    let n = Normal::new(0.0, sigma).map_err(|_| Error::Param("invalid jitter sigma".into()))?;
    let pts = p
        .points()
        .iter()
        .map(|q| {
            let (dx, dy) = (n.sample(rng), n.sample(rng));
            let dz = if planar { 0.0 } else { n.sample(rng) };
            Point3::new(q.x + dx, q.y + dy, q.z + dz)
        })
        .collect();
    Polyline::new(pts)
}

fn keep<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    rng.random::<f64>() >= p
}

fn confidence<R: Rng + ?Sized>(cn: f64, rng: &mut R) -> f64 {
    if cn == 0.0 {
        1.0
    } else {
        1.0 - rng.random_range(0.0..cn)
    }
}

fn noisy_score<R: Rng + ?Sized>(v: f64, cn: f64, rng: &mut R) -> f64 {
    if cn == 0.0 {
        v
    } else {
        (v + rng.random_range(-cn..cn)).clamp(0.0, 1.0)
    }
}

/// Stand-in for model output: drops, jitters and rescored copies of the
/// ground truth. Traffic-element boxes are kept exact (pixel units).
pub fn perturb_predictions<R: Rng + ?Sized>(gt: &Frame, c: &CorruptionSpec, rng: &mut R) -> Result<Prediction> {
    c.validate()?;
    let mut kept = Vec::new();
    let mut segments = Vec::new();
    for (i, s) in gt.gt.segments.iter().enumerate() {
        if !keep(c.drop_prob, rng) {
            continue;
        }
        let seg = LaneSegment {
            centerline: jitter_line(&s.centerline, c.jitter_sigma, false, rng)?,
            left: jitter_line(&s.left, c.jitter_sigma, false, rng)?,
            right: jitter_line(&s.right, c.jitter_sigma, false, rng)?,
            confidence: confidence(c.confidence_noise, rng),
            ..s.clone()
        };
        kept.push(i);
        segments.push(seg);
    }
    let mut adjacency = Matrix::zeros(kept.len(), kept.len());
    for (a, &i) in kept.iter().enumerate() {
        for (b, &j) in kept.iter().enumerate() {
            adjacency.set(a, b, noisy_score(gt.gt.adjacency.get(i, j), c.confidence_noise, rng));
        }
    }

    let mut boundaries = Vec::new();
    for b in &gt.gt_boundaries {
        if keep(c.drop_prob, rng) {
            boundaries.push((jitter_line(b, c.jitter_sigma, false, rng)?, confidence(c.confidence_noise, rng)));
        }
    }

    let mut kept_te = Vec::new();
    let mut traffic_elements = Vec::new();
    for (i, t) in gt.traffic_elements.iter().enumerate() {
        if keep(c.drop_prob, rng) {
            kept_te.push(i);
            traffic_elements.push(TrafficElement { confidence: confidence(c.confidence_noise, rng), ..t.clone() });
        }
    }
    let mut assoc = Matrix::zeros(kept.len(), kept_te.len());
    for (a, &i) in kept.iter().enumerate() {
        for (b, &j) in kept_te.iter().enumerate() {
            assoc.set(a, b, noisy_score(gt.te_assoc.matrix.get(i, j), c.confidence_noise, rng));
        }
    }
    Ok(Prediction {
        graph: LaneGraph::new(segments, adjacency)?,
        boundaries,
        traffic_elements,
        te_assoc: TeAssociation { matrix: assoc },
    })
}

/// Drops SD elements with `sd_dropout` and jitters the survivors in plane.
pub fn corrupt_sd_map<R: Rng + ?Sized>(map: &SdMap, c: &CorruptionSpec, rng: &mut R) -> Result<SdMap> {
    c.validate()?;
    let mut elements = Vec::new();
    for e in &map.elements {
        if keep(c.sd_dropout, rng) {
            elements.push(SdElement { polyline: jitter_line(&e.polyline, c.sd_jitter, true, rng)?, class: e.class });
        }
    }
    Ok(SdMap { elements })
}

/// Frame indices with every frame whose `|wheel angle| > threshold_deg`
/// repeated `k` times in place.
pub fn resample_dataset(wheel_angles_deg: &[f64], threshold_deg: f64, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::Param("duplication factor k must be >= 1".into()));
    }
    Ok(wheel_angles_deg
        .iter()
        .enumerate()
        .flat_map(|(i, a)| core::iter::repeat_n(i, if a.abs() > threshold_deg { k } else { 1 }))
        .collect())
}
