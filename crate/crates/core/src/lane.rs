//! Core domain types: points, polylines, lane segments, lane graphs, SD maps
//! and scenes, plus BEV normalization and the lane-segment distance.
//!
//! Coordinates are meters in the ego frame: x forward, y left, z up.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Default number of points per lane-segment polyline.
pub const N_PTS: usize = 10;
/// Default number of points per road-boundary polyline.
pub const N_RB: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ZERO: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    #[inline]
    pub fn distance(&self, other: &Point3) -> f64 {
        (*self - *other).norm()
    }

    #[inline]
    pub fn lerp(&self, other: &Point3, t: f64) -> Point3 {
        *self + (*other - *self) * t
    }

    pub fn clamp_unit(&self) -> Point3 {
        Point3::new(self.x.clamp(0.0, 1.0), self.y.clamp(0.0, 1.0), self.z.clamp(0.0, 1.0))
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Metric extent of the BEV plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevExtent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for BevExtent {
    fn default() -> Self {
        Self { x_min: -50.0, x_max: 50.0, y_min: -25.0, y_max: 25.0 }
    }
}

impl BevExtent {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let e = Self { x_min, x_max, y_min, y_max };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.x_min, self.x_max, self.y_min, self.y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("extent"));
        }
        if self.x_min >= self.x_max {
            return Err(Error::InvalidExtent("x_min must be < x_max"));
        }
        if self.y_min >= self.y_max {
            return Err(Error::InvalidExtent("y_min must be < y_max"));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    /// Closed containment test.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    /// Half-open containment, `[min, max)` on both axes.
    pub fn contains_half_open(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }
}

/// Vertical range used for normalization. Defaults to [-5, 5] m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZRange {
    pub min: f64,
    pub max: f64,
}

impl Default for ZRange {
    fn default() -> Self {
        Self { min: -5.0, max: 5.0 }
    }
}

impl ZRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) {
            return Err(Error::NonFinite("z range"));
        }
        if min >= max {
            return Err(Error::InvalidExtent("z min must be < z max"));
        }
        Ok(Self { min, max })
    }
}

/// Affine map of an ego-frame point into `[0, 1]^3`. Points outside the
/// extent are clamped.
pub fn normalize_point(p: Point3, extent: &BevExtent, z: &ZRange) -> Result<Point3> {
    if !p.is_finite() {
        return Err(Error::NonFinite("point"));
    }
    extent.validate()?;
    if z.min >= z.max {
        return Err(Error::InvalidExtent("z min must be < z max"));
    }
    Ok(Point3::new(
        (p.x - extent.x_min) / extent.width(),
        (p.y - extent.y_min) / extent.height(),
        (p.z - z.min) / (z.max - z.min),
    )
    .clamp_unit())
}

/// Inverse of [`normalize_point`] for in-range inputs.
pub fn denormalize_point(p: Point3, extent: &BevExtent, z: &ZRange) -> Point3 {
    Point3::new(
        extent.x_min + p.x * extent.width(),
        extent.y_min + p.y * extent.height(),
        z.min + p.z * (z.max - z.min),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Point3>,
}

impl Polyline {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::TooFewPoints(points.len()));
        }
        if !points.iter().all(Point3::is_finite) {
            return Err(Error::NonFinite("polyline"));
        }
        Ok(Self { points })
    }

    pub fn from_xy(points: &[(f64, f64)]) -> Result<Self> {
        Self::new(points.iter().map(|&(x, y)| Point3::new(x, y, 0.0)).collect())
    }

    #[inline]
    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> Point3 {
        self.points[0]
    }

    pub fn last(&self) -> Point3 {
        self.points[self.points.len() - 1]
    }

    /// Total arclength.
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    /// Point at the given arclength, clamped to the polyline ends.
    pub fn point_at(&self, s: f64) -> Point3 {
        if s <= 0.0 {
            return self.first();
        }
        let mut acc = 0.0;
        for w in self.points.windows(2) {
            let seg = w[0].distance(&w[1]);
            if seg > 0.0 && acc + seg >= s {
                return w[0].lerp(&w[1], (s - acc) / seg);
            }
            acc += seg;
        }
        self.last()
    }

    pub fn translated(&self, t: Point3) -> Polyline {
        Polyline { points: self.points.iter().map(|&p| p + t).collect() }
    }

    pub fn map_points(&self, f: impl Fn(Point3) -> Point3) -> Result<Polyline> {
        Polyline::new(self.points.iter().map(|&p| f(p)).collect())
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SegClass {
    Lane,
    PedestrianCrossing,
}

impl SegClass {
    pub const ALL: [SegClass; 2] = [SegClass::Lane, SegClass::PedestrianCrossing];

    pub fn as_str(&self) -> &'static str {
        match self {
            SegClass::Lane => "lane",
            SegClass::PedestrianCrossing => "pedestrian_crossing",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }

    pub fn index(&self) -> usize {
        *self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryType {
    Solid,
    Dashed,
    Invisible,
}

impl BoundaryType {
    pub const ALL: [BoundaryType; 3] = [BoundaryType::Solid, BoundaryType::Dashed, BoundaryType::Invisible];

    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryType::Solid => "solid",
            BoundaryType::Dashed => "dashed",
            BoundaryType::Invisible => "invisible",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }

    pub fn index(&self) -> usize {
        *self as usize
    }
}

/// Centerline plus left/right boundaries, all with the same point count.
/// Ground truth carries confidence 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneSegment {
    pub centerline: Polyline,
    pub left: Polyline,
    pub right: Polyline,
    pub seg_class: SegClass,
    pub left_type: BoundaryType,
    pub right_type: BoundaryType,
    pub confidence: f64,
}

impl LaneSegment {
    pub fn polylines(&self) -> [&Polyline; 3] {
        [&self.centerline, &self.left, &self.right]
    }

    /// All points: centerline, then left, then right.
    pub fn all_points(&self) -> impl Iterator<Item = &Point3> {
        self.centerline.points().iter().chain(self.left.points()).chain(self.right.points())
    }

    pub fn translated(&self, t: Point3) -> LaneSegment {
        LaneSegment {
            centerline: self.centerline.translated(t),
            left: self.left.translated(t),
            right: self.right.translated(t),
            ..self.clone()
        }
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence;
        self
    }
}

/// Lane segments plus a successor adjacency matrix in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneGraph {
    pub segments: Vec<LaneSegment>,
    pub adjacency: Matrix,
}

impl LaneGraph {
    pub fn new(segments: Vec<LaneSegment>, adjacency: Matrix) -> Result<Self> {
        let n = segments.len();
        if adjacency.shape() != (n, n) {
            return Err(Error::Shape(format!("adjacency is {:?}, expected {n}x{n}", adjacency.shape())));
        }
        Ok(Self { segments, adjacency })
    }

    pub fn empty() -> Self {
        Self { segments: Vec::new(), adjacency: Matrix::zeros(0, 0) }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TeClass {
    TrafficLightUnknown,
    TrafficLightRed,
    TrafficLightGreen,
    TrafficLightYellow,
    GoStraight,
    TurnLeft,
    TurnRight,
    NoLeftTurn,
    NoRightTurn,
    UTurn,
    NoUTurn,
    SlightLeft,
    SlightRight,
}

impl TeClass {
    pub const ALL: [TeClass; 13] = [
        TeClass::TrafficLightUnknown,
        TeClass::TrafficLightRed,
        TeClass::TrafficLightGreen,
        TeClass::TrafficLightYellow,
        TeClass::GoStraight,
        TeClass::TurnLeft,
        TeClass::TurnRight,
        TeClass::NoLeftTurn,
        TeClass::NoRightTurn,
        TeClass::UTurn,
        TeClass::NoUTurn,
        TeClass::SlightLeft,
        TeClass::SlightRight,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TeClass::TrafficLightUnknown => "traffic_light_unknown",
            TeClass::TrafficLightRed => "traffic_light_red",
            TeClass::TrafficLightGreen => "traffic_light_green",
            TeClass::TrafficLightYellow => "traffic_light_yellow",
            TeClass::GoStraight => "go_straight",
            TeClass::TurnLeft => "turn_left",
            TeClass::TurnRight => "turn_right",
            TeClass::NoLeftTurn => "no_left_turn",
            TeClass::NoRightTurn => "no_right_turn",
            TeClass::UTurn => "u_turn",
            TeClass::NoUTurn => "no_u_turn",
            TeClass::SlightLeft => "slight_left",
            TeClass::SlightRight => "slight_right",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

/// A 2D traffic light or sign detection in front-camera pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficElement {
    /// `(u_min, v_min, u_max, v_max)`
    pub bbox: [f64; 4],
    pub te_class: TeClass,
    pub confidence: f64,
    pub embedding: Option<Vec<f64>>,
}

impl TrafficElement {
    pub fn area(&self) -> f64 {
        let [u0, v0, u1, v1] = self.bbox;
        (u1 - u0).max(0.0) * (v1 - v0).max(0.0)
    }

    pub fn iou(&self, other: &TrafficElement) -> f64 {
        let [a0, b0, a1, b1] = self.bbox;
        let [c0, d0, c1, d1] = other.bbox;
        let iw = (a1.min(c1) - a0.max(c0)).max(0.0);
        let ih = (b1.min(d1) - b0.max(d0)).max(0.0);
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Lane-segment to traffic-element association, `N_ls x N_te` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TeAssociation {
    pub matrix: Matrix,
}

impl TeAssociation {
    pub fn empty(n_ls: usize, n_te: usize) -> Self {
        Self { matrix: Matrix::zeros(n_ls, n_te) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SdClass {
    Road,
    Sidewalk,
    Other,
}

impl SdClass {
    pub const ALL: [SdClass; 3] = [SdClass::Road, SdClass::Sidewalk, SdClass::Other];

    pub fn as_str(&self) -> &'static str {
        match self {
            SdClass::Road => "road",
            SdClass::Sidewalk => "sidewalk",
            SdClass::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdElement {
    pub polyline: Polyline,
    pub class: SdClass,
}

/// Classed SD polylines in the ego frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SdMap {
    pub elements: Vec<SdElement>,
}

impl SdMap {
    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// Planar rigid transform. As an ego pose it maps ego coordinates into the
/// world; as a motion it maps previous-frame coordinates into the current one.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 { x: 0.0, y: 0.0, yaw: 0.0 };

    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw: wrap_angle(yaw) }
    }

    #[inline]
    pub fn apply(&self, px: f64, py: f64) -> (f64, f64) {
        let (s, c) = self.yaw.sin_cos();
        (c * px - s * py + self.x, s * px + c * py + self.y)
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.yaw.sin_cos();
        Pose2 { x: -(c * self.x + s * self.y), y: s * self.x - c * self.y, yaw: wrap_angle(-self.yaw) }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let (x, y) = self.apply(other.x, other.y);
        Pose2 { x, y, yaw: wrap_angle(self.yaw + other.yaw) }
    }

    /// Motion mapping coordinates in the `prev` ego frame to the `cur` ego
    /// frame, given both world poses.
    pub fn relative(prev: &Pose2, cur: &Pose2) -> Pose2 {
        cur.inverse().compose(prev)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.yaw.is_finite()
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub timestamp: f64,
    pub ego_pose: Pose2,
    pub wheel_angle_deg: f64,
    pub gt: LaneGraph,
    pub gt_boundaries: Vec<Polyline>,
    pub sd_map: SdMap,
    pub traffic_elements: Vec<TrafficElement>,
    pub te_assoc: TeAssociation,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub frames: Vec<Frame>,
}

/// Symmetric Chamfer distance: the mean of the two directed mean
/// nearest-neighbour distances.
pub fn chamfer(a: &[Point3], b: &[Point3]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let directed = |from: &[Point3], to: &[Point3]| {
        from.iter().map(|p| to.iter().map(|q| p.distance(q)).fold(f64::INFINITY, f64::min)).sum::<f64>()
            / from.len() as f64
    };
    0.5 * (directed(a, b) + directed(b, a))
}

/// Distance used to match lane segments in detection metrics: Chamfer
/// distance averaged over centerline, left and right boundaries.
///
/// This is a stand-in for the benchmark's own matching distance, which is
/// defined outside this crate; values are not bit-comparable with it.
pub fn lane_segment_distance(a: &LaneSegment, b: &LaneSegment) -> f64 {
    let [ca, la, ra] = a.polylines();
    let [cb, lb, rb] = b.polylines();
    (chamfer(ca.points(), cb.points()) + chamfer(la.points(), lb.points()) + chamfer(ra.points(), rb.points())) / 3.0
}

/// A single invariant violation found by [`validate_scene`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub frame: Option<usize>,
    pub object: String,
    pub rule: String,
}

impl core::fmt::Display for Violation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self.frame {
            Some(i) => write!(f, "frame {i}: {}: {}", self.object, self.rule),
            None => write!(f, "{}: {}", self.object, self.rule),
        }
    }
}

/// Point counts a scene is validated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SceneLimits {
    pub n_pts: usize,
    pub n_rb: usize,
}

impl Default for SceneLimits {
    fn default() -> Self {
        Self { n_pts: N_PTS, n_rb: N_RB }
    }
}

fn in_unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

/// Checks every scene invariant. An empty result means the scene is valid.
pub fn validate_scene(scene: &Scene, limits: &SceneLimits) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |frame: Option<usize>, object: String, rule: String| {
        out.push(Violation { frame, object, rule });
    };

    for (fi, pair) in scene.frames.windows(2).enumerate() {
        if pair[1].timestamp <= pair[0].timestamp {
            push(Some(fi + 1), "timestamp".into(), "timestamps must be strictly increasing".into());
        }
    }

    for (fi, frame) in scene.frames.iter().enumerate() {
        let f = Some(fi);
        if !frame.timestamp.is_finite() {
            push(f, "timestamp".into(), "must be finite".into());
        }
        if !frame.ego_pose.is_finite() {
            push(f, "ego_pose".into(), "must be finite".into());
        } else if !(frame.ego_pose.yaw > -PI && frame.ego_pose.yaw <= PI) {
            push(f, "ego_pose".into(), "yaw must lie in (-pi, pi]".into());
        }
        if !frame.wheel_angle_deg.is_finite() {
            push(f, "wheel_angle_deg".into(), "must be finite".into());
        }

        let n = frame.gt.segments.len();
        for (si, seg) in frame.gt.segments.iter().enumerate() {
            for (name, line) in [("centerline", &seg.centerline), ("left", &seg.left), ("right", &seg.right)] {
                if line.len() != limits.n_pts {
                    push(
                        f,
                        format!("lane_segment {si} {name}"),
                        format!("n_pts: expected {} points, got {}", limits.n_pts, line.len()),
                    );
                }
            }
            if !in_unit(seg.confidence) {
                push(f, format!("lane_segment {si}"), "confidence must lie in range [0,1]".into());
            }
        }

        let adj = &frame.gt.adjacency;
        if adj.shape() != (n, n) {
            push(f, "adjacency".into(), format!("must be {n}x{n}, got {}x{}", adj.rows(), adj.cols()));
        } else {
            for i in 0..n {
                for j in 0..n {
                    let v = adj.get(i, j);
                    if !in_unit(v) {
                        push(f, format!("adjacency[{i}][{j}]"), format!("value {v} outside range [0,1]"));
                    }
                }
            }
        }

        for (bi, b) in frame.gt_boundaries.iter().enumerate() {
            if b.len() != limits.n_rb {
                push(f, format!("boundary {bi}"), format!("n_rb: expected {} points, got {}", limits.n_rb, b.len()));
            }
        }

        for (ti, te) in frame.traffic_elements.iter().enumerate() {
            let [u0, v0, u1, v1] = te.bbox;
            if !te.bbox.iter().all(|v| v.is_finite()) {
                push(f, format!("traffic_element {ti}"), "bbox must be finite".into());
            } else if !(u0 < u1 && v0 < v1) {
                push(f, format!("traffic_element {ti}"), "bbox requires u_min < u_max and v_min < v_max".into());
            }
            if !in_unit(te.confidence) {
                push(f, format!("traffic_element {ti}"), "confidence must lie in range [0,1]".into());
            }
        }

        let te = &frame.te_assoc.matrix;
        let n_te = frame.traffic_elements.len();
        if te.shape() != (n, n_te) {
            push(f, "te_assoc".into(), format!("must be {n}x{n_te}, got {}x{}", te.rows(), te.cols()));
        } else if te.as_slice().iter().any(|&v| !in_unit(v)) {
            push(f, "te_assoc".into(), "entries must lie in range [0,1]".into());
        }
    }
    out
}
