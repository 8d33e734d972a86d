//! JSON documents for scenes, predictions, SD maps and BEV grids.
//!
//! Scenes and predictions share one frame layout. Prediction files simply
//! leave the scene-only fields (pose, wheel angle, SD map) at their defaults,
//! so a scene file is also a valid prediction file.

use std::fs;
use std::path::Path;

use lanetopo_core::lane::{validate_scene, SceneLimits};
use lanetopo_core::metrics::Prediction;
use lanetopo_core::temporal::BevGrid;
use lanetopo_core::{
    BevExtent, BoundaryType, Frame, LaneGraph, LaneSegment, Matrix, Point3, Polyline, Pose2, Scene, SdClass, SdElement,
    SdMap, SegClass, TeAssociation, TeClass, TrafficElement,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDoc {
    pub frames: Vec<FrameDoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseDoc {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameDoc {
    #[serde(default)]
    pub timestamp: f64,
    #[serde(default)]
    pub ego_pose: PoseDoc,
    #[serde(default)]
    pub wheel_angle_deg: f64,
    #[serde(default)]
    pub lane_segments: Vec<SegmentDoc>,
    /// Row-major successor scores; empty means no edges.
    #[serde(default)]
    pub adjacency: Vec<Vec<f64>>,
    #[serde(default)]
    pub boundaries: Vec<BoundaryDoc>,
    #[serde(default)]
    pub sd_map: Vec<SdElementDoc>,
    #[serde(default)]
    pub traffic_elements: Vec<TeDoc>,
    /// Lane segment rows by traffic element columns; empty means none.
    #[serde(default)]
    pub te_assoc: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentDoc {
    pub class: String,
    pub centerline: Vec<[f64; 3]>,
    pub left: Vec<[f64; 3]>,
    pub right: Vec<[f64; 3]>,
    pub left_type: String,
    pub right_type: String,
    #[serde(default = "one")]
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryDoc {
    pub points: Vec<[f64; 3]>,
    #[serde(default = "one")]
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdElementDoc {
    pub class: String,
    pub points: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdMapDoc {
    pub elements: Vec<SdElementDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeDoc {
    pub class: String,
    /// `[u_min, v_min, u_max, v_max]` in pixels
    pub bbox: [f64; 4],
    #[serde(default = "one")]
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

/// `shape` is `[H, W, C]`; `values` are row-major with channels innermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BevDoc {
    pub shape: [usize; 3],
    /// `[x_min, x_max, y_min, y_max]`
    pub extent: [f64; 4],
    pub values: Vec<f64>,
}

fn points_doc(p: &Polyline) -> Vec<[f64; 3]> {
    p.points().iter().map(|q| q.to_array()).collect()
}

fn polyline(pts: &[[f64; 3]], what: &str) -> std::result::Result<Polyline, String> {
    Polyline::new(pts.iter().map(|&a| Point3::from(a)).collect()).map_err(|e| format!("{what}: {e}"))
}

fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.to_rows()
}

fn rows_matrix(rows: &[Vec<f64>], n: usize, m: usize, what: &str) -> std::result::Result<Matrix, String> {
    if rows.is_empty() {
        return Ok(Matrix::zeros(n, m));
    }
    if rows.len() != n || rows.iter().any(|r| r.len() != m) {
        return Err(format!("{what}: expected {n}x{m}"));
    }
    Ok(Matrix::from_vec(n, m, rows.concat()).expect("shape checked"))
}

pub fn segment_doc(s: &LaneSegment) -> SegmentDoc {
    SegmentDoc {
        class: s.seg_class.as_str().into(),
        centerline: points_doc(&s.centerline),
        left: points_doc(&s.left),
        right: points_doc(&s.right),
        left_type: s.left_type.as_str().into(),
        right_type: s.right_type.as_str().into(),
        confidence: s.confidence,
    }
}

pub fn segment_from_doc(d: &SegmentDoc, i: usize) -> std::result::Result<LaneSegment, String> {
    let what = format!("lane_segments[{i}]");
    let bt = |s: &str| BoundaryType::parse(s).ok_or_else(|| format!("{what}: unknown boundary type {s:?}"));
    Ok(LaneSegment {
        centerline: polyline(&d.centerline, &what)?,
        left: polyline(&d.left, &what)?,
        right: polyline(&d.right, &what)?,
        seg_class: SegClass::parse(&d.class).ok_or_else(|| format!("{what}: unknown class {:?}", d.class))?,
        left_type: bt(&d.left_type)?,
        right_type: bt(&d.right_type)?,
        confidence: d.confidence,
    })
}

fn te_doc(t: &TrafficElement) -> TeDoc {
    TeDoc { class: t.te_class.as_str().into(), bbox: t.bbox, confidence: t.confidence, embedding: t.embedding.clone() }
}

fn te_from_doc(d: &TeDoc, i: usize) -> std::result::Result<TrafficElement, String> {
    Ok(TrafficElement {
        bbox: d.bbox,
        te_class: TeClass::parse(&d.class)
            .ok_or_else(|| format!("traffic_elements[{i}]: unknown class {:?}", d.class))?,
        confidence: d.confidence,
        embedding: d.embedding.clone(),
    })
}

pub fn sd_doc(map: &SdMap) -> Vec<SdElementDoc> {
    map.elements
        .iter()
        .map(|e| SdElementDoc { class: e.class.as_str().into(), points: points_doc(&e.polyline) })
        .collect()
}

pub fn sd_from_doc(docs: &[SdElementDoc]) -> std::result::Result<SdMap, String> {
    let elements = docs
        .iter()
        .enumerate()
        .map(|(i, d)| {
            Ok(SdElement {
                polyline: polyline(&d.points, &format!("sd_map[{i}]"))?,
                class: SdClass::parse(&d.class).ok_or_else(|| format!("sd_map[{i}]: unknown class {:?}", d.class))?,
            })
        })
        .collect::<std::result::Result<_, String>>()?;
    Ok(SdMap { elements })
}

pub fn frame_doc(f: &Frame) -> FrameDoc {
    FrameDoc {
        timestamp: f.timestamp,
        ego_pose: PoseDoc { x: f.ego_pose.x, y: f.ego_pose.y, yaw: f.ego_pose.yaw },
        wheel_angle_deg: f.wheel_angle_deg,
        lane_segments: f.gt.segments.iter().map(segment_doc).collect(),
        adjacency: matrix_rows(&f.gt.adjacency),
        boundaries: f.gt_boundaries.iter().map(|b| BoundaryDoc { points: points_doc(b), confidence: 1.0 }).collect(),
        sd_map: sd_doc(&f.sd_map),
        traffic_elements: f.traffic_elements.iter().map(te_doc).collect(),
        te_assoc: matrix_rows(&f.te_assoc.matrix),
    }
}

fn graph_from_doc(d: &FrameDoc) -> std::result::Result<(LaneGraph, Vec<TrafficElement>, TeAssociation), String> {
    let segments: Vec<LaneSegment> = d
        .lane_segments
        .iter()
        .enumerate()
        .map(|(i, s)| segment_from_doc(s, i))
        .collect::<std::result::Result<_, _>>()?;
    let n = segments.len();
    let adjacency = rows_matrix(&d.adjacency, n, n, "adjacency")?;
    let tes: Vec<TrafficElement> =
        d.traffic_elements.iter().enumerate().map(|(i, t)| te_from_doc(t, i)).collect::<std::result::Result<_, _>>()?;
    let assoc = rows_matrix(&d.te_assoc, n, tes.len(), "te_assoc")?;
    let graph = LaneGraph::new(segments, adjacency).map_err(|e| e.to_string())?;
    Ok((graph, tes, TeAssociation { matrix: assoc }))
}

pub fn frame_from_doc(d: &FrameDoc) -> std::result::Result<Frame, String> {
    let (gt, traffic_elements, te_assoc) = graph_from_doc(d)?;
    let gt_boundaries = d
        .boundaries
        .iter()
        .enumerate()
        .map(|(i, b)| polyline(&b.points, &format!("boundaries[{i}]")))
        .collect::<std::result::Result<_, _>>()?;
    Ok(Frame {
        timestamp: d.timestamp,
        ego_pose: Pose2 { x: d.ego_pose.x, y: d.ego_pose.y, yaw: d.ego_pose.yaw },
        wheel_angle_deg: d.wheel_angle_deg,
        gt,
        gt_boundaries,
        sd_map: sd_from_doc(&d.sd_map)?,
        traffic_elements,
        te_assoc,
    })
}

/// A prediction frame; `base` supplies the scene-only fields.
pub fn prediction_doc(p: &Prediction, base: Option<&FrameDoc>) -> FrameDoc {
    let base = base.cloned().unwrap_or_default();
    FrameDoc {
        lane_segments: p.graph.segments.iter().map(segment_doc).collect(),
        adjacency: matrix_rows(&p.graph.adjacency),
        boundaries: p.boundaries.iter().map(|(b, c)| BoundaryDoc { points: points_doc(b), confidence: *c }).collect(),
        traffic_elements: p.traffic_elements.iter().map(te_doc).collect(),
        te_assoc: matrix_rows(&p.te_assoc.matrix),
        ..base
    }
}

pub fn prediction_from_doc(d: &FrameDoc) -> std::result::Result<Prediction, String> {
    let (graph, traffic_elements, te_assoc) = graph_from_doc(d)?;
    let boundaries = d
        .boundaries
        .iter()
        .enumerate()
        .map(|(i, b)| Ok((polyline(&b.points, &format!("boundaries[{i}]"))?, b.confidence)))
        .collect::<std::result::Result<_, String>>()?;
    Ok(Prediction { graph, boundaries, traffic_elements, te_assoc })
}

pub fn scene_doc(s: &Scene) -> SceneDoc {
    SceneDoc { frames: s.frames.iter().map(frame_doc).collect() }
}

pub fn scene_from_doc(d: &SceneDoc) -> std::result::Result<Scene, String> {
    let frames = d
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| frame_from_doc(f).map_err(|e| format!("frame {i}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    Ok(Scene { frames })
}

pub fn bev_doc(g: &BevGrid) -> BevDoc {
    let (h, w, c) = g.shape();
    let e = g.extent();
    BevDoc { shape: [h, w, c], extent: [e.x_min, e.x_max, e.y_min, e.y_max], values: g.values().to_vec() }
}

pub fn bev_from_doc(d: &BevDoc) -> lanetopo_core::Result<BevGrid> {
    let [x_min, x_max, y_min, y_max] = d.extent;
    let [h, w, c] = d.shape;
    BevGrid::from_values(h, w, c, BevExtent::new(x_min, x_max, y_min, y_max)?, d.values.clone())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.into(), source })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.into(), source })?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io { path: path.into(), source })
}

/// Loads and validates a scene file.
pub fn load_scene(path: &Path) -> Result<Scene> {
    load_scene_with(path, &SceneLimits::default())
}

pub fn load_scene_with(path: &Path, limits: &SceneLimits) -> Result<Scene> {
    let doc: SceneDoc = read_json(path)?;
    let scene = scene_from_doc(&doc).map_err(|m| Error::invalid(path, m))?;
    let violations = validate_scene(&scene, limits);
    if let Some(first) = violations.first() {
        let more = violations.len() - 1;
        let tail = if more > 0 { format!(" (and {more} more)") } else { String::new() };
        return Err(Error::invalid(path, format!("{first}{tail}")));
    }
    Ok(scene)
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let doc: SceneDoc = read_json(path)?;
    doc.frames
        .iter()
        .enumerate()
        .map(|(i, f)| prediction_from_doc(f).map_err(|m| Error::invalid(path, format!("frame {i}: {m}"))))
        .collect()
}

pub fn save_scene(path: &Path, scene: &Scene) -> Result<()> {
    write_json(path, &scene_doc(scene))
}
