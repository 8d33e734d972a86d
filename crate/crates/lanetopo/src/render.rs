//! Top-down SVG drawings of lane graphs.
//!
//! The ego x axis points up the page and y points left. Every polyline is
//! one `<path>`; every successor edge at or above `tau` is one `<line>` with
//! an arrow marker.

use std::fmt::Write;

use lanetopo_core::metrics::Prediction;
use lanetopo_core::topology::extract_graph;
use lanetopo_core::{BevExtent, BoundaryType, Frame, LaneGraph, Point3, Polyline, SdClass, SdMap, SegClass};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderStyle {
    pub extent: BevExtent,
    /// pixels per metre
    pub scale: f64,
    pub tau: f64,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self { extent: BevExtent::default(), scale: 8.0, tau: lanetopo_core::topology::TAU }
    }
}

/// What gets drawn, independent of whether it came from a scene or a model.
#[derive(Debug, Clone, Copy)]
pub struct Layers<'a> {
    pub graph: &'a LaneGraph,
    pub boundaries: &'a [Polyline],
    pub sd: Option<&'a SdMap>,
}

impl<'a> Layers<'a> {
    pub fn from_frame(f: &'a Frame) -> Self {
        Self { graph: &f.gt, boundaries: &f.gt_boundaries, sd: Some(&f.sd_map) }
    }
}

struct Canvas<'s> {
    style: &'s RenderStyle,
    out: String,
}

impl Canvas<'_> {
    fn xy(&self, p: &Point3) -> (f64, f64) {
        let e = &self.style.extent;
        ((e.y_max - p.y) * self.style.scale, (e.x_max - p.x) * self.style.scale)
    }

    fn path(&mut self, pts: &[Point3], class: &str) {
        let mut d = String::new();
        for (i, p) in pts.iter().enumerate() {
            let (u, v) = self.xy(p);
            let _ = write!(d, "{}{u:.2},{v:.2}", if i == 0 { "M" } else { " L" });
        }
        let _ = writeln!(self.out, r#"  <path class="{class}" d="{d}"/>"#);
    }
}

fn boundary_class(t: BoundaryType) -> &'static str {
    match t {
        BoundaryType::Solid => "boundary solid",
        BoundaryType::Dashed => "boundary dashed",
        BoundaryType::Invisible => "boundary invisible",
    }
}

const CSS: &str = "path { fill: none; stroke-linejoin: round; }
    .frame { fill: #fafafa; stroke: #999; }
    .axis { stroke: #bbb; stroke-width: 1; }
    .sd-road { stroke: #e0d4b0; stroke-width: 10; stroke-linecap: round; }
    .sd-sidewalk { stroke: #d8e4d0; stroke-width: 5; }
    .sd-other { stroke: #e6e6e6; stroke-width: 3; }
    .road-boundary { stroke: #c0392b; stroke-width: 2; }
    .centerline { stroke: #2e86c1; stroke-width: 1.5; }
    .crossing { stroke: #8e44ad; stroke-width: 1.5; }
    .boundary { stroke-width: 1.2; }
    .solid { stroke: #222; }
    .dashed { stroke: #555; stroke-dasharray: 6 4; }
    .invisible { stroke: #aaa; stroke-dasharray: 1 3; }
    .edge { stroke: #27ae60; stroke-width: 1.5; }";

/// Deterministic SVG for the given layers.
pub fn render_svg(layers: &Layers, style: &RenderStyle) -> Result<String> {
    let e = &style.extent;
    let (w, h) = (e.height() * style.scale, e.width() * style.scale);
    let mut c = Canvas { style, out: String::new() };
    let _ = writeln!(c.out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        c.out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#
    );
    let _ = writeln!(
        c.out,
        r##"  <defs><marker id="arrow" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="6" markerHeight="6" orient="auto"><path d="M0,0 L10,5 L0,10 z" fill="#27ae60"/></marker></defs>"##
    );
    let _ = writeln!(c.out, "  <style>{CSS}</style>");
    let _ = writeln!(c.out, r#"  <rect class="frame" x="0" y="0" width="{w:.2}" height="{h:.2}"/>"#);
    let (ou, ov) = c.xy(&Point3::ZERO);
    let _ = writeln!(c.out, r#"  <line class="axis" x1="{ou:.2}" y1="0" x2="{ou:.2}" y2="{h:.2}"/>"#);
    let _ = writeln!(c.out, r#"  <line class="axis" x1="0" y1="{ov:.2}" x2="{w:.2}" y2="{ov:.2}"/>"#);

    if let Some(sd) = layers.sd {
        for el in &sd.elements {
            let class = match el.class {
                SdClass::Road => "sd-road",
                SdClass::Sidewalk => "sd-sidewalk",
                SdClass::Other => "sd-other",
            };
            c.path(el.polyline.points(), class);
        }
    }
    for b in layers.boundaries {
        c.path(b.points(), "road-boundary");
    }
    for s in &layers.graph.segments {
        let centre = if s.seg_class == SegClass::PedestrianCrossing { "crossing" } else { "centerline" };
        c.path(s.centerline.points(), centre);
        c.path(s.left.points(), boundary_class(s.left_type));
        c.path(s.right.points(), boundary_class(s.right_type));
    }
    for edge in extract_graph(&layers.graph.adjacency, style.tau)? {
        let (a, b) = (&layers.graph.segments[edge.from].centerline, &layers.graph.segments[edge.to].centerline);
        let (x1, y1) = c.xy(&a.point_at(a.length() * 0.75));
        let (x2, y2) = c.xy(&b.point_at(b.length() * 0.25));
        let _ = writeln!(
            c.out,
            r#"  <line class="edge" x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" marker-end="url(#arrow)"><title>{} -&gt; {} ({:.3})</title></line>"#,
            edge.from, edge.to, edge.score
        );
    }
    c.out.push_str("</svg>\n");
    Ok(c.out)
}

pub fn render_frame(f: &Frame, style: &RenderStyle) -> Result<String> {
    render_svg(&Layers::from_frame(f), style)
}

pub fn render_prediction(p: &Prediction, style: &RenderStyle) -> Result<String> {
    let boundaries: Vec<Polyline> = p.boundaries.iter().map(|b| b.0.clone()).collect();
    render_svg(&Layers { graph: &p.graph, boundaries: &boundaries, sd: None }, style)
}
