//! SD-map priors: geographic ways, projection into the ego BEV frame,
//! reference-point sampling and the SD-enhanced reference points.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::embed::Embed;
use crate::error::{Error, Result};
use crate::lane::{normalize_point, BevExtent, Point3, Polyline, SdClass, SdElement, SdMap, ZRange};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Default reference-point count for SD-enhanced queries.
pub const N_SD: usize = 50;

/// `highway=*` values mapped to [`SdClass::Road`] unless configured otherwise.
pub const DEFAULT_HIGHWAY_WHITELIST: &[&str] = &[
    "motorway",
    "motorway_link",
    "trunk",
    "trunk_link",
    "primary",
    "primary_link",
    "secondary",
    "secondary_link",
    "tertiary",
    "tertiary_link",
    "unclassified",
    "residential",
    "living_street",
    "service",
    "road",
];

#[derive(Debug, Clone, PartialEq)]
pub struct GeoWay {
    pub id: i64,
    pub nodes: Vec<i64>,
    pub tags: BTreeMap<String, String>,
    pub class: SdClass,
}

/// Nodes (id -> (lat, lon) in degrees) and the ways that reference them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GeoSdMap {
    nodes: BTreeMap<i64, (f64, f64)>,
    ways: Vec<GeoWay>,
}

impl GeoSdMap {
    /// Checks referential integrity: every way has at least two nodes and
    /// every referenced node exists.
    pub fn new(nodes: BTreeMap<i64, (f64, f64)>, ways: Vec<GeoWay>) -> Result<Self> {
        for way in &ways {
            if way.nodes.len() < 2 {
                return Err(Error::ShortWay(way.id));
            }
            if let Some(&missing) = way.nodes.iter().find(|n| !nodes.contains_key(n)) {
                return Err(Error::UnknownNode { way: way.id, node: missing });
            }
        }
        Ok(Self { nodes, ways })
    }

    pub fn nodes(&self) -> &BTreeMap<i64, (f64, f64)> {
        &self.nodes
    }

    pub fn ways(&self) -> &[GeoWay] {
        &self.ways
    }

    pub fn way_coords(&self, way: &GeoWay) -> Vec<(f64, f64)> {
        way.nodes.iter().map(|n| self.nodes[n]).collect()
    }
}

/// Maps OSM tags to an SD class: whitelisted `highway` values are roads,
/// footways and sidewalks are sidewalks, everything else is other.
pub fn classify_tags<S: AsRef<str>>(tags: &BTreeMap<String, String>, whitelist: &[S]) -> SdClass {
    let Some(highway) = tags.get("highway") else {
        return SdClass::Other;
    };
    if whitelist.iter().any(|w| w.as_ref() == highway) {
        SdClass::Road
    } else if highway == "footway" || highway == "sidewalk" || tags.contains_key("sidewalk:side") {
        SdClass::Sidewalk
    } else {
        SdClass::Other
    }
}

/// Ego reference for projection: position in degrees and heading in radians,
/// counter-clockwise from east.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoEgo {
    pub lat: f64,
    pub lon: f64,
    pub yaw: f64,
}

/// Local equirectangular projection about the ego, rotated into the ego
/// heading (x forward, y left).
pub fn project_point(lat: f64, lon: f64, ego: &GeoEgo) -> (f64, f64) {
    let lat0 = ego.lat.to_radians();
    let mut dlon = (lon - ego.lon).to_radians();
    if dlon > PI {
        dlon -= 2.0 * PI;
    } else if dlon < -PI {
        dlon += 2.0 * PI;
    }
    let east = EARTH_RADIUS_M * dlon * lat0.cos();
    let north = EARTH_RADIUS_M * (lat.to_radians() - lat0);
    let (s, c) = ego.yaw.sin_cos();
    (c * east + s * north, -s * east + c * north)
}

/// Liang-Barsky clip of segment `a -> b` to the extent; returns the
/// parameter interval kept, if any.
fn clip_segment(a: Point3, b: Point3, e: &BevExtent) -> Option<(f64, f64)> {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [(-dx, a.x - e.x_min), (dx, e.x_max - a.x), (-dy, a.y - e.y_min), (dy, e.y_max - a.y)] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    (t0 <= t1).then_some((t0, t1))
}

/// Clips a polyline to the extent. Parts that leave and re-enter the extent
/// become separate pieces; pieces shorter than two distinct points are
/// dropped.
pub fn clip_polyline(points: &[Point3], extent: &BevExtent) -> Vec<Polyline> {
    let mut out = Vec::new();
    let mut run: Vec<Point3> = Vec::new();
    let mut flush = |run: &mut Vec<Point3>| {
        run.dedup();
        if run.len() >= 2 {
            if let Ok(p) = Polyline::new(core::mem::take(run)) {
                out.push(p);
            }
        }
        run.clear();
    };
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        match clip_segment(a, b, extent) {
            None => flush(&mut run),
            Some((t0, t1)) => {
                let start = a.lerp(&b, t0);
                let end = a.lerp(&b, t1);
                if t0 > 0.0 || run.is_empty() {
                    flush(&mut run);
                    run.push(start);
                }
                run.push(end);
                if t1 < 1.0 {
                    flush(&mut run);
                }
            }
        }
    }
    flush(&mut run);
    out
}

/// Projects every way into the ego frame (z = 0) and clips it to the
/// extent. Ways entirely outside the extent are dropped.
pub fn project_clip(map: &GeoSdMap, ego: &GeoEgo, extent: &BevExtent) -> Result<SdMap> {
    if !(ego.lat.abs() <= 90.0) {
        return Err(Error::OutOfRange(alloc::format!("ego latitude {}", ego.lat)));
    }
    extent.validate()?;
    let mut elements = Vec::new();
    for way in map.ways() {
        let pts: Vec<Point3> = map
            .way_coords(way)
            .into_iter()
            .map(|(lat, lon)| {
                let (x, y) = project_point(lat, lon, ego);
                Point3::new(x, y, 0.0)
            })
            .collect();
        for polyline in clip_polyline(&pts, extent) {
            elements.push(SdElement { polyline, class: way.class });
        }
    }
    Ok(SdMap { elements })
}

/// Normalized SD reference points and the element each came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SdRefPoints {
    pub points: Vec<Point3>,
    pub source_edge: Vec<usize>,
}

impl SdRefPoints {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Number of reference points assigned to each SD element.
///
/// Every element gets its midpoint first; if there are more elements than
/// points, only the `n_sd` longest are kept. The remaining quota is split in
/// proportion to length with largest-remainder rounding (ties: longer
/// element, then lower index).
pub fn allocate_sd_points(lengths: &[f64], n_sd: usize) -> Vec<usize> {
    let m = lengths.len();
    let mut counts = vec![0usize; m];
    if m == 0 || n_sd == 0 {
        return counts;
    }
    if m > n_sd {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| lengths[b].total_cmp(&lengths[a]).then(a.cmp(&b)));
        for &i in &order[..n_sd] {
            counts[i] = 1;
        }
        return counts;
    }
    counts.iter_mut().for_each(|c| *c = 1);
    let remaining = n_sd - m;
    if remaining == 0 {
        return counts;
    }
    let total: f64 = lengths.iter().sum();
    let weights: Vec<f64> = if total > 0.0 { lengths.to_vec() } else { vec![1.0; m] };
    let total = if total > 0.0 { total } else { m as f64 };
    let quotas: Vec<f64> = weights.iter().map(|w| remaining as f64 * w / total).collect();
    let mut assigned = 0usize;
    for (c, q) in counts.iter_mut().zip(&quotas) {
        let fl = q.floor() as usize;
        *c += fl;
        assigned += fl;
    }
    let mut order: Vec<usize> = (0..m).collect();
    let rem = |i: usize| quotas[i] - quotas[i].floor();
    order.sort_by(|&a, &b| rem(b).total_cmp(&rem(a)).then(weights[b].total_cmp(&weights[a])).then(a.cmp(&b)));
    // Floating rounding can leave the floors one short or one over.
    let mut left = remaining.saturating_sub(assigned);
    let mut k = 0;
    while left > 0 {
        counts[order[k % m]] += 1;
        left -= 1;
        k += 1;
    }
    counts
}

/// Arclength fractions for an element holding `count` points: the midpoint
/// plus `count - 1` extras at `k / count`; an extra landing on the midpoint
/// is nudged to the nearest unused fraction below it on the half-step grid.
pub fn sd_point_fractions(count: usize) -> Vec<f64> {
    if count == 0 {
        return Vec::new();
    }
    let extra = count - 1;
    let denom = 2 * (extra + 1);
    let mut numerators = vec![extra + 1];
    for k in 1..=extra {
        let n = 2 * k;
        numerators.push(if n == extra + 1 { extra } else { n });
    }
    numerators.sort_unstable();
    numerators.into_iter().map(|n| n as f64 / denom as f64).collect()
}

/// Samples exactly `n_sd` normalized reference points from the SD map.
pub fn sample_sd_refpoints(map: &SdMap, n_sd: usize, extent: &BevExtent, z: &ZRange) -> Result<SdRefPoints> {
    if n_sd == 0 {
        return Err(Error::Param("n_sd must be >= 1".into()));
    }
    if map.is_empty() {
        return Err(Error::NoPrior);
    }
    let lengths: Vec<f64> = map.elements.iter().map(|e| e.polyline.length()).collect();
    let counts = allocate_sd_points(&lengths, n_sd);
    let mut points = Vec::with_capacity(n_sd);
    let mut source_edge = Vec::with_capacity(n_sd);
    for (i, (el, &count)) in map.elements.iter().zip(&counts).enumerate() {
        for f in sd_point_fractions(count) {
            let p = el.polyline.point_at(f * lengths[i]);
            points.push(normalize_point(p, extent, z)?);
            source_edge.push(i);
        }
    }
    Ok(SdRefPoints { points, source_edge })
}

/// Per-axis sinusoidal encoding of a normalized point.
///
/// Each axis gets `c / 6` angular frequencies `pi * 10000^(-k / (c/6))`,
/// laid out as all sines then all cosines; axes are concatenated x, y, z.
pub fn positional_encoding(p: Point3, c: usize) -> Result<Vec<f64>> {
    if c == 0 || !c.is_multiple_of(6) {
        return Err(Error::Channels(c));
    }
    let nf = c / 6;
    let mut out = Vec::with_capacity(c);
    for v in [p.x, p.y, p.z] {
        let freqs = (0..nf).map(|k| PI * 10000f64.powf(-(k as f64) / nf as f64));
        out.extend(freqs.clone().map(|w| (w * v).sin()));
        out.extend(freqs.map(|w| (w * v).cos()));
    }
    Ok(out)
}

/// `clamp(proj(f(pe(p))) + p)`: SD reference points shifted by a learned
/// offset in normalized space.
pub fn enhance_sd_refpoints<F: Embed, P: Embed>(refs: &SdRefPoints, f: &F, proj: &P) -> Result<Vec<Point3>> {
    if proj.channels() != 3 {
        return Err(Error::Shape(alloc::format!("offset projection must output 3 values, got {}", proj.channels())));
    }
    refs.points
        .iter()
        .map(|&p| {
            let pe = positional_encoding(p, f.channels())?;
            let o = proj.embed(&f.embed(&pe));
            Ok((p + Point3::new(o[0], o[1], o[2])).clamp_unit())
        })
        .collect()
}
