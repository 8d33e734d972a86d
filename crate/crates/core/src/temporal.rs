//! Arclength resampling for reference points, and the temporal fusion
//! primitives: rigid BEV warping and a convolutional GRU.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lane::{BevExtent, LaneSegment, Point3, Polyline, Pose2};
use crate::topology::sigmoid;

/// Default number of reference points resampled per road boundary.
pub const N_REF: usize = 8;

/// `n` points at equal arclength spacing; endpoints are kept exactly.
pub fn resample_equidistant(p: &Polyline, n: usize) -> Result<Polyline> {
    if n < 2 {
        return Err(Error::Param(alloc::format!("resample count {n} must be >= 2")));
    }
    let pts = p.points();
    let cum: Vec<f64> = core::iter::once(0.0)
        .chain(pts.windows(2).scan(0.0, |acc, w| {
            *acc += w[0].distance(&w[1]);
            Some(*acc)
        }))
        .collect();
    let total = *cum.last().unwrap_or(&0.0);
    if !(total > 0.0) {
        return Err(Error::ZeroLength);
    }
    let mut out = Vec::with_capacity(n);
    out.push(p.first());
    let mut seg = 0usize;
    for k in 1..n - 1 {
        let s = total * k as f64 / (n - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
        out.push(pts[seg].lerp(&pts[seg + 1], t));
    }
    out.push(p.last());
    Polyline::new(out)
}

/// `m` equidistant points on the left boundary followed by `m` on the right.
/// A single point per boundary is its arclength midpoint.
pub fn lane_attention_refpoints(ls: &LaneSegment, m: usize) -> Result<Vec<Point3>> {
    if m == 0 {
        return Err(Error::Param("points per boundary must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(2 * m);
    for b in [&ls.left, &ls.right] {
        if m == 1 {
            out.push(b.point_at(b.length() / 2.0));
        } else {
            out.extend_from_slice(resample_equidistant(b, m)?.points());
        }
    }
    Ok(out)
}

/// `H x W x C` scalar field over a metric extent. Row `i` runs along y,
/// column `j` along x; values are stored row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    h: usize,
    w: usize,
    c: usize,
    extent: BevExtent,
    values: Vec<f64>,
}

impl BevGrid {
    pub fn zeros(h: usize, w: usize, c: usize, extent: BevExtent) -> Result<Self> {
        Self::from_values(h, w, c, extent, vec![0.0; h * w * c])
    }

    pub fn from_values(h: usize, w: usize, c: usize, extent: BevExtent, values: Vec<f64>) -> Result<Self> {
        extent.validate()?;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::Shape("grid dimensions must be positive".into()));
        }
        if values.len() != h * w * c {
            return Err(Error::Shape(alloc::format!("{} values for a {h}x{w}x{c} grid", values.len())));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("grid"));
        }
        Ok(Self { h, w, c, extent, values })
    }

    pub fn from_fn(
        h: usize,
        w: usize,
        c: usize,
        extent: BevExtent,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(h * w * c);
        for i in 0..h {
            for j in 0..w {
                for k in 0..c {
                    values.push(f(i, j, k));
                }
            }
        }
        Self::from_values(h, w, c, extent, values)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.h, self.w, self.c)
    }

    pub fn extent(&self) -> &BevExtent {
        &self.extent
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(cell width along x, cell height along y)`.
    pub fn cell_size(&self) -> (f64, f64) {
        (self.extent.width() / self.w as f64, self.extent.height() / self.h as f64)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[(i * self.w + j) * self.c + k]
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.w + j) * self.c + k
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        let (cw, ch) = self.cell_size();
        (self.extent.x_min + (j as f64 + 0.5) * cw, self.extent.y_min + (i as f64 + 0.5) * ch)
    }

    pub fn scaled(&self, s: f64) -> BevGrid {
        BevGrid { values: self.values.iter().map(|v| v * s).collect(), ..self.clone() }
    }

    /// Bilinear sample at metric `(x, y)`; zero outside the extent, nearest
    /// border cell between the outermost cell centres and the extent edge.
    pub fn sample(&self, x: f64, y: f64, k: usize) -> f64 {
        if !self.extent.contains(x, y) {
            return 0.0;
        }
        let (cw, ch) = self.cell_size();
        let u = ((x - self.extent.x_min) / cw - 0.5).clamp(0.0, (self.w - 1) as f64);
        let v = ((y - self.extent.y_min) / ch - 0.5).clamp(0.0, (self.h - 1) as f64);
        let (j0, i0) = (u.floor() as usize, v.floor() as usize);
        let (j1, i1) = ((j0 + 1).min(self.w - 1), (i0 + 1).min(self.h - 1));
        let (fu, fv) = (u - j0 as f64, v - i0 as f64);
        let top = self.get(i0, j0, k) * (1.0 - fu) + self.get(i0, j1, k) * fu;
        let bottom = self.get(i1, j0, k) * (1.0 - fu) + self.get(i1, j1, k) * fu;
        top * (1.0 - fv) + bottom * fv
    }

    fn same_shape(&self, other: &BevGrid) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(alloc::format!("grid {:?} vs {:?}", self.shape(), other.shape())));
        }
        Ok(())
    }
}

/// Pulls the grid through a rigid motion: each output cell centre `c` reads
/// the input at `motion^-1(c)` with bilinear interpolation, zero when that
/// pre-image leaves the extent.
pub fn warp_bev(g: &BevGrid, motion: &Pose2) -> BevGrid {
    let inv = motion.inverse();
    let (h, w, c) = g.shape();
    let mut values = vec![0.0; h * w * c];
    for i in 0..h {
        for j in 0..w {
            let (x, y) = g.cell_center(i, j);
            let (px, py) = inv.apply(x, y);
            for k in 0..c {
                values[g.idx(i, j, k)] = g.sample(px, py, k);
            }
        }
    }
    BevGrid { values, ..g.clone() }
}

/// Kernels and biases for the update gate, reset gate and candidate of a
/// convolutional GRU. Each kernel maps `2C -> C` channels and is stored as
/// `[out][in][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruWeights {
    channels: usize,
    kernel: usize,
    pub w_z: Vec<f64>,
    pub w_r: Vec<f64>,
    pub w_h: Vec<f64>,
    pub b_z: Vec<f64>,
    pub b_r: Vec<f64>,
    pub b_h: Vec<f64>,
}

impl GruWeights {
    pub fn zeros(channels: usize, kernel: usize) -> Result<Self> {
        Self::check(channels, kernel)?;
        let n = channels * 2 * channels * kernel * kernel;
        Ok(Self {
            channels,
            kernel,
            w_z: vec![0.0; n],
            w_r: vec![0.0; n],
            w_h: vec![0.0; n],
            b_z: vec![0.0; channels],
            b_r: vec![0.0; channels],
            b_h: vec![0.0; channels],
        })
    }

    /// Uniform `(-s, s)` weights with `s = 1/sqrt(fan_in)`; biases zero.
    pub fn seeded(channels: usize, kernel: usize, seed: u64) -> Result<Self> {
        let mut w = Self::zeros(channels, kernel)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = 1.0 / ((2 * channels * kernel * kernel) as f64).sqrt();
        for v in w.w_z.iter_mut().chain(w.w_r.iter_mut()).chain(w.w_h.iter_mut()) {
            *v = rng.random_range(-s..s);
        }
        Ok(w)
    }

    fn check(channels: usize, kernel: usize) -> Result<()> {
        if channels == 0 {
            return Err(Error::Param("gru needs at least one channel".into()));
        }
        if kernel.is_multiple_of(2) {
            return Err(Error::Param(alloc::format!("kernel size {kernel} must be odd")));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        Self::check(self.channels, self.kernel)?;
        let n = self.channels * 2 * self.channels * self.kernel * self.kernel;
        for (name, v, len) in [
            ("w_z", &self.w_z, n),
            ("w_r", &self.w_r, n),
            ("w_h", &self.w_h, n),
            ("b_z", &self.b_z, self.channels),
            ("b_r", &self.b_r, self.channels),
            ("b_h", &self.b_h, self.channels),
        ] {
            if v.len() != len {
                return Err(Error::Shape(alloc::format!("{name} has {} values, expected {len}", v.len())));
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite("gru weights"));
            }
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }
}

/// Zero-padded same-size convolution over the channel concatenation
/// `[a, b]` (each `C` channels), producing `C` channels.
#[allow(clippy::too_many_arguments)]
fn conv_pair(a: &[f64], b: &[f64], h: usize, w: usize, c: usize, kernel: &[f64], bias: &[f64], k: usize) -> Vec<f64> {
    let r = (k / 2) as isize;
    let mut out = vec![0.0; h * w * c];
    for i in 0..h {
        for j in 0..w {
            for o in 0..c {
                let mut acc = bias[o];
                for ky in 0..k {
                    let y = i as isize + ky as isize - r;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let x = j as isize + kx as isize - r;
                        if x < 0 || x >= w as isize {
                            continue;
                        }
                        let cell = (y as usize * w + x as usize) * c;
                        for ci in 0..2 * c {
                            let v = if ci < c { a[cell + ci] } else { b[cell + ci - c] };
                            acc += kernel[((o * 2 * c + ci) * k + ky) * k + kx] * v;
                        }
                    }
                }
                out[(i * w + j) * c + o] = acc;
            }
        }
    }
    out
}

/// One ConvGRU step:
/// `z = σ(conv_z[h, x])`, `r = σ(conv_r[h, x])`,
/// `h~ = tanh(conv_h[r ⊙ h, x])`, `out = (1 - z) ⊙ h + z ⊙ h~`.
pub fn gated_fusion(h_prev: &BevGrid, x: &BevGrid, w: &GruWeights) -> Result<BevGrid> {
    h_prev.same_shape(x)?;
    w.validate()?;
    let (gh, gw, c) = h_prev.shape();
    if c != w.channels {
        return Err(Error::Shape(alloc::format!("grid has {c} channels, weights expect {}", w.channels)));
    }
    let (hv, xv) = (h_prev.values(), x.values());
    let z: Vec<f64> = conv_pair(hv, xv, gh, gw, c, &w.w_z, &w.b_z, w.kernel).into_iter().map(sigmoid).collect();
    let r: Vec<f64> = conv_pair(hv, xv, gh, gw, c, &w.w_r, &w.b_r, w.kernel).into_iter().map(sigmoid).collect();
    let rh: Vec<f64> = r.iter().zip(hv).map(|(r, h)| r * h).collect();
    let cand: Vec<f64> =
        conv_pair(&rh, xv, gh, gw, c, &w.w_h, &w.b_h, w.kernel).into_iter().map(|v| v.tanh()).collect();
    let values = hv.iter().zip(&z).zip(&cand).map(|((h, z), hc)| (1.0 - z) * h + z * hc).collect();
    Ok(BevGrid { values, ..h_prev.clone() })
}

/// Streaming step. Without state (first frame) the input passes through;
/// otherwise the stored state is warped by the ego motion and fused with
/// the new frame. The fused grid becomes the next state.
pub fn stream_step(state: Option<&BevGrid>, x: &BevGrid, motion: &Pose2, w: &GruWeights) -> Result<(BevGrid, BevGrid)> {
    match state {
        None => Ok((x.clone(), x.clone())),
        Some(prev) => {
            let fused = gated_fusion(&warp_bev(prev, motion), x, w)?;
            Ok((fused.clone(), fused))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lane::{BoundaryType, SegClass};
    use core::f64::consts::PI;

    fn grid(h: usize, w: usize, c: usize) -> BevGrid {
        BevGrid::from_fn(h, w, c, BevExtent::default(), |i, j, k| (i * 31 + j * 7 + k * 3) as f64 % 11.0 - 5.0).unwrap()
    }

    #[test]
    fn resample_straight() {
        let p = Polyline::from_xy(&[(0.0, 0.0), (10.0, 0.0)]).unwrap();
        let r = resample_equidistant(&p, 5).unwrap();
        let xs: Vec<f64> = r.points().iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0.0, 2.5, 5.0, 7.5, 10.0]);
    }

    #[test]
    fn resample_l_shape() {
        let p = Polyline::from_xy(&[(0.0, 0.0), (10.0, 0.0), (10.0, 10.0)]).unwrap();
        let r = resample_equidistant(&p, 3).unwrap();
        assert_eq!(r.points()[1], Point3::new(10.0, 0.0, 0.0));
        assert_eq!(r.last(), Point3::new(10.0, 10.0, 0.0));
    }

    #[test]
    fn resample_identity_and_errors() {
        let p = Polyline::new((0..7).map(|i| Point3::new(i as f64 * 1.5, 2.0, 0.5)).collect()).unwrap();
        let r = resample_equidistant(&p, 7).unwrap();
        for (a, b) in r.points().iter().zip(p.points()) {
            assert!(a.distance(b) < 1e-9);
        }
        let flat = Polyline::from_xy(&[(1.0, 1.0), (1.0, 1.0)]).unwrap();
        assert_eq!(resample_equidistant(&flat, 4), Err(Error::ZeroLength));
        assert!(resample_equidistant(&p, 1).is_err());
    }

    fn straight_segment() -> LaneSegment {
        let line = |y: f64| Polyline::new((0..10).map(|i| Point3::new(i as f64, y, 0.0)).collect()).unwrap();
        LaneSegment {
            centerline: line(0.0),
            left: line(1.5),
            right: line(-1.5),
            seg_class: SegClass::Lane,
            left_type: BoundaryType::Dashed,
            right_type: BoundaryType::Solid,
            confidence: 1.0,
        }
    }

    #[test]
    fn lane_attention_points() {
        let s = straight_segment();
        let one = lane_attention_refpoints(&s, 1).unwrap();
        assert_eq!(one, vec![Point3::new(4.5, 1.5, 0.0), Point3::new(4.5, -1.5, 0.0)]);
        let ten = lane_attention_refpoints(&s, 10).unwrap();
        for (a, b) in ten[..10].iter().zip(s.left.points()) {
            assert!(a.distance(b) < 1e-12);
        }
        let four = lane_attention_refpoints(&s, 4).unwrap();
        for (k, p) in four[..4].iter().enumerate() {
            assert!((p.x - 9.0 * k as f64 / 3.0).abs() < 1e-12);
        }
        assert_eq!(four.len(), 8);
    }

    #[test]
    fn warp_identity() {
        let g = grid(10, 20, 2);
        let out = warp_bev(&g, &Pose2::IDENTITY);
        for (a, b) in out.values().iter().zip(g.values()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn warp_one_cell_translation() {
        let g = grid(10, 20, 1);
        let (cw, _) = g.cell_size();
        let out = warp_bev(&g, &Pose2::new(cw, 0.0, 0.0));
        for i in 0..10 {
            assert!(out.get(i, 0, 0).abs() < 1e-9);
            for j in 1..20 {
                assert!((out.get(i, j, 0) - g.get(i, j - 1, 0)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn warp_half_turn_reverses_indices() {
        let g = grid(6, 8, 1);
        let out = warp_bev(&g, &Pose2::new(0.0, 0.0, PI));
        for i in 0..6 {
            for j in 0..8 {
                assert!((out.get(i, j, 0) - g.get(5 - i, 7 - j, 0)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gru_zero_weights_halves_state() {
        let h = grid(5, 6, 2);
        let x = grid(5, 6, 2).scaled(3.0);
        let out = gated_fusion(&h, &x, &GruWeights::zeros(2, 3).unwrap()).unwrap();
        for (o, hv) in out.values().iter().zip(h.values()) {
            assert!((o - 0.5 * hv).abs() < 1e-15);
        }
    }

    #[test]
    fn gru_saturated_gate() {
        let h = BevGrid::zeros(4, 4, 1, BevExtent::default()).unwrap();
        let x = grid(4, 4, 1);
        let mut w = GruWeights::seeded(1, 3, 9).unwrap();
        w.b_z = vec![-60.0];
        let out = gated_fusion(&h, &x, &w).unwrap();
        assert!(out.values().iter().all(|v| v.abs() < 1e-20));
    }

    #[test]
    fn gru_shape_errors() {
        let w = GruWeights::zeros(1, 3).unwrap();
        assert!(gated_fusion(&grid(4, 4, 1), &grid(4, 5, 1), &w).is_err());
        assert!(gated_fusion(&grid(4, 4, 2), &grid(4, 4, 2), &w).is_err());
        assert!(GruWeights::zeros(1, 2).is_err());
    }

    #[test]
    fn stream_warm_up_and_step() {
        let w = GruWeights::zeros(1, 3).unwrap();
        let x0 = grid(4, 4, 1);
        let (f0, s0) = stream_step(None, &x0, &Pose2::IDENTITY, &w).unwrap();
        assert_eq!(f0, x0);
        assert_eq!(s0, x0);
        let x1 = grid(4, 4, 1).scaled(2.0);
        let (f1, s1) = stream_step(Some(&s0), &x1, &Pose2::IDENTITY, &w).unwrap();
        assert_eq!(f1, s1);
        for (a, b) in f1.values().iter().zip(s0.values()) {
            assert!((a - 0.5 * b).abs() < 1e-12);
        }
        let (again, _) = stream_step(Some(&s0), &x1, &Pose2::IDENTITY, &w).unwrap();
        assert_eq!(again, f1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn equal_chords(pts in proptest::collection::vec((-20.0f64..20.0, -20.0f64..20.0), 2..8), n in 2usize..30) {
                let p = Polyline::from_xy(&pts).unwrap();
                prop_assume!(p.length() > 1e-3);
                let r = resample_equidistant(&p, n).unwrap();
                prop_assert_eq!(r.len(), n);
                prop_assert_eq!(r.first(), p.first());
                prop_assert_eq!(r.last(), p.last());
                let step = p.length() / (n - 1) as f64;
                for (k, q) in r.points().iter().enumerate() {
                    let want = p.point_at(k as f64 * step);
                    prop_assert!(q.distance(&want) <= 1e-9 * p.length().max(1.0));
                }
            }

            #[test]
            fn gru_bounds(seed in any::<u64>(), scale in 0.1f64..4.0) {
                let h = grid(4, 5, 2).scaled(scale);
                let x = grid(4, 5, 2);
                let w = GruWeights::seeded(2, 3, seed).unwrap();
                let out = gated_fusion(&h, &x, &w).unwrap();
                for (o, hv) in out.values().iter().zip(h.values()) {
                    prop_assert!(*o >= hv.min(-1.0) - 1e-12 && *o <= hv.max(1.0) + 1e-12);
                }
            }

            #[test]
            fn warp_composition(ax in -3.0f64..3.0, ay in -3.0f64..3.0, at in -0.2f64..0.2, bx in -3.0f64..3.0, by in -3.0f64..3.0, bt in -0.2f64..0.2) {
                // Smooth field on a fine grid.
                let g = BevGrid::from_fn(50, 100, 1, BevExtent::default(), |i, j, _| {
                    let (x, y) = (j as f64 - 49.5, i as f64 - 24.5);
                    libm::sin(x * 0.02) + libm::cos(y * 0.03)
                }).unwrap();
                let a = Pose2::new(ax, ay, at);
                let b = Pose2::new(bx, by, bt);
                let two = warp_bev(&warp_bev(&g, &a), &b);
                let once = warp_bev(&g, &b.compose(&a));
                for i in 15..35 {
                    for j in 30..70 {
                        prop_assert!((two.get(i, j, 0) - once.get(i, j, 0)).abs() < 1e-3);
                    }
                }
            }
        }
    }
}
