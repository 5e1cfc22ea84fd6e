//! Curvilinear polygons described by parametric boundary arcs.
//!
//! Every arc is parametrized over `s ∈ [0, 1]`; the arcs are listed in
//! counterclockwise order so the domain lies to the left of each arc.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::gauss_legendre;
use crate::Vec2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("arc parameter {s} outside [0, 1]")]
    ParameterOutOfRange { s: f64 },
    #[error("arc {arc} is not regular near s = {s}")]
    Irregular { arc: usize, s: f64 },
    #[error("arc {arc} does not end where arc {next} starts (gap {gap:e})")]
    Discontinuous { arc: usize, next: usize, gap: f64 },
    #[error("corner after arc {arc} has opening angle {angle} outside (0, pi)")]
    BadCorner { arc: usize, angle: f64 },
    #[error("boundary is not positively oriented (signed area {area})")]
    Orientation { area: f64 },
    #[error("polygon needs at least one arc")]
    Empty,
}

const CLOSURE_TOL: f64 = 1e-12;
const SMOOTH_JOINT_TOL: f64 = 1e-9;
const MAX_CORNER_ANGLE: f64 = PI - 1e-6;
const REGULARITY_SAMPLES: usize = 256;
const LENGTH_KNOTS: usize = 2048;
const CLOSEST_SAMPLES: usize = 64;

/// Parametric form of a boundary arc.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Curve {
    /// `c + R (cos θ, sin θ)` with `θ = θ₀ + (θ₁ - θ₀) s`.
    CircleArc { center: Vec2, radius: f64, theta0: f64, theta1: f64 },
    /// `c + ρ(θ) (cos θ, sin θ)` with `ρ(θ) = a₀ + Σ_k a_k cos kθ + b_k sin kθ`.
    /// `coeffs[k] = (a_k, b_k)`; `b₀` is ignored.
    PolarGraph { center: Vec2, theta0: f64, theta1: f64, coeffs: Vec<(f64, f64)> },
}

impl Curve {
    fn angle_range(&self) -> (f64, f64) {
        match self {
            Curve::CircleArc { theta0, theta1, .. } | Curve::PolarGraph { theta0, theta1, .. } => (*theta0, *theta1),
        }
    }

    /// γ(s), γ'(s), γ''(s).
    fn jet(&self, s: f64) -> [Vec2; 3] {
        let (t0, t1) = self.angle_range();
        let dt = t1 - t0;
        let theta = t0 + dt * s;
        let (sn, cs) = theta.sin_cos();
        let radial = Vec2::new(cs, sn);
        let tangential = Vec2::new(-sn, cs);
        match self {
            Curve::CircleArc { center, radius, .. } => {
                [*center + radial * *radius, tangential * (radius * dt), radial * (-radius * dt * dt)]
            }
            Curve::PolarGraph { center, coeffs, .. } => {
                let (mut rho, mut d1, mut d2) = (0.0, 0.0, 0.0);
                for (k, (a, b)) in coeffs.iter().enumerate() {
                    let kf = k as f64;
                    let (sk, ck) = (kf * theta).sin_cos();
                    let b = if k == 0 { 0.0 } else { *b };
                    rho += a * ck + b * sk;
                    d1 += kf * (-a * sk + b * ck);
                    d2 += -kf * kf * (a * ck + b * sk);
                }
                let p = *center + radial * rho;
                let dp = radial * d1 + tangential * rho;
                let ddp = radial * (d2 - rho) + tangential * (2.0 * d1);
                [p, dp * dt, ddp * (dt * dt)]
            }
        }
    }
}

/// One smooth piece of the boundary.
#[derive(Clone, Debug)]
pub struct BoundaryArc {
    pub id: usize,
    pub curve: Curve,
    pub start: Vec2,
    pub end: Vec2,
    /// Cumulative arc length at `s = i / LENGTH_KNOTS`.
    cumulative: Vec<f64>,
}

impl BoundaryArc {
    pub fn new(id: usize, curve: Curve) -> Result<Self, GeometryError> {
        let mut arc =
            BoundaryArc { id, start: curve.jet(0.0)[0], end: curve.jet(1.0)[0], curve, cumulative: Vec::new() };
        for k in 0..=REGULARITY_SAMPLES {
            let s = k as f64 / REGULARITY_SAMPLES as f64;
            let speed = arc.derivative(s).norm();
            if !(speed > 0.0 && speed.is_finite()) {
                return Err(GeometryError::Irregular { arc: id, s });
            }
        }
        arc.cumulative = arc.build_length_table();
        Ok(arc)
    }

    /// γ(s), checking that `s ∈ [0, 1]`.
    pub fn point(&self, s: f64) -> Result<Vec2, GeometryError> {
        if !(0.0..=1.0).contains(&s) {
            return Err(GeometryError::ParameterOutOfRange { s });
        }
        Ok(self.eval(s))
    }

    /// γ(s) without range checking.
    #[inline]
    pub fn eval(&self, s: f64) -> Vec2 {
        self.curve.jet(s)[0]
    }

    #[inline]
    pub fn derivative(&self, s: f64) -> Vec2 {
        self.curve.jet(s)[1]
    }

    #[inline]
    pub fn second_derivative(&self, s: f64) -> Vec2 {
        self.curve.jet(s)[2]
    }

    #[inline]
    pub fn jet(&self, s: f64) -> [Vec2; 3] {
        self.curve.jet(s)
    }

    /// Unit outward normal (the domain is on the left of the arc).
    pub fn outward_normal(&self, s: f64) -> Vec2 {
        self.derivative(s).perp_cw().normalized()
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().expect("length table")
    }

    fn build_length_table(&self) -> Vec<f64> {
        let (x, w) = gauss_legendre::<f64>(16);
        let mut table = Vec::with_capacity(LENGTH_KNOTS + 1);
        let mut acc = 0.0;
        table.push(0.0);
        let ds = 1.0 / LENGTH_KNOTS as f64;
        for i in 0..LENGTH_KNOTS {
            let a = i as f64 * ds;
            let piece: f64 = x.iter().zip(&w).map(|(x, w)| w * self.derivative(a + ds * x).norm()).sum();
            acc += piece * ds;
            table.push(acc);
        }
        table
    }

    /// Arc length from `s = 0` to `s`.
    pub fn length_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        let (i, t, ds) = self.knot_interval(s);
        self.hermite(i, t, ds)
    }

    fn knot_interval(&self, s: f64) -> (usize, f64, f64) {
        let ds = 1.0 / LENGTH_KNOTS as f64;
        let i = ((s / ds) as usize).min(LENGTH_KNOTS - 1);
        (i, (s - i as f64 * ds) / ds, ds)
    }

    // cubic Hermite interpolant of ℓ(s) on knot interval i; t ∈ [0, 1]
    fn hermite(&self, i: usize, t: f64, ds: f64) -> f64 {
        let (l0, l1) = (self.cumulative[i], self.cumulative[i + 1]);
        let s0 = i as f64 * ds;
        let m0 = self.derivative(s0).norm() * ds;
        let m1 = self.derivative(s0 + ds).norm() * ds;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * l0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * l1 + (t3 - t2) * m1
    }

    /// Parameter `s` at which the arc length from the start equals `length`.
    pub fn param_at_length(&self, length: f64) -> f64 {
        let total = self.length();
        if length <= 0.0 {
            return 0.0;
        }
        if length >= total {
            return 1.0;
        }
        let i = match self.cumulative.binary_search_by(|v| v.partial_cmp(&length).unwrap()) {
            Ok(i) => return i as f64 / LENGTH_KNOTS as f64,
            Err(i) => i - 1,
        };
        let ds = 1.0 / LENGTH_KNOTS as f64;
        let (l0, l1) = (self.cumulative[i], self.cumulative[i + 1]);
        let mut t = (length - l0) / (l1 - l0);
        for _ in 0..8 {
            let f = self.hermite(i, t, ds) - length;
            let speed = self.derivative((i as f64 + t) * ds).norm() * ds;
            let step = f / speed;
            t = (t - step).clamp(0.0, 1.0);
            if step.abs() < 1e-15 {
                break;
            }
        }
        ((i as f64 + t) * ds).clamp(0.0, 1.0)
    }

    /// Locally closest parameter on this arc.
    fn closest(&self, p: Vec2) -> (f64, f64) {
        let n = CLOSEST_SAMPLES - 1;
        let d: Vec<f64> = (0..=n).map(|k| self.eval(k as f64 / n as f64).distance(p)).collect();
        let mut best = (0.0, f64::INFINITY);
        for k in 0..=n {
            let left = if k > 0 { d[k - 1] } else { f64::INFINITY };
            let right = if k < n { d[k + 1] } else { f64::INFINITY };
            if d[k] > left || d[k] > right {
                continue;
            }
            let candidate = self.refine_closest(p, k, n);
            if candidate.1 < best.1 - CLOSURE_TOL {
                best = candidate;
            }
        }
        best
    }

    /// Safeguarded Newton on `|γ(s) - p|²` within the samples adjacent to `k`.
    fn refine_closest(&self, p: Vec2, k: usize, n: usize) -> (f64, f64) {
        let lo = k.saturating_sub(1) as f64 / n as f64;
        let hi = (k + 1).min(n) as f64 / n as f64;
        let mut s = k as f64 / n as f64;
        let dist2 = |s: f64| (self.eval(s) - p).norm_squared();
        let mut current = dist2(s);
        for _ in 0..60 {
            let [g, dg, ddg] = self.jet(s);
            let diff = g - p;
            let f = diff.dot(dg);
            let fp = dg.norm_squared() + diff.dot(ddg);
            let mut step = if fp > 0.0 { -f / fp } else { -f.signum() * (hi - lo) * 0.25 };
            let mut accepted = false;
            for _ in 0..40 {
                let trial = (s + step).clamp(lo, hi);
                let value = dist2(trial);
                if value <= current {
                    step = trial - s;
                    s = trial;
                    current = value;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted || step.abs() < 1e-16 {
                break;
            }
        }
        (s, current.sqrt())
    }
}

/// Junction between arc `arc` (its end) and the next arc (its start).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Corner {
    pub arc: usize,
    pub next: usize,
    pub point: Vec2,
    /// Interior opening angle in radians.
    pub angle: f64,
    /// `false` for smooth junctions (angle π).
    pub is_corner: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosestPoint {
    pub arc: usize,
    pub s: f64,
    pub point: Vec2,
    pub distance: f64,
}

/// Dense boundary polyline bucketed into horizontal strips.
#[derive(Clone, Debug)]
pub(crate) struct StripIndex {
    segments: Vec<(Vec2, Vec2)>,
    y0: f64,
    dy: f64,
    strips: Vec<Vec<u32>>,
    pad: f64,
}

impl StripIndex {
    pub(crate) fn build(segments: Vec<(Vec2, Vec2)>, ymin: f64, ymax: f64, pad: f64) -> Self {
        let count = (segments.len() / 8).clamp(64, 8192);
        let y0 = ymin - 2.0 * pad;
        let dy = (ymax - ymin + 4.0 * pad) / count as f64;
        let mut strips = vec![Vec::new(); count];
        for (k, (a, b)) in segments.iter().enumerate() {
            let lo = ((a.y.min(b.y) - pad - y0) / dy).floor().max(0.0) as usize;
            let hi = (((a.y.max(b.y) + pad - y0) / dy).floor() as usize).min(count - 1);
            for strip in &mut strips[lo..=hi] {
                strip.push(k as u32);
            }
        }
        StripIndex { segments, y0, dy, strips, pad }
    }

    fn strip(&self, y: f64) -> Option<&[u32]> {
        let k = ((y - self.y0) / self.dy).floor();
        if k < 0.0 || k as usize >= self.strips.len() {
            return None;
        }
        Some(&self.strips[k as usize])
    }

    /// Closed straight polygon through `vertices`.
    pub(crate) fn polygon(vertices: &[Vec2]) -> Self {
        let n = vertices.len();
        let segments: Vec<_> = (0..n).map(|i| (vertices[i], vertices[(i + 1) % n])).collect();
        let ymin = vertices.iter().map(|v| v.y).fold(f64::INFINITY, f64::min);
        let ymax = vertices.iter().map(|v| v.y).fold(f64::NEG_INFINITY, f64::max);
        Self::build(segments, ymin, ymax, 0.0)
    }

    /// Even–odd crossing parity and whether the point is within `pad` of a segment.
    pub(crate) fn classify(&self, p: Vec2) -> (bool, bool) {
        let Some(ids) = self.strip(p.y) else {
            return (false, false);
        };
        let mut inside = false;
        let mut near = false;
        for &k in ids {
            let (a, b) = self.segments[k as usize];
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if x > p.x {
                    inside = !inside;
                }
            }
            if !near && segment_distance(p, a, b) <= self.pad {
                near = true;
            }
        }
        (inside, near)
    }
}

fn segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (a + ab * t).distance(p)
}

/// Bounded domain whose boundary is a closed chain of smooth arcs.
#[derive(Clone, Debug)]
pub struct CurvilinearPolygon {
    arcs: Vec<BoundaryArc>,
    corners: Vec<Corner>,
    bbox: (Vec2, Vec2),
    /// Arc-length offset of each arc's start along the whole boundary.
    offsets: Vec<f64>,
    index: StripIndex,
    chord_tol: f64,
}

impl CurvilinearPolygon {
    pub fn new(curves: Vec<Curve>) -> Result<Self, GeometryError> {
        if curves.is_empty() {
            return Err(GeometryError::Empty);
        }
        let arcs =
            curves.into_iter().enumerate().map(|(id, c)| BoundaryArc::new(id, c)).collect::<Result<Vec<_>, _>>()?;
        let n = arcs.len();
        let mut corners = Vec::with_capacity(n);
        for (i, arc) in arcs.iter().enumerate() {
            let next = &arcs[(i + 1) % n];
            let gap = arc.end.distance(next.start);
            if gap > CLOSURE_TOL {
                return Err(GeometryError::Discontinuous { arc: i, next: next.id, gap });
            }
            let t_in = arc.derivative(1.0);
            let t_out = next.derivative(0.0);
            let turn = t_in.cross(t_out).atan2(t_in.dot(t_out));
            let angle = PI - turn;
            let smooth = (angle - PI).abs() <= SMOOTH_JOINT_TOL;
            if !smooth && !(angle > 0.0 && angle < MAX_CORNER_ANGLE) {
                return Err(GeometryError::BadCorner { arc: i, angle });
            }
            corners.push(Corner { arc: i, next: next.id, point: next.start, angle, is_corner: !smooth });
        }

        // bounding box from a moderately dense sample, padded by a sagitta bound
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for arc in &arcs {
            for k in 0..=1024 {
                let p = arc.eval(k as f64 / 1024.0);
                lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
                hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
            }
        }
        let diag = hi.distance(lo);
        let chord_tol = 1e-10 * diag;
        let mut segments = Vec::new();
        for arc in &arcs {
            adaptive_polyline(arc, chord_tol, &mut segments);
        }
        let area: f64 = segments.iter().map(|(a, b)| a.cross(*b)).sum::<f64>() * 0.5;
        if area <= 0.0 {
            return Err(GeometryError::Orientation { area });
        }
        let mut offsets = Vec::with_capacity(n);
        let mut acc = 0.0;
        for arc in &arcs {
            offsets.push(acc);
            acc += arc.length();
        }
        let index = StripIndex::build(segments, lo.y, hi.y, 2.0 * chord_tol);
        Ok(CurvilinearPolygon { arcs, corners, bbox: (lo, hi), offsets, index, chord_tol })
    }

    pub fn arcs(&self) -> &[BoundaryArc] {
        &self.arcs
    }

    pub fn arc(&self, id: usize) -> &BoundaryArc {
        &self.arcs[id]
    }

    /// All arc junctions, including smooth ones (`is_corner == false`).
    pub fn junctions(&self) -> &[Corner] {
        &self.corners
    }

    /// Genuine corners (opening angle < π).
    pub fn corners(&self) -> impl Iterator<Item = &Corner> {
        self.corners.iter().filter(|c| c.is_corner)
    }

    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        self.bbox
    }

    pub fn perimeter(&self) -> f64 {
        self.offsets.last().copied().unwrap_or(0.0) + self.arcs.last().map_or(0.0, |a| a.length())
    }

    /// Area enclosed by the dense boundary polyline.
    pub fn area(&self) -> f64 {
        self.index.segments.iter().map(|(a, b)| a.cross(*b)).sum::<f64>() * 0.5
    }

    /// Area centroid of the dense boundary polyline.
    pub fn centroid(&self) -> Vec2 {
        let mut c = Vec2::zero();
        let mut a2 = 0.0;
        for (p, q) in &self.index.segments {
            let w = p.cross(*q);
            a2 += w;
            c += (*p + *q) * w;
        }
        c * (1.0 / (3.0 * a2))
    }

    /// Largest distance between boundary samples.
    pub fn diameter(&self) -> f64 {
        let pts: Vec<Vec2> = self.arcs.iter().flat_map(|a| (0..128).map(move |k| a.eval(k as f64 / 128.0))).collect();
        let mut best = 0.0f64;
        for (i, p) in pts.iter().enumerate() {
            for q in &pts[i + 1..] {
                best = best.max(p.distance(*q));
            }
        }
        best
    }

    /// Estimate of `max_{x ∈ Ω} dist(x, ∂Ω)` from a grid scan with local refinement.
    pub fn inradius(&self) -> f64 {
        let (lo, hi) = self.bbox;
        let n = 64;
        let mut best = (0.0f64, (lo + hi) * 0.5);
        for i in 0..=n {
            for j in 0..=n {
                let p =
                    Vec2::new(lo.x + (hi.x - lo.x) * i as f64 / n as f64, lo.y + (hi.y - lo.y) * j as f64 / n as f64);
                if self.contains(p) {
                    let d = self.closest_boundary(p).distance;
                    if d > best.0 {
                        best = (d, p);
                    }
                }
            }
        }
        // pattern search around the best grid point
        let mut step = (hi.x - lo.x).max(hi.y - lo.y) / n as f64;
        while step > 1e-6 {
            let mut improved = false;
            for dir in [Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(0.0, -1.0)] {
                let p = best.1 + dir * step;
                if self.contains(p) {
                    let d = self.closest_boundary(p).distance;
                    if d > best.0 {
                        best = (d, p);
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best.0
    }

    /// γ(s) on arc `arc`.
    pub fn arc_point(&self, arc: usize, s: f64) -> Result<Vec2, GeometryError> {
        self.arcs[arc].point(s)
    }

    /// Closest boundary point. Ties within 1e-12 go to the lower arc id.
    pub fn closest_boundary(&self, p: Vec2) -> ClosestPoint {
        let mut best: Option<ClosestPoint> = None;
        for arc in &self.arcs {
            let (s, distance) = arc.closest(p);
            if best.is_none_or(|b| distance < b.distance - CLOSURE_TOL) {
                best = Some(ClosestPoint { arc: arc.id, s, point: arc.eval(s), distance });
            }
        }
        best.expect("polygon has arcs")
    }

    /// Open-set membership. Points within 1e-12 of the boundary are outside.
    pub fn contains(&self, p: Vec2) -> bool {
        let (lo, hi) = self.bbox;
        let pad = self.index.pad;
        if p.x < lo.x - pad || p.x > hi.x + pad || p.y < lo.y - pad || p.y > hi.y + pad {
            return false;
        }
        let (inside, near) = self.index.classify(p);
        if !near {
            return inside;
        }
        // within the polyline tolerance band: decide from the exact curve
        let cp = self.closest_boundary(p);
        if cp.distance <= CLOSURE_TOL {
            return false;
        }
        (p - cp.point).dot(self.normal_at(cp.arc, cp.s)) < 0.0
    }

    /// Signed distance to the boundary, negative inside.
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        let d = self.closest_boundary(p).distance;
        if self.contains(p) {
            -d
        } else {
            d
        }
    }

    /// Outward normal; at arc endpoints that are corners, the normalized mean of both normals.
    pub fn normal_at(&self, arc: usize, s: f64) -> Vec2 {
        let n = self.arcs.len();
        let a = &self.arcs[arc];
        let own = a.outward_normal(s);
        if s <= 0.0 {
            let prev = &self.corners[(arc + n - 1) % n];
            if prev.is_corner {
                return (own + self.arcs[prev.arc].outward_normal(1.0)).normalized();
            }
        } else if s >= 1.0 {
            let c = &self.corners[arc];
            if c.is_corner {
                return (own + self.arcs[c.next].outward_normal(0.0)).normalized();
            }
        }
        own
    }

    /// Arc-length coordinate along the whole boundary.
    pub fn boundary_coordinate(&self, arc: usize, s: f64) -> f64 {
        self.offsets[arc] + self.arcs[arc].length_at(s)
    }

    /// Inverse of [`Self::boundary_coordinate`], wrapping modulo the perimeter.
    pub fn locate_coordinate(&self, sigma: f64) -> (usize, f64) {
        let total = self.perimeter();
        let sigma = sigma.rem_euclid(total);
        let arc = match self.offsets.binary_search_by(|v| v.partial_cmp(&sigma).unwrap()) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        (arc, self.arcs[arc].param_at_length(sigma - self.offsets[arc]))
    }

    /// Maximum deviation between the containment polyline and the curve.
    pub fn polyline_tolerance(&self) -> f64 {
        self.chord_tol
    }
}

fn adaptive_polyline(arc: &BoundaryArc, tol: f64, out: &mut Vec<(Vec2, Vec2)>) {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        arc: &BoundaryArc,
        s0: f64,
        p0: Vec2,
        s1: f64,
        p1: Vec2,
        tol: f64,
        depth: u32,
        out: &mut Vec<(Vec2, Vec2)>,
    ) {
        let sm = 0.5 * (s0 + s1);
        let pm = arc.eval(sm);
        let dev = segment_distance(pm, p0, p1);
        if depth >= 40 || (depth >= 4 && dev <= tol) {
            out.push((p0, p1));
            return;
        }
        recurse(arc, s0, p0, sm, pm, tol, depth + 1, out);
        recurse(arc, sm, pm, s1, p1, tol, depth + 1, out);
    }
    let pieces = 16;
    for k in 0..pieces {
        let s0 = k as f64 / pieces as f64;
        let s1 = (k + 1) as f64 / pieces as f64;
        recurse(arc, s0, arc.eval(s0), s1, arc.eval(s1), tol, 0, out);
    }
}
