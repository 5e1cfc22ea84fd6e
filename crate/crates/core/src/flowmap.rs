//! Outward boundary vector fields, their flows and the sandwich check
//! `Ω(λt) ⊆ Ψ_t(Ω) ⊆ Ω(t/λ)`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::CurvilinearPolygon;
use crate::Vec2;

/// Opening angles at or above this make the outward condition unattainable.
const MAX_OPENING: f64 = PI - 1e-6;
/// Boundary samples per collar width.
const SAMPLES_PER_WIDTH: f64 = 16.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("corner at ({x}, {y}) has opening {angle} ≥ π")]
    Opening { x: f64, y: f64, angle: f64 },
    #[error("need 0 < w₀ < w, got w = {w}, w₀ = {w0}")]
    Widths { w: f64, w0: f64 },
    #[error("collar width {w} exceeds a quarter of the corner spacing {spacing}")]
    Reach { w: f64, spacing: f64 },
}

/// Parameters of the flow construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Largest admissible time.
    pub delta: f64,
    /// Collar width as a fraction of the inradius.
    pub collar: f64,
    /// Inner cutoff as a fraction of the inradius.
    pub inner: f64,
    pub steps: usize,
    pub samples: usize,
    pub fd_step: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { delta: 0.05, collar: 0.2, inner: 0.1, steps: 64, samples: 512, fd_step: 1e-6 }
    }
}

/// Quintic smoothstep, `C²` on ℝ.
fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

/// Boundary sample carrying its outward normal.
#[derive(Clone, Copy, Debug)]
struct Sample {
    point: Vec2,
    normal: Vec2,
}

/// `X = η(d) V`: a cutoff of the signed distance times a mollified outward normal.
///
/// `V(x)` is the normalized kernel average of the outward normals at boundary
/// points within `2w` of `x`, weighted by `(1 - r²/(2w)²)⁴`. Boundary samples
/// are equally spaced in arc length, so the average is smooth in `x`.
#[derive(Clone, Debug)]
pub struct OutwardField {
    pub polygon: Arc<CurvilinearPolygon>,
    /// Collar width.
    pub w: f64,
    /// Inner cutoff.
    pub w0: f64,
    samples: Vec<Sample>,
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

/// Field with widths taken from `config` relative to the inradius.
pub fn build_field_with(polygon: Arc<CurvilinearPolygon>, config: &FlowConfig) -> Result<OutwardField, FlowError> {
    let r = polygon.inradius();
    build_field(polygon, config.collar * r, config.inner * r)
}

pub fn build_field(polygon: Arc<CurvilinearPolygon>, w: f64, w0: f64) -> Result<OutwardField, FlowError> {
    if !(w0 > 0.0 && w0 < w) {
        return Err(FlowError::Widths { w, w0 });
    }
    let corners: Vec<_> = polygon.corners().copied().collect();
    if let Some(c) = corners.iter().find(|c| c.angle >= MAX_OPENING) {
        return Err(FlowError::Opening { x: c.point.x, y: c.point.y, angle: c.angle });
    }
    let mut spacing = f64::INFINITY;
    for (i, a) in corners.iter().enumerate() {
        for b in &corners[i + 1..] {
            spacing = spacing.min(a.point.distance(b.point));
        }
    }
    if w > 0.25 * spacing {
        return Err(FlowError::Reach { w, spacing });
    }
    let n = ((polygon.perimeter() / w) * SAMPLES_PER_WIDTH).ceil() as usize;
    let samples: Vec<Sample> = boundary_samples(&polygon, n)
        .into_iter()
        .map(|(arc, s)| Sample { point: polygon.arc(arc).eval(s), normal: polygon.arc(arc).outward_normal(s) })
        .collect();
    let cell = 2.0 * w;
    let (lo, hi) = polygon.bounding_box();
    let origin = lo - Vec2::new(2.0 * cell, 2.0 * cell);
    let nx = ((hi.x - lo.x) / cell).ceil() as usize + 4;
    let ny = ((hi.y - lo.y) / cell).ceil() as usize + 4;
    let mut buckets = vec![Vec::new(); nx * ny];
    for (k, sample) in samples.iter().enumerate() {
        let i = ((sample.point.x - origin.x) / cell) as usize;
        let j = ((sample.point.y - origin.y) / cell) as usize;
        buckets[j * nx + i].push(k as u32);
    }
    Ok(OutwardField { polygon, w, w0, samples, origin, cell, nx, ny, buckets })
}

impl OutwardField {
    /// Cutoff: 0 for `d ≤ -w₀` or `d ≥ w`, 1 on `[-w₀/2, w/2]`.
    pub fn eta(&self, d: f64) -> f64 {
        if d < 0.0 {
            smoothstep((d + self.w0) / (0.5 * self.w0))
        } else {
            1.0 - smoothstep((d - 0.5 * self.w) / (0.5 * self.w))
        }
    }

    /// Unit mollified outward normal at `x`; zero when no boundary point is within `2w`.
    pub fn direction(&self, x: Vec2) -> Vec2 {
        let fx = (x.x - self.origin.x) / self.cell;
        let fy = (x.y - self.origin.y) / self.cell;
        if fx < 1.0 || fy < 1.0 || fx >= (self.nx - 1) as f64 || fy >= (self.ny - 1) as f64 {
            return Vec2::zero();
        }
        let (ci, cj) = (fx as usize, fy as usize);
        let rho2 = self.cell * self.cell;
        let mut sum = Vec2::zero();
        for j in cj - 1..=cj + 1 {
            for i in ci - 1..=ci + 1 {
                for &k in &self.buckets[j * self.nx + i] {
                    let s = &self.samples[k as usize];
                    let q = 1.0 - (x - s.point).norm_squared() / rho2;
                    if q > 0.0 {
                        sum += s.normal * (q * q * q * q);
                    }
                }
            }
        }
        let norm = sum.norm();
        if norm == 0.0 {
            Vec2::zero()
        } else {
            sum * (1.0 / norm)
        }
    }

    pub fn eval(&self, x: Vec2) -> Vec2 {
        let cp = self.polygon.closest_boundary(x);
        if cp.distance >= self.w {
            return Vec2::zero();
        }
        let d = if self.polygon.contains(x) { -cp.distance } else { cp.distance };
        let eta = self.eta(d);
        if eta == 0.0 {
            return Vec2::zero();
        }
        self.direction(x) * eta
    }

    /// `min ⟨X(y), N_y⟩` over `n` boundary points equally spaced in arc length.
    pub fn normal_margin(&self, n: usize) -> f64 {
        boundary_samples(&self.polygon, n)
            .iter()
            .map(|&(arc, s)| {
                let y = self.polygon.arc(arc).eval(s);
                self.eval(y).dot(self.polygon.arc(arc).outward_normal(s))
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// `(arc, s)` at `n` points equally spaced in arc length; corner points excluded.
pub fn boundary_samples(polygon: &CurvilinearPolygon, n: usize) -> Vec<(usize, f64)> {
    let total = polygon.perimeter();
    (0..n).map(|k| polygon.locate_coordinate((k as f64 + 0.5) * total / n as f64)).collect()
}

/// `Ψ_t(x₀)` by classical RK4 with `steps` uniform steps.
pub fn flow(field: &OutwardField, t: f64, x0: Vec2, steps: usize) -> Vec2 {
    if t == 0.0 || steps == 0 {
        return x0;
    }
    let dt = t / steps as f64;
    let mut x = x0;
    for _ in 0..steps {
        let k1 = field.eval(x);
        let k2 = field.eval(x + k1 * (0.5 * dt));
        let k3 = field.eval(x + k2 * (0.5 * dt));
        let k4 = field.eval(x + k3 * dt);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    x
}

/// Central-difference `det ∇Ψ_t(x)`.
pub fn flow_jacobian_det(field: &OutwardField, t: f64, x: Vec2, steps: usize, step: f64) -> f64 {
    let dx = Vec2::new(step, 0.0);
    let dy = Vec2::new(0.0, step);
    let cx = (flow(field, t, x + dx, steps) - flow(field, t, x - dx, steps)) * (0.5 / step);
    let cy = (flow(field, t, x + dy, steps) - flow(field, t, x - dy, steps)) * (0.5 / step);
    cx.cross(cy)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichRow {
    pub t: f64,
    pub min_dist: f64,
    pub max_dist: f64,
    /// `min min(d/t, t/d)` over the samples; absent for `t = 0`.
    pub lambda: Option<f64>,
    pub min_det: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub rows: Vec<SandwichRow>,
    pub lambda: f64,
    pub min_det: f64,
    /// `min ⟨X, N⟩` on the boundary.
    pub normal_margin: f64,
    /// Whether the escape distance grows with `t` at every sample.
    pub monotone: bool,
}

/// Flows `samples` boundary points for every `t`, measures their distance to `Ω`
/// and the Jacobian determinant of `Ψ_t` at each of them.
pub fn verify_sandwich(field: &OutwardField, ts: &[f64], config: &FlowConfig) -> SandwichReport {
    let polygon = &field.polygon;
    let samples = boundary_samples(polygon, config.samples);
    let points: Vec<Vec2> = samples.iter().map(|&(arc, s)| polygon.arc(arc).eval(s)).collect();
    let mut rows = Vec::with_capacity(ts.len());
    let mut previous: Option<Vec<f64>> = None;
    let mut monotone = true;
    let mut order: Vec<usize> = (0..ts.len()).collect();
    order.sort_by(|&a, &b| ts[a].total_cmp(&ts[b]));
    let mut by_index: Vec<Option<SandwichRow>> = vec![None; ts.len()];
    for &k in &order {
        let t = ts[k];
        let dists: Vec<f64> = points
            .par_iter()
            .map(|&y| {
                let z = flow(field, t, y, config.steps);
                polygon.signed_distance(z).max(0.0)
            })
            .collect();
        if let Some(prev) = &previous {
            monotone &= dists.iter().zip(prev).all(|(d, p)| *d >= p - 1e-12);
        }
        let min_dist = dists.iter().copied().fold(f64::INFINITY, f64::min);
        let max_dist = dists.iter().copied().fold(0.0, f64::max);
        let lambda = (t > 0.0).then(|| {
            dists.iter().map(|&d| if d <= 0.0 { 0.0 } else { (d / t).min(t / d) }).fold(f64::INFINITY, f64::min)
        });
        let min_det = points
            .par_iter()
            .map(|&y| flow_jacobian_det(field, t, y, config.steps, config.fd_step))
            .reduce(|| f64::INFINITY, f64::min);
        by_index[k] = Some(SandwichRow { t, min_dist, max_dist, lambda, min_det });
        previous = Some(dists);
    }
    rows.extend(by_index.into_iter().flatten());
    let lambda = rows.iter().filter_map(|r| r.lambda).fold(f64::INFINITY, f64::min);
    let min_det = rows.iter().map(|r| r.min_det).fold(f64::INFINITY, f64::min);
    SandwichReport { rows, lambda, min_det, normal_margin: field.normal_margin(config.samples), monotone }
}

/// `max |Ψ_{t/2}(Ψ_{t/2}(x)) − Ψ_t(x)|` over `n` seeded points of the collar.
pub fn semigroup_defect(field: &OutwardField, t: f64, n: usize, steps: usize, seed: u64) -> f64 {
    let polygon = &field.polygon;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = polygon.perimeter();
    (0..n)
        .map(|_| {
            let (arc, s) = polygon.locate_coordinate(rng.random::<f64>() * total);
            let offset = (rng.random::<f64>() * 2.0 - 1.0) * field.w;
            let x = polygon.arc(arc).eval(s) + polygon.arc(arc).outward_normal(s) * offset;
            let half = flow(field, 0.5 * t, flow(field, 0.5 * t, x, steps), steps);
            (half - flow(field, t, x, steps)).norm()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::Domain;

    fn disk_field() -> OutwardField {
        build_field_with(Domain::disk().polygon, &FlowConfig::default()).unwrap()
    }

    #[test]
    fn cutoff_profile() {
        let f = disk_field();
        assert_eq!(f.eta(0.0), 1.0);
        assert_eq!(f.eta(-0.5 * f.w0), 1.0);
        assert_eq!(f.eta(0.5 * f.w), 1.0);
        assert_eq!(f.eta(-f.w0), 0.0);
        assert_eq!(f.eta(f.w), 0.0);
        assert!(f.eta(0.75 * f.w) > 0.0 && f.eta(0.75 * f.w) < 1.0);
    }

    #[test]
    fn radial_on_disk() {
        let f = disk_field();
        let x = f.eval(Vec2::new(1.0, 0.0));
        assert!((x - Vec2::new(1.0, 0.0)).norm() < 1e-12);
        assert_eq!(f.eval(Vec2::zero()), Vec2::zero());
    }

    #[test]
    fn unit_speed_radial_flow() {
        let f = disk_field();
        let z = flow(&f, 0.05, Vec2::new(1.0, 0.0), 64);
        assert!((z - Vec2::new(1.05, 0.0)).norm() < 1e-6, "{z:?}");
        assert_eq!(flow(&f, 0.0, Vec2::new(0.3, 0.2), 64), Vec2::new(0.3, 0.2));
        assert_eq!(flow(&f, 0.05, Vec2::new(0.1, 0.2), 64), Vec2::new(0.1, 0.2));
    }

    #[test]
    fn lens_corners_point_outward() {
        let polygon = Domain::lens().polygon;
        let f = build_field_with(polygon.clone(), &FlowConfig::default()).unwrap();
        for c in polygon.corners() {
            let v = f.direction(c.point);
            assert!(v.dot(polygon.arc(c.arc).outward_normal(1.0)) > 0.0);
            assert!(v.dot(polygon.arc(c.next).outward_normal(0.0)) > 0.0);
        }
        assert!(f.normal_margin(512) >= 0.2);
    }

    #[test]
    fn rejects_bad_widths() {
        let polygon = Domain::disk().polygon;
        assert!(matches!(build_field(polygon.clone(), 0.1, 0.2), Err(FlowError::Widths { .. })));
        assert!(matches!(build_field(Domain::lens().polygon, 0.9, 0.1), Err(FlowError::Reach { .. })));
    }
}
