//! Stock domains, manufactured solutions and the text format for custom domains.
//!
//! Custom domain files list one arc per line, counterclockwise:
//!
//! ```text
//! # comment
//! name my-domain
//! circle <cx> <cy> <radius> <theta0> <theta1>
//! polar  <cx> <cy> <theta0> <theta1> <a0> [<a1> <b1> [<a2> <b2> ...]]
//! ```
//!
//! A `polar` arc is `c + ρ(θ)(cos θ, sin θ)` with
//! `ρ(θ) = a0 + Σ_k a_k cos kθ + b_k sin kθ`; angles are in radians.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::geometry::{Curve, CurvilinearPolygon, GeometryError};
use crate::Vec2;

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("unknown domain '{0}' (expected disk, lens or flower)")]
    Unknown(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read domain file: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Closed-form `u` with `u = 0` on the boundary and `f = -Δu`.
#[derive(Clone, Copy, Debug)]
pub struct ManufacturedSolution {
    pub u: fn(Vec2) -> f64,
    pub grad: fn(Vec2) -> Vec2,
    pub f: fn(Vec2) -> f64,
}

impl ManufacturedSolution {
    /// `u = (1 - x² - y²) eˣ` on the unit disk.
    pub fn disk() -> Self {
        ManufacturedSolution {
            u: |p| (1.0 - p.norm_squared()) * p.x.exp(),
            grad: |p| {
                let e = p.x.exp();
                Vec2::new(e * (1.0 - p.norm_squared() - 2.0 * p.x), -2.0 * p.y * e)
            },
            f: |p| p.x.exp() * (3.0 + 4.0 * p.x + p.norm_squared()),
        }
    }

    /// `u = 1 - x² - y²`, `f = 4` on the unit disk.
    pub fn disk_quadratic() -> Self {
        ManufacturedSolution { u: |p| 1.0 - p.norm_squared(), grad: |p| p * -2.0, f: |_| 4.0 }
    }

    /// Product of the two disk level sets bounding the lens.
    pub fn lens() -> Self {
        const C1: Vec2 = Vec2::new(LENS_OFFSET, 0.0);
        const C2: Vec2 = Vec2::new(-LENS_OFFSET, 0.0);
        ManufacturedSolution {
            u: |p| (1.0 - (p - C1).norm_squared()) * (1.0 - (p - C2).norm_squared()),
            grad: |p| {
                let a = 1.0 - (p - C1).norm_squared();
                let b = 1.0 - (p - C2).norm_squared();
                (p - C1) * (-2.0 * b) + (p - C2) * (-2.0 * a)
            },
            f: |p| {
                let a = 1.0 - (p - C1).norm_squared();
                let b = 1.0 - (p - C2).norm_squared();
                4.0 * (a + b) - 8.0 * (p - C1).dot(p - C2)
            },
        }
    }
}

const LENS_OFFSET: f64 = 0.4;

/// A named domain with its test data.
#[derive(Clone, Debug)]
pub struct Domain {
    pub name: String,
    pub polygon: Arc<CurvilinearPolygon>,
    pub exact: Option<ManufacturedSolution>,
    /// Right-hand side used when no closed-form solution exists.
    pub load: fn(Vec2) -> f64,
}

impl Domain {
    pub fn by_name(name: &str) -> Result<Self, DomainError> {
        match name {
            "disk" => Ok(Self::disk()),
            "lens" => Ok(Self::lens()),
            "flower" => Ok(Self::flower()),
            other => Err(DomainError::Unknown(other.to_string())),
        }
    }

    /// Unit disk.
    pub fn disk() -> Self {
        let polygon = CurvilinearPolygon::new(vec![Curve::CircleArc {
            center: Vec2::zero(),
            radius: 1.0,
            theta0: 0.0,
            theta1: 2.0 * PI,
        }])
        .expect("unit circle is a valid domain");
        let exact = ManufacturedSolution::disk();
        Domain { name: "disk".into(), polygon: Arc::new(polygon), exact: Some(exact), load: exact.f }
    }

    /// Intersection of the unit disks centred at `(±0.4, 0)`; two corners on the y-axis.
    pub fn lens() -> Self {
        let a = LENS_OFFSET.acos();
        let polygon = CurvilinearPolygon::new(vec![
            // left boundary: circle centred at (+0.4, 0), from the top corner to the bottom one
            Curve::CircleArc { center: Vec2::new(LENS_OFFSET, 0.0), radius: 1.0, theta0: PI - a, theta1: PI + a },
            // right boundary: circle centred at (-0.4, 0), from the bottom corner to the top one
            Curve::CircleArc { center: Vec2::new(-LENS_OFFSET, 0.0), radius: 1.0, theta0: -a, theta1: a },
        ])
        .expect("lens is a valid domain");
        let exact = ManufacturedSolution::lens();
        Domain { name: "lens".into(), polygon: Arc::new(polygon), exact: Some(exact), load: exact.f }
    }

    /// Nonconvex smooth domain `r < 1 + 0.2 cos 5θ`.
    pub fn flower() -> Self {
        let mut coeffs = vec![(0.0, 0.0); 6];
        coeffs[0] = (1.0, 0.0);
        coeffs[5] = (0.2, 0.0);
        let polygon = CurvilinearPolygon::new(vec![Curve::PolarGraph {
            center: Vec2::zero(),
            theta0: 0.0,
            theta1: 2.0 * PI,
            coeffs,
        }])
        .expect("flower is a valid domain");
        Domain { name: "flower".into(), polygon: Arc::new(polygon), exact: None, load: |_| 4.0 }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, DomainError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let fallback =
            path.as_ref().file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "custom".into());
        Self::parse(&text, &fallback)
    }

    pub fn parse(text: &str, default_name: &str) -> Result<Self, DomainError> {
        let mut name = default_name.to_string();
        let mut curves = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut tokens = content.split_whitespace();
            let keyword = tokens.next().unwrap_or_default();
            let rest: Vec<&str> = tokens.collect();
            let numbers = || -> Result<Vec<f64>, DomainError> {
                rest.iter()
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| DomainError::Parse { line, message: format!("'{t}' is not a number") })
                    })
                    .collect()
            };
            match keyword {
                "name" => {
                    if rest.len() != 1 {
                        return Err(DomainError::Parse { line, message: "name takes one word".into() });
                    }
                    name = rest[0].to_string();
                }
                "circle" => {
                    let v = numbers()?;
                    if v.len() != 5 {
                        return Err(DomainError::Parse {
                            line,
                            message: format!("circle needs 5 numbers, found {}", v.len()),
                        });
                    }
                    curves.push(Curve::CircleArc {
                        center: Vec2::new(v[0], v[1]),
                        radius: v[2],
                        theta0: v[3],
                        theta1: v[4],
                    });
                }
                "polar" => {
                    let v = numbers()?;
                    if v.len() < 5 || (v.len() - 5) % 2 != 0 {
                        return Err(DomainError::Parse {
                            line,
                            message: "polar needs cx cy theta0 theta1 a0 followed by (a_k, b_k) pairs".into(),
                        });
                    }
                    let mut coeffs = vec![(v[4], 0.0)];
                    coeffs.extend(v[5..].chunks(2).map(|c| (c[0], c[1])));
                    curves.push(Curve::PolarGraph {
                        center: Vec2::new(v[0], v[1]),
                        theta0: v[2],
                        theta1: v[3],
                        coeffs,
                    });
                }
                other => {
                    return Err(DomainError::Parse { line, message: format!("unknown arc kind '{other}'") });
                }
            }
        }
        if curves.is_empty() {
            return Err(DomainError::Parse { line: text.lines().count().max(1), message: "no arcs".into() });
        }
        let polygon = CurvilinearPolygon::new(curves)?;
        Ok(Domain { name, polygon: Arc::new(polygon), exact: None, load: |_| 4.0 })
    }
}

/// Result of checking a manufactured pair against its domain.
#[derive(Clone, Copy, Debug)]
pub struct ManufacturedCheck {
    pub max_boundary_value: f64,
    pub max_laplacian_rel_error: f64,
}

impl ManufacturedCheck {
    pub fn passes(&self) -> bool {
        self.max_boundary_value <= 1e-10 && self.max_laplacian_rel_error <= 1e-4
    }
}

/// Samples `|u|` at 512 boundary points and compares a central-difference
/// Laplacian with `-f` at 64 interior points.
pub fn check_manufactured(polygon: &CurvilinearPolygon, m: &ManufacturedSolution) -> ManufacturedCheck {
    let total = polygon.perimeter();
    let mut max_boundary_value = 0.0f64;
    for k in 0..512 {
        let (arc, s) = polygon.locate_coordinate(total * k as f64 / 512.0);
        let p = polygon.arc(arc).eval(s);
        max_boundary_value = max_boundary_value.max((m.u)(p).abs());
    }
    let (lo, hi) = polygon.bounding_box();
    let step = 1e-3;
    let mut interior = Vec::new();
    let n = 24;
    'scan: for i in 1..n {
        for j in 1..n {
            let p = Vec2::new(
                lo.x + (hi.x - lo.x) * (i as f64 + 0.37) / n as f64,
                lo.y + (hi.y - lo.y) * (j as f64 + 0.61) / n as f64,
            );
            if polygon.contains(p) && polygon.closest_boundary(p).distance > 2.0 * step {
                interior.push(p);
                if interior.len() == 64 {
                    break 'scan;
                }
            }
        }
    }
    let mut max_laplacian_rel_error = 0.0f64;
    for p in interior {
        let u = m.u;
        let dx = Vec2::new(step, 0.0);
        let dy = Vec2::new(0.0, step);
        let lap = (u(p + dx) + u(p - dx) + u(p + dy) + u(p - dy) - 4.0 * u(p)) / (step * step);
        let f = (m.f)(p);
        let rel = (lap + f).abs() / f.abs().max(1e-12);
        max_laplacian_rel_error = max_laplacian_rel_error.max(rel);
    }
    ManufacturedCheck { max_boundary_value, max_laplacian_rel_error }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stock_manufactured_pairs_are_consistent() {
        for d in [Domain::disk(), Domain::lens()] {
            let check = check_manufactured(&d.polygon, d.exact.as_ref().unwrap());
            assert!(check.passes(), "{}: {check:?}", d.name);
        }
        let quad = check_manufactured(&Domain::disk().polygon, &ManufacturedSolution::disk_quadratic());
        assert!(quad.passes());
    }

    #[test]
    fn manufactured_gradients_match_differences() {
        for m in [ManufacturedSolution::disk(), ManufacturedSolution::lens(), ManufacturedSolution::disk_quadratic()] {
            let p = Vec2::new(0.13, -0.27);
            let h = 1e-6;
            let gx = ((m.u)(p + Vec2::new(h, 0.0)) - (m.u)(p - Vec2::new(h, 0.0))) / (2.0 * h);
            let gy = ((m.u)(p + Vec2::new(0.0, h)) - (m.u)(p - Vec2::new(0.0, h))) / (2.0 * h);
            let g = (m.grad)(p);
            assert!((g.x - gx).abs() < 1e-8 && (g.y - gy).abs() < 1e-8);
        }
    }

    #[test]
    fn lens_has_two_corners_below_pi() {
        let lens = Domain::lens();
        let corners: Vec<_> = lens.polygon.corners().copied().collect();
        assert_eq!(corners.len(), 2);
        let yc = (1.0 - LENS_OFFSET * LENS_OFFSET).sqrt();
        for c in &corners {
            assert!(c.angle > 0.0 && c.angle < PI);
            assert!(c.point.x.abs() < 1e-12 && (c.point.y.abs() - yc).abs() < 1e-12);
        }
    }

    #[test]
    fn lens_upper_arc_midpoint_is_equidistant_from_corners() {
        let lens = Domain::lens();
        for arc in lens.polygon.arcs() {
            let mid = lens.polygon.arc_point(arc.id, 0.5).unwrap();
            let [a, b] = [arc.start, arc.end];
            assert!((mid.distance(a) - mid.distance(b)).abs() < 1e-12);
        }
    }

    #[test]
    fn flower_contains_point_inside_petal() {
        let flower = Domain::flower();
        assert!(flower.polygon.contains(Vec2::new(1.1, 0.0)));
        assert!(!flower.polygon.contains(Vec2::new(1.25, 0.0)));
        // valley at θ = π/5 has radius 0.8
        let valley = Vec2::new((PI / 5.0).cos(), (PI / 5.0).sin());
        assert!(flower.polygon.contains(valley * 0.79));
        assert!(!flower.polygon.contains(valley * 0.81));
    }

    #[test]
    fn parse_custom_domain() {
        let text = "# half-moon free test\nname blob\npolar 0 0 0 6.283185307179586 1.0 0.1 0.0\n";
        let d = Domain::parse(text, "x").unwrap();
        assert_eq!(d.name, "blob");
        assert!(d.polygon.contains(Vec2::zero()));

        let text = "circle 0 0 1 0 6.283185307179586\n";
        let d = Domain::parse(text, "unit").unwrap();
        assert!((d.polygon.area() - PI).abs() < 1e-8);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = Domain::parse("circle 0 0 1\n", "x").unwrap_err();
        assert!(matches!(err, DomainError::Parse { line: 1, .. }));
        let err = Domain::parse("\n\nsquare 1 2\n", "x").unwrap_err();
        assert!(matches!(err, DomainError::Parse { line: 3, .. }));
        let err = Domain::parse("polar 0 0 0 1 1.0 2.0\n", "x").unwrap_err();
        assert!(matches!(err, DomainError::Parse { line: 1, .. }));
        assert!(matches!(Domain::by_name("square"), Err(DomainError::Unknown(_))));
    }
}
