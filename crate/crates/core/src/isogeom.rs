//! Curved element geometry: exact blended maps, their degree-r interpolants,
//! the piecewise map `Φ_h = F̌ ∘ F_K⁻¹` and the coefficient matrix `A_h`.
//!
//! Every boundary element is stored with its curved edge as local edge 0
//! (vertex 0 → vertex 1). With `λ₁ = 1 - ξ - η`, `λ₂ = ξ`, `λ₃ = η` the
//! curved edge is `λ₃ = 0`, and `g(t) = γ(s_a + (s_b - s_a) t) - chord(t)`
//! denotes the arc's deviation from its chord.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundaryArc, CurvilinearPolygon};
use crate::meshgen::Mesh;
use crate::reference::{barycentric, default_quadrature_degree, sample_grid};
use crate::{Mat2, ReferenceElement, Vec2};

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("reference point ({0}, {1}) lies outside the reference triangle")]
    OutsideReference(f64, f64),
    #[error("element {element}: Newton inversion did not converge at ({x}, {y})")]
    Inversion { element: usize, x: f64, y: f64 },
    #[error("element {element}: point ({x}, {y}) lies outside the element")]
    OutsideElement { element: usize, x: f64, y: f64 },
    #[error("element {element}: non-positive Jacobian determinant {det:e}")]
    Degenerate { element: usize, det: f64 },
    #[error("element {element}: elevated map folds (det {det:e} at ({xi}, {eta}))")]
    Elevation { element: usize, det: f64, xi: f64, eta: f64 },
}

/// Transfinite blend used for the exact element map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlendKind {
    /// `½[λ₁/(1-λ₂) g(λ₂) + λ₂/(1-λ₁) g(1-λ₁)]`; smooth up to all vertices.
    #[default]
    Projected,
    /// `(λ₁+λ₂) g(λ₂/(λ₁+λ₂))`; singular second derivatives at the opposite vertex.
    Radial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ElementKind {
    Interior,
    Boundary,
}

#[derive(Clone, Debug)]
struct CurvedEdge {
    arc: BoundaryArc,
    s_a: f64,
    s_b: f64,
    start: Vec2,
    end: Vec2,
}

impl CurvedEdge {
    fn deviation(&self, t: f64) -> Vec2 {
        let s = self.s_a + (self.s_b - self.s_a) * t;
        self.arc.eval(s) - self.start.lerp(self.end, t)
    }

    fn deviation_derivative(&self, t: f64) -> Vec2 {
        let ds = self.s_b - self.s_a;
        let s = self.s_a + ds * t;
        self.arc.derivative(s) * ds - (self.end - self.start)
    }
}

/// Geometry of one element: the straight triangle, the optional curved edge
/// and the isoparametric node images `g_i = F̌(â_i)`.
#[derive(Clone, Debug)]
pub struct ElementGeometry {
    pub id: usize,
    pub kind: ElementKind,
    /// Global vertex ids, rotated so a curved edge runs from vertex 0 to vertex 1.
    pub vertices: [usize; 3],
    pub corners: [Vec2; 3],
    /// Columns `v₁ - v₀`, `v₂ - v₀`.
    affine: Mat2,
    curved: Option<CurvedEdge>,
    nodes: Vec<Vec2>,
    reference: Arc<ReferenceElement>,
    blend: BlendKind,
}

fn check_reference(xi: [f64; 2]) -> Result<(), GeomError> {
    if barycentric(xi).iter().any(|&l| l < -1e-12) {
        return Err(GeomError::OutsideReference(xi[0], xi[1]));
    }
    Ok(())
}

impl ElementGeometry {
    fn new(
        id: usize,
        vertices: [usize; 3],
        corners: [Vec2; 3],
        curved: Option<(BoundaryArc, f64, f64)>,
        reference: Arc<ReferenceElement>,
        blend: BlendKind,
    ) -> Self {
        let affine = Mat2::from_cols(corners[1] - corners[0], corners[2] - corners[0]);
        let curved = curved.map(|(arc, s_a, s_b)| {
            let (start, end) = (arc.eval(s_a), arc.eval(s_b));
            CurvedEdge { arc, s_a, s_b, start, end }
        });
        let kind = if curved.is_some() { ElementKind::Boundary } else { ElementKind::Interior };
        let mut element =
            ElementGeometry { id, kind, vertices, corners, affine, curved, nodes: Vec::new(), reference, blend };
        element.nodes = element.reference.nodes().iter().map(|&n| element.exact_unchecked(n)).collect();
        element
    }

    pub fn reference(&self) -> &ReferenceElement {
        &self.reference
    }

    pub fn blend(&self) -> BlendKind {
        self.blend
    }

    pub fn is_boundary(&self) -> bool {
        self.kind == ElementKind::Boundary
    }

    /// Arc id and parameter interval of the curved edge.
    pub fn curved_edge(&self) -> Option<(usize, f64, f64)> {
        self.curved.as_ref().map(|c| (c.arc.id, c.s_a, c.s_b))
    }

    /// Isoparametric node coordinates `g_i`.
    pub fn nodes(&self) -> &[Vec2] {
        &self.nodes
    }

    pub fn affine_map(&self, xi: [f64; 2]) -> Vec2 {
        self.corners[0] + self.affine.mul_vec(Vec2::new(xi[0], xi[1]))
    }

    pub fn affine_jacobian(&self) -> Mat2 {
        self.affine
    }

    fn exact_unchecked(&self, xi: [f64; 2]) -> Vec2 {
        let base = self.affine_map(xi);
        match &self.curved {
            None => base,
            Some(edge) => base + self.correction(edge, xi).0,
        }
    }

    /// Blend correction and its reference Jacobian.
    fn correction(&self, edge: &CurvedEdge, xi: [f64; 2]) -> (Vec2, Mat2) {
        let [x, y] = xi;
        match self.blend {
            BlendKind::Radial => {
                let s = 1.0 - y;
                if s < 1e-14 {
                    return (Vec2::zero(), Mat2::from_cols(edge.deviation_derivative(0.0), Vec2::zero()));
                }
                let theta = x / s;
                let g = edge.deviation(theta);
                let dg = edge.deviation_derivative(theta);
                (g * s, Mat2::from_cols(dg, dg * theta - g))
            }
            BlendKind::Projected => {
                let l1 = 1.0 - x - y;
                // λ₁ q₁(ξ) with q₁(t) = g(t) / (1 - t)
                let (va, da) = {
                    let dg = edge.deviation_derivative(x);
                    let d = 1.0 - x;
                    if d < 1e-12 {
                        (Vec2::zero(), Mat2::from_cols(dg, dg))
                    } else {
                        let q = edge.deviation(x) * (1.0 / d);
                        let w = l1 / d;
                        (q * l1, Mat2::from_cols((dg + q) * w - q, -q))
                    }
                };
                // λ₂ q₂(1 - λ₁) with q₂(t) = g(t) / t
                let (vb, db) = {
                    let t = x + y;
                    let dg = edge.deviation_derivative(t);
                    if t < 1e-12 {
                        (Vec2::zero(), Mat2::from_cols(dg, Vec2::zero()))
                    } else {
                        let q = edge.deviation(t) * (1.0 / t);
                        let (wx, wy) = (x / t, y / t);
                        (q * x, Mat2::from_cols(q * wy + dg * wx, (dg - q) * wx))
                    }
                };
                ((va + vb) * 0.5, (da + db).scale(0.5))
            }
        }
    }

    /// Exact map `F̌(x̂)`.
    pub fn exact_map(&self, xi: [f64; 2]) -> Result<Vec2, GeomError> {
        check_reference(xi)?;
        Ok(self.exact_unchecked(xi))
    }

    /// `∇F̌(x̂)`, columns are derivatives in `ξ` and `η`.
    pub fn exact_jacobian(&self, xi: [f64; 2]) -> Result<Mat2, GeomError> {
        check_reference(xi)?;
        Ok(self.exact_jacobian_unchecked(xi))
    }

    fn exact_jacobian_unchecked(&self, xi: [f64; 2]) -> Mat2 {
        match &self.curved {
            None => self.affine,
            Some(edge) => self.affine + self.correction(edge, xi).1,
        }
    }

    /// Isoparametric map `F_K(x̂) = Σ g_i N̂_i(x̂)`.
    pub fn map(&self, xi: [f64; 2]) -> Vec2 {
        if self.curved.is_none() {
            return self.affine_map(xi);
        }
        self.reference.values(xi).iter().zip(&self.nodes).fold(Vec2::zero(), |acc, (n, g)| acc + *g * *n)
    }

    /// `∇F_K(x̂)`.
    pub fn jacobian(&self, xi: [f64; 2]) -> Mat2 {
        if self.curved.is_none() {
            return self.affine;
        }
        self.jacobian_from_gradients(&self.reference.gradients(xi))
    }

    /// `∇F_K` from tabulated reference gradients.
    pub fn jacobian_from_gradients(&self, grads: &[[f64; 2]]) -> Mat2 {
        if self.curved.is_none() {
            return self.affine;
        }
        let mut m = Mat2::zero();
        for (g, d) in self.nodes.iter().zip(grads) {
            m = m + Mat2::outer(*g, Vec2::new(d[0], d[1]));
        }
        m
    }

    /// `∇F̌` at quadrature point `q` of the element's rule.
    pub fn exact_jacobian_at_quadrature(&self, q: usize) -> Mat2 {
        self.exact_jacobian_unchecked(self.reference.quadrature().points[q])
    }

    pub fn jacobian_at_quadrature(&self, q: usize) -> Mat2 {
        self.jacobian_from_gradients(self.reference.quad_gradients(q))
    }

    /// Reference preimage of `x` under `F_K`.
    pub fn inverse_map(&self, x: Vec2) -> Result<[f64; 2], GeomError> {
        if self.curved.is_none() {
            let xi = self.affine_preimage(x);
            return self.accept(xi, x);
        }
        let xi = self.newton(x, |p| (self.map(p), self.jacobian(p)))?;
        self.accept(xi, x)
    }

    /// Reference preimage of `x` under the exact map `F̌`.
    pub fn inverse_exact(&self, x: Vec2) -> Result<[f64; 2], GeomError> {
        if self.curved.is_none() {
            let xi = self.affine_preimage(x);
            return self.accept(xi, x);
        }
        let xi = self.newton(x, |p| (self.exact_unchecked(p), self.exact_jacobian_unchecked(p)))?;
        self.accept(xi, x)
    }

    /// Reference preimage of `x` under the straight-triangle map.
    pub fn affine_preimage_of(&self, x: Vec2) -> [f64; 2] {
        self.affine_preimage(x)
    }

    fn affine_preimage(&self, x: Vec2) -> [f64; 2] {
        let inv = self.affine.inverse().expect("mesh triangles are non-degenerate");
        let p = inv.mul_vec(x - self.corners[0]);
        [p.x, p.y]
    }

    fn accept(&self, xi: [f64; 2], x: Vec2) -> Result<[f64; 2], GeomError> {
        if barycentric(xi).iter().any(|&l| l < -1e-10) {
            return Err(GeomError::OutsideElement { element: self.id, x: x.x, y: x.y });
        }
        Ok(xi)
    }

    fn newton(&self, x: Vec2, f: impl Fn([f64; 2]) -> (Vec2, Mat2)) -> Result<[f64; 2], GeomError> {
        let fail = GeomError::Inversion { element: self.id, x: x.x, y: x.y };
        let mut xi = self.affine_preimage(x);
        let (mut value, mut jac) = f(xi);
        let mut residual = (value - x).norm();
        for _ in 0..NEWTON_MAX_ITER {
            let inv = jac.inverse().ok_or_else(|| fail.clone())?;
            let step = inv.mul_vec(x - value);
            let mut damping = 1.0;
            loop {
                let trial = [xi[0] + damping * step.x, xi[1] + damping * step.y];
                let (v, j) = f(trial);
                let r = (v - x).norm();
                if r <= residual || damping < 1e-6 {
                    xi = trial;
                    value = v;
                    jac = j;
                    residual = r;
                    break;
                }
                damping *= 0.5;
            }
            if (step * damping).norm() <= NEWTON_TOL {
                return Ok(xi);
            }
        }
        Err(fail)
    }

    /// `Φ_h(x) = F̌(F_K⁻¹(x))`.
    pub fn phi(&self, x: Vec2) -> Result<Vec2, GeomError> {
        if self.curved.is_none() {
            return Ok(x);
        }
        Ok(self.exact_unchecked(self.inverse_map(x)?))
    }

    /// `∇Φ_h(x) = ∇F̌ (∇F_K)⁻¹` at the recovered reference point.
    pub fn phi_jacobian(&self, x: Vec2) -> Result<Mat2, GeomError> {
        if self.curved.is_none() {
            return Ok(Mat2::identity());
        }
        self.phi_jacobian_reference(self.inverse_map(x)?)
    }

    /// `∇Φ_h` expressed at a reference point.
    pub fn phi_jacobian_reference(&self, xi: [f64; 2]) -> Result<Mat2, GeomError> {
        check_reference(xi)?;
        if self.curved.is_none() {
            return Ok(Mat2::identity());
        }
        let jk = self.jacobian(xi);
        let inv = jk.inverse().ok_or(GeomError::Degenerate { element: self.id, det: jk.det() })?;
        Ok(self.exact_jacobian_unchecked(xi) * inv)
    }

    /// `A_h = ∇Φ_h ∇Φ_hᵀ / det ∇Φ_h` at the physical point `F̌(x̂)`.
    pub fn coefficient_matrix(&self, xi: [f64; 2]) -> Result<Mat2, GeomError> {
        if self.curved.is_none() {
            check_reference(xi)?;
            return Ok(Mat2::identity());
        }
        let grad = self.phi_jacobian_reference(xi)?;
        coefficient_from_gradient(self.id, grad)
    }
}

pub(crate) fn coefficient_from_gradient(element: usize, grad: Mat2) -> Result<Mat2, GeomError> {
    let det = grad.det();
    if det <= 0.0 {
        return Err(GeomError::Degenerate { element, det });
    }
    Ok((grad * grad.transpose()).scale(1.0 / det))
}

/// A mesh with its elevated degree-r geometry.
#[derive(Clone, Debug)]
pub struct IsoMesh {
    pub mesh: Arc<Mesh>,
    pub polygon: Arc<CurvilinearPolygon>,
    pub reference: Arc<ReferenceElement>,
    pub elements: Vec<ElementGeometry>,
}

impl IsoMesh {
    pub fn degree(&self) -> usize {
        self.reference.degree()
    }

    pub fn boundary_elements(&self) -> impl Iterator<Item = &ElementGeometry> {
        self.elements.iter().filter(|e| e.is_boundary())
    }
}

/// Options for [`elevate_with`].
#[derive(Clone, Copy, Debug)]
pub struct ElevateOptions {
    pub blend: BlendKind,
    pub quadrature_degree: Option<usize>,
}

impl Default for ElevateOptions {
    fn default() -> Self {
        ElevateOptions { blend: BlendKind::Projected, quadrature_degree: None }
    }
}

/// Degree-`r` elevation with the default blend and quadrature.
pub fn elevate(mesh: Arc<Mesh>, polygon: Arc<CurvilinearPolygon>, degree: usize) -> Result<IsoMesh, GeomError> {
    elevate_with(mesh, polygon, degree, ElevateOptions::default())
}

pub fn elevate_with(
    mesh: Arc<Mesh>,
    polygon: Arc<CurvilinearPolygon>,
    degree: usize,
    options: ElevateOptions,
) -> Result<IsoMesh, GeomError> {
    let qdeg = options.quadrature_degree.unwrap_or_else(|| default_quadrature_degree(degree));
    let reference = Arc::new(ReferenceElement::with_quadrature(degree, qdeg));
    let mut curved: Vec<Option<(usize, usize, f64, f64)>> = vec![None; mesh.triangles.len()];
    for b in &mesh.boundary {
        curved[b.triangle] = Some((b.local_edge, b.arc, b.s_a, b.s_b));
    }
    let grid = sample_grid::<f64>(10);
    let mut elements = Vec::with_capacity(mesh.triangles.len());
    for (id, tri) in mesh.triangles.iter().enumerate() {
        let (rotation, edge) = match curved[id] {
            Some((e, arc, s_a, s_b)) => (e, Some((polygon.arc(arc).clone(), s_a, s_b))),
            None => (0, None),
        };
        let vertices = [tri[rotation], tri[(rotation + 1) % 3], tri[(rotation + 2) % 3]];
        let corners = vertices.map(|v| mesh.vertices[v]);
        let element = ElementGeometry::new(id, vertices, corners, edge, reference.clone(), options.blend);
        if element.is_boundary() {
            let quad = reference.quadrature().points.iter();
            for &p in grid.iter().chain(quad) {
                let det = element.jacobian(p).det();
                if det <= 0.0 {
                    return Err(GeomError::Elevation { element: id, det, xi: p[0], eta: p[1] });
                }
            }
        } else if element.affine.det() <= 0.0 {
            return Err(GeomError::Degenerate { element: id, det: element.affine.det() });
        }
        elements.push(element);
    }
    Ok(IsoMesh { mesh, polygon, reference, elements })
}

/// Maxima of the geometric perturbation over one elevated mesh.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GeometryMaxima {
    /// `max |Φ_h − Id|`.
    pub phi_err: f64,
    /// `max ‖∇Φ_h − I‖_F`.
    pub grad_phi_err: f64,
    /// `max ‖A_h − I‖_F`.
    pub a_err: f64,
    /// `max dist(∂Ω_h, ∂Ω)` over curved-edge samples.
    pub bdry_dist: f64,
}

/// Samples every element on the 10×10 reference grid.
pub fn geometry_maxima(iso: &IsoMesh) -> Result<GeometryMaxima, GeomError> {
    let grid = sample_grid::<f64>(10);
    let mut out = GeometryMaxima::default();
    for element in &iso.elements {
        for &p in &grid {
            let exact = element.exact_map(p)?;
            out.phi_err = out.phi_err.max(exact.distance(element.map(p)));
            let grad = element.phi_jacobian_reference(p)?;
            out.grad_phi_err = out.grad_phi_err.max((grad - Mat2::identity()).frobenius());
            let a = coefficient_from_gradient(element.id, grad)?;
            out.a_err = out.a_err.max((a - Mat2::identity()).frobenius());
        }
        if element.is_boundary() {
            for k in 0..=32 {
                let x = element.map([k as f64 / 32.0, 0.0]);
                out.bdry_dist = out.bdry_dist.max(iso.polygon.closest_boundary(x).distance);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Curve;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn quarter(blend: BlendKind, degree: usize) -> ElementGeometry {
        let arc = BoundaryArc::new(
            0,
            Curve::CircleArc { center: Vec2::new(0.0, 0.0), radius: 1.0, theta0: 0.0, theta1: FRAC_PI_2 },
        )
        .unwrap();
        ElementGeometry::new(
            0,
            [0, 1, 2],
            [Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(0.0, 0.0)],
            Some((arc, 0.0, 1.0)),
            Arc::new(ReferenceElement::new(degree)),
            blend,
        )
    }

    #[test]
    fn radial_blend_quarter_circle() {
        let e = quarter(BlendKind::Radial, 2);
        let mid = e.exact_map([0.5, 0.0]).unwrap();
        assert!(mid.distance(Vec2::new(0.5f64.sqrt(), 0.5f64.sqrt())) < 1e-15);
        assert!(e.exact_map([0.0, 1.0]).unwrap().norm() < 1e-15);
        let c = e.exact_map([1.0 / 3.0, 1.0 / 3.0]).unwrap();
        let expect = 1.0 / 3.0 + (2.0 / 3.0) * (0.5f64.sqrt() - 0.5);
        assert!((c.x - expect).abs() < 1e-15 && (c.y - expect).abs() < 1e-15);
        assert!((c.x - 0.471404).abs() < 1e-6);
    }

    #[test]
    fn outside_reference_is_rejected() {
        let e = quarter(BlendKind::Projected, 1);
        assert!(matches!(e.exact_map([0.8, 0.3]), Err(GeomError::OutsideReference(..))));
    }

    #[test]
    fn jacobians_match_finite_differences() {
        for blend in [BlendKind::Projected, BlendKind::Radial] {
            let e = quarter(blend, 3);
            for p in [[0.2, 0.3], [0.7, 0.1], [0.05, 0.9], [0.45, 0.45]] {
                let j = e.exact_jacobian(p).unwrap();
                let h = 1e-6;
                let dx = (e.exact_unchecked([p[0] + h, p[1]]) - e.exact_unchecked([p[0] - h, p[1]])) * (0.5 / h);
                let dy = (e.exact_unchecked([p[0], p[1] + h]) - e.exact_unchecked([p[0], p[1] - h])) * (0.5 / h);
                assert!((j.col(0) - dx).norm() < 1e-8, "{blend:?} {p:?}");
                assert!((j.col(1) - dy).norm() < 1e-8, "{blend:?} {p:?}");
            }
        }
    }

    #[test]
    fn straight_edges_stay_straight() {
        for blend in [BlendKind::Projected, BlendKind::Radial] {
            let e = quarter(blend, 2);
            for k in 0..=20 {
                let t = k as f64 / 20.0;
                for p in [[0.0, t], [t, 1.0 - t]] {
                    assert!(e.exact_map(p).unwrap().distance(e.affine_map(p)) < 1e-13);
                }
                let on_arc = e.exact_map([t, 0.0]).unwrap();
                let angle = FRAC_PI_2 * t;
                assert!(on_arc.distance(Vec2::new(angle.cos(), angle.sin())) < 1e-12);
            }
        }
    }

    #[test]
    fn nodes_interpolate_the_exact_map() {
        let e = quarter(BlendKind::Projected, 3);
        for (n, g) in e.reference().nodes().iter().zip(e.nodes()) {
            assert!(e.map(*n).distance(*g) < 1e-14);
            assert!(e.phi(*g).unwrap().distance(*g) < 1e-12);
        }
    }

    #[test]
    fn newton_round_trip() {
        let e = quarter(BlendKind::Projected, 2);
        for p in sample_grid::<f64>(7) {
            let x = e.map(p);
            let back = e.inverse_map(x).unwrap();
            assert!(e.map(back).distance(x) < 1e-12);
            let exact = e.exact_map(p).unwrap();
            let q = e.inverse_exact(exact).unwrap();
            assert!((q[0] - p[0]).abs() < 1e-10 && (q[1] - p[1]).abs() < 1e-10);
        }
        assert!(matches!(e.inverse_map(Vec2::new(2.0, 2.0)), Err(GeomError::OutsideElement { .. })));
    }

    #[test]
    fn coefficient_matrix_is_symmetric_positive() {
        let e = quarter(BlendKind::Projected, 2);
        let a = e.coefficient_matrix([0.3, 0.3]).unwrap();
        assert_eq!(a.m[0][1], a.m[1][0]);
        let (lo, _) = a.sym_eigenvalues();
        assert!(lo > 0.0);
        // area preservation: det A = 1 in two dimensions
        assert!((a.det() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_circle_arc_element() {
        let arc = BoundaryArc::new(
            0,
            Curve::CircleArc { center: Vec2::new(0.0, 0.0), radius: 1.0, theta0: 0.0, theta1: 2.0 * PI },
        )
        .unwrap();
        let s_b = 0.05;
        let (a, b) = (arc.eval(0.0), arc.eval(s_b));
        let e = ElementGeometry::new(
            0,
            [0, 1, 2],
            [a, b, (a + b) * 0.45],
            Some((arc, 0.0, s_b)),
            Arc::new(ReferenceElement::new(1)),
            BlendKind::Projected,
        );
        let mid = e.phi((a + b) * 0.5).unwrap();
        assert!((mid.norm() - 1.0).abs() < 1e-12);
    }
}
