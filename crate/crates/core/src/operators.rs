//! Interpolation, discrete harmonic extension, Poisson solves, the perturbed
//! Ritz projection and sampled error norms.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::femcore::{assemble_load, assemble_stiffness, AssemblyMode, FeSpace, FemError, SparseSystem};
use crate::isogeom::{coefficient_from_gradient, ElementGeometry};
use crate::reference::{barycentric, principal_lattice};
use crate::sparse::CsrMatrix;
use crate::{Mat2, Vec2};

/// Reference points of each boundary edge used by [`boundary_sup`].
pub const BOUNDARY_SAMPLES: usize = 33;

/// Coefficient vector of a function in a space.
#[derive(Clone, Debug)]
pub struct DiscreteFunction {
    pub space: Arc<FeSpace>,
    pub coefficients: Vec<f64>,
}

impl DiscreteFunction {
    pub fn new(space: Arc<FeSpace>, coefficients: Vec<f64>) -> Self {
        assert_eq!(coefficients.len(), space.num_dofs(), "coefficient length must equal the dof count");
        DiscreteFunction { space, coefficients }
    }

    pub fn zero(space: Arc<FeSpace>) -> Self {
        let n = space.num_dofs();
        Self::new(space, vec![0.0; n])
    }

    /// `û_h(x̂)` on element `element`.
    pub fn eval_reference(&self, element: usize, xi: [f64; 2]) -> f64 {
        let values = self.space.iso.reference.values(xi);
        self.space.element_dofs(element).iter().zip(&values).map(|(&d, n)| self.coefficients[d] * n).sum()
    }

    /// Reference gradient `∇̂ û_h(x̂)`.
    pub fn gradient_reference(&self, element: usize, xi: [f64; 2]) -> Vec2 {
        let grads = self.space.iso.reference.gradients(xi);
        self.space
            .element_dofs(element)
            .iter()
            .zip(&grads)
            .fold(Vec2::zero(), |acc, (&d, g)| acc + Vec2::new(g[0], g[1]) * self.coefficients[d])
    }

    /// Physical gradient of the transplant `ǔ_h` at `F̌(x̂)`.
    pub fn exact_gradient(&self, element: usize, xi: [f64; 2]) -> Vec2 {
        let e = &self.space.elements()[element];
        let jx = e.exact_jacobian(xi).expect("reference point inside the triangle");
        let inv = jx.inverse().expect("exact map is non-degenerate").transpose();
        inv.mul_vec(self.gradient_reference(element, xi))
    }
}

/// Where the interpolated function is sampled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolationMode {
    /// Nodes `F_K(â_i)` on `Ω_h`.
    OnApprox,
    /// Nodes `F̌(â_i)` on `Ω`.
    OnExact,
}

pub fn interpolate(space: &Arc<FeSpace>, g: impl Fn(Vec2) -> f64, mode: InterpolationMode) -> DiscreteFunction {
    let points = match mode {
        InterpolationMode::OnApprox => space.coordinates(),
        InterpolationMode::OnExact => space.exact_coordinates(),
    };
    DiscreteFunction::new(space.clone(), points.iter().map(|&p| g(p)).collect())
}

/// Solution statistics of a linear solve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Assembled stiffness matrix of a space, reusable across boundary data.
#[derive(Clone, Debug)]
pub struct HarmonicSolver {
    pub space: Arc<FeSpace>,
    system: SparseSystem,
}

impl HarmonicSolver {
    pub fn new(space: Arc<FeSpace>) -> Result<Self, FemError> {
        let matrix = assemble_stiffness(&space, AssemblyMode::Approx)?;
        let rhs = vec![0.0; space.num_dofs()];
        Ok(HarmonicSolver { space, system: SparseSystem::new(matrix, rhs) })
    }

    pub fn matrix(&self) -> &CsrMatrix<f64> {
        &self.system.matrix
    }

    /// Discrete harmonic function with the given boundary dof values
    /// (ordered as [`FeSpace::boundary_dofs`]).
    pub fn solve(&self, boundary_values: &[f64], dense: bool) -> Result<(DiscreteFunction, SolveStats), FemError> {
        let values: Vec<(usize, f64)> =
            self.space.boundary_dofs().iter().copied().zip(boundary_values.iter().copied()).collect();
        let reduced = self.system.apply_dirichlet(&self.space, &values)?;
        let sol = if dense { reduced.solve_dense()? } else { reduced.solve_cg()? };
        let stats = SolveStats { iterations: sol.iterations, residual: sol.residual };
        Ok((DiscreteFunction::new(self.space.clone(), sol.values), stats))
    }
}

/// Discrete harmonic extension of `g` sampled at the boundary dofs.
pub fn discrete_harmonic(space: &Arc<FeSpace>, g: impl Fn(Vec2) -> f64) -> Result<DiscreteFunction, FemError> {
    let values: Vec<f64> = space.boundary_dofs().iter().map(|&d| g(space.coordinates()[d])).collect();
    Ok(HarmonicSolver::new(space.clone())?.solve(&values, false)?.0)
}

fn homogeneous_solve(
    space: &Arc<FeSpace>,
    matrix: CsrMatrix<f64>,
    rhs: Vec<f64>,
) -> Result<(DiscreteFunction, SolveStats), FemError> {
    let zeros: Vec<(usize, f64)> = space.boundary_dofs().iter().map(|&d| (d, 0.0)).collect();
    let sol = SparseSystem::new(matrix, rhs).apply_dirichlet(space, &zeros)?.solve_cg()?;
    let stats = SolveStats { iterations: sol.iterations, residual: sol.residual };
    Ok((DiscreteFunction::new(space.clone(), sol.values), stats))
}

/// `u_h ∈ S̊_h(Ω_h)` with `∫ ∇u_h·∇χ = ∫ f χ`.
pub fn solve_poisson(
    space: &Arc<FeSpace>,
    f: impl Fn(Vec2) -> f64 + Sync,
) -> Result<(DiscreteFunction, SolveStats), FemError> {
    let matrix = assemble_stiffness(space, AssemblyMode::Approx)?;
    let rhs = assemble_load(space, f)?;
    homogeneous_solve(space, matrix, rhs)
}

/// Physical gradient of a function on `Ω`, queried element by element at
/// the exact image `x = F̌(x̂)`.
pub trait ElementwiseGradient: Sync {
    fn gradient(&self, element: &ElementGeometry, xi: [f64; 2], x: Vec2) -> Vec2;
}

/// Function with a closed-form gradient.
pub struct Analytic<F>(pub F);

impl<F: Fn(Vec2) -> Vec2 + Sync> ElementwiseGradient for Analytic<F> {
    fn gradient(&self, _element: &ElementGeometry, _xi: [f64; 2], x: Vec2) -> Vec2 {
        (self.0)(x)
    }
}

impl ElementwiseGradient for DiscreteFunction {
    fn gradient(&self, element: &ElementGeometry, xi: [f64; 2], _x: Vec2) -> Vec2 {
        self.exact_gradient(element.id, xi)
    }
}

/// `A_h` and the inverse transpose of `∇F̌` at quadrature point `q`.
fn exact_pullback(element: &ElementGeometry, q: usize) -> Result<(Mat2, Mat2, f64), FemError> {
    let jx = element.exact_jacobian_at_quadrature(q);
    let det = jx.det();
    let jxi = jx.inverse().ok_or(FemError::Singular { element: element.id, det })?;
    let a = if element.is_boundary() {
        let jk = element.jacobian_at_quadrature(q);
        let inv = jk.inverse().ok_or(FemError::Singular { element: element.id, det: jk.det() })?;
        coefficient_from_gradient(element.id, jx * inv)?
    } else {
        Mat2::identity()
    };
    Ok((a, jxi.transpose(), det))
}

/// Ritz projection for `∫_Ω A_h ∇· ∇·` with zero boundary values.
pub fn ritz_project(
    space: &Arc<FeSpace>,
    v: &impl ElementwiseGradient,
) -> Result<(DiscreteFunction, SolveStats), FemError> {
    let matrix = assemble_stiffness(space, AssemblyMode::Exact)?;
    let reference = space.iso.reference.clone();
    let n = reference.num_nodes();
    let quad = reference.quadrature();
    let locals: Vec<Vec<f64>> = space
        .elements()
        .par_iter()
        .map(|element| {
            let mut local = vec![0.0; n];
            for q in 0..quad.len() {
                let (a, jit, det) = exact_pullback(element, q)?;
                let xi = quad.points[q];
                let x = element.exact_map(xi)?;
                let flux = a.mul_vec(v.gradient(element, xi, x)) * (det * quad.weights[q]);
                for (i, g) in reference.quad_gradients(q).iter().enumerate() {
                    local[i] += flux.dot(jit.mul_vec(Vec2::new(g[0], g[1])));
                }
            }
            Ok(local)
        })
        .collect::<Result<_, FemError>>()?;
    let mut rhs = vec![0.0; space.num_dofs()];
    for (t, local) in locals.iter().enumerate() {
        for (i, &d) in space.element_dofs(t).iter().enumerate() {
            rhs[d] += local[i];
        }
    }
    homogeneous_solve(space, matrix, rhs)
}

/// `(Σ_K ∫_Ǩ |∇v − ∇ǔ_h|²)^{1/2}` over the exact elements.
pub fn h1_seminorm_error(u_h: &DiscreteFunction, v: &impl ElementwiseGradient) -> Result<f64, FemError> {
    let space = &u_h.space;
    let quad = space.iso.reference.quadrature();
    let parts: Vec<f64> = space
        .elements()
        .par_iter()
        .map(|element| {
            let mut acc = 0.0;
            for q in 0..quad.len() {
                let (_, jit, det) = exact_pullback(element, q)?;
                let xi = quad.points[q];
                let x = element.exact_map(xi)?;
                let gh = jit.mul_vec(u_h.gradient_reference(element.id, xi));
                acc += (v.gradient(element, xi, x) - gh).norm_squared() * det * quad.weights[q];
            }
            Ok(acc)
        })
        .collect::<Result<_, FemError>>()?;
    Ok(parts.iter().sum::<f64>().sqrt())
}

/// How sampled errors map reference points to physical points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorConvention {
    /// `|u(F̌(x̂)) − û_h(x̂)|`, the transplant error on `Ω`.
    OmegaSampled,
    /// `|u(F_K(x̂)) − û_h(x̂)|` on `Ω_h`.
    OmegaHSampled,
}

/// Order-(r+3) principal lattice plus the quadrature points.
pub fn sample_points(space: &FeSpace) -> Vec<[f64; 2]> {
    let mut pts = principal_lattice::<f64>(space.degree() + 3);
    pts.extend_from_slice(&space.iso.reference.quadrature().points);
    pts
}

/// Sampled `max |u − u_h|` in the chosen convention.
pub fn linf_error(u_h: &DiscreteFunction, u: impl Fn(Vec2) -> f64 + Sync, convention: ErrorConvention) -> f64 {
    let space = &u_h.space;
    let pts = sample_points(space);
    let reference = space.iso.reference.clone();
    space
        .elements()
        .par_iter()
        .map(|element| {
            let dofs = space.element_dofs(element.id);
            let mut values = vec![0.0; reference.num_nodes()];
            let mut worst: f64 = 0.0;
            for &xi in &pts {
                reference.values_into(xi, &mut values);
                let uh: f64 = dofs.iter().zip(&values).map(|(&d, n)| u_h.coefficients[d] * n).sum();
                let x = match convention {
                    ErrorConvention::OmegaSampled => element.exact_map(xi).expect("sample inside the triangle"),
                    ErrorConvention::OmegaHSampled => element.map(xi),
                };
                worst = worst.max((u(x) - uh).abs());
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

/// Sampled `max |u_h|` over `Ω_h`.
pub fn sup_norm(u_h: &DiscreteFunction) -> f64 {
    linf_error(u_h, |_| 0.0, ErrorConvention::OmegaHSampled)
}

/// `max |u_h|` over 33 points per curved boundary edge.
pub fn boundary_sup(u_h: &DiscreteFunction) -> f64 {
    let space = &u_h.space;
    let m = (BOUNDARY_SAMPLES - 1) as f64;
    let mut worst: f64 = 0.0;
    for element in space.iso.boundary_elements() {
        for k in 0..BOUNDARY_SAMPLES {
            worst = worst.max(u_h.eval_reference(element.id, [k as f64 / m, 0.0]).abs());
        }
    }
    worst
}

/// Point location on `Ω` through the exact element maps.
pub struct ExactLocator {
    function: DiscreteFunction,
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl ExactLocator {
    pub fn new(function: DiscreteFunction) -> Self {
        let space = function.space.clone();
        let samples = principal_lattice::<f64>(4);
        let boxes: Vec<(Vec2, Vec2)> = space
            .elements()
            .iter()
            .map(|e| {
                let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
                let mut hi = -lo;
                for &p in &samples {
                    let x = e.exact_map(p).expect("lattice inside the triangle");
                    lo = Vec2::new(lo.x.min(x.x), lo.y.min(x.y));
                    hi = Vec2::new(hi.x.max(x.x), hi.y.max(x.y));
                }
                let pad = 0.1 * (hi - lo).norm();
                (lo - Vec2::new(pad, pad), hi + Vec2::new(pad, pad))
            })
            .collect();
        let lo = boxes
            .iter()
            .fold(Vec2::new(f64::INFINITY, f64::INFINITY), |a, b| Vec2::new(a.x.min(b.0.x), a.y.min(b.0.y)));
        let hi = boxes.iter().fold(-lo, |a, b| Vec2::new(a.x.max(b.1.x), a.y.max(b.1.y)));
        let cell = space.h().max(1e-3);
        let nx = ((hi.x - lo.x) / cell).ceil().max(1.0) as usize;
        let ny = ((hi.y - lo.y) / cell).ceil().max(1.0) as usize;
        let mut buckets = vec![Vec::new(); nx * ny];
        for (t, (a, b)) in boxes.iter().enumerate() {
            let (i0, j0) = Self::cell_of(lo, cell, nx, ny, *a);
            let (i1, j1) = Self::cell_of(lo, cell, nx, ny, *b);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(t);
                }
            }
        }
        ExactLocator { function, origin: lo, cell, nx, ny, buckets }
    }

    fn cell_of(origin: Vec2, cell: f64, nx: usize, ny: usize, p: Vec2) -> (usize, usize) {
        let i = ((p.x - origin.x) / cell).floor().clamp(0.0, (nx - 1) as f64) as usize;
        let j = ((p.y - origin.y) / cell).floor().clamp(0.0, (ny - 1) as f64) as usize;
        (i, j)
    }

    /// Element and reference point with `F̌(x̂) = x`; falls back to the
    /// candidate with the least negative barycentric, clamped into the triangle.
    pub fn locate(&self, x: Vec2) -> Option<(usize, [f64; 2])> {
        let (i, j) = Self::cell_of(self.origin, self.cell, self.nx, self.ny, x);
        let elements = self.function.space.elements();
        let mut best: Option<(f64, usize, [f64; 2])> = None;
        for &t in &self.buckets[j * self.nx + i] {
            let e = &elements[t];
            if let Ok(xi) = e.inverse_exact(x) {
                return Some((t, xi));
            }
            let xi = e.affine_preimage_of(x);
            let m = barycentric(xi).into_iter().fold(f64::INFINITY, f64::min);
            if best.is_none_or(|b| m > b.0) {
                best = Some((m, t, xi));
            }
        }
        best.map(|(_, t, xi)| (t, clamp_reference(xi)))
    }

    /// Value of the transplant `ǔ_h` at a point of `Ω`.
    pub fn eval(&self, x: Vec2) -> f64 {
        match self.locate(x) {
            Some((t, xi)) => self.function.eval_reference(t, xi),
            None => 0.0,
        }
    }
}

fn clamp_reference(xi: [f64; 2]) -> [f64; 2] {
    let x = xi[0].max(0.0);
    let y = xi[1].max(0.0);
    let s = x + y;
    if s > 1.0 {
        [x / s, y / s]
    } else {
        [x, y]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::Domain;
    use crate::isogeom::elevate;
    use crate::meshgen::{generate, MeshConfig};

    fn space(domain: &Domain, h: f64, r: usize) -> Arc<FeSpace> {
        let mesh = Arc::new(generate(&domain.polygon, h, &MeshConfig::default()).unwrap());
        Arc::new(FeSpace::new(Arc::new(elevate(mesh, domain.polygon.clone(), r).unwrap())))
    }

    #[test]
    fn constants_are_harmonic() {
        let s = space(&Domain::lens(), 0.2, 2);
        let u = discrete_harmonic(&s, |_| 3.0).unwrap();
        assert!(u.coefficients.iter().all(|c| (c - 3.0).abs() < 1e-10));
        assert!((boundary_sup(&u) - 3.0).abs() < 1e-12);
        assert!((sup_norm(&u) - 3.0).abs() < 1e-10);
    }

    #[test]
    fn linear_data_reproduced() {
        let s = space(&Domain::disk(), 0.2, 1);
        let u = discrete_harmonic(&s, |p| p.x).unwrap();
        for (c, x) in u.coefficients.iter().zip(s.coordinates()) {
            assert!((c - x.x).abs() < 1e-10);
        }
    }

    #[test]
    fn poisson_zero_load() {
        let s = space(&Domain::disk(), 0.3, 2);
        let (u, _) = solve_poisson(&s, |_| 0.0).unwrap();
        assert!(u.coefficients.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn linear_interpolation_exact_on_interior() {
        let s = space(&Domain::disk(), 0.2, 2);
        let u = interpolate(&s, |p| 2.0 * p.x - p.y + 0.5, InterpolationMode::OnApprox);
        let pts = sample_points(&s);
        for e in s.elements().iter().filter(|e| !e.is_boundary()) {
            for &xi in &pts {
                let x = e.map(xi);
                assert!((u.eval_reference(e.id, xi) - (2.0 * x.x - x.y + 0.5)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn nodal_delta_boundary_peak() {
        let s = space(&Domain::lens(), 0.2, 1);
        let mut c = vec![0.0; s.num_dofs()];
        c[s.boundary_dofs()[3]] = 1.0;
        assert_eq!(boundary_sup(&DiscreteFunction::new(s.clone(), c)), 1.0);
    }

    #[test]
    fn locator_recovers_transplant() {
        let d = Domain::flower();
        let s = space(&d, 0.2, 2);
        let u = interpolate(&s, |p| p.x * p.y + p.y, InterpolationMode::OnExact);
        let loc = ExactLocator::new(u.clone());
        for e in s.elements().iter().step_by(7) {
            let xi = [0.2, 0.3];
            let x = e.exact_map(xi).unwrap();
            assert!((loc.eval(x) - u.eval_reference(e.id, xi)).abs() < 1e-9);
        }
    }
}
