//! Global Lagrange spaces on elevated meshes, stiffness and load assembly,
//! Dirichlet elimination and the linear solve.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isogeom::{coefficient_from_gradient, ElementGeometry, GeomError, IsoMesh};
use crate::sparse::{cholesky_solve, solve_cg, CgOptions, CgSolution, CsrMatrix, SolveError};
use crate::{Mat2, Vec2};

/// Systems below this size may be solved densely.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("element {element}: singular Jacobian (det {det:e})")]
    Singular { element: usize, det: f64 },
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error("dof {0} is not a boundary dof")]
    NotBoundary(usize),
    #[error("no Dirichlet value for boundary dof {0}")]
    MissingBoundary(usize),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Geometry used to pull back the bilinear form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssemblyMode {
    /// `∫_{Ω_h} ∇u·∇v` through `F_K`.
    Approx,
    /// `∫_Ω A_h ∇u·∇v` through `F̌`.
    Exact,
}

/// Global degree-r Lagrange space on an elevated mesh.
///
/// Numbering: mesh vertices, then edge nodes (edges in order of first
/// appearance, nodes running from the lower to the higher vertex id), then
/// element interior nodes.
#[derive(Clone, Debug)]
pub struct FeSpace {
    pub iso: Arc<IsoMesh>,
    num_dofs: usize,
    /// Global dof of every local node, per element (local order of the element geometry).
    element_dofs: Vec<Vec<usize>>,
    /// `F_K(â_i)`, points of `Ω_h`.
    coordinates: Vec<Vec2>,
    /// `F̌(â_i)`, points of `Ω`.
    exact_coordinates: Vec<Vec2>,
    is_boundary: Vec<bool>,
    boundary_dofs: Vec<usize>,
    num_edges: usize,
}

impl FeSpace {
    pub fn new(iso: Arc<IsoMesh>) -> Self {
        let r = iso.degree();
        let reference = iso.reference.clone();
        let nv = iso.mesh.vertices.len();
        let per_edge = r - 1;
        let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut element_dofs = Vec::with_capacity(iso.elements.len());
        for element in &iso.elements {
            let mut dofs = vec![0usize; reference.num_nodes()];
            dofs[..3].copy_from_slice(&element.vertices);
            for e in 0..3 {
                let (a, b) = (element.vertices[e], element.vertices[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let next = edge_ids.len();
                let id = *edge_ids.entry(key).or_insert(next);
                let local = reference.edge_nodes(e);
                for k in 0..per_edge {
                    let k_global = if a < b { k } else { per_edge - 1 - k };
                    dofs[local[1 + k]] = nv + id * per_edge + k_global;
                }
            }
            element_dofs.push(dofs);
        }
        let num_edges = edge_ids.len();
        let first_interior = nv + num_edges * per_edge;
        let interior_per = reference.num_nodes() - 3 - 3 * per_edge;
        for (t, dofs) in element_dofs.iter_mut().enumerate() {
            for k in 0..interior_per {
                dofs[3 + 3 * per_edge + k] = first_interior + t * interior_per + k;
            }
        }
        let num_dofs = first_interior + iso.elements.len() * interior_per;

        let mut coordinates = vec![Vec2::zero(); num_dofs];
        let mut exact_coordinates = vec![Vec2::zero(); num_dofs];
        let mut is_boundary = vec![false; num_dofs];
        for (element, dofs) in iso.elements.iter().zip(&element_dofs) {
            for (i, &d) in dofs.iter().enumerate() {
                let xi = reference.nodes()[i];
                coordinates[d] = element.map(xi);
                exact_coordinates[d] = element.nodes()[i];
            }
            if element.is_boundary() {
                for i in reference.edge_nodes(0) {
                    is_boundary[dofs[i]] = true;
                }
            }
        }
        let boundary_dofs = (0..num_dofs).filter(|&d| is_boundary[d]).collect();
        FeSpace { iso, num_dofs, element_dofs, coordinates, exact_coordinates, is_boundary, boundary_dofs, num_edges }
    }

    pub fn degree(&self) -> usize {
        self.iso.degree()
    }

    pub fn num_dofs(&self) -> usize {
        self.num_dofs
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn elements(&self) -> &[ElementGeometry] {
        &self.iso.elements
    }

    pub fn element_dofs(&self, element: usize) -> &[usize] {
        &self.element_dofs[element]
    }

    pub fn coordinates(&self) -> &[Vec2] {
        &self.coordinates
    }

    pub fn exact_coordinates(&self) -> &[Vec2] {
        &self.exact_coordinates
    }

    pub fn is_boundary(&self, dof: usize) -> bool {
        self.is_boundary[dof]
    }

    pub fn boundary_dofs(&self) -> &[usize] {
        &self.boundary_dofs
    }

    pub fn interior_dofs(&self) -> Vec<usize> {
        (0..self.num_dofs).filter(|&d| !self.is_boundary[d]).collect()
    }

    /// Mesh size `max diam K̃`.
    pub fn h(&self) -> f64 {
        self.iso.mesh.h
    }
}

/// Inverse transpose and determinant of a Jacobian, failing on `det ≤ 0`.
fn pullback(element: usize, jac: Mat2) -> Result<(Mat2, f64), FemError> {
    let det = jac.det();
    if det <= 0.0 || !det.is_finite() {
        return Err(FemError::Singular { element, det });
    }
    let inv = jac.inverse().ok_or(FemError::Singular { element, det })?;
    Ok((inv.transpose(), det))
}

/// Dense element stiffness matrix (row-major, local node order).
pub fn element_stiffness(element: &ElementGeometry, mode: AssemblyMode) -> Result<Vec<f64>, FemError> {
    let reference = element.reference();
    let n = reference.num_nodes();
    let quad = reference.quadrature();
    let mut k = vec![0.0; n * n];
    let mut grads = vec![Vec2::zero(); n];
    let mut flux = vec![Vec2::zero(); n];
    for q in 0..quad.len() {
        let ref_grads = reference.quad_gradients(q);
        let jk = element.jacobian_at_quadrature(q);
        let (weight, jit, coeff) = match mode {
            AssemblyMode::Approx => {
                let (jit, det) = pullback(element.id, jk)?;
                (quad.weights[q] * det, jit, None)
            }
            AssemblyMode::Exact => {
                let jx = element.exact_jacobian_at_quadrature(q);
                let (jit, det) = pullback(element.id, jx)?;
                let a = if element.is_boundary() {
                    let inv = jk.inverse().ok_or(FemError::Singular { element: element.id, det: jk.det() })?;
                    Some(coefficient_from_gradient(element.id, jx * inv)?)
                } else {
                    None
                };
                (quad.weights[q] * det, jit, a)
            }
        };
        for i in 0..n {
            grads[i] = jit.mul_vec(Vec2::new(ref_grads[i][0], ref_grads[i][1]));
            flux[i] = match coeff {
                Some(a) => a.mul_vec(grads[i]),
                None => grads[i],
            };
        }
        for i in 0..n {
            for j in 0..n {
                k[i * n + j] += weight * flux[i].dot(grads[j]);
            }
        }
    }
    Ok(k)
}

/// Global stiffness matrix. Element matrices are computed in parallel and
/// scattered in element order.
pub fn assemble_stiffness(space: &FeSpace, mode: AssemblyMode) -> Result<CsrMatrix<f64>, FemError> {
    let locals: Vec<Vec<f64>> =
        space.elements().par_iter().map(|e| element_stiffness(e, mode)).collect::<Result<_, _>>()?;
    let n = space.iso.reference.num_nodes();
    let mut triplets = Vec::with_capacity(locals.len() * n * n);
    for (t, local) in locals.iter().enumerate() {
        let dofs = space.element_dofs(t);
        for i in 0..n {
            for j in 0..n {
                triplets.push((dofs[i], dofs[j], local[i * n + j]));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(space.num_dofs(), space.num_dofs(), &triplets))
}

/// Load vector `∫_{Ω_h} f φ_i`.
pub fn assemble_load(space: &FeSpace, f: impl Fn(Vec2) -> f64 + Sync) -> Result<Vec<f64>, FemError> {
    let reference = space.iso.reference.clone();
    let n = reference.num_nodes();
    let quad = reference.quadrature();
    let locals: Vec<Vec<f64>> = space
        .elements()
        .par_iter()
        .map(|element| {
            let mut local = vec![0.0; n];
            for q in 0..quad.len() {
                let values = reference.quad_values(q);
                let det = element.jacobian_at_quadrature(q).det();
                if det <= 0.0 {
                    return Err(FemError::Singular { element: element.id, det });
                }
                let x = element.map(quad.points[q]);
                let fw = f(x) * det * quad.weights[q];
                for i in 0..n {
                    local[i] += fw * values[i];
                }
            }
            Ok(local)
        })
        .collect::<Result<_, _>>()?;
    let mut load = vec![0.0; space.num_dofs()];
    for (t, local) in locals.iter().enumerate() {
        for (i, &d) in space.element_dofs(t).iter().enumerate() {
            load[d] += local[i];
        }
    }
    Ok(load)
}

/// Matrix, right-hand side and Dirichlet constraints.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub matrix: CsrMatrix<f64>,
    pub rhs: Vec<f64>,
    /// Constrained dof and its value, sorted by dof.
    pub constraints: Vec<(usize, f64)>,
}

/// System on the free dofs after symmetric elimination.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    pub matrix: CsrMatrix<f64>,
    pub rhs: Vec<f64>,
    /// Global dof of every reduced unknown.
    pub free: Vec<usize>,
    pub constraints: Vec<(usize, f64)>,
    pub full_len: usize,
}

impl SparseSystem {
    pub fn new(matrix: CsrMatrix<f64>, rhs: Vec<f64>) -> Self {
        SparseSystem { matrix, rhs, constraints: Vec::new() }
    }

    /// Eliminates the boundary dofs of `space` with the given values. Every
    /// boundary dof needs exactly one value and no interior dof may be constrained.
    pub fn apply_dirichlet(&self, space: &FeSpace, values: &[(usize, f64)]) -> Result<ReducedSystem, FemError> {
        let n = space.num_dofs();
        let mut fixed: Vec<Option<f64>> = vec![None; n];
        for &(d, v) in values {
            if d >= n || !space.is_boundary(d) {
                return Err(FemError::NotBoundary(d));
            }
            fixed[d] = Some(v);
        }
        if let Some(&d) = space.boundary_dofs().iter().find(|&&d| fixed[d].is_none()) {
            return Err(FemError::MissingBoundary(d));
        }
        Ok(self.eliminate(fixed))
    }

    fn eliminate(&self, fixed: Vec<Option<f64>>) -> ReducedSystem {
        let n = fixed.len();
        let mut index = vec![usize::MAX; n];
        let free: Vec<usize> = (0..n).filter(|&d| fixed[d].is_none()).collect();
        for (k, &d) in free.iter().enumerate() {
            index[d] = k;
        }
        let mut rhs: Vec<f64> = free.iter().map(|&d| self.rhs[d]).collect();
        let mut triplets = Vec::new();
        for (k, &d) in free.iter().enumerate() {
            for (j, a) in self.matrix.row(d) {
                match fixed[j] {
                    Some(v) => rhs[k] -= a * v,
                    None => triplets.push((k, index[j], a)),
                }
            }
        }
        let constraints = (0..n).filter_map(|d| fixed[d].map(|v| (d, v))).collect();
        ReducedSystem {
            matrix: CsrMatrix::from_triplets(free.len(), free.len(), &triplets),
            rhs,
            free,
            constraints,
            full_len: n,
        }
    }
}

/// Result of a linear solve on the full dof vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl ReducedSystem {
    /// Inserts the constrained values around a free-dof vector.
    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.full_len];
        for (&d, &v) in self.free.iter().zip(reduced) {
            out[d] = v;
        }
        for &(d, v) in &self.constraints {
            out[d] = v;
        }
        out
    }

    pub fn solve_cg(&self) -> Result<Solution, FemError> {
        let CgSolution { x, iterations, residual } = solve_cg(&self.matrix, &self.rhs, CgOptions::default())?;
        Ok(Solution { values: self.expand(&x), iterations, residual })
    }

    /// Dense Cholesky solve; intended for systems below [`DENSE_LIMIT`].
    pub fn solve_dense(&self) -> Result<Solution, FemError> {
        let n = self.free.len();
        let x = cholesky_solve(n, &self.matrix.to_dense(), &self.rhs)?;
        let ax = self.matrix.mul_vec(&x);
        let b_norm = self.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let r = self.rhs.iter().zip(&ax).map(|(b, y)| (b - y) * (b - y)).sum::<f64>().sqrt();
        let residual = if b_norm > 0.0 { r / b_norm } else { r };
        Ok(Solution { values: self.expand(&x), iterations: 0, residual })
    }
}

/// Builds the space of an elevated mesh.
pub fn build_space(iso: Arc<IsoMesh>) -> FeSpace {
    FeSpace::new(iso)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::Domain;
    use crate::geometry::{Curve, CurvilinearPolygon};
    use crate::isogeom::elevate;
    use crate::meshgen::{generate, BoundaryEdge, Mesh, MeshConfig};

    fn disk_space(h: f64, r: usize) -> FeSpace {
        let d = Domain::disk();
        let mesh = Arc::new(generate(&d.polygon, h, &MeshConfig::default()).unwrap());
        FeSpace::new(Arc::new(elevate(mesh, d.polygon.clone(), r).unwrap()))
    }

    #[test]
    fn reference_triangle_p1_stiffness() {
        // an interior triangle is affine; embed it in a mesh without boundary edges
        let polygon = Arc::new(
            CurvilinearPolygon::new(vec![Curve::CircleArc {
                center: Vec2::zero(),
                radius: 3.0,
                theta0: 0.0,
                theta1: std::f64::consts::TAU,
            }])
            .unwrap(),
        );
        let mesh = Mesh::new(
            vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)],
            vec![[0, 1, 2]],
            Vec::<BoundaryEdge>::new(),
        );
        let iso = elevate(Arc::new(mesh), polygon, 1).unwrap();
        let k = element_stiffness(&iso.elements[0], AssemblyMode::Approx).unwrap();
        let expect = [1.0, -0.5, -0.5, -0.5, 0.5, 0.0, -0.5, 0.0, 0.5];
        for (a, b) in k.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14, "{k:?}");
        }
    }

    #[test]
    fn dof_counts() {
        let s1 = disk_space(0.3, 1);
        let v = s1.iso.mesh.vertices.len();
        assert_eq!(s1.num_dofs(), v);
        let s2 = disk_space(0.3, 2);
        assert_eq!(s2.num_dofs(), v + s2.iso.mesh.edges().len());
        let s3 = disk_space(0.3, 3);
        let t = s3.iso.mesh.triangles.len();
        assert_eq!(s3.num_dofs(), v + 2 * s3.iso.mesh.edges().len() + t);
    }

    #[test]
    fn boundary_dofs_on_circle() {
        for r in 1..=3 {
            let s = disk_space(0.3, r);
            for &d in s.boundary_dofs() {
                assert!((s.coordinates()[d].norm() - 1.0).abs() < 1e-12);
            }
            for d in s.interior_dofs() {
                assert!(s.coordinates()[d].norm() < 1.0 - 1e-6);
            }
        }
    }

    #[test]
    fn shared_nodes_agree() {
        let s = disk_space(0.25, 3);
        for (t, element) in s.elements().iter().enumerate() {
            for (i, &d) in s.element_dofs(t).iter().enumerate() {
                let x = element.map(s.iso.reference.nodes()[i]);
                assert!((x - s.coordinates()[d]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn modes_agree_and_constants_in_kernel() {
        let s = disk_space(0.3, 2);
        let a = assemble_stiffness(&s, AssemblyMode::Approx).unwrap();
        let b = assemble_stiffness(&s, AssemblyMode::Exact).unwrap();
        let scale = a.max_abs();
        for i in 0..a.rows() {
            for (j, v) in a.row(i) {
                assert!((v - b.get(i, j)).abs() <= 1e-12 * scale);
            }
        }
        let ones = a.mul_vec(&vec![1.0; a.cols()]);
        assert!(ones.iter().all(|v| v.abs() < 1e-11 * scale));
        assert!(a.asymmetry().unwrap() < 1e-12);
    }

    #[test]
    fn load_of_one_is_area() {
        let s = disk_space(0.2, 1);
        let load = assemble_load(&s, |_| 1.0).unwrap();
        let area = s.iso.mesh.area();
        assert!((load.iter().sum::<f64>() - area).abs() < 1e-12);
        assert!(assemble_load(&s, |_| 0.0).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dirichlet_contracts() {
        let s = disk_space(0.3, 1);
        let sys = SparseSystem::new(assemble_stiffness(&s, AssemblyMode::Approx).unwrap(), vec![0.0; s.num_dofs()]);
        let interior = s.interior_dofs()[0];
        assert_eq!(sys.apply_dirichlet(&s, &[(interior, 1.0)]).unwrap_err(), FemError::NotBoundary(interior));
        let partial: Vec<_> = s.boundary_dofs()[1..].iter().map(|&d| (d, 0.0)).collect();
        assert_eq!(sys.apply_dirichlet(&s, &partial).unwrap_err(), FemError::MissingBoundary(s.boundary_dofs()[0]));
    }

    #[test]
    fn constant_data_gives_constant_solution() {
        let s = disk_space(0.25, 2);
        let sys = SparseSystem::new(assemble_stiffness(&s, AssemblyMode::Approx).unwrap(), vec![0.0; s.num_dofs()]);
        let values: Vec<_> = s.boundary_dofs().iter().map(|&d| (d, 2.5)).collect();
        let reduced = sys.apply_dirichlet(&s, &values).unwrap();
        assert_eq!(reduced.free, s.interior_dofs());
        assert!(reduced.matrix.asymmetry().unwrap() < 1e-12);
        let sol = reduced.solve_cg().unwrap();
        assert!(sol.values.iter().all(|v| (v - 2.5).abs() < 1e-10));
        let dense = reduced.solve_dense().unwrap();
        assert!(dense.values.iter().all(|v| (v - 2.5).abs() < 1e-10));
    }

    #[test]
    fn poisson_residual() {
        let s = disk_space(0.2, 1);
        let sys = SparseSystem::new(
            assemble_stiffness(&s, AssemblyMode::Approx).unwrap(),
            assemble_load(&s, |_| 4.0).unwrap(),
        );
        let zeros: Vec<_> = s.boundary_dofs().iter().map(|&d| (d, 0.0)).collect();
        let sol = sys.apply_dirichlet(&s, &zeros).unwrap().solve_cg().unwrap();
        assert!(sol.residual <= 1e-12);
        assert!(sol.iterations <= crate::sparse::iteration_cap(s.interior_dofs().len()));
    }

    #[test]
    fn assembly_is_deterministic() {
        let s = disk_space(0.2, 3);
        let a = assemble_stiffness(&s, AssemblyMode::Exact).unwrap();
        let b = assemble_stiffness(&s, AssemblyMode::Exact).unwrap();
        assert_eq!(a, b);
    }
}
