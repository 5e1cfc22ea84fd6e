//! Lagrange elements of degree 1–3 on the reference triangle.
//!
//! Reference coordinates are `(ξ, η)` with barycentrics
//! `λ₁ = 1 - ξ - η`, `λ₂ = ξ`, `λ₃ = η`; local vertex `k` sits where `λ_{k+1} = 1`.
//! Nodes are ordered vertices first, then the `r - 1` nodes of each edge
//! (edge `e` runs from vertex `e` to vertex `e + 1 mod 3`), then interior nodes.

use crate::quadrature::TriangleRule;
use crate::scalar::Real;

/// Default quadrature exactness for degree `r` elements.
pub fn default_quadrature_degree(degree: usize) -> usize {
    2 * degree + 2
}

#[derive(Clone, Debug)]
pub struct ReferenceElement<T> {
    degree: usize,
    /// Lattice multi-indices `(i, j, k)`, `i + j + k = r`, weights of `(λ₁, λ₂, λ₃)`.
    lattice: Vec<[usize; 3]>,
    nodes: Vec<[T; 2]>,
    quadrature: TriangleRule<T>,
    /// Basis values at quadrature points, `[q][i]`.
    quad_values: Vec<Vec<T>>,
    /// Basis reference gradients at quadrature points, `[q][i]`.
    quad_grads: Vec<Vec<[T; 2]>>,
}

impl<T: Real> ReferenceElement<T> {
    /// Element of degree `r ∈ {1, 2, 3}` with the default quadrature.
    pub fn new(degree: usize) -> Self {
        Self::with_quadrature(degree, default_quadrature_degree(degree))
    }

    pub fn with_quadrature(degree: usize, quadrature_degree: usize) -> Self {
        assert!((1..=3).contains(&degree), "element degree must be 1, 2 or 3");
        let lattice = lattice_indices(degree);
        let rf = T::of_usize(degree);
        let nodes = lattice.iter().map(|&[_, j, k]| [T::of_usize(j) / rf, T::of_usize(k) / rf]).collect();
        let quadrature = TriangleRule::with_degree(quadrature_degree);
        let mut element =
            ReferenceElement { degree, lattice, nodes, quadrature, quad_values: Vec::new(), quad_grads: Vec::new() };
        let (values, grads) =
            element.quadrature.points.iter().map(|p| (element.values(*p), element.gradients(*p))).unzip();
        element.quad_values = values;
        element.quad_grads = grads;
        element
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_nodes(&self) -> usize {
        self.lattice.len()
    }

    /// Reference coordinates of the Lagrange nodes.
    pub fn nodes(&self) -> &[[T; 2]] {
        &self.nodes
    }

    pub fn lattice(&self) -> &[[usize; 3]] {
        &self.lattice
    }

    pub fn quadrature(&self) -> &TriangleRule<T> {
        &self.quadrature
    }

    pub fn quad_values(&self, q: usize) -> &[T] {
        &self.quad_values[q]
    }

    pub fn quad_gradients(&self, q: usize) -> &[[T; 2]] {
        &self.quad_grads[q]
    }

    /// Local node indices on edge `e`, ordered from vertex `e` to vertex `e + 1`.
    pub fn edge_nodes(&self, e: usize) -> Vec<usize> {
        let r = self.degree;
        let mut out = Vec::with_capacity(r + 1);
        out.push(e);
        out.extend((0..r - 1).map(|k| 3 + e * (r - 1) + k));
        out.push((e + 1) % 3);
        out
    }

    /// Basis function values at a reference point.
    pub fn values(&self, xi: [T; 2]) -> Vec<T> {
        let mut out = vec![T::zero(); self.num_nodes()];
        self.values_into(xi, &mut out);
        out
    }

    pub fn values_into(&self, xi: [T; 2], out: &mut [T]) {
        let lam = barycentric(xi);
        let tables = lam.map(|l| factor_table(self.degree, l));
        for (n, idx) in self.lattice.iter().enumerate() {
            out[n] = tables[0][idx[0]].0 * tables[1][idx[1]].0 * tables[2][idx[2]].0;
        }
    }

    /// Basis gradients with respect to `(ξ, η)` at a reference point.
    pub fn gradients(&self, xi: [T; 2]) -> Vec<[T; 2]> {
        let mut out = vec![[T::zero(); 2]; self.num_nodes()];
        self.gradients_into(xi, &mut out);
        out
    }

    pub fn gradients_into(&self, xi: [T; 2], out: &mut [[T; 2]]) {
        let lam = barycentric(xi);
        let t = lam.map(|l| factor_table(self.degree, l));
        for (n, idx) in self.lattice.iter().enumerate() {
            let (p1, d1) = t[0][idx[0]];
            let (p2, d2) = t[1][idx[1]];
            let (p3, d3) = t[2][idx[2]];
            // dλ₁/dξ = dλ₁/dη = -1, dλ₂/dξ = 1, dλ₃/dη = 1
            let g1 = d1 * p2 * p3;
            out[n] = [p1 * d2 * p3 - g1, p1 * p2 * d3 - g1];
        }
    }
}

/// Barycentric coordinates `(λ₁, λ₂, λ₃)` of a reference point.
#[inline]
pub fn barycentric<T: Real>(xi: [T; 2]) -> [T; 3] {
    [T::one() - xi[0] - xi[1], xi[0], xi[1]]
}

/// `P_i(λ) = Π_{l<i} (rλ - l)/(l + 1)` and its derivative, for `i = 0..=r`.
fn factor_table<T: Real>(r: usize, lambda: T) -> [(T, T); 4] {
    let rf = T::of_usize(r);
    let mut table = [(T::one(), T::zero()); 4];
    for i in 1..=r {
        let l = T::of_usize(i - 1);
        let scale = T::one() / T::of_usize(i);
        let (p, d) = table[i - 1];
        let f = rf * lambda - l;
        table[i] = (p * f * scale, (d * f + p * rf) * scale);
    }
    table
}

/// Principal lattice multi-indices in the local node order.
fn lattice_indices(r: usize) -> Vec<[usize; 3]> {
    let mut out = vec![[r, 0, 0], [0, r, 0], [0, 0, r]];
    for k in 1..r {
        out.push([r - k, k, 0]);
    }
    for k in 1..r {
        out.push([0, r - k, k]);
    }
    for k in 1..r {
        out.push([k, 0, r - k]);
    }
    for j in 1..r {
        for k in 1..r {
            if j + k < r {
                out.push([r - j - k, j, k]);
            }
        }
    }
    out
}

/// Points `(j/n, k/n)` of the order-`n` principal lattice on the closed triangle.
pub fn principal_lattice<T: Real>(n: usize) -> Vec<[T; 2]> {
    let nf = T::of_usize(n);
    let mut out = Vec::with_capacity((n + 1) * (n + 2) / 2);
    for j in 0..=n {
        for k in 0..=(n - j) {
            out.push([T::of_usize(j) / nf, T::of_usize(k) / nf]);
        }
    }
    out
}

/// `m × m` collapsed sample grid `ξ = i/(m-1)`, `η = (1 - ξ) j/(m-1)` on the closed triangle.
pub fn sample_grid<T: Real>(m: usize) -> Vec<[T; 2]> {
    let d = T::of_usize(m - 1);
    let mut out = Vec::with_capacity(m * m);
    for i in 0..m {
        let xi = T::of_usize(i) / d;
        for j in 0..m {
            out.push([xi, (T::one() - xi) * T::of_usize(j) / d]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_counts() {
        for r in 1..=3 {
            let e = ReferenceElement::<f64>::new(r);
            assert_eq!(e.num_nodes(), (r + 1) * (r + 2) / 2);
            assert_eq!(e.quadrature().degree, 2 * r + 2);
        }
    }

    #[test]
    fn kronecker_property() {
        for r in 1..=3 {
            let e = ReferenceElement::<f64>::new(r);
            for (j, node) in e.nodes().iter().enumerate() {
                for (i, v) in e.values(*node).iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((v - expect).abs() < 1e-13, "r={r} N_{i}(a_{j}) = {v}");
                }
            }
        }
    }

    #[test]
    fn partition_of_unity_at_quadrature_points() {
        for r in 1..=3 {
            let e = ReferenceElement::<f64>::new(r);
            for q in 0..e.quadrature().len() {
                let s: f64 = e.quad_values(q).iter().sum();
                assert!((s - 1.0).abs() < 1e-13);
                let g = e.quad_gradients(q).iter().fold([0.0, 0.0], |a, g| [a[0] + g[0], a[1] + g[1]]);
                assert!(g[0].abs() < 1e-12 && g[1].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let e = ReferenceElement::<f64>::new(3);
        let p = [0.23, 0.41];
        let h = 1e-6;
        let g = e.gradients(p);
        let vxp = e.values([p[0] + h, p[1]]);
        let vxm = e.values([p[0] - h, p[1]]);
        let vyp = e.values([p[0], p[1] + h]);
        let vym = e.values([p[0], p[1] - h]);
        for i in 0..e.num_nodes() {
            assert!((g[i][0] - (vxp[i] - vxm[i]) / (2.0 * h)).abs() < 1e-8);
            assert!((g[i][1] - (vyp[i] - vym[i]) / (2.0 * h)).abs() < 1e-8);
        }
    }

    #[test]
    fn edge_nodes_lie_on_their_edge() {
        for r in 1..=3 {
            let e = ReferenceElement::<f64>::new(r);
            for edge in 0..3 {
                let ids = e.edge_nodes(edge);
                assert_eq!(ids.len(), r + 1);
                for &n in &ids {
                    let lam = barycentric(e.nodes()[n]);
                    // the edge from vertex e to e+1 is where the opposite barycentric vanishes
                    assert!(lam[(edge + 2) % 3].abs() < 1e-15);
                }
                // ordered from vertex `edge` toward vertex `edge + 1`
                let lam_first = barycentric(e.nodes()[ids[1]]);
                assert!(r < 3 || lam_first[edge] > lam_first[(edge + 1) % 3]);
            }
        }
    }

    #[test]
    fn reproduces_polynomials_of_its_degree() {
        for r in 1..=3 {
            let e = ReferenceElement::<f64>::new(r);
            let p = |x: [f64; 2]| {
                0.3 + x[0] - 2.0 * x[1]
                    + if r >= 2 { x[0] * x[1] } else { 0.0 }
                    + if r >= 3 { x[1].powi(3) } else { 0.0 }
            };
            let coeffs: Vec<f64> = e.nodes().iter().map(|n| p(*n)).collect();
            for x in sample_grid::<f64>(7) {
                let v: f64 = e.values(x).iter().zip(&coeffs).map(|(a, b)| a * b).sum();
                assert!((v - p(x)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn single_precision_partition_of_unity() {
        let e = ReferenceElement::<f32>::new(2);
        let s: f32 = e.values([0.2, 0.3]).iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }
}
