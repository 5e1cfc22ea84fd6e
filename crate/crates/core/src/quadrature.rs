//! Gauss–Legendre rules and collapsed (Duffy) product rules on the reference triangle.

use crate::scalar::Real;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
///
/// Nodes are found by Newton iteration on the Legendre polynomial in double
/// precision and then converted to `T`.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one point");
    let mut nodes = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] -> [0, 1]
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes.into_iter().map(T::lit).collect(), weights.into_iter().map(T::lit).collect())
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let (pn, pn1) = if n == 1 { (x, 1.0) } else { (p1, p0) };
    let d = n as f64 * (x * pn - pn1) / (x * x - 1.0);
    (pn, d)
}

/// Quadrature rule on the reference triangle `{ξ ≥ 0, η ≥ 0, ξ + η ≤ 1}`.
#[derive(Clone, Debug)]
pub struct TriangleRule<T> {
    pub points: Vec<[T; 2]>,
    pub weights: Vec<T>,
    /// Total polynomial degree integrated exactly.
    pub degree: usize,
}

impl<T: Real> TriangleRule<T> {
    /// Collapsed Gauss product rule exact for total degree `degree`.
    ///
    /// With `ξ = u`, `η = v (1 - u)` the integrand picks up a factor `(1 - u)`,
    /// so `u` needs `⌈(d + 2) / 2⌉` points and `v` needs `⌈(d + 1) / 2⌉`.
    /// All weights are positive and all points are strictly interior.
    pub fn with_degree(degree: usize) -> Self {
        let nu = (degree + 2).div_ceil(2).max(1);
        let nv = (degree + 1).div_ceil(2).max(1);
        let (xu, wu) = gauss_legendre::<f64>(nu);
        let (xv, wv) = gauss_legendre::<f64>(nv);
        let mut points = Vec::with_capacity(nu * nv);
        let mut weights = Vec::with_capacity(nu * nv);
        for (u, wu) in xu.iter().zip(&wu) {
            for (v, wv) in xv.iter().zip(&wv) {
                points.push([T::lit(*u), T::lit(v * (1.0 - u))]);
                weights.push(T::lit(wu * wv * (1.0 - u)));
            }
        }
        TriangleRule { points, weights, degree }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integrates `f(ξ, η)` over the reference triangle.
    pub fn integrate(&self, mut f: impl FnMut([T; 2]) -> T) -> T {
        self.points.iter().zip(&self.weights).map(|(p, w)| f(*p) * *w).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // ∫_T ξ^a η^b = a! b! / (a + b + 2)!
    fn monomial_integral(a: u32, b: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        fact(a) * fact(b) / fact(a + b + 2)
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..12 {
            let (x, w) = gauss_legendre::<f64>(n);
            for k in 0..(2 * n) as i32 {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
                assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn triangle_rule_exactness() {
        for degree in 0..=12usize {
            let rule = TriangleRule::<f64>::with_degree(degree);
            assert!(rule.weights.iter().all(|w| *w > 0.0));
            let total: f64 = rule.weights.iter().sum();
            assert!((total - 0.5).abs() < 1e-14);
            for a in 0..=degree as u32 {
                for b in 0..=(degree as u32 - a) {
                    let q = rule.integrate(|p| p[0].powi(a as i32) * p[1].powi(b as i32));
                    assert!((q - monomial_integral(a, b)).abs() < 1e-14, "degree {degree}: x^{a} y^{b}");
                }
            }
        }
    }

    #[test]
    fn single_precision_rule() {
        let rule = TriangleRule::<f32>::with_degree(4);
        let total: f32 = rule.weights.iter().sum();
        assert!((total - 0.5).abs() < 1e-6);
    }
}
