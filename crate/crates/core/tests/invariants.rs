use std::sync::{Arc, OnceLock};

use isopar_core::domains::{Domain, ManufacturedSolution};
use isopar_core::femcore::{assemble_stiffness, AssemblyMode, FeSpace};
use isopar_core::isogeom::elevate;
use isopar_core::meshgen::{generate, validate, MeshConfig};
use isopar_core::quadrature::TriangleRule;
use isopar_core::rates::{fit_slope, RateModel};
use isopar_core::sparse::{solve_cg, CgOptions, CsrMatrix};
use isopar_core::{ReferenceElement, Vec2};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn reference_point() -> impl Strategy<Value = [f64; 2]> {
    (0.0..1.0f64, 0.0..1.0f64).prop_map(|(a, b)| if a + b > 1.0 { [1.0 - a, 1.0 - b] } else { [a, b] })
}

fn spaces() -> &'static Vec<(Domain, Arc<FeSpace>)> {
    static SPACES: OnceLock<Vec<(Domain, Arc<FeSpace>)>> = OnceLock::new();
    SPACES.get_or_init(|| {
        let mut out = Vec::new();
        for domain in [Domain::disk(), Domain::lens(), Domain::flower()] {
            for r in 1..=3 {
                let mesh = Arc::new(generate(&domain.polygon, 0.2, &MeshConfig::default()).unwrap());
                let iso = elevate(mesh, domain.polygon.clone(), r).unwrap();
                out.push((domain.clone(), Arc::new(FeSpace::new(Arc::new(iso)))));
            }
        }
        out
    })
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn basis_partition_of_unity_and_nodal(r in 1usize..=3, xi in reference_point()) {
        let e = ReferenceElement::new(r);
        let sum: f64 = e.values(xi).iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        let g = e.gradients(xi).iter().fold([0.0, 0.0], |a, d| [a[0] + d[0], a[1] + d[1]]);
        prop_assert!(g[0].abs() < 1e-10 && g[1].abs() < 1e-10);
        for (j, node) in e.nodes().iter().enumerate() {
            let v = e.values(*node);
            for (i, vi) in v.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                prop_assert!((vi - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quadrature_exact_on_monomials(degree in 1usize..=10, a in 0usize..=10, b in 0usize..=10) {
        prop_assume!(a + b <= degree);
        let rule = TriangleRule::with_degree(degree);
        let value = rule.integrate(|p: [f64; 2]| p[0].powi(a as i32) * p[1].powi(b as i32));
        let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
        prop_assert!((value - exact).abs() < 1e-14, "{value} vs {exact}");
    }

    #[test]
    fn closest_point_consistent(x in -1.5..1.5f64, y in -1.5..1.5f64, k in 0usize..3) {
        let domain = [Domain::disk(), Domain::lens(), Domain::flower()][k].clone();
        let p = Vec2::new(x, y);
        let cp = domain.polygon.closest_boundary(p);
        let sd = domain.polygon.signed_distance(p);
        prop_assert!((cp.distance - sd.abs()).abs() < 1e-9);
        prop_assert!((cp.point - p).norm() - cp.distance < 1e-9);
        prop_assert!((domain.polygon.arc(cp.arc).eval(cp.s) - cp.point).norm() < 1e-9);
        if sd.abs() > 1e-6 {
            prop_assert_eq!(domain.polygon.contains(p), sd < 0.0);
        }
        if k == 0 {
            prop_assert!((cp.distance - (p.norm() - 1.0).abs()).abs() < 1e-9);
        }
    }

    #[test]
    fn element_maps_round_trip_and_conform(k in 0usize..9, pick in any::<prop::sample::Index>(), xi in reference_point(), t in 0.0..1.0f64) {
        let (domain, space) = &spaces()[k];
        let element = pick.get(space.elements());
        let back = element.inverse_map(element.map(xi)).unwrap();
        prop_assert!((back[0] - xi[0]).abs().max((back[1] - xi[1]).abs()) < 1e-10);
        let back = element.inverse_exact(element.exact_map(xi).unwrap()).unwrap();
        prop_assert!((back[0] - xi[0]).abs().max((back[1] - xi[1]).abs()) < 1e-10);
        match element.curved_edge() {
            Some((arc, s_a, s_b)) => {
                let target = domain.polygon.arc(arc).eval(s_a + t * (s_b - s_a));
                prop_assert!((element.exact_map([t, 0.0]).unwrap() - target).norm() < 1e-12);
                for p in [[0.0, t], [1.0 - t, t]] {
                    prop_assert!((element.exact_map(p).unwrap() - element.affine_map(p)).norm() < 1e-12);
                }
            }
            None => prop_assert!((element.exact_map(xi).unwrap() - element.affine_map(xi)).norm() < 1e-14),
        }
    }

    #[test]
    fn cg_matches_dense_factorization(n in 2usize..30, seed in any::<u64>()) {
        let mut state = seed | 1;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let b: Vec<f64> = (0..n).map(|_| next() - 0.5).collect();
        let m = DMatrix::from_fn(n, n, |_, _| next() - 0.5);
        let spd = &m * m.transpose() + DMatrix::identity(n, n) * 0.5;
        let triplets: Vec<_> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (i, j, spd[(i, j)])).collect();
        let a = CsrMatrix::from_triplets(n, n, &triplets);
        let x = solve_cg(&a, &b, CgOptions::default()).unwrap().x;
        let oracle = spd.clone().cholesky().unwrap().solve(&DVector::from_vec(b.clone()));
        let scale = oracle.amax().max(1.0);
        for i in 0..n {
            prop_assert!((x[i] - oracle[i]).abs() < 1e-8 * scale * spd.norm());
        }
    }

    #[test]
    fn fit_recovers_power_law(p in 0.5..5.0f64, c in 0.01..100.0f64) {
        let hs = [0.2f64, 0.1, 0.05, 0.025];
        let e: Vec<f64> = hs.iter().map(|h| c * h.powf(p)).collect();
        let fit = fit_slope(&hs, &e, RateModel::Power).unwrap();
        prop_assert!((fit.slope - p).abs() < 1e-10);
        prop_assert!((fit.intercept - c.ln()).abs() < 1e-9);
    }
}

#[test]
fn stiffness_symmetric_with_constant_kernel() {
    for (_, space) in spaces() {
        for mode in [AssemblyMode::Approx, AssemblyMode::Exact] {
            let a = assemble_stiffness(space, mode).unwrap();
            assert!(a.asymmetry().unwrap() <= 1e-13 * a.max_abs());
            let ones = a.mul_vec(&vec![1.0; space.num_dofs()]);
            assert!(ones.iter().all(|v| v.abs() <= 1e-11 * a.max_abs()));
        }
    }
}

#[test]
fn meshes_are_valid_triangulations() {
    for domain in [Domain::disk(), Domain::lens(), Domain::flower()] {
        for h in [0.2, 0.1, 0.05] {
            let mesh = generate(&domain.polygon, h, &MeshConfig::default()).unwrap();
            let report = validate(&mesh, Some(&domain.polygon), MeshConfig::default().rho_max);
            assert!(report.ok, "{} h={h}: {:?}", domain.name, report.violations);
            assert_eq!(report.euler, 1);
            let area = mesh.area();
            assert!(
                (area - domain.polygon.area()).abs() < 0.1 * h * h * domain.polygon.perimeter(),
                "{} h={h}",
                domain.name
            );
            assert!(mesh.h >= 0.5 * h && mesh.h <= 2.0 * h, "{} h={h} mesh h {}", domain.name, mesh.h);
        }
    }
}

#[test]
fn manufactured_solutions_vanish_and_match_load() {
    let cases = [
        (Domain::disk(), ManufacturedSolution::disk()),
        (Domain::disk(), ManufacturedSolution::disk_quadratic()),
        (Domain::lens(), ManufacturedSolution::lens()),
    ];
    let step = 1e-4;
    for (domain, m) in cases {
        for arc in domain.polygon.arcs() {
            for k in 0..=16 {
                let s = k as f64 / 16.0;
                assert!((m.u)(arc.eval(s)).abs() < 1e-12);
            }
        }
        for p in [Vec2::new(0.1, 0.2), Vec2::new(-0.3, 0.1), Vec2::new(0.0, -0.4)] {
            let u = |dx: f64, dy: f64| (m.u)(p + Vec2::new(dx, dy));
            let lap = (u(step, 0.0) + u(-step, 0.0) + u(0.0, step) + u(0.0, -step) - 4.0 * u(0.0, 0.0)) / (step * step);
            assert!((-lap - (m.f)(p)).abs() < 1e-5, "{}", domain.name);
            let g =
                Vec2::new((u(step, 0.0) - u(-step, 0.0)) / (2.0 * step), (u(0.0, step) - u(0.0, -step)) / (2.0 * step));
            assert!(((m.grad)(p) - g).norm() < 1e-7);
        }
    }
}
