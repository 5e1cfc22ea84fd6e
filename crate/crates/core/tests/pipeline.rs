use std::sync::Arc;

use isopar_core::domains::Domain;
use isopar_core::experiments::{parse_csv, run, write_outputs, ExperimentConfig, ExperimentId};
use isopar_core::femcore::{assemble_load, assemble_stiffness, AssemblyMode, FeSpace};
use isopar_core::isogeom::elevate;
use isopar_core::meshgen::{generate, Mesh, MeshConfig};
use isopar_core::meshio;
use isopar_core::operators::solve_poisson;
use isopar_core::Vec2;
use nalgebra::{DMatrix, DVector};

fn space(domain: &Domain, h: f64, r: usize) -> Arc<FeSpace> {
    let mesh = Arc::new(generate(&domain.polygon, h, &MeshConfig::default()).unwrap());
    Arc::new(FeSpace::new(Arc::new(elevate(mesh, domain.polygon.clone(), r).unwrap())))
}

#[test]
fn mesh_text_round_trip_is_exact() {
    let mesh = generate(&Domain::lens().polygon, 0.15, &MeshConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lens.mesh");
    meshio::write_mesh(&mesh, &path).unwrap();
    let back: Mesh = meshio::read_mesh(&path).unwrap();
    assert_eq!(back.vertices, mesh.vertices);
    assert_eq!(back.triangles, mesh.triangles);
    assert_eq!(back.boundary, mesh.boundary);
    assert!(matches!(meshio::from_str("meshv1 2 1 0\n0 0\n1 0\n0 1 2\n"), Err(meshio::MeshIoError::Parse { .. })));
}

#[test]
fn generation_is_deterministic_in_seed() {
    let p = Domain::flower().polygon;
    let a = generate(&p, 0.1, &MeshConfig::default()).unwrap();
    let b = generate(&p, 0.1, &MeshConfig::default()).unwrap();
    assert_eq!(meshio::to_string(&a), meshio::to_string(&b));
}

#[test]
fn poisson_matches_dense_oracle() {
    let domain = Domain::lens();
    let m = domain.exact.unwrap();
    let s = space(&domain, 0.25, 2);
    let (u_h, _) = solve_poisson(&s, m.f).unwrap();
    let a = assemble_stiffness(&s, AssemblyMode::Approx).unwrap();
    let f = assemble_load(&s, m.f).unwrap();
    let free = s.interior_dofs();
    let n = free.len();
    let dense = a.to_dense();
    let k = DMatrix::from_fn(n, n, |i, j| dense[free[i] * a.cols() + free[j]]);
    let rhs = DVector::from_fn(n, |i, _| f[free[i]]);
    let x = k.cholesky().unwrap().solve(&rhs);
    for (i, &d) in free.iter().enumerate() {
        assert!((u_h.coefficients[d] - x[i]).abs() < 1e-9, "dof {d}");
    }
    for &d in s.boundary_dofs() {
        assert_eq!(u_h.coefficients[d], 0.0);
    }
}

#[test]
fn p1_stiffness_matches_cotangent_formula() {
    let s = space(&Domain::disk(), 0.3, 1);
    let a = assemble_stiffness(&s, AssemblyMode::Approx).unwrap();
    let mut oracle = vec![vec![0.0; s.num_dofs()]; s.num_dofs()];
    for t in 0..s.elements().len() {
        let dofs = s.element_dofs(t);
        let p: Vec<Vec2> = dofs.iter().map(|&d| s.coordinates()[d]).collect();
        let area = 0.5 * (p[1] - p[0]).cross(p[2] - p[0]);
        for i in 0..3 {
            for j in 0..3 {
                let ei = p[(i + 2) % 3] - p[(i + 1) % 3];
                let ej = p[(j + 2) % 3] - p[(j + 1) % 3];
                oracle[dofs[i]][dofs[j]] += ei.dot(ej) / (4.0 * area);
            }
        }
    }
    let dense = a.to_dense();
    for i in 0..s.num_dofs() {
        for j in 0..s.num_dofs() {
            assert!((dense[i * a.cols() + j] - oracle[i][j]).abs() < 1e-12, "({i}, {j})");
        }
    }
}

#[test]
fn outputs_are_reproducible() {
    let mut config = ExperimentConfig::new(ExperimentId::Interp, "flower", 2, &[0.4, 0.3, 0.2]);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let table = run(&config).unwrap();
    write_outputs(&table, &config, a.path()).unwrap();
    config.out = Some(b.path().to_path_buf());
    let hash = config.content_hash();
    write_outputs(&run(&config).unwrap(), &config, b.path()).unwrap();
    config.out = None;
    assert_eq!(config.content_hash(), hash);
    for file in ["interp.csv", "interp.dat", "interp.gp"] {
        assert_eq!(std::fs::read(a.path().join(file)).unwrap(), std::fs::read(b.path().join(file)).unwrap(), "{file}");
    }
    let text = std::fs::read_to_string(a.path().join("interp.csv")).unwrap();
    assert!(text.starts_with("# isopar interp schema v1"));
    let (header, rows, footer) = parse_csv(&text).unwrap();
    assert_eq!(header, table.columns);
    assert_eq!(rows.len(), 3);
    for (row, expected) in rows.iter().zip(&table.rows) {
        for (x, y) in row.iter().zip(expected) {
            assert!((x - y).abs() <= 1e-11 * y.abs());
        }
    }
    assert_eq!(footer[0][0], "slope");
}

#[test]
fn invalid_configs_are_rejected() {
    let base = ExperimentConfig::new(ExperimentId::Converge, "disk", 1, &[0.2, 0.1, 0.05]);
    assert!(run(&ExperimentConfig { degree: 4, ..base.clone() }).is_err());
    assert!(run(&ExperimentConfig { hs: vec![0.1, 0.2, 0.05], ..base.clone() }).is_err());
    assert!(run(&ExperimentConfig { domain: "nowhere".into(), ..base.clone() }).is_err());
    assert!(run(&ExperimentConfig { domain: "flower".into(), degree: 3, ..base.clone() }).is_err());
    assert!(ExperimentConfig::from_json(
        r#"{"experiment":"geom","domain":"disk","degree":1,"hs":[0.3,0.2,0.1],"extra":1}"#
    )
    .is_err());
}
