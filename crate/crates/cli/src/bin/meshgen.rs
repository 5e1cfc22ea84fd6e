//! `meshgen`: writes a quasi-uniform triangulation of a domain.

use std::path::PathBuf;

use anyhow::Result;
use clap::Parser;
use isopar_core::experiments::load_domain;
use isopar_core::meshgen::{generate, quality, MeshConfig};
use isopar_core::meshio::write_mesh;

#[derive(Debug, Parser)]
#[command(version, about = "Generate a mesh of a curvilinear polygon")]
struct Args {
    /// `disk`, `lens`, `flower` or a domain description file.
    #[arg(long)]
    domain: String,
    /// Target element size.
    #[arg(long)]
    h: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    let args = Args::parse();
    let domain = load_domain(&args.domain)?;
    let mesh = generate(&domain.polygon, args.h, &MeshConfig { seed: args.seed, ..MeshConfig::default() })?;
    write_mesh(&mesh, &args.out)?;
    let (rho, _) = quality(&mesh);
    eprintln!(
        "wrote {}: {} vertices, {} triangles, {} boundary edges, h = {:.4}, rho = {:.2}",
        args.out.display(),
        mesh.vertices.len(),
        mesh.triangles.len(),
        mesh.boundary.len(),
        mesh.h,
        rho
    );
    Ok(())
}
