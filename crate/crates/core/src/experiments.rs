//! Experiment drivers: h-sweeps producing rate tables, and their CSV, JSON,
//! manifest and gnuplot outputs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domains::{Domain, DomainError};
use crate::femcore::{assemble_stiffness, AssemblyMode, FeSpace, FemError};
use crate::flowmap::{build_field_with, semigroup_defect, verify_sandwich, FlowConfig, FlowError};
use crate::geometry::CurvilinearPolygon;
use crate::isogeom::{elevate_with, geometry_maxima, BlendKind, ElevateOptions, GeomError, IsoMesh};
use crate::meshgen::{generate, Mesh, MeshConfig, MeshError};
use crate::operators::{
    boundary_sup, interpolate, linf_error, solve_poisson, sup_norm, DiscreteFunction, ErrorConvention, ExactLocator,
    HarmonicSolver, InterpolationMode,
};
use crate::rates::{closest_fit, fit_slope, log_factor, RateModel, SlopeFit};
use crate::sparse::CsrMatrix;
use crate::Vec2;

/// Version tag of the CSV and JSON layouts.
pub const SCHEMA_VERSION: u32 = 1;
/// Boundary dofs carrying a nodal delta in the maximum-principle sweep.
pub const DELTA_FAMILY: usize = 32;

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    Wmp,
    Converge,
    Geom,
    Interp,
    Matident,
    Flow,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 6] = [
        ExperimentId::Wmp,
        ExperimentId::Converge,
        ExperimentId::Geom,
        ExperimentId::Interp,
        ExperimentId::Matident,
        ExperimentId::Flow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Wmp => "wmp",
            ExperimentId::Converge => "converge",
            ExperimentId::Geom => "geom",
            ExperimentId::Interp => "interp",
            ExperimentId::Matident => "matident",
            ExperimentId::Flow => "flow",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = ExpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| ExpError::Config(format!("unknown experiment '{s}'")))
    }
}

fn default_seed() -> u64 {
    42
}

fn default_ts() -> Vec<f64> {
    vec![0.0125, 0.025, 0.05]
}

/// One experiment run; the JSON form is accepted as a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub domain: String,
    pub degree: usize,
    /// Strictly decreasing mesh sizes.
    #[serde(default)]
    pub hs: Vec<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub quadrature_degree: Option<usize>,
    #[serde(default)]
    pub blend: BlendKind,
    /// Flow times for the `flow` experiment.
    #[serde(default = "default_ts")]
    pub ts: Vec<f64>,
    /// Write stiffness matrices in coordinate format next to the tables.
    #[serde(default)]
    pub dump_matrix: bool,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentId, domain: &str, degree: usize, hs: &[f64]) -> Self {
        ExperimentConfig {
            experiment,
            domain: domain.to_string(),
            degree,
            hs: hs.to_vec(),
            seed: default_seed(),
            out: None,
            quadrature_degree: None,
            blend: BlendKind::default(),
            ts: default_ts(),
            dump_matrix: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ExpError> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ExpError> {
        if !(1..=3).contains(&self.degree) {
            return Err(ExpError::Config(format!("degree must be 1, 2 or 3, got {}", self.degree)));
        }
        if self.experiment == ExperimentId::Flow {
            if self.ts.is_empty() || self.ts.iter().any(|&t| !(0.0..=FlowConfig::default().delta).contains(&t)) {
                return Err(ExpError::Config("flow times must lie in [0, 0.05]".into()));
            }
            return Ok(());
        }
        if self.hs.len() < 3 {
            return Err(ExpError::Config("need at least three mesh sizes for a slope fit".into()));
        }
        if self.hs.iter().any(|&h| !(h > 0.0 && h.is_finite())) || self.hs.windows(2).any(|w| w[1] >= w[0]) {
            return Err(ExpError::Config("mesh sizes must be positive and strictly decreasing".into()));
        }
        if let Some(q) = self.quadrature_degree {
            if q < 2 * self.degree {
                return Err(ExpError::Config(format!("quadrature degree {q} is below 2r = {}", 2 * self.degree)));
            }
        }
        Ok(())
    }

    /// Git-style content hash (`sha256("blob <len>\0" + canonical JSON)`).
    pub fn content_hash(&self) -> String {
        let mut echo = self.clone();
        echo.out = None;
        git_blob_hash(serde_json::to_string(&echo).expect("config serializes").as_bytes())
    }
}

/// A fitted log–log slope of one column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnFit {
    pub column: String,
    #[serde(flatten)]
    pub fit: SlopeFit,
}

/// Table of an h-sweep with fitted slopes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub schema: u32,
    pub experiment: ExperimentId,
    pub domain: String,
    pub degree: usize,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub fits: Vec<ColumnFit>,
    /// Scalar summaries (fitted constants, stability ratios, …).
    pub summary: BTreeMap<String, f64>,
    /// Rows that failed, as `(row index, message)`.
    pub failures: Vec<(usize, String)>,
}

impl RateTable {
    fn new(config: &ExperimentConfig, columns: &[&str]) -> Self {
        RateTable {
            schema: SCHEMA_VERSION,
            experiment: config.experiment,
            domain: config.domain.clone(),
            degree: config.degree,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            fits: Vec::new(),
            summary: BTreeMap::new(),
            failures: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn fit(&self, column: &str, model: RateModel) -> Option<&SlopeFit> {
        self.fits.iter().find(|f| f.column == column && f.fit.model == model).map(|f| &f.fit)
    }

    /// Of the fits of `column`, the one closest to `expected`.
    pub fn best_fit(&self, column: &str, expected: f64) -> Option<&SlopeFit> {
        let fits: Vec<SlopeFit> = self.fits.iter().filter(|f| f.column == column).map(|f| f.fit.clone()).collect();
        let best = closest_fit(&fits, expected)?.clone();
        self.fits.iter().find(|f| f.column == column && f.fit == best).map(|f| &f.fit)
    }

    fn push_fit(&mut self, x: &str, column: &str, model: RateModel) {
        if let (Some(xs), Some(ys)) = (self.column(x), self.column(column)) {
            if let Some(fit) = fit_slope(&xs, &ys, model) {
                self.fits.push(ColumnFit { column: column.into(), fit });
            }
        }
    }

    fn push_rows(&mut self, rows: Vec<Result<Vec<f64>, ExpError>>) {
        let width = self.columns.len();
        for (i, row) in rows.into_iter().enumerate() {
            match row {
                Ok(r) => self.rows.push(r),
                Err(e) => {
                    self.failures.push((i, e.to_string()));
                    self.rows.push(vec![f64::NAN; width]);
                }
            }
        }
    }

    /// CSV text: a schema comment, the header, the rows and one footer row of
    /// slopes per fitted model.
    pub fn to_csv(&self) -> Result<String, ExpError> {
        let mut out = format!("# isopar {} schema v{}\n", self.experiment, self.schema);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v:.12e}")))?;
        }
        for model in [RateModel::Power, RateModel::PowerLog] {
            if !self.fits.iter().any(|f| f.fit.model == model) {
                continue;
            }
            let label = match model {
                RateModel::Power => "slope",
                RateModel::PowerLog => "slope_log",
            };
            let record: Vec<String> = self
                .columns
                .iter()
                .enumerate()
                .map(|(k, c)| match (k, self.fit(c, model)) {
                    (0, _) => label.to_string(),
                    (_, Some(f)) => format!("{:.6}", f.slope),
                    _ => String::new(),
                })
                .collect();
            w.write_record(&record)?;
        }
        let bytes = w.into_inner().map_err(|e| ExpError::Io(e.into_error()))?;
        out.push_str(&String::from_utf8(bytes).expect("csv output is UTF-8"));
        Ok(out)
    }

    /// Whitespace-separated data for gnuplot.
    pub fn to_dat(&self) -> String {
        let mut out = format!("# {}\n", self.columns.join(" "));
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    /// gnuplot script plotting every fitted column against the first one.
    pub fn to_gnuplot(&self, dat_name: &str) -> String {
        let x = &self.columns[0];
        let mut script = format!(
            "set terminal pngcairo size 800,600\nset output '{}.png'\nset logscale xy\nset key left top\nset xlabel '{x}'\nset title '{} on {} (r = {})'\n",
            self.experiment, self.experiment, self.domain, self.degree
        );
        let mut plots = Vec::new();
        for (k, c) in self.columns.iter().enumerate().skip(1) {
            if let Some(f) = self.fit(c, RateModel::Power) {
                plots.push(format!(
                    "'{dat_name}' using 1:{} with linespoints title '{c} (slope {:.2})'",
                    k + 1,
                    f.slope
                ));
            }
        }
        if plots.is_empty() {
            plots.push(format!("'{dat_name}' using 1:2 with linespoints title '{}'", self.columns.get(1).unwrap_or(x)));
        }
        script.push_str("plot ");
        script.push_str(&plots.join(", \\\n     "));
        script.push('\n');
        script
    }
}

/// Loads a stock domain by name or a domain description file by path.
pub fn load_domain(name: &str) -> Result<Domain, ExpError> {
    match Domain::by_name(name) {
        Ok(d) => Ok(d),
        Err(DomainError::Unknown(_)) if Path::new(name).is_file() => Ok(Domain::from_file(name)?),
        Err(e) => Err(e.into()),
    }
}

fn mesh_config(config: &ExperimentConfig) -> MeshConfig {
    MeshConfig { seed: config.seed, ..MeshConfig::default() }
}

fn elevate_options(config: &ExperimentConfig) -> ElevateOptions {
    ElevateOptions { blend: config.blend, quadrature_degree: config.quadrature_degree }
}

fn build_iso(
    polygon: &Arc<CurvilinearPolygon>,
    h: f64,
    degree: usize,
    config: &ExperimentConfig,
) -> Result<IsoMesh, ExpError> {
    let mesh: Mesh = generate(polygon, h, &mesh_config(config))?;
    Ok(elevate_with(Arc::new(mesh), polygon.clone(), degree, elevate_options(config))?)
}

fn build_space(
    polygon: &Arc<CurvilinearPolygon>,
    h: f64,
    degree: usize,
    config: &ExperimentConfig,
) -> Result<Arc<FeSpace>, ExpError> {
    Ok(Arc::new(FeSpace::new(Arc::new(build_iso(polygon, h, degree, config)?))))
}

/// Smooth test function vanishing on the unit circle.
pub fn smooth_test_function(p: Vec2) -> f64 {
    p.x.sin() * p.y.cos() * (1.0 - p.norm_squared())
}

pub fn quadratic_test_function(p: Vec2) -> f64 {
    p.norm_squared()
}

/// `max |a_ij - b_ij| / max_k |a_ik|` over the union of both patterns.
pub fn max_relative_difference(a: &CsrMatrix<f64>, b: &CsrMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..a.rows() {
        let scale = a.row(i).map(|(_, v)| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for (j, v) in a.row(i) {
            worst = worst.max((v - b.get(i, j)).abs() / scale);
        }
        for (j, v) in b.row(i) {
            worst = worst.max((v - a.get(i, j)).abs() / scale);
        }
    }
    worst
}

/// Outputs requested by the caller.
#[derive(Clone, Debug, Default)]
pub struct RunContext {
    pub out: Option<PathBuf>,
    pub dump_matrix: bool,
}

impl RunContext {
    fn dump(&self, name: &str, matrix: &CsrMatrix<f64>) -> Result<(), ExpError> {
        if let (true, Some(dir)) = (self.dump_matrix, &self.out) {
            std::fs::create_dir_all(dir)?;
            let file = std::fs::File::create(dir.join(name))?;
            matrix.write_coordinate(std::io::BufWriter::new(file))?;
        }
        Ok(())
    }
}

/// `max |Φ_h − Id|`, `max ‖∇Φ_h − I‖`, `max ‖A_h − I‖` and the boundary distance per h.
pub fn run_geom(config: &ExperimentConfig) -> Result<RateTable, ExpError> {
    let domain = load_domain(&config.domain)?;
    let mut table = RateTable::new(config, &["h", "mesh_h", "phi_err", "grad_phi_err", "a_err", "bdry_dist"]);
    let rows: Vec<_> = config
        .hs
        .par_iter()
        .map(|&h| {
            let iso = build_iso(&domain.polygon, h, config.degree, config)?;
            let m = geometry_maxima(&iso)?;
            Ok(vec![h, iso.mesh.h, m.phi_err, m.grad_phi_err, m.a_err, m.bdry_dist])
        })
        .collect();
    table.push_rows(rows);
    for c in ["phi_err", "grad_phi_err", "a_err", "bdry_dist"] {
        table.push_fit("h", c, RateModel::Power);
    }
    Ok(table)
}

/// `‖g − Ǐ_h g‖_{L∞(Ω)}` for the quadratic and the smooth test function.
pub fn run_interp(config: &ExperimentConfig) -> Result<RateTable, ExpError> {
    let domain = load_domain(&config.domain)?;
    let mut table = RateTable::new(config, &["h", "mesh_h", "dofs", "quadratic_err", "smooth_err"]);
    let rows: Vec<_> = config
        .hs
        .par_iter()
        .map(|&h| {
            let space = build_space(&domain.polygon, h, config.degree, config)?;
            let err = |g: fn(Vec2) -> f64| {
                linf_error(&interpolate(&space, g, InterpolationMode::OnExact), g, ErrorConvention::OmegaSampled)
            };
            Ok(vec![h, space.h(), space.num_dofs() as f64, err(quadratic_test_function), err(smooth_test_function)])
        })
        .collect();
    table.push_rows(rows);
    table.push_fit("h", "quadratic_err", RateModel::Power);
    table.push_fit("h", "smooth_err", RateModel::Power);
    Ok(table)
}

/// Entrywise relative difference between approx- and exact-mode stiffness.
pub fn run_matident(config: &ExperimentConfig, ctx: &RunContext) -> Result<RateTable, ExpError> {
    let domain = load_domain(&config.domain)?;
    let mut table = RateTable::new(config, &["h", "mesh_h", "dofs", "nnz", "max_rel_diff"]);
    let mut rows = Vec::new();
    for (k, &h) in config.hs.iter().enumerate() {
        rows.push((|| {
            let space = build_space(&domain.polygon, h, config.degree, config)?;
            let a = assemble_stiffness(&space, AssemblyMode::Approx)?;
            let b = assemble_stiffness(&space, AssemblyMode::Exact)?;
            ctx.dump(&format!("matident_{k}_approx.txt"), &a)?;
            ctx.dump(&format!("matident_{k}_exact.txt"), &b)?;
            Ok(vec![h, space.h(), space.num_dofs() as f64, a.nnz() as f64, max_relative_difference(&a, &b)])
        })());
    }
    table.push_rows(rows);
    let worst = table.column("max_rel_diff").unwrap_or_default().into_iter().fold(0.0, f64::max);
    table.summary.insert("max_rel_diff".into(), worst);
    Ok(table)
}

/// Boundary dofs ordered along the boundary.
fn boundary_order(space: &FeSpace, polygon: &CurvilinearPolygon) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = space
        .boundary_dofs()
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let cp = polygon.closest_boundary(space.coordinates()[d]);
            (polygon.boundary_coordinate(cp.arc, cp.s), k)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    keyed.into_iter().map(|(_, k)| k).collect()
}

/// Maximum-principle ratios `‖u_h‖_{L∞(Ω_h)} / ‖u_h‖_{L∞(∂Ω_h)}` for constant,
/// nodal-delta and oscillating boundary data.
pub fn run_wmp(config: &ExperimentConfig, ctx: &RunContext) -> Result<RateTable, ExpError> {
    let domain = load_domain(&config.domain)?;
    let centroid = domain.polygon.centroid();
    let mut table = RateTable::new(
        config,
        &["h", "mesh_h", "dofs", "constant_ratio", "delta_ratio", "sine_ratio", "max_ratio", "max_iterations"],
    );
    let mut rows = Vec::new();
    for (k, &h) in config.hs.iter().enumerate() {
        rows.push((|| {
            let space = build_space(&domain.polygon, h, config.degree, config)?;
            let solver = HarmonicSolver::new(space.clone())?;
            ctx.dump(&format!("wmp_{k}_stiffness.txt"), solver.matrix())?;
            let nb = space.boundary_dofs().len();
            let ratio = |u: &DiscreteFunction| sup_norm(u) / boundary_sup(u);
            let (constant, s0) = solver.solve(&vec![1.0; nb], false)?;
            let order = boundary_order(&space, &domain.polygon);
            let picks: Vec<usize> = (0..DELTA_FAMILY.min(nb)).map(|j| order[j * nb / DELTA_FAMILY.min(nb)]).collect();
            let deltas: Vec<(f64, usize)> = picks
                .par_iter()
                .map(|&j| {
                    let mut g = vec![0.0; nb];
                    g[j] = 1.0;
                    let (u, s) = solver.solve(&g, false)?;
                    Ok((ratio(&u), s.iterations))
                })
                .collect::<Result<_, FemError>>()?;
            let sine: Vec<f64> = space
                .boundary_dofs()
                .iter()
                .map(|&d| {
                    let p = space.coordinates()[d] - centroid;
                    (7.0 * p.y.atan2(p.x)).sin()
                })
                .collect();
            let (u_sine, s_sine) = solver.solve(&sine, false)?;
            let delta_ratio = deltas.iter().map(|d| d.0).fold(0.0, f64::max);
            let sine_ratio = ratio(&u_sine);
            let iterations = deltas.iter().map(|d| d.1).chain([s0.iterations, s_sine.iterations]).max().unwrap_or(0);
            Ok(vec![
                h,
                space.h(),
                space.num_dofs() as f64,
                ratio(&constant),
                delta_ratio,
                sine_ratio,
                delta_ratio.max(sine_ratio),
                iterations as f64,
            ])
        })());
    }
    table.push_rows(rows);
    table.push_fit("h", "max_ratio", RateModel::Power);
    for c in ["delta_ratio", "max_ratio"] {
        let v: Vec<f64> = table.column(c).unwrap_or_default().into_iter().filter(|v| v.is_finite()).collect();
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        table.summary.insert(format!("{c}_stability"), hi / lo);
    }
    let control = table.column("constant_ratio").unwrap_or_default();
    table.summary.insert("constant_deviation".into(), control.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max));
    Ok(table)
}

/// Reference solution on a finer, higher-degree mesh for domains without a closed form.
struct ReferenceSolution {
    locator: ExactLocator,
}

impl ReferenceSolution {
    fn build(domain: &Domain, config: &ExperimentConfig) -> Result<(Self, f64, usize), ExpError> {
        let degree = config.degree + 1;
        if degree > 3 {
            return Err(ExpError::Config(format!(
                "the reference-solution protocol supports degree ≤ 2 (reference degree {degree} unavailable)"
            )));
        }
        let h_ref = config.hs.iter().copied().fold(f64::INFINITY, f64::min) / 4.0;
        let ref_config = ExperimentConfig { quadrature_degree: None, ..config.clone() };
        let space = build_space(&domain.polygon, h_ref, degree, &ref_config)?;
        let (u, _) = solve_poisson(&space, domain.load)?;
        Ok((ReferenceSolution { locator: ExactLocator::new(u) }, h_ref, degree))
    }
}

/// L∞ errors of the Poisson solve against a closed form or a reference solution.
pub fn run_converge(config: &ExperimentConfig, ctx: &RunContext) -> Result<RateTable, ExpError> {
    let domain = load_domain(&config.domain)?;
    let r = config.degree;
    let mut table = RateTable::new(
        config,
        &["h", "mesh_h", "dofs", "linf_err", "linf_err_omega_h", "interp_err", "iterations", "residual"],
    );
    let reference = match domain.exact {
        Some(_) => None,
        None => Some(ReferenceSolution::build(&domain, config)?),
    };
    let u: Box<dyn Fn(Vec2) -> f64 + Sync> = match (&domain.exact, &reference) {
        (Some(m), _) => Box::new(m.u),
        (None, Some((rs, _, _))) => Box::new(|p| rs.locator.eval(p)),
        (None, None) => unreachable!(),
    };
    let f = domain.exact.map(|m| m.f).unwrap_or(domain.load);
    let mut rows = Vec::new();
    for (k, &h) in config.hs.iter().enumerate() {
        rows.push((|| {
            let space = build_space(&domain.polygon, h, r, config)?;
            if ctx.dump_matrix {
                ctx.dump(&format!("converge_{k}_stiffness.txt"), &assemble_stiffness(&space, AssemblyMode::Approx)?)?;
            }
            let (u_h, stats) = solve_poisson(&space, f)?;
            let interp = interpolate(&space, &u, InterpolationMode::OnExact);
            Ok(vec![
                h,
                space.h(),
                space.num_dofs() as f64,
                linf_error(&u_h, &u, ErrorConvention::OmegaSampled),
                linf_error(&u_h, &u, ErrorConvention::OmegaHSampled),
                linf_error(&interp, &u, ErrorConvention::OmegaSampled),
                stats.iterations as f64,
                stats.residual,
            ])
        })());
    }
    table.push_rows(rows);
    table.push_fit("h", "linf_err", RateModel::Power);
    if r == 1 {
        table.push_fit("h", "linf_err", RateModel::PowerLog);
    }
    table.push_fit("h", "interp_err", RateModel::Power);
    let ell = |h: f64| if r == 1 { log_factor(h) } else { 1.0 };
    let constant =
        table.rows.iter().map(|row| row[3] / (ell(row[0]) * row[5] + row[0].powi(r as i32 + 1))).fold(0.0, f64::max);
    table.summary.insert("fitted_constant".into(), constant);
    if let Some(best) = table.best_fit("linf_err", (r + 1) as f64).cloned() {
        table.summary.insert("best_slope".into(), best.slope);
        table.summary.insert("best_slope_is_log".into(), (best.model == RateModel::PowerLog) as u8 as f64);
    }
    if let Some((_, h_ref, degree)) = &reference {
        table.summary.insert("reference_h".into(), *h_ref);
        table.summary.insert("reference_degree".into(), *degree as f64);
    }
    Ok(table)
}

/// Sandwich check of the outward flow at the configured times.
pub fn run_flow(config: &ExperimentConfig) -> Result<RateTable, ExpError> {
    let domain = load_domain(&config.domain)?;
    let flow_config = FlowConfig::default();
    let field = build_field_with(domain.polygon.clone(), &flow_config)?;
    let report = verify_sandwich(&field, &config.ts, &flow_config);
    let mut table = RateTable::new(config, &["t", "min_dist", "max_dist", "lambda", "min_det"]);
    for row in &report.rows {
        table.rows.push(vec![row.t, row.min_dist, row.max_dist, row.lambda.unwrap_or(f64::NAN), row.min_det]);
    }
    let t_max = config.ts.iter().copied().fold(0.0, f64::max);
    let defect = if t_max > 0.0 { semigroup_defect(&field, t_max, 100, flow_config.steps, config.seed) } else { 0.0 };
    table.summary.insert("lambda".into(), report.lambda);
    table.summary.insert("min_det".into(), report.min_det);
    table.summary.insert("normal_margin".into(), report.normal_margin);
    table.summary.insert("monotone".into(), report.monotone as u8 as f64);
    table.summary.insert("semigroup_defect".into(), defect);
    table.summary.insert("collar".into(), field.w);
    table.summary.insert("inner".into(), field.w0);
    Ok(table)
}

/// Validates the config and dispatches to the experiment driver.
pub fn run(config: &ExperimentConfig) -> Result<RateTable, ExpError> {
    config.validate()?;
    let ctx = RunContext { out: config.out.clone(), dump_matrix: config.dump_matrix };
    match config.experiment {
        ExperimentId::Wmp => run_wmp(config, &ctx),
        ExperimentId::Converge => run_converge(config, &ctx),
        ExperimentId::Geom => run_geom(config),
        ExperimentId::Interp => run_interp(config),
        ExperimentId::Matident => run_matident(config, &ctx),
        ExperimentId::Flow => run_flow(config),
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema: u32,
    version: &'static str,
    experiment: ExperimentId,
    config: &'a ExperimentConfig,
    input_hash: String,
    seed: u64,
    files: BTreeMap<String, String>,
}

/// SHA-256 of a git blob object holding `bytes`.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("blob {}\0", bytes.len()).as_bytes());
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `<exp>.csv`, `<exp>.json`, `<exp>.dat`, `<exp>.gp` and `manifest.json`
/// into `dir`; returns the written paths.
pub fn write_outputs(table: &RateTable, config: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>, ExpError> {
    std::fs::create_dir_all(dir)?;
    let name = config.experiment.name();
    #[derive(Serialize)]
    struct Report<'a> {
        config: &'a ExperimentConfig,
        table: &'a RateTable,
    }
    let dat = format!("{name}.dat");
    let files = [
        (format!("{name}.csv"), table.to_csv()?),
        (format!("{name}.json"), serde_json::to_string_pretty(&Report { config, table })?),
        (dat.clone(), table.to_dat()),
        (format!("{name}.gp"), table.to_gnuplot(&dat)),
    ];
    let mut written = Vec::new();
    let mut hashes = BTreeMap::new();
    for (file, text) in &files {
        let path = dir.join(file);
        std::fs::write(&path, text)?;
        hashes.insert(file.clone(), sha256_hex(text.as_bytes()));
        written.push(path);
    }
    let manifest = Manifest {
        schema: SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION"),
        experiment: config.experiment,
        config,
        input_hash: config.content_hash(),
        seed: config.seed,
        files: hashes,
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    written.push(path);
    Ok(written)
}

/// Header, numeric rows and footer rows of a parsed table.
pub type ParsedCsv = (Vec<String>, Vec<Vec<f64>>, Vec<Vec<String>>);

/// Parses the CSV written by [`RateTable::to_csv`] into header, data rows and footer rows.
pub fn parse_csv(text: &str) -> Result<ParsedCsv, ExpError> {
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(body.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    let mut footer = Vec::new();
    for record in reader.records() {
        let record = record?;
        let fields: Vec<String> = record.iter().map(str::to_string).collect();
        if fields.first().is_some_and(|f| f.starts_with("slope")) {
            footer.push(fields);
        } else {
            let parsed = fields
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| ExpError::Config(format!("bad number '{f}' in table"))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(parsed);
        }
    }
    Ok((header, rows, footer))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::new(ExperimentId::Geom, "disk", 2, &[0.2, 0.1, 0.05]);
        assert!(c.validate().is_ok());
        c.hs = vec![0.2, 0.1];
        assert!(c.validate().is_err());
        c.hs = vec![0.2, 0.1, 0.1];
        assert!(c.validate().is_err());
        c.hs = vec![0.2, 0.1, 0.05];
        c.degree = 4;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let text = r#"{"experiment": "interp", "domain": "lens", "degree": 1, "hs": [0.4, 0.2, 0.1]}"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(c.seed, 42);
        assert_eq!(c.experiment, ExperimentId::Interp);
        let back = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.content_hash(), c.content_hash());
        assert!(ExperimentConfig::from_json(r#"{"experiment": "geom", "domain": "disk", "degree": 1, "bogus": 1}"#)
            .is_err());
    }

    #[test]
    fn git_style_hash() {
        // `printf hello | git hash-object --stdin` in a sha256 repository
        assert_eq!(git_blob_hash(b"hello"), "8aec4e4876f854f688d0ebfc8f37598f38e5fd6903cccc850ca36591175aeb60");
    }

    #[test]
    fn csv_round_trip() {
        let c = ExperimentConfig::new(ExperimentId::Interp, "disk", 1, &[0.4, 0.2, 0.1]);
        let table = run(&c).unwrap();
        let (header, rows, footer) = parse_csv(&table.to_csv().unwrap()).unwrap();
        assert_eq!(header, table.columns);
        assert_eq!(rows.len(), 3);
        assert_eq!(footer.len(), 1);
        for (a, b) in rows.iter().flatten().zip(table.rows.iter().flatten()) {
            assert!((a - b).abs() <= 1e-11 * b.abs());
        }
    }

    #[test]
    fn relative_difference_of_equal_matrices() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (1, 1, 1.0)]);
        let b = CsrMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (1, 1, 1.0), (1, 0, 0.5)]);
        assert_eq!(max_relative_difference(&a, &a), 0.0);
        assert_eq!(max_relative_difference(&a, &b), 0.5);
    }
}
