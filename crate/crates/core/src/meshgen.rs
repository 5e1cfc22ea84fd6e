//! Quasi-uniform straight triangulations of curvilinear polygons.
//!
//! Boundary vertices are placed at equal arc-length spacing on every arc
//! (corners are always vertices), interior vertices come from a jittered
//! triangular lattice, and the two sets are joined by a constrained Delaunay
//! triangulation of the boundary polyline. Triangles owning two boundary
//! edges are split, then interior vertices are Laplace-smoothed.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};
use thiserror::Error;

use crate::geometry::{CurvilinearPolygon, StripIndex};
use crate::Vec2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("target size {h_target} must be below half the domain diameter {diameter}")]
    Precondition { h_target: f64, diameter: f64 },
    #[error("mesh quality ratio {ratio:.3} exceeds {limit} (worst triangle {triangle})")]
    Quality { ratio: f64, limit: f64, triangle: usize },
    #[error("mesh size {h} outside [{lo}, {hi}]")]
    SizeOutOfRange { h: f64, lo: f64, hi: f64 },
    #[error("triangulation failed: {0}")]
    Triangulation(String),
}

/// Generation parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeshConfig {
    /// Upper bound on (max diameter) / (min inradius).
    pub rho_max: f64,
    pub seed: u64,
    pub smoothing_sweeps: usize,
    /// Lattice jitter amplitude as a fraction of the target size.
    pub jitter: f64,
    /// Minimum distance of lattice points to the boundary, as a fraction of the target size.
    pub clearance: f64,
    /// Seed a row of interior points one triangle height inside the boundary.
    pub boundary_layer: bool,
    /// Triangulate-split-smooth passes; later passes re-triangulate the smoothed vertices.
    pub rounds: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            rho_max: 8.0,
            seed: 42,
            smoothing_sweeps: 10,
            jitter: 0.1,
            clearance: 0.55,
            boundary_layer: true,
            rounds: 2,
        }
    }
}

/// Triangle edge bound to a boundary arc. Local edge `e` of triangle
/// `[a, b, c]` runs from vertex `e` to vertex `e + 1 mod 3`; `s_a`/`s_b`
/// are the arc parameters of those two endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEdge {
    pub triangle: usize,
    pub local_edge: usize,
    pub arc: usize,
    pub s_a: f64,
    pub s_b: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec2>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<BoundaryEdge>,
    /// Maximum triangle diameter.
    pub h: f64,
}

impl Mesh {
    pub fn new(vertices: Vec<Vec2>, triangles: Vec<[usize; 3]>, boundary: Vec<BoundaryEdge>) -> Self {
        let mut mesh = Mesh { vertices, triangles, boundary, h: 0.0 };
        mesh.h = mesh.triangles.iter().map(|t| mesh.diameter_of(t)).fold(0.0, f64::max);
        mesh
    }

    pub fn corners(&self, t: usize) -> [Vec2; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * (b - a).cross(c - a)
    }

    fn diameter_of(&self, t: &[usize; 3]) -> f64 {
        let [a, b, c] = t.map(|v| self.vertices[v]);
        a.distance(b).max(b.distance(c)).max(c.distance(a))
    }

    pub fn diameter(&self, t: usize) -> f64 {
        self.diameter_of(&self.triangles[t])
    }

    pub fn inradius(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        let perimeter = a.distance(b) + b.distance(c) + c.distance(a);
        2.0 * self.signed_area(t).abs() / perimeter
    }

    /// Unique edges as sorted vertex pairs, in first-encounter order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for t in &self.triangles {
            for e in 0..3 {
                let key = sorted_pair(t[e], t[(e + 1) % 3]);
                if seen.insert(key) {
                    out.push(key);
                }
            }
        }
        out
    }

    /// Vertices lying on a boundary edge.
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut flags = vec![false; self.vertices.len()];
        for b in &self.boundary {
            let t = self.triangles[b.triangle];
            flags[t[b.local_edge]] = true;
            flags[t[(b.local_edge + 1) % 3]] = true;
        }
        flags
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }
}

fn sorted_pair(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// A detected invariant violation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Violation {
    NonPositiveArea { triangle: usize, area: f64 },
    EndpointMismatch { edge: usize, error: f64 },
    MultipleBoundaryEdges { triangle: usize, count: usize },
    NonConforming { edge: (usize, usize), triangles: usize },
    MissingCorner { corner: usize },
    Quality { ratio: f64, triangle: usize },
}

#[derive(Clone, Debug, Serialize)]
pub struct MeshReport {
    pub ok: bool,
    pub min_angle_deg: f64,
    pub quality_ratio: f64,
    pub h: f64,
    pub vertices: usize,
    pub triangles: usize,
    pub edges: usize,
    pub boundary_edges: usize,
    /// `V - E + T`; 1 for a triangulated simply connected domain.
    pub euler: i64,
    pub violations: Vec<Violation>,
}

/// Checks every mesh invariant; violations are collected, never thrown.
pub fn validate(mesh: &Mesh, polygon: Option<&CurvilinearPolygon>, rho_max: f64) -> MeshReport {
    let mut violations = Vec::new();
    let mut min_angle = f64::INFINITY;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.signed_area(t);
        if area <= 0.0 {
            violations.push(Violation::NonPositiveArea { triangle: t, area });
        }
        for k in 0..3 {
            let a = mesh.vertices[tri[k]];
            let b = mesh.vertices[tri[(k + 1) % 3]];
            let c = mesh.vertices[tri[(k + 2) % 3]];
            let u = b - a;
            let v = c - a;
            let angle = u.cross(v).abs().atan2(u.dot(v));
            min_angle = min_angle.min(angle);
        }
    }

    let mut per_triangle = vec![0usize; mesh.triangles.len()];
    let mut boundary_keys = HashSet::new();
    for (i, b) in mesh.boundary.iter().enumerate() {
        per_triangle[b.triangle] += 1;
        let tri = mesh.triangles[b.triangle];
        let (va, vb) = (tri[b.local_edge], tri[(b.local_edge + 1) % 3]);
        boundary_keys.insert(sorted_pair(va, vb));
        if let Some(poly) = polygon {
            let arc = poly.arc(b.arc);
            let err = arc.eval(b.s_a).distance(mesh.vertices[va]).max(arc.eval(b.s_b).distance(mesh.vertices[vb]));
            if err > 1e-10 || b.s_a >= b.s_b || !(0.0..=1.0).contains(&b.s_a) || !(0.0..=1.0).contains(&b.s_b) {
                violations.push(Violation::EndpointMismatch { edge: i, error: err });
            }
        }
    }
    for (t, &count) in per_triangle.iter().enumerate() {
        if count > 1 {
            violations.push(Violation::MultipleBoundaryEdges { triangle: t, count });
        }
    }

    let mut edge_count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for t in &mesh.triangles {
        for e in 0..3 {
            *edge_count.entry(sorted_pair(t[e], t[(e + 1) % 3])).or_default() += 1;
        }
    }
    for (&edge, &count) in &edge_count {
        let is_boundary = boundary_keys.contains(&edge);
        if count > 2 || (count == 1 && !is_boundary) || (count == 2 && is_boundary) {
            violations.push(Violation::NonConforming { edge, triangles: count });
        }
    }

    if let Some(poly) = polygon {
        for (k, corner) in poly.corners().enumerate() {
            if !mesh.vertices.iter().any(|v| v.distance(corner.point) <= 1e-10) {
                violations.push(Violation::MissingCorner { corner: k });
            }
        }
    }

    let (ratio, worst) = quality(mesh);
    if ratio > rho_max {
        violations.push(Violation::Quality { ratio, triangle: worst });
    }

    let edges = edge_count.len();
    MeshReport {
        ok: violations.is_empty(),
        min_angle_deg: min_angle.to_degrees(),
        quality_ratio: ratio,
        h: mesh.h,
        vertices: mesh.vertices.len(),
        triangles: mesh.triangles.len(),
        edges,
        boundary_edges: mesh.boundary.len(),
        euler: mesh.vertices.len() as i64 - edges as i64 + mesh.triangles.len() as i64,
        violations,
    }
}

/// (max diameter) / (min inradius) and the triangle with the smallest inradius.
pub fn quality(mesh: &Mesh) -> (f64, usize) {
    let mut worst = (f64::INFINITY, 0);
    for t in 0..mesh.triangles.len() {
        let r = mesh.inradius(t);
        if r < worst.0 {
            worst = (r, t);
        }
    }
    (mesh.h / worst.0, worst.1)
}

struct BoundarySample {
    point: Vec2,
    arc: usize,
    s: f64,
}

fn sample_boundary(polygon: &CurvilinearPolygon, h: f64) -> Vec<BoundarySample> {
    let arcs = polygon.arcs();
    let min_per_arc = 3usize.div_ceil(arcs.len());
    let mut out = Vec::new();
    for arc in arcs {
        let length = arc.length();
        let n = ((length / h).round() as usize).max(min_per_arc);
        for k in 0..n {
            let s = arc.param_at_length(length * k as f64 / n as f64);
            out.push(BoundarySample { point: arc.eval(s), arc: arc.id, s });
        }
    }
    out
}

/// Accepted points hashed on a square grid for minimum-spacing tests.
struct PointHash {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<Vec2>>,
}

impl PointHash {
    fn new(cell: f64) -> Self {
        PointHash { cell, cells: HashMap::new() }
    }

    fn key(&self, p: Vec2) -> (i64, i64) {
        ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64)
    }

    fn insert(&mut self, p: Vec2) {
        let key = self.key(p);
        self.cells.entry(key).or_default().push(p);
    }

    /// No accepted point within `radius` (at most one cell size).
    fn is_clear(&self, p: Vec2, radius: f64) -> bool {
        let (i, j) = self.key(p);
        (-1..=1).all(|di| {
            (-1..=1).all(|dj| {
                self.cells.get(&(i + di, j + dj)).is_none_or(|pts| pts.iter().all(|q| q.distance(p) >= radius))
            })
        })
    }
}

/// Buckets boundary chords on a uniform grid for near-boundary queries.
struct ChordGrid {
    chords: Vec<(Vec2, Vec2)>,
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<usize>>,
}

impl ChordGrid {
    fn new(chords: Vec<(Vec2, Vec2)>, lo: Vec2, hi: Vec2, cell: f64) -> Self {
        let origin = lo - Vec2::new(cell, cell);
        let nx = ((hi.x - origin.x) / cell).ceil() as usize + 2;
        let ny = ((hi.y - origin.y) / cell).ceil() as usize + 2;
        let mut cells = vec![Vec::new(); nx * ny];
        for (k, (a, b)) in chords.iter().enumerate() {
            let (x0, x1) = (a.x.min(b.x), a.x.max(b.x));
            let (y0, y1) = (a.y.min(b.y), a.y.max(b.y));
            let i0 = ((x0 - origin.x) / cell).floor().max(0.0) as usize;
            let i1 = (((x1 - origin.x) / cell).floor() as usize).min(nx - 1);
            let j0 = ((y0 - origin.y) / cell).floor().max(0.0) as usize;
            let j1 = (((y1 - origin.y) / cell).floor() as usize).min(ny - 1);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    cells[j * nx + i].push(k);
                }
            }
        }
        ChordGrid { chords, origin, cell, nx, ny, cells }
    }

    /// Distance to the nearest chord, capped at one cell size.
    fn distance(&self, p: Vec2) -> f64 {
        let i = ((p.x - self.origin.x) / self.cell).floor() as isize;
        let j = ((p.y - self.origin.y) / self.cell).floor() as isize;
        let mut best = self.cell;
        for dj in -1..=1 {
            for di in -1..=1 {
                let (ii, jj) = (i + di, j + dj);
                if ii < 0 || jj < 0 || ii as usize >= self.nx || jj as usize >= self.ny {
                    continue;
                }
                for &k in &self.cells[jj as usize * self.nx + ii as usize] {
                    let (a, b) = self.chords[k];
                    let ab = b - a;
                    let t = ((p - a).dot(ab) / ab.norm_squared()).clamp(0.0, 1.0);
                    best = best.min((a + ab * t).distance(p));
                }
            }
        }
        best
    }
}

/// Generates a mesh of `polygon` with target size `h_target`.
pub fn generate(polygon: &CurvilinearPolygon, h_target: f64, config: &MeshConfig) -> Result<Mesh, MeshError> {
    let diameter = polygon.diameter();
    if !(h_target > 0.0 && h_target < 0.5 * diameter) {
        return Err(MeshError::Precondition { h_target, diameter });
    }

    let boundary = sample_boundary(polygon, h_target);
    let nb = boundary.len();
    let boundary_points: Vec<Vec2> = boundary.iter().map(|b| b.point).collect();
    let chords: Vec<(Vec2, Vec2)> = (0..nb).map(|i| (boundary_points[i], boundary_points[(i + 1) % nb])).collect();
    let chord_polygon = StripIndex::polygon(&boundary_points);

    let (lo, hi) = polygon.bounding_box();
    let grid = ChordGrid::new(chords.clone(), lo, hi, h_target);
    let clearance = config.clearance * h_target;
    let admissible = |p: Vec2, clearance: f64| {
        chord_polygon.classify(p).0
            && polygon.contains(p)
            && grid.distance(p) >= clearance
            && polygon.closest_boundary(p).distance >= clearance
    };
    let mut spacing = PointHash::new(h_target);
    let mut interior = Vec::new();

    // one layer of apexes of equilateral triangles over the boundary chords
    if config.boundary_layer {
        let height = 0.5 * 3f64.sqrt();
        for &(a, b) in &chords {
            let d = b - a;
            let p = (a + b) * 0.5 + Vec2::new(-d.y, d.x) * height;
            if admissible(p, 0.5 * h_target) && spacing.is_clear(p, 0.7 * h_target) {
                spacing.insert(p);
                interior.push(p);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let row_height = h_target * 3f64.sqrt() / 2.0;
    let rows = ((hi.y - lo.y) / row_height).ceil() as usize + 1;
    let cols = ((hi.x - lo.x) / h_target).ceil() as usize + 2;
    let amp = config.jitter * h_target;
    for j in 0..=rows {
        let shift = if j % 2 == 1 { 0.5 * h_target } else { 0.0 };
        for i in 0..=cols {
            let jitter = Vec2::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)) * amp;
            let p = Vec2::new(lo.x + shift + i as f64 * h_target, lo.y + j as f64 * row_height) + jitter;
            if admissible(p, clearance) && spacing.is_clear(p, 0.75 * h_target) {
                interior.push(p);
            }
        }
    }

    let mut vertices = boundary_points.clone();
    vertices.extend(interior);
    // boundary chord j joins boundary vertex j to j + 1
    let chord_keys: HashSet<(usize, usize)> = (0..nb).map(|j| sorted_pair(j, (j + 1) % nb)).collect();
    let mut triangles = Vec::new();
    for _ in 0..config.rounds.max(1) {
        triangles = constrained_delaunay(&vertices, nb, &chord_polygon)?;
        split_multi_boundary(&mut vertices, &mut triangles, &chord_keys)?;
        smooth(&mut vertices, &triangles, nb, config.smoothing_sweeps);
    }

    let mut edges = Vec::new();
    for (t, tri) in triangles.iter().enumerate() {
        for e in 0..3 {
            let (a, b) = (tri[e], tri[(e + 1) % 3]);
            if a < nb && b < nb && chord_keys.contains(&sorted_pair(a, b)) {
                if b != (a + 1) % nb {
                    return Err(MeshError::Triangulation(format!(
                        "boundary edge ({a}, {b}) of triangle {t} is traversed clockwise"
                    )));
                }
                let s_a = boundary[a].s;
                let s_b = if b != 0 && boundary[b].arc == boundary[a].arc { boundary[b].s } else { 1.0 };
                edges.push(BoundaryEdge { triangle: t, local_edge: e, arc: boundary[a].arc, s_a, s_b });
            }
        }
    }
    edges.sort_by_key(|e| (e.arc, triangles[e.triangle][e.local_edge]));

    let mesh = Mesh::new(vertices, triangles, edges);
    let (ratio, worst) = quality(&mesh);
    if ratio > config.rho_max {
        return Err(MeshError::Quality { ratio, limit: config.rho_max, triangle: worst });
    }
    if mesh.h < 0.5 * h_target || mesh.h > 2.0 * h_target {
        return Err(MeshError::SizeOutOfRange { h: mesh.h, lo: 0.5 * h_target, hi: 2.0 * h_target });
    }
    Ok(mesh)
}

fn constrained_delaunay(
    vertices: &[Vec2],
    nb: usize,
    chord_polygon: &StripIndex,
) -> Result<Vec<[usize; 3]>, MeshError> {
    let mut cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::new();
    let mut handles = Vec::with_capacity(vertices.len());
    let mut owner = HashMap::new();
    for (i, v) in vertices.iter().enumerate() {
        let handle = cdt.insert(Point2::new(v.x, v.y)).map_err(|e| MeshError::Triangulation(format!("{e:?}")))?;
        if owner.insert(handle.index(), i).is_some() {
            return Err(MeshError::Triangulation(format!("duplicate vertex {i}")));
        }
        handles.push(handle);
        if i + 1 == nb {
            for j in 0..nb {
                let added = cdt.try_add_constraint(handles[j], handles[(j + 1) % nb]);
                if added.is_empty() {
                    return Err(MeshError::Triangulation(format!("boundary chord {j} crosses another chord")));
                }
            }
        }
    }
    let mut triangles = Vec::new();
    for face in cdt.inner_faces() {
        let [a, b, c] = face.vertices().map(|v| owner[&v.fix().index()]);
        let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
        let centroid = (pa + pb + pc) * (1.0 / 3.0);
        if !chord_polygon.classify(centroid).0 {
            continue;
        }
        if (pb - pa).cross(pc - pa) > 0.0 {
            triangles.push([a, b, c]);
        } else {
            triangles.push([a, c, b]);
        }
    }
    // deterministic order independent of the triangulation's internal layout
    triangles.sort_by_key(|t| {
        let mut k = *t;
        k.sort_unstable();
        k
    });
    Ok(triangles)
}

/// Splits triangles with two boundary edges by bisecting their interior edge.
fn split_multi_boundary(
    vertices: &mut Vec<Vec2>,
    triangles: &mut Vec<[usize; 3]>,
    chord_keys: &HashSet<(usize, usize)>,
) -> Result<(), MeshError> {
    loop {
        let offender = triangles
            .iter()
            .position(|t| (0..3).filter(|&e| chord_keys.contains(&sorted_pair(t[e], t[(e + 1) % 3]))).count() > 1);
        let Some(t) = offender else {
            return Ok(());
        };
        let tri = triangles[t];
        let Some(e) = (0..3).find(|&e| !chord_keys.contains(&sorted_pair(tri[e], tri[(e + 1) % 3]))) else {
            return Err(MeshError::Triangulation(format!("triangle {t} covers the whole domain")));
        };
        // rotate so the interior edge is (c, a): triangle (a, b, c) with boundary edges ab, bc
        let (c, a) = (tri[e], tri[(e + 1) % 3]);
        let b = tri[(e + 2) % 3];
        let neighbor = triangles
            .iter()
            .enumerate()
            .find(|(k, n)| *k != t && n.contains(&a) && n.contains(&c))
            .map(|(k, _)| k)
            .ok_or_else(|| MeshError::Triangulation(format!("interior edge of triangle {t} has no neighbor")))?;
        let ntri = triangles[neighbor];
        let d = *ntri.iter().find(|&&v| v != a && v != c).expect("neighbor has a third vertex");
        let m = vertices.len();
        vertices.push((vertices[a] + vertices[c]) * 0.5);
        triangles[t] = [a, b, m];
        triangles.push([b, c, m]);
        triangles[neighbor] = [c, m, d];
        triangles.push([m, a, d]);
    }
}

fn smooth(vertices: &mut [Vec2], triangles: &[[usize; 3]], nb: usize, sweeps: usize) {
    let n = vertices.len();
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            incident[tri[k]].push(t);
            for l in 0..3 {
                if k != l && !neighbors[tri[k]].contains(&tri[l]) {
                    neighbors[tri[k]].push(tri[l]);
                }
            }
        }
    }
    let area = |verts: &[Vec2], t: usize| {
        let [a, b, c] = triangles[t].map(|v| verts[v]);
        0.5 * (b - a).cross(c - a)
    };
    for _ in 0..sweeps {
        for v in nb..n {
            if neighbors[v].is_empty() {
                continue;
            }
            let old = vertices[v];
            let worst_before = incident[v].iter().map(|&t| area(vertices, t)).fold(f64::INFINITY, f64::min);
            let sum = neighbors[v].iter().fold(Vec2::zero(), |acc, &u| acc + vertices[u]);
            vertices[v] = sum * (1.0 / neighbors[v].len() as f64);
            let worst_after = incident[v].iter().map(|&t| area(vertices, t)).fold(f64::INFINITY, f64::min);
            if worst_after <= 0.0 || worst_after < 0.5 * worst_before {
                vertices[v] = old;
            }
        }
    }
}
