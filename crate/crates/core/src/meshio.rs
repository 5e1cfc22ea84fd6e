//! Plain-text mesh format.
//!
//! ```text
//! meshv1 <nv> <nt> <nb>
//! x y                 (nv lines)
//! i j k               (nt lines)
//! t e arc s_a s_b     (nb lines)
//! ```
//!
//! Coordinates and parameters are written with 17 significant digits so a
//! write/read round trip is exact.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::meshgen::{BoundaryEdge, Mesh};
use crate::Vec2;

#[derive(Debug, Error)]
pub enum MeshIoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_error(line: usize, message: impl Into<String>) -> MeshIoError {
    MeshIoError::Parse { line, message: message.into() }
}

pub fn to_string(mesh: &Mesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "meshv1 {} {} {}", mesh.vertices.len(), mesh.triangles.len(), mesh.boundary.len());
    for v in &mesh.vertices {
        let _ = writeln!(out, "{:.16e} {:.16e}", v.x, v.y);
    }
    for t in &mesh.triangles {
        let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
    }
    for b in &mesh.boundary {
        let _ = writeln!(out, "{} {} {} {:.16e} {:.16e}", b.triangle, b.local_edge, b.arc, b.s_a, b.s_b);
    }
    out
}

pub fn write_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<(), MeshIoError> {
    std::fs::write(path, to_string(mesh))?;
    Ok(())
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<Mesh, MeshIoError> {
    from_str(&std::fs::read_to_string(path)?)
}

fn fields<T: FromStr>(line: usize, text: &str, count: usize) -> Result<Vec<T>, MeshIoError> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    if parts.len() != count {
        return Err(parse_error(line, format!("expected {count} fields, found {}", parts.len())));
    }
    parts.iter().map(|p| p.parse::<T>().map_err(|_| parse_error(line, format!("cannot parse '{p}'")))).collect()
}

pub fn from_str(text: &str) -> Result<Mesh, MeshIoError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());
    let (line, header) = lines.next().ok_or_else(|| parse_error(1, "missing header"))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("meshv1") {
        return Err(parse_error(line, "missing header"));
    }
    let counts: Vec<usize> = fields(line, &parts.collect::<Vec<_>>().join(" "), 3)?;
    let (nv, nt, nb) = (counts[0], counts[1], counts[2]);

    let mut next =
        |what: &str| lines.next().ok_or_else(|| parse_error(text.lines().count() + 1, format!("missing {what} line")));
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, l) = next("vertex")?;
        let v: Vec<f64> = fields(line, l, 2)?;
        vertices.push(Vec2::new(v[0], v[1]));
    }
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (line, l) = next("triangle")?;
        let t: Vec<usize> = fields(line, l, 3)?;
        if let Some(bad) = t.iter().find(|&&v| v >= nv) {
            return Err(parse_error(line, format!("vertex index {bad} out of range")));
        }
        triangles.push([t[0], t[1], t[2]]);
    }
    let mut boundary = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (line, l) = next("boundary")?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != 5 {
            return Err(parse_error(line, format!("expected 5 fields, found {}", parts.len())));
        }
        let ints: Vec<usize> = fields(line, &parts[..3].join(" "), 3)?;
        let params: Vec<f64> = fields(line, &parts[3..].join(" "), 2)?;
        if ints[0] >= nt || ints[1] > 2 {
            return Err(parse_error(line, "boundary edge refers to a missing triangle edge"));
        }
        boundary.push(BoundaryEdge {
            triangle: ints[0],
            local_edge: ints[1],
            arc: ints[2],
            s_a: params[0],
            s_b: params[1],
        });
    }
    if let Some((line, _)) = lines.next() {
        return Err(parse_error(line, "unexpected trailing content"));
    }
    Ok(Mesh::new(vertices, triangles, boundary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::Domain;
    use crate::meshgen::{generate, MeshConfig};

    #[test]
    fn round_trip_is_exact() {
        let disk = Domain::disk();
        let mesh = generate(&disk.polygon, 0.3, &MeshConfig::default()).unwrap();
        assert_eq!(from_str(&to_string(&mesh)).unwrap(), mesh);
    }

    #[test]
    fn empty_file() {
        let err = from_str("").unwrap_err();
        assert!(err.to_string().contains("missing header"), "{err}");
    }

    #[test]
    fn short_triangle_line() {
        let text = "meshv1 3 1 0\n0 0\n1 0\n0 1\n0 1\n";
        match from_str(text) {
            Err(MeshIoError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
    }
}
