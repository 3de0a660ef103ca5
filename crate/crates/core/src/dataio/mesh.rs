use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DataError;
use crate::geometry::PointCloud;

/// Indexed triangle mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<[f64; 3]>,
    triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<[f64; 3]>, triangles: Vec<[usize; 3]>) -> Result<Self, DataError> {
        if let Some(t) = triangles.iter().position(|t| t.iter().any(|&i| i >= vertices.len())) {
            return Err(DataError::IndexOutOfRange {
                triangle: t,
                vertices: vertices.len(),
            });
        }
        Ok(Self { vertices, triangles })
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let x = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
        0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
    }
}

/// Parses the triangle subset of OFF: an `OFF` line, `nv nf ne`, `nv` vertex
/// lines and `nf` face lines of the form `3 a b c`. `#` starts a comment.
pub fn parse_off(text: &str) -> Result<TriangleMesh, DataError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap().trim()))
        .filter(|(_, l)| !l.is_empty());
    let bad = |line: usize, reason: &str| DataError::Parse {
        line,
        reason: reason.to_string(),
    };
    let (line, header) = lines.next().ok_or_else(|| bad(0, "empty OFF file"))?;
    // The counts may follow the keyword on the same line.
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| bad(line, "missing OFF header"))?
        .trim();
    let (line, counts) = if rest.is_empty() {
        lines.next().ok_or_else(|| bad(line, "missing counts"))?
    } else {
        (line, rest)
    };
    let counts: Vec<usize> = counts
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad(line, "invalid count")))
        .collect::<Result<_, _>>()?;
    if counts.len() < 2 {
        return Err(bad(line, "expected vertex and face counts"));
    }
    let (nv, nf) = (counts[0], counts[1]);
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, l) = lines.next().ok_or_else(|| bad(0, "missing vertex lines"))?;
        let v: Vec<f64> = l
            .split_whitespace()
            .take(3)
            .map(|t| t.parse().map_err(|_| bad(line, "invalid vertex coordinate")))
            .collect::<Result<_, _>>()?;
        if v.len() != 3 {
            return Err(bad(line, "vertex needs 3 coordinates"));
        }
        vertices.push([v[0], v[1], v[2]]);
    }
    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (line, l) = lines.next().ok_or_else(|| bad(0, "missing face lines"))?;
        let f: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(line, "invalid face index")))
            .collect::<Result<_, _>>()?;
        if f.first() != Some(&3) || f.len() < 4 {
            return Err(bad(line, "only triangular faces are supported"));
        }
        triangles.push([f[1], f[2], f[3]]);
    }
    TriangleMesh::new(vertices, triangles)
}

pub fn load_off(path: &Path) -> Result<TriangleMesh, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_off(&text)
}

/// Area-weighted surface samples together with the triangle each came from.
/// Zero-area triangles are never chosen.
pub fn sample_mesh_with_faces(mesh: &TriangleMesh, n_points: usize, seed: u64) -> Result<(Vec<[f64; 3]>, Vec<usize>), DataError> {
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        total += mesh.triangle_area(t);
        cumulative.push(total);
    }
    if total <= 0.0 {
        return Err(DataError::DegenerateMesh);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n_points);
    let mut faces = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let pick = rng.random::<f64>() * total;
        let t = cumulative.partition_point(|&c| c <= pick).min(cumulative.len() - 1);
        let [a, b, c] = mesh.triangles[t].map(|i| mesh.vertices[i]);
        let r1 = rng.random::<f64>().sqrt();
        let r2 = rng.random::<f64>();
        let (wa, wb, wc) = (1.0 - r1, r1 * (1.0 - r2), r1 * r2);
        points.push(std::array::from_fn(|k| wa * a[k] + wb * b[k] + wc * c[k]));
        faces.push(t);
    }
    Ok((points, faces))
}

/// Raw cloud of `n_points` uniform surface samples, deterministic in `seed`.
pub fn sample_mesh(mesh: &TriangleMesh, n_points: usize, seed: u64) -> Result<PointCloud<f32>, DataError> {
    let (points, _) = sample_mesh_with_faces(mesh, n_points, seed)?;
    Ok(PointCloud::<f64>::new(points)?.cast())
}
