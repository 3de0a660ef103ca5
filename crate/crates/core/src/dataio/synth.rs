use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DataError, LabeledCloud};
use crate::geometry::{normalize_cloud, PointCloud};

/// Synthetic shape families used as a small stand-in dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Sphere,
    Box,
    Cylinder,
    /// Slab top (label 0) on four legs (labels 1 to 4).
    Table,
    /// Horizontal bar (label 0) on a vertical stem (label 1).
    Tee,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 5] = [
        ShapeKind::Sphere,
        ShapeKind::Box,
        ShapeKind::Cylinder,
        ShapeKind::Table,
        ShapeKind::Tee,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Box => "box",
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Table => "table",
            ShapeKind::Tee => "tee",
        }
    }

    /// Number of ground-truth parts (1 for single-part kinds).
    pub fn part_count(self) -> usize {
        match self {
            ShapeKind::Table => 5,
            ShapeKind::Tee => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, DataError> {
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| DataError::UnknownShape(s.to_string()))
    }
}

/// Axis-aligned rectangle in 3D: `origin + u * a + v * b` for `u, v` in [0, 1].
#[derive(Clone, Copy, Debug)]
struct Rect {
    origin: [f64; 3],
    a: [f64; 3],
    b: [f64; 3],
    label: usize,
}

impl Rect {
    fn area(&self) -> f64 {
        let n = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        n(self.a) * n(self.b)
    }

    fn at(&self, u: f64, v: f64) -> [f64; 3] {
        std::array::from_fn(|i| self.origin[i] + u * self.a[i] + v * self.b[i])
    }
}

/// Faces of the box `[lo, hi]`; `skip_top` drops the `+z` face.
fn box_faces(lo: [f64; 3], hi: [f64; 3], label: usize, skip_top: bool) -> Vec<Rect> {
    let [dx, dy, dz] = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
    let ex = [dx, 0.0, 0.0];
    let ey = [0.0, dy, 0.0];
    let ez = [0.0, 0.0, dz];
    let mut faces = vec![
        Rect { origin: lo, a: ex, b: ey, label },
        Rect { origin: lo, a: ex, b: ez, label },
        Rect { origin: lo, a: ey, b: ez, label },
        Rect { origin: [lo[0], hi[1], lo[2]], a: ex, b: ez, label },
        Rect { origin: [hi[0], lo[1], lo[2]], a: ey, b: ez, label },
    ];
    if !skip_top {
        faces.push(Rect { origin: [lo[0], lo[1], hi[2]], a: ex, b: ey, label });
    }
    faces
}

fn sample_rects(rects: &[Rect], n: usize, rng: &mut ChaCha8Rng) -> (Vec<[f64; 3]>, Vec<usize>) {
    let total: f64 = rects.iter().map(Rect::area).sum();
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = rects.last().unwrap();
        for r in rects {
            if pick < r.area() {
                chosen = r;
                break;
            }
            pick -= r.area();
        }
        points.push(chosen.at(rng.random(), rng.random()));
        labels.push(chosen.label);
    }
    (points, labels)
}

fn unit_direction(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-9 {
            return v.map(|c| c / n);
        }
    }
}

fn sphere(n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    // Antipodal pairs keep the centroid at the origin.
    let mut pts = Vec::with_capacity(n);
    while pts.len() + 1 < n {
        let d = unit_direction(rng);
        pts.push(d);
        pts.push(d.map(|c| -c));
    }
    if pts.len() < n {
        pts.push(unit_direction(rng));
    }
    pts
}

fn cylinder(n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let (r, h) = (0.5, 1.5);
    let side = 2.0 * std::f64::consts::PI * r * h;
    let cap = std::f64::consts::PI * r * r;
    let total = side + 2.0 * cap;
    (0..n)
        .map(|_| {
            let pick = rng.random::<f64>() * total;
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            if pick < side {
                let z = rng.random::<f64>() * h - 0.5 * h;
                [r * theta.cos(), r * theta.sin(), z]
            } else {
                let rho = r * rng.random::<f64>().sqrt();
                let z = if pick < side + cap { -0.5 * h } else { 0.5 * h };
                [rho * theta.cos(), rho * theta.sin(), z]
            }
        })
        .collect()
}

fn table_parts() -> Vec<Rect> {
    let mut rects = box_faces([-1.0, -1.0, 0.0], [1.0, 1.0, 0.15], 0, false);
    let corners = [(-1.0, -1.0), (0.8, -1.0), (-1.0, 0.8), (0.8, 0.8)];
    for (i, (x, y)) in corners.into_iter().enumerate() {
        rects.extend(box_faces([x, y, -1.2], [x + 0.2, y + 0.2, 0.0], i + 1, true));
    }
    rects
}

fn tee_parts() -> Vec<Rect> {
    let mut rects = box_faces([-1.0, -0.2, 0.0], [1.0, 0.2, 0.4], 0, false);
    rects.extend(box_faces([-0.2, -0.2, -1.6], [0.2, 0.2, 0.0], 1, true));
    rects
}

/// Samples `n_points` from the surface of a synthetic shape, adds Gaussian
/// jitter of standard deviation `jitter` and normalises the result.
/// Deterministic in `seed`; composite kinds carry part labels.
pub fn synth_shape(kind: ShapeKind, n_points: usize, seed: u64, jitter: f64) -> Result<LabeledCloud, DataError> {
    if n_points < 8 {
        return Err(DataError::TooFewPoints(n_points));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut points, labels) = match kind {
        ShapeKind::Sphere => (sphere(n_points, &mut rng), None),
        ShapeKind::Cylinder => (cylinder(n_points, &mut rng), None),
        ShapeKind::Box => (sample_rects(&box_faces([-1.0, -0.6, -0.4], [1.0, 0.6, 0.4], 0, false), n_points, &mut rng).0, None),
        ShapeKind::Table => {
            let (p, l) = sample_rects(&table_parts(), n_points, &mut rng);
            (p, Some(l))
        }
        ShapeKind::Tee => {
            let (p, l) = sample_rects(&tee_parts(), n_points, &mut rng);
            (p, Some(l))
        }
    };
    if jitter > 0.0 {
        for p in points.iter_mut() {
            for c in p.iter_mut() {
                *c += jitter * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    let cloud = normalize_cloud(&PointCloud::new(points)?)?;
    Ok(LabeledCloud {
        cloud: cloud.cast(),
        labels,
    })
}

/// Expected fraction of table points on each part under area-weighted sampling.
pub fn table_part_fractions() -> [f64; 5] {
    let rects = table_parts();
    let total: f64 = rects.iter().map(Rect::area).sum();
    let mut out = [0.0; 5];
    for r in &rects {
        out[r.label] += r.area() / total;
    }
    out
}
