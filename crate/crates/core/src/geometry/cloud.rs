use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::Real;

/// Divisor floor used when normalising a cloud whose points all coincide.
pub const NORMALIZE_EPS: f64 = 1e-12;

/// Ordered list of 3D points.
///
/// `normalized` records whether the cloud has been zero-centred and scaled
/// into the unit sphere by [`normalize_cloud`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloud<T = f32> {
    points: Vec<[T; 3]>,
    normalized: bool,
}

impl<T: Real> PointCloud<T> {
    /// A raw (un-normalised) cloud. Rejects empty input and non-finite coordinates.
    pub fn new(points: Vec<[T; 3]>) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::EmptyCloud);
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(GeometryError::NonFinite { index: i });
        }
        Ok(Self {
            points,
            normalized: false,
        })
    }

    /// Marks an already-normalised set of points, checking the invariant
    /// (centroid within 1e-5 of the origin, max norm at most 1 + 1e-5).
    pub fn new_normalized(points: Vec<[T; 3]>) -> Result<Self, GeometryError> {
        let mut c = Self::new(points)?;
        let centroid = c.centroid();
        let off = centroid.iter().map(|v| v * v).sum::<f64>().sqrt();
        let max_norm = c.max_norm();
        if off > 1e-5 || max_norm > 1.0 + 1e-5 {
            return Err(GeometryError::NotNormalized {
                centroid_offset: off,
                max_norm,
            });
        }
        c.normalized = true;
        Ok(c)
    }

    pub fn points(&self) -> &[[T; 3]] {
        &self.points
    }

    pub fn into_points(self) -> Vec<[T; 3]> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn centroid(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p[k].as_f64();
            }
        }
        let n = self.points.len() as f64;
        c.map(|v| v / n)
    }

    pub fn max_norm(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Points as a `3 x N` row-major matrix (one point per column).
    pub fn to_columns(&self) -> Vec<T> {
        let n = self.points.len();
        let mut out = vec![T::zero(); 3 * n];
        for (j, p) in self.points.iter().enumerate() {
            for k in 0..3 {
                out[k * n + j] = p[k];
            }
        }
        out
    }

    /// Inverse of [`PointCloud::to_columns`].
    pub fn from_columns(data: &[T]) -> Result<Self, GeometryError> {
        if data.len() % 3 != 0 {
            return Err(GeometryError::Layout { len: data.len() });
        }
        let n = data.len() / 3;
        Self::new((0..n).map(|j| [data[j], data[n + j], data[2 * n + j]]).collect())
    }

    pub fn cast<U: Real>(&self) -> PointCloud<U> {
        PointCloud {
            points: self
                .points
                .iter()
                .map(|p| p.map(|v| U::of(v.as_f64())))
                .collect(),
            normalized: self.normalized,
        }
    }

    pub fn translated(&self, t: [T; 3]) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]])
                .collect(),
            normalized: false,
        }
    }

    /// Reorders points; `perm[i]` is the source index of output point `i`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            points: perm.iter().map(|&i| self.points[i]).collect(),
            normalized: self.normalized,
        }
    }
}

/// Zero-centres a cloud and divides by the largest distance to the centroid.
///
/// A cloud whose points all coincide maps to all zeros (the divisor is
/// clamped at [`NORMALIZE_EPS`]). Centroid and scale are accumulated in `f64`.
pub fn normalize_cloud<T: Real>(raw: &PointCloud<T>) -> Result<PointCloud<T>, GeometryError> {
    if raw.is_empty() {
        return Err(GeometryError::EmptyCloud);
    }
    let c = raw.centroid();
    let centred: Vec<[f64; 3]> = raw
        .points
        .iter()
        .map(|p| [p[0].as_f64() - c[0], p[1].as_f64() - c[1], p[2].as_f64() - c[2]])
        .collect();
    let scale = centred
        .iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
        .fold(0.0, f64::max)
        .max(NORMALIZE_EPS);
    let points = centred
        .iter()
        .map(|p| p.map(|v| T::of(v / scale)))
        .collect();
    let mut out = PointCloud::new(points)?;
    out.normalized = true;
    Ok(out)
}
