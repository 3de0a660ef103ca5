//! Point clouds, exact nearest-neighbour search and the Chamfer distance.

mod cloud;
mod kdtree;

use thiserror::Error;

pub use cloud::{normalize_cloud, PointCloud, NORMALIZE_EPS};
pub use kdtree::{NearestNeighborIndex, DEFAULT_LEAF_SIZE};

use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("coordinate buffer of length {len} is not a 3 x N matrix")]
    Layout { len: usize },
    #[error("cloud is not normalized (centroid offset {centroid_offset}, max norm {max_norm})")]
    NotNormalized { centroid_offset: f64, max_norm: f64 },
}

/// Result of a nearest-neighbour query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor<T> {
    pub index: usize,
    pub dist2: T,
}

/// Squared Euclidean distance, summed x, y, z in that order.
#[inline]
pub fn sq_dist<T: Real>(a: &[T; 3], b: &[T; 3]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Closest target point for every query (lowest index on ties).
pub fn nearest_neighbors<T: Real>(queries: &[[T; 3]], target: &[[T; 3]]) -> Result<Vec<Neighbor<T>>, GeometryError> {
    let index = NearestNeighborIndex::build(target)?;
    Ok(queries.iter().map(|q| index.nearest(q)).collect())
}

/// Chamfer distance with the correspondences that realise it.
#[derive(Clone, Debug, PartialEq)]
pub struct Chamfer<T> {
    pub value: T,
    /// Mean squared distance from each point of `p` to `q`.
    pub p_to_q: T,
    /// Mean squared distance from each point of `q` to `p`.
    pub q_to_p: T,
    /// Nearest point of `q` for every point of `p`.
    pub p_matches: Vec<Neighbor<T>>,
    /// Nearest point of `p` for every point of `q`.
    pub q_matches: Vec<Neighbor<T>>,
}

fn mean_dist2<T: Real>(m: &[Neighbor<T>]) -> T {
    let mut s = T::zero();
    for n in m {
        s = s + n.dist2;
    }
    s / T::of(m.len() as f64)
}

/// Symmetric Chamfer distance on squared distances:
/// `mean_p min_q |p-q|^2 + mean_q min_p |p-q|^2`.
pub fn chamfer_distance<T: Real>(p: &[[T; 3]], q: &[[T; 3]]) -> Result<Chamfer<T>, GeometryError> {
    if p.is_empty() || q.is_empty() {
        return Err(GeometryError::EmptyCloud);
    }
    let p_matches = nearest_neighbors(p, q)?;
    let q_matches = nearest_neighbors(q, p)?;
    let p_to_q = mean_dist2(&p_matches);
    let q_to_p = mean_dist2(&q_matches);
    Ok(Chamfer {
        value: p_to_q + q_to_p,
        p_to_q,
        q_to_p,
        p_matches,
        q_matches,
    })
}

/// Chamfer distance between two clouds, value only.
pub fn cloud_chamfer<T: Real>(p: &PointCloud<T>, q: &PointCloud<T>) -> Result<T, GeometryError> {
    Ok(chamfer_distance(p.points(), q.points())?.value)
}
