use super::{sq_dist, GeometryError, Neighbor};
use crate::Real;

/// Default number of points stored per leaf.
pub const DEFAULT_LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node<T> {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: T, left: usize, right: usize },
}

/// Exact nearest-neighbour index over a fixed set of points.
///
/// Median split on the widest bounding-box axis. Queries return the same
/// `(index, squared distance)` as an exhaustive scan, including the
/// lowest-index tie-break: subtrees are only pruned when their bound is
/// strictly worse than the current best.
#[derive(Debug, Clone)]
pub struct NearestNeighborIndex<'a, T> {
    points: &'a [[T; 3]],
    order: Vec<usize>,
    nodes: Vec<Node<T>>,
}

impl<'a, T: Real> NearestNeighborIndex<'a, T> {
    pub fn build(points: &'a [[T; 3]]) -> Result<Self, GeometryError> {
        Self::with_leaf_size(points, DEFAULT_LEAF_SIZE)
    }

    pub fn with_leaf_size(points: &'a [[T; 3]], leaf_size: usize) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::EmptyCloud);
        }
        let mut index = Self {
            points,
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        index.build_node(0, points.len(), leaf_size.max(1));
        Ok(index)
    }

    fn build_node(&mut self, start: usize, end: usize, leaf_size: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= leaf_size {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let axis = self.widest_axis(start, end);
        let mid = start + (end - start) / 2;
        let pts = self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[a][axis]
                .partial_cmp(&pts[b][axis])
                .expect("finite coordinates")
                .then(a.cmp(&b))
        });
        let value = pts[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid, leaf_size);
        let right = self.build_node(mid, end, leaf_size);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    fn widest_axis(&self, start: usize, end: usize) -> usize {
        let mut lo = [T::infinity(); 3];
        let mut hi = [T::neg_infinity(); 3];
        for &i in &self.order[start..end] {
            for k in 0..3 {
                lo[k] = lo[k].min(self.points[i][k]);
                hi[k] = hi[k].max(self.points[i][k]);
            }
        }
        (0..3)
            .max_by(|&a, &b| {
                (hi[a] - lo[a])
                    .partial_cmp(&(hi[b] - lo[b]))
                    .expect("finite extents")
                    .then(b.cmp(&a))
            })
            .unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn nearest(&self, q: &[T; 3]) -> Neighbor<T> {
        let mut best = Neighbor {
            index: usize::MAX,
            dist2: T::infinity(),
        };
        self.search(0, q, &mut best);
        best
    }

    fn search(&self, node: usize, q: &[T; 3], best: &mut Neighbor<T>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = sq_dist(q, &self.points[i]);
                    if d < best.dist2 || (d == best.dist2 && i < best.index) {
                        *best = Neighbor { index: i, dist2: d };
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < T::zero() { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff <= best.dist2 {
                    self.search(far, q, best);
                }
            }
        }
    }
}
