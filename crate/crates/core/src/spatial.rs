//! Exact nearest-neighbor search, farthest point sampling and diameter
//! estimation.
//!
//! All orderings are lexicographic on `(distance, point index)`, so every
//! query has exactly one correct answer and the kd-tree agrees with a
//! brute-force scan index for index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 16;

/// Number of farthest-point samples used by [`estimate_diameter`].
pub const DIAMETER_SAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Euclidean,
    /// l1 / city-block distance.
    Manhattan,
}

impl Metric {
    /// Comparison key: squared distance for Euclidean, plain distance for l1.
    #[inline]
    fn key(self, a: &Point, b: &Point) -> f64 {
        match self {
            Metric::Euclidean => {
                let dx = a.x - b.x;
                let dy = a.y - b.y;
                let dz = a.z - b.z;
                dx * dx + dy * dy + dz * dz
            }
            Metric::Manhattan => (a.x - b.x).abs() + (a.y - b.y).abs() + (a.z - b.z).abs(),
        }
    }

    /// Lower bound on the key of any point across a splitting plane at `gap`.
    #[inline]
    fn bound(self, gap: f64) -> f64 {
        match self {
            Metric::Euclidean => gap * gap,
            Metric::Manhattan => gap,
        }
    }

    #[inline]
    fn distance_from_key(self, key: f64) -> f64 {
        match self {
            Metric::Euclidean => key.sqrt(),
            Metric::Manhattan => key,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    key: f64,
    index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key).then(self.index.cmp(&other.index))
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Static kd-tree over a fixed point set.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Point>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl SpatialIndex {
    pub fn build(points: &[Point]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(index) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite { index });
        }
        let mut index = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
        };
        index.build_node(0, points.len());
        Ok(index)
    }

    pub fn from_cloud(cloud: &PointCloud) -> Self {
        // A PointCloud is nonempty and finite by construction.
        Self::build(cloud.points()).expect("valid point cloud")
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            for a in 0..3 {
                lo[a] = lo[a].min(self.points[i][a]);
                hi[a] = hi[a].max(self.points[i][a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        if hi[axis] - lo[axis] == 0.0 {
            // All points coincide; splitting cannot separate them.
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    pub fn point_count(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// The `k` nearest points to `query` in Euclidean distance, ascending,
    /// ties broken by lower index.
    pub fn knn(&self, query: &Point, k: usize) -> Result<Vec<Neighbor>> {
        self.knn_with(query, k, Metric::Euclidean)
    }

    pub fn knn_with(&self, query: &Point, k: usize, metric: Metric) -> Result<Vec<Neighbor>> {
        if k > self.points.len() {
            return Err(Error::TooManyNeighbors {
                requested: k,
                available: self.points.len(),
            });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, metric, &mut heap);
        let mut found = heap.into_vec();
        found.sort_unstable();
        Ok(found
            .into_iter()
            .map(|c| Neighbor {
                index: c.index,
                distance: metric.distance_from_key(c.key),
            })
            .collect())
    }

    /// Nearest point under `metric`; never fails because the index is nonempty.
    pub fn nearest(&self, query: &Point, metric: Metric) -> Neighbor {
        self.knn_with(query, 1, metric).expect("nonempty index")[0]
    }

    fn search(&self, node: usize, query: &Point, k: usize, metric: Metric, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let cand = Candidate {
                        key: metric.key(query, &self.points[i]),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let gap = query[axis] - value;
                let (near, far) = if gap < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, k, metric, heap);
                // `<=` keeps equal-distance candidates with lower indices reachable.
                let bound = metric.bound(gap.abs());
                if heap.len() < k || bound <= heap.peek().expect("heap is full").key {
                    self.search(far, query, k, metric, heap);
                }
            }
        }
    }
}

/// Greedy max-min subset: starts at `start`, then repeatedly picks the
/// point whose distance to the selected set is largest (lowest index on ties).
pub fn farthest_point_sample(points: &[Point], count: usize, start: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if count == 0 || count > n {
        return Err(Error::InvalidParameter(format!("sample count {count} outside 1..={n}")));
    }
    if start >= n {
        return Err(Error::IndexOutOfRange {
            index: start,
            dimension: n,
        });
    }
    let mut selected = Vec::with_capacity(count);
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut current = start;
    selected.push(current);
    while selected.len() < count {
        let anchor = points[current];
        min_d2.par_iter_mut().enumerate().for_each(|(i, d)| {
            let key = Metric::Euclidean.key(&anchor, &points[i]);
            if key < *d {
                *d = key;
            }
        });
        // Deterministic arg-max: the (value, -index) order is total, so the
        // parallel reduction returns the same winner for any split.
        let (best, _) = min_d2.par_iter().enumerate().map(|(i, &d)| (i, d)).reduce(
            || (usize::MAX, f64::NEG_INFINITY),
            |a, b| match a.1.total_cmp(&b.1) {
                Ordering::Greater => a,
                Ordering::Less => b,
                Ordering::Equal => {
                    if a.0 <= b.0 {
                        a
                    } else {
                        b
                    }
                }
            },
        );
        current = best;
        selected.push(current);
    }
    Ok(selected)
}

/// Scale of a cloud: the largest pairwise distance among up to
/// [`DIAMETER_SAMPLES`] farthest-point samples starting at index 0.
pub fn estimate_diameter(cloud: &PointCloud) -> f64 {
    let count = cloud.len().min(DIAMETER_SAMPLES);
    let sample = farthest_point_sample(cloud.points(), count, 0).expect("count within range");
    let mut best = 0.0_f64;
    for (a, &i) in sample.iter().enumerate() {
        for &j in &sample[a + 1..] {
            best = best.max((cloud.point(i) - cloud.point(j)).norm());
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Vec<Point> {
        xs.iter().map(|&x| Point::new(x, 0.0, 0.0)).collect()
    }

    fn cube_corners() -> Vec<Point> {
        let mut v = Vec::new();
        for i in 0..8 {
            v.push(Point::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64));
        }
        v
    }

    #[test]
    fn build_rejects_empty() {
        assert!(matches!(SpatialIndex::build(&[]), Err(Error::EmptyInput)));
        let one = SpatialIndex::build(&[Point::origin()]).unwrap();
        assert_eq!(one.point_count(), 1);
    }

    #[test]
    fn self_query_returns_that_corner() {
        let corners = cube_corners();
        let index = SpatialIndex::build(&corners).unwrap();
        for (i, c) in corners.iter().enumerate() {
            let nn = index.knn(c, 1).unwrap();
            assert_eq!(nn[0].index, i);
            assert_eq!(nn[0].distance, 0.0);
        }
    }

    #[test]
    fn knn_on_a_line() {
        let index = SpatialIndex::build(&line(&[0.0, 1.0, 3.0])).unwrap();
        let nn = index.knn(&Point::new(0.9, 0.0, 0.0), 2).unwrap();
        assert_eq!(nn.iter().map(|n| n.index).collect::<Vec<_>>(), vec![1, 0]);
    }

    #[test]
    fn knn_rejects_too_many() {
        let index = SpatialIndex::build(&line(&[0.0, 1.0])).unwrap();
        assert!(matches!(
            index.knn(&Point::origin(), 3),
            Err(Error::TooManyNeighbors { .. })
        ));
    }

    #[test]
    fn ties_prefer_lower_index() {
        // Forty copies of the same point force ties across leaves.
        let pts = vec![Point::new(1.0, 1.0, 1.0); 40];
        let index = SpatialIndex::build(&pts).unwrap();
        let nn = index.knn(&Point::origin(), 5).unwrap();
        assert_eq!(nn.iter().map(|n| n.index).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn fps_line_picks_far_end() {
        let pts = line(&[0.0, 0.5, 1.0]);
        assert_eq!(farthest_point_sample(&pts, 2, 0).unwrap(), vec![0, 2]);
        let all = farthest_point_sample(&pts, 3, 0).unwrap();
        let mut sorted = all.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2]);
    }

    #[test]
    fn fps_count_out_of_range() {
        let pts = line(&[0.0, 1.0]);
        assert!(farthest_point_sample(&pts, 0, 0).is_err());
        assert!(farthest_point_sample(&pts, 3, 0).is_err());
    }

    #[test]
    fn diameter_small_cases() {
        let two = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]]).unwrap();
        assert_eq!(estimate_diameter(&two), 5.0);
        let cube = PointCloud::new(cube_corners()).unwrap();
        assert!((estimate_diameter(&cube) - 3f64.sqrt()).abs() < 1e-15);
        let single = PointCloud::from_xyz(&[[1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(estimate_diameter(&single), 0.0);
    }
}
