//! Planar coordinates, Euclidean distance and a static 2-d tree for
//! k-nearest-neighbour queries.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpinError};

/// A location in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub s1: f64,
    pub s2: f64,
}

impl Point2D {
    pub fn new(s1: f64, s2: f64) -> Self {
        Point2D { s1, s2 }
    }

    pub fn is_finite(&self) -> bool {
        self.s1.is_finite() && self.s2.is_finite()
    }

    #[inline]
    fn coord(&self, axis: usize) -> f64 {
        if axis == 0 {
            self.s1
        } else {
            self.s2
        }
    }
}

#[inline]
pub fn squared_distance(a: &Point2D, b: &Point2D) -> f64 {
    let d1 = a.s1 - b.s1;
    let d2 = a.s2 - b.s2;
    d1 * d1 + d2 * d2
}

#[inline]
pub fn euclidean_distance(a: &Point2D, b: &Point2D) -> f64 {
    squared_distance(a, b).sqrt()
}

/// Axis-aligned bounding box of a point set, as `(min, max)` corners.
pub fn bounding_box(points: &[Point2D]) -> Option<(Point2D, Point2D)> {
    let first = points.first()?;
    let mut lo = *first;
    let mut hi = *first;
    for p in &points[1..] {
        lo.s1 = lo.s1.min(p.s1);
        lo.s2 = lo.s2.min(p.s2);
        hi.s1 = hi.s1.max(p.s1);
        hi.s2 = hi.s2.max(p.s2);
    }
    Some((lo, hi))
}

/// Each coordinate centred and scaled to unit sample standard deviation.
/// A constant coordinate is only centred.
pub fn standardize_points(points: &[Point2D]) -> Vec<Point2D> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let stats = |get: fn(&Point2D) -> f64| {
        let mean = points.iter().map(get).sum::<f64>() / n as f64;
        let ss: f64 = points.iter().map(|p| (get(p) - mean).powi(2)).sum();
        let sd = if n > 1 {
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        (mean, if sd > 0.0 { sd } else { 1.0 })
    };
    let (m1, sd1) = stats(|p| p.s1);
    let (m2, sd2) = stats(|p| p.s2);
    points
        .iter()
        .map(|p| Point2D::new((p.s1 - m1) / sd1, (p.s2 - m2) / sd2))
        .collect()
}

const LEAF_SIZE: usize = 16;

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

/// Immutable k-d tree over an ordered point list. Point ids are positions in
/// the list passed to [`NeighborIndex::build`].
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    points: Vec<Point2D>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// Heap entry ordered by (squared distance, id): the max element is the
/// current worst candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    id: usize,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then_with(|| self.id.cmp(&other.id))
    }
}

impl NeighborIndex {
    pub fn build(points: &[Point2D]) -> Result<Self> {
        if points.is_empty() {
            return Err(SpinError::EmptyInput(
                "neighbor index needs at least one point",
            ));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(SpinError::InvalidParameter(format!(
                "non-finite coordinate {p:?}"
            )));
        }
        let mut index = NeighborIndex {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        index.build_node(0, points.len());
        Ok(index)
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let slot = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return slot;
        }
        // split on the axis of largest spread
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for &id in &self.order[start..end] {
            let p = self.points[id];
            for axis in 0..2 {
                lo[axis] = lo[axis].min(p.coord(axis));
                hi[axis] = hi[axis].max(p.coord(axis));
            }
        }
        let axis = if hi[0] - lo[0] >= hi[1] - lo[1] { 0 } else { 1 };
        if hi[axis] - lo[axis] == 0.0 {
            // all coincident
            self.nodes.push(Node::Leaf { start, end });
            return slot;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a].coord(axis).total_cmp(&points[b].coord(axis))
        });
        let value = self.points[self.order[mid]].coord(axis);
        self.nodes.push(Node::Split {
            axis,
            value,
            left: 0,
            right: 0,
        });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[slot] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        slot
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point2D] {
        &self.points
    }

    /// The `m` nearest points to `query` as `(id, distance)`, nondecreasing in
    /// distance; equal distances are ordered by id.
    pub fn k_nearest(&self, query: &Point2D, m: usize) -> Result<Vec<(usize, f64)>> {
        if m > self.len() {
            return Err(SpinError::InsufficientData {
                requested: m,
                available: self.len(),
            });
        }
        if m == 0 {
            return Ok(Vec::new());
        }
        let mut heap = BinaryHeap::with_capacity(m + 1);
        self.search(0, query, m, &mut heap);
        let mut found = heap.into_vec();
        found.sort_unstable();
        Ok(found.into_iter().map(|c| (c.id, c.d2.sqrt())).collect())
    }

    fn search(&self, node: usize, q: &Point2D, m: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &id in &self.order[start..end] {
                    let cand = Candidate {
                        d2: squared_distance(q, &self.points[id]),
                        id,
                    };
                    if heap.len() < m {
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
                let diff = q.coord(axis) - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, m, heap);
                // points equal to the split value can sit on either side, so
                // an equal bound must still be visited for the id tie rule
                let bound = diff * diff;
                if heap.len() < m || bound <= heap.peek().expect("heap is full").d2 {
                    self.search(far, q, m, heap);
                }
            }
        }
    }
}

/// Linear-scan reference for [`NeighborIndex::k_nearest`].
pub fn brute_force_k_nearest(points: &[Point2D], query: &Point2D, m: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<Candidate> = points
        .iter()
        .enumerate()
        .map(|(id, p)| Candidate {
            d2: squared_distance(query, p),
            id,
        })
        .collect();
    all.sort_unstable();
    all.truncate(m);
    all.into_iter().map(|c| (c.id, c.d2.sqrt())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, seed: u64) -> Vec<Point2D> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Point2D::new(rng.random(), rng.random()))
            .collect()
    }

    #[test]
    fn distance_basics() {
        assert_eq!(
            euclidean_distance(&Point2D::new(0.0, 0.0), &Point2D::new(3.0, 4.0)),
            5.0
        );
        let p = Point2D::new(0.3, -7.25);
        assert_eq!(euclidean_distance(&p, &p), 0.0);
        let pts = random_points(200, 1);
        for pair in pts.chunks(2) {
            assert_eq!(
                euclidean_distance(&pair[0], &pair[1]),
                euclidean_distance(&pair[1], &pair[0])
            );
        }
    }

    #[test]
    fn empty_index_is_an_error() {
        assert!(matches!(
            NeighborIndex::build(&[]),
            Err(SpinError::EmptyInput(_))
        ));
    }

    #[test]
    fn single_point_index() {
        let idx = NeighborIndex::build(&[Point2D::new(1.0, 2.0)]).unwrap();
        assert_eq!(idx.len(), 1);
        assert_eq!(idx.k_nearest(&Point2D::new(5.0, 5.0), 1).unwrap()[0].0, 0);
    }

    #[test]
    fn each_point_finds_itself() {
        let pts = random_points(300, 2);
        let idx = NeighborIndex::build(&pts).unwrap();
        for (i, p) in pts.iter().enumerate() {
            let nn = idx.k_nearest(p, 1).unwrap();
            assert_eq!(nn[0], (i, 0.0));
        }
    }

    #[test]
    fn m_greater_than_n_is_insufficient_data() {
        let idx = NeighborIndex::build(&random_points(10, 3)).unwrap();
        let err = idx.k_nearest(&Point2D::new(0.5, 0.5), 11).unwrap_err();
        assert_eq!(
            err,
            SpinError::InsufficientData {
                requested: 11,
                available: 10
            }
        );
    }

    #[test]
    fn m_equal_n_returns_everything_sorted() {
        let pts = random_points(57, 4);
        let idx = NeighborIndex::build(&pts).unwrap();
        let q = Point2D::new(0.2, 0.9);
        let all = idx.k_nearest(&q, 57).unwrap();
        assert_eq!(all.len(), 57);
        assert!(all.windows(2).all(|w| w[0].1 <= w[1].1));
        assert_eq!(all, brute_force_k_nearest(&pts, &q, 57));
    }

    #[test]
    fn matches_brute_force_k50() {
        let pts = random_points(1000, 5);
        let idx = NeighborIndex::build(&pts).unwrap();
        let queries = random_points(50, 6);
        for q in &queries {
            assert_eq!(
                idx.k_nearest(q, 50).unwrap(),
                brute_force_k_nearest(&pts, q, 50)
            );
        }
    }

    #[test]
    fn unit_grid_ties_follow_id_rule() {
        let pts: Vec<Point2D> = (0..100)
            .map(|k| Point2D::new((k % 10) as f64, (k / 10) as f64))
            .collect();
        let idx = NeighborIndex::build(&pts).unwrap();
        let q = Point2D::new(0.05, 0.05);
        assert_eq!(
            idx.k_nearest(&q, 3).unwrap(),
            brute_force_k_nearest(&pts, &q, 3)
        );
        // exact ties: centre of a cell is equidistant to four corners
        let q = Point2D::new(4.5, 4.5);
        let nn = idx.k_nearest(&q, 4).unwrap();
        assert_eq!(
            nn.iter().map(|x| x.0).collect::<Vec<_>>(),
            vec![44, 45, 54, 55]
        );
        let q = Point2D::new(3.0, 3.0);
        assert_eq!(
            idx.k_nearest(&q, 5).unwrap(),
            brute_force_k_nearest(&pts, &q, 5)
        );
    }

    #[test]
    fn duplicates_are_distinct_points() {
        let pts = vec![Point2D::new(0.5, 0.5); 40];
        let idx = NeighborIndex::build(&pts).unwrap();
        let nn = idx.k_nearest(&Point2D::new(0.5, 0.5), 5).unwrap();
        assert_eq!(
            nn.iter().map(|x| x.0).collect::<Vec<_>>(),
            vec![0, 1, 2, 3, 4]
        );
    }

    proptest! {
        #[test]
        fn knn_equals_brute_force(
            coords in prop::collection::vec((0u8..20, 0u8..20), 1..200),
            qx in -2.0f64..22.0, qy in -2.0f64..22.0,
            mfrac in 0.0f64..1.0,
        ) {
            // integer lattice coordinates force many exact ties
            let pts: Vec<Point2D> = coords.iter().map(|&(a, b)| Point2D::new(a as f64, b as f64)).collect();
            let m = 1 + ((pts.len() - 1) as f64 * mfrac) as usize;
            let idx = NeighborIndex::build(&pts).unwrap();
            let q = Point2D::new(qx.round(), qy);
            let got = idx.k_nearest(&q, m).unwrap();
            prop_assert!(got.windows(2).all(|w| w[0].1 <= w[1].1));
            prop_assert_eq!(got, brute_force_k_nearest(&pts, &q, m));
        }
    }

    #[test]
    fn standardized_coordinates_have_unit_spread() {
        let pts = vec![
            Point2D::new(100.0, 5.0),
            Point2D::new(300.0, 5.0),
            Point2D::new(200.0, 5.0),
        ];
        let z = standardize_points(&pts);
        assert_eq!(z[0].s1, -1.0);
        assert_eq!(z[1].s1, 1.0);
        assert_eq!(z[2].s1, 0.0);
        assert!(z.iter().all(|p| p.s2 == 0.0));
        assert!(standardize_points(&[]).is_empty());
    }
}
