//! Group assignments (spatial indexes) that define the block structure of the
//! working covariance.

use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpinError};
use crate::geometry::{squared_distance, Point2D};

const MAX_LLOYD_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionScheme {
    Random,
    Compact,
    Mixed,
}

impl fmt::Display for PartitionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PartitionScheme::Random => "random",
            PartitionScheme::Compact => "compact",
            PartitionScheme::Mixed => "mixed",
        };
        f.write_str(s)
    }
}

impl FromStr for PartitionScheme {
    type Err = SpinError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" | "rand" => Ok(PartitionScheme::Random),
            "compact" | "comp" => Ok(PartitionScheme::Compact),
            "mixed" | "mixd" => Ok(PartitionScheme::Mixed),
            other => Err(SpinError::InvalidParameter(format!(
                "unknown partition scheme `{other}`"
            ))),
        }
    }
}

/// Maps each observation to a group `0..P`. Every group is nonempty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionAssignment {
    labels: Vec<usize>,
    groups: usize,
}

impl PartitionAssignment {
    /// Labels must cover `0..P` without gaps.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(SpinError::EmptyInput("partition labels"));
        }
        let groups = labels.iter().max().map_or(0, |&m| m + 1);
        let mut sizes = vec![0usize; groups];
        for &l in &labels {
            sizes[l] += 1;
        }
        if let Some(g) = sizes.iter().position(|&s| s == 0) {
            return Err(SpinError::InvalidParameter(format!(
                "partition group {g} is empty"
            )));
        }
        Ok(PartitionAssignment { labels, groups })
    }

    /// Single group containing every observation.
    pub fn single(n: usize) -> Self {
        PartitionAssignment {
            labels: vec![0; n],
            groups: 1,
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_groups(&self) -> usize {
        self.groups
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.groups];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Observation ids per group, each in ascending order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.sizes().into_iter().map(Vec::with_capacity).collect();
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

pub fn group_count(n: usize, target_size: usize) -> Result<usize> {
    if n == 0 {
        return Err(SpinError::EmptyInput("cannot partition zero observations"));
    }
    if target_size == 0 || target_size > n {
        return Err(SpinError::InvalidParameter(format!(
            "target group size {target_size} must be in 1..={n}"
        )));
    }
    Ok(n.div_ceil(target_size))
}

/// Balanced random assignment: group sizes differ by at most one.
pub fn partition_random(n: usize, target_size: usize, seed: u64) -> Result<PartitionAssignment> {
    let groups = group_count(n, target_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut labels = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        labels[i] = rank % groups;
    }
    PartitionAssignment::from_labels(labels)
}

/// k-means on raw coordinates with `k = ceil(n / target_size)`, k-means++
/// seeding, and Lloyd iterations until the assignment stops changing or 100
/// iterations have run. Coincident points collapse to a single group.
pub fn partition_compact(
    points: &[Point2D],
    target_size: usize,
    seed: u64,
) -> Result<PartitionAssignment> {
    let k = group_count(points.len(), target_size)?;
    if points.iter().all(|p| *p == points[0]) {
        return Ok(PartitionAssignment::single(points.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = kmeans(points, k, &mut rng);
    PartitionAssignment::from_labels(labels)
}

/// Compact partition followed by moving `floor(frac * size)` random members
/// of every group to independently, uniformly chosen other groups.
pub fn partition_mixed(
    points: &[Point2D],
    target_size: usize,
    reassign_frac: f64,
    seed: u64,
) -> Result<PartitionAssignment> {
    if !(0.0..1.0).contains(&reassign_frac) {
        return Err(SpinError::InvalidParameter(format!(
            "reassignment fraction {reassign_frac} must be in [0, 1)"
        )));
    }
    let compact = partition_compact(points, target_size, seed)?;
    let groups = compact.num_groups();
    if groups == 1 || reassign_frac == 0.0 {
        return Ok(compact);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d69_7865_645f_7061);
    let mut labels = compact.labels().to_vec();
    for (g, members) in compact.members().into_iter().enumerate() {
        let leave = (reassign_frac * members.len() as f64).floor() as usize;
        let movers = members
            .choose_multiple(&mut rng, leave)
            .copied()
            .collect::<Vec<_>>();
        for i in movers {
            let mut dest = rng.random_range(0..groups - 1);
            if dest >= g {
                dest += 1;
            }
            labels[i] = dest;
        }
    }
    PartitionAssignment::from_labels(labels)
}

pub fn partition(
    scheme: PartitionScheme,
    points: &[Point2D],
    target_size: usize,
    seed: u64,
) -> Result<PartitionAssignment> {
    match scheme {
        PartitionScheme::Random => partition_random(points.len(), target_size, seed),
        PartitionScheme::Compact => partition_compact(points, target_size, seed),
        PartitionScheme::Mixed => partition_mixed(points, target_size, 0.10, seed),
    }
}

fn nearest_centroid(p: &Point2D, centroids: &[Point2D]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(p, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn kmeans_pp_init(points: &[Point2D], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point2D> {
    let n = points.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)]);
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = points[next];
        for (slot, p) in d2.iter_mut().zip(points) {
            *slot = slot.min(squared_distance(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn update_centroids(points: &[Point2D], labels: &[usize], k: usize) -> (Vec<Point2D>, Vec<usize>) {
    let mut sums = vec![(0.0f64, 0.0f64); k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        sums[l].0 += p.s1;
        sums[l].1 += p.s2;
        counts[l] += 1;
    }
    let centroids = sums
        .iter()
        .zip(&counts)
        .map(|(&(a, b), &c)| {
            if c > 0 {
                Point2D::new(a / c as f64, b / c as f64)
            } else {
                Point2D::new(f64::NAN, f64::NAN)
            }
        })
        .collect();
    (centroids, counts)
}

/// Moves points into empty clusters: each empty cluster takes the point
/// farthest from its own centroid among clusters with at least two members.
/// Returns false when no such point exists (fewer distinct locations than
/// clusters).
fn repair_empty(points: &[Point2D], labels: &mut [usize], k: usize) -> bool {
    loop {
        let (centroids, counts) = update_centroids(points, labels, k);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return true;
        };
        let far = (0..points.len())
            .filter(|&i| counts[labels[i]] > 1)
            .map(|i| (i, squared_distance(&points[i], &centroids[labels[i]])))
            .filter(|&(_, d)| d > 0.0)
            .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)));
        match far {
            Some((i, _)) => labels[i] = empty,
            None => return false,
        }
    }
}

/// Lloyd's algorithm from k-means++ seeds.
fn kmeans(points: &[Point2D], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if k == 1 {
        return vec![0; points.len()];
    }
    let centroids = kmeans_pp_init(points, k, rng);
    let mut labels: Vec<usize> = points
        .iter()
        .map(|p| nearest_centroid(p, &centroids))
        .collect();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        if !repair_empty(points, &mut labels, k) {
            return compact_labels(labels);
        }
        let (centroids, _) = update_centroids(points, &labels, k);
        let next: Vec<usize> = points
            .iter()
            .map(|p| nearest_centroid(p, &centroids))
            .collect();
        if next == labels {
            return labels;
        }
        labels = next;
    }
    log::debug!("k-means stopped after {MAX_LLOYD_ITERATIONS} Lloyd iterations");
    if !repair_empty(points, &mut labels, k) {
        return compact_labels(labels);
    }
    labels
}

fn compact_labels(labels: Vec<usize>) -> Vec<usize> {
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    let mut used = vec![false; k];
    for &l in &labels {
        used[l] = true;
    }
    let mut remap = vec![0; k];
    let mut next = 0;
    for (old, &u) in used.iter().enumerate() {
        if u {
            remap[old] = next;
            next += 1;
        }
    }
    labels.into_iter().map(|l| remap[l]).collect()
}

/// One Lloyd assignment step from the centroids implied by `labels`.
pub fn lloyd_step(points: &[Point2D], labels: &[usize], k: usize) -> Vec<usize> {
    let (centroids, _) = update_centroids(points, labels, k);
    points
        .iter()
        .map(|p| nearest_centroid(p, &centroids))
        .collect()
}

pub fn group_centroids(points: &[Point2D], part: &PartitionAssignment) -> Vec<Point2D> {
    update_centroids(points, part.labels(), part.num_groups()).0
}
