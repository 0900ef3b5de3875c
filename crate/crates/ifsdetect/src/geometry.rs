//! Point clouds, exact nearest-neighbor search, farthest-point sampling, and
//! epsilon-connected components.
//!
//! Everything downstream (regime detection, separation, ghost analysis) is
//! built on four primitives defined here:
//!
//! * [`distance`] — Euclidean metric between points of equal dimension.
//! * [`knn`] / [`KdTree::knn`] — the k-nearest-neighbor set `N_k(x_t)`,
//!   which always contains the query point itself plus its `k-1` nearest
//!   others. Distance ties are broken toward the lower point index, so the
//!   result is a pure function of the input cloud.
//! * [`farthest_point_sample`] — greedy max-min landmark selection.
//! * [`epsilon_components`] — the partition of a point subset into maximal
//!   epsilon-connected blocks, where two points are chained when their
//!   distance is *strictly* below epsilon.
//!
//! `KdTree` is an exact spatial index: its answers are identical to a brute
//! force scan (this is asserted by tests against a full-sort oracle). Use it
//! when issuing many queries against the same cloud; the free function
//! [`knn`] builds a throwaway tree and is intended for one-off lookups.

use crate::dsu::DisjointSet;
use crate::error::{Error, Result};

/// A finite ordered set of d-dimensional points indexed by time `0..len`.
///
/// Coordinates are stored flat (row major) and are validated to be finite at
/// construction, so distance comparisons are total.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Vec<f64>,
    dim: usize,
}

impl PointCloud {
    /// Builds a cloud from per-point coordinate vectors.
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InsufficientData { what: "points", needed: 1, found: 0 });
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::InvalidParameter {
                what: "point dimension",
                detail: "points must have at least one coordinate".into(),
            });
        }
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(coords, dim)
    }

    /// Builds a cloud from a flat row-major coordinate buffer.
    pub fn from_flat(coords: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || coords.is_empty() || coords.len() % dim != 0 {
            return Err(Error::InvalidParameter {
                what: "flat coordinates",
                detail: format!("buffer of {} values is not a multiple of dim {}", coords.len(), dim),
            });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite { what: "point coordinates" });
        }
        Ok(PointCloud { coords, dim })
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coordinate slice of point `t`. Panics only on out-of-range `t`;
    /// public entry points validate indices first.
    pub fn point(&self, t: usize) -> &[f64] {
        &self.coords[t * self.dim..(t + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    fn check_index(&self, t: usize) -> Result<()> {
        if t < self.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: t, len: self.len() })
        }
    }

    pub(crate) fn dist2(&self, a: usize, b: usize) -> f64 {
        let (pa, pb) = (self.point(a), self.point(b));
        pa.iter().zip(pb).map(|(x, y)| (x - y) * (x - y)).sum()
    }
}

/// A sorted, duplicate-free set of point indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet {
    indices: Vec<usize>,
}

impl IndexSet {
    /// Sorts and deduplicates the given indices.
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        IndexSet { indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, t: usize) -> bool {
        self.indices.binary_search(&t).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }

    /// True when the two sets share at least one index (linear merge walk).
    pub fn intersects(&self, other: &IndexSet) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }
}

/// Euclidean distance between two points of equal dimension.
pub fn distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    if a.is_empty() {
        return Err(Error::InvalidParameter {
            what: "point dimension",
            detail: "cannot measure distance between zero-dimensional points".into(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Candidate in a bounded nearest-neighbor heap: worst (largest distance,
/// then largest index) at the top.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Coordinates are finite by PointCloud construction, so total_cmp
        // agrees with the numeric order.
        self.d2.total_cmp(&other.d2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

const KD_LEAF_SIZE: usize = 16;

enum KdNode {
    Leaf {
        begin: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        /// Index of the left child node; the right child is `left + 1` is not
        /// guaranteed, so both are stored explicitly.
        left: usize,
        right: usize,
    },
}

/// Exact k-nearest-neighbor index over a borrowed cloud.
///
/// Median splits on cycling axes with leaves scanned linearly. Queries prune
/// a subtree only when the splitting plane is *strictly* farther than the
/// current worst candidate, so equal-distance points are still visited and
/// index tie-breaking matches brute force exactly.
pub struct KdTree<'a> {
    cloud: &'a PointCloud,
    order: Vec<usize>,
    nodes: Vec<KdNode>,
    root: usize,
}

impl<'a> KdTree<'a> {
    pub fn build(cloud: &'a PointCloud) -> Self {
        let mut order: Vec<usize> = (0..cloud.len()).collect();
        let mut nodes = Vec::new();
        let root = Self::build_node(cloud, &mut order, 0, cloud.len(), 0, &mut nodes);
        KdTree { cloud, order, nodes, root }
    }

    fn build_node(
        cloud: &PointCloud,
        order: &mut [usize],
        begin: usize,
        end: usize,
        depth: usize,
        nodes: &mut Vec<KdNode>,
    ) -> usize {
        if end - begin <= KD_LEAF_SIZE {
            nodes.push(KdNode::Leaf { begin, end });
            return nodes.len() - 1;
        }
        let axis = depth % cloud.dim();
        let mid = (begin + end) / 2;
        // Deterministic median partition: order by (coordinate, index).
        order[begin..end].select_nth_unstable_by(mid - begin, |&a, &b| {
            cloud.point(a)[axis].total_cmp(&cloud.point(b)[axis]).then(a.cmp(&b))
        });
        let value = cloud.point(order[mid])[axis];
        let left = Self::build_node(cloud, order, begin, mid, depth + 1, nodes);
        let right = Self::build_node(cloud, order, mid, end, depth + 1, nodes);
        nodes.push(KdNode::Split { axis, value, left, right });
        nodes.len() - 1
    }

    /// The neighbor set `N_k(x_t)`: `t` itself plus its `k-1` nearest other
    /// points, ties broken toward the lower index.
    pub fn knn(&self, t: usize, k: usize) -> Result<IndexSet> {
        self.cloud.check_index(t)?;
        let n = self.cloud.len();
        if k == 0 || k > n {
            return Err(Error::InvalidParameter {
                what: "neighbor count k",
                detail: format!("k={k} must satisfy 1 <= k <= {n}"),
            });
        }
        let mut result = Vec::with_capacity(k);
        result.push(t);
        if k > 1 {
            let mut heap = std::collections::BinaryHeap::with_capacity(k);
            self.search(self.root, t, k - 1, &mut heap);
            result.extend(heap.into_iter().map(|c| c.index));
        }
        Ok(IndexSet::new(result))
    }

    fn search(
        &self,
        node: usize,
        t: usize,
        need: usize,
        heap: &mut std::collections::BinaryHeap<Candidate>,
    ) {
        match &self.nodes[node] {
            KdNode::Leaf { begin, end } => {
                for &idx in &self.order[*begin..*end] {
                    if idx == t {
                        continue;
                    }
                    let cand = Candidate { d2: self.cloud.dist2(t, idx), index: idx };
                    if heap.len() < need {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap nonempty") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            KdNode::Split { axis, value, left, right } => {
                let diff = self.cloud.point(t)[*axis] - value;
                let (near, far) = if diff <= 0.0 { (*left, *right) } else { (*right, *left) };
                self.search(near, t, need, heap);
                // Visit the far side when the plane is not strictly beyond the
                // current worst: an equal-distance, lower-index point there
                // could still displace the worst candidate.
                let visit = match heap.peek() {
                    Some(worst) if heap.len() == need => diff * diff <= worst.d2,
                    _ => true,
                };
                if visit {
                    self.search(far, t, need, heap);
                }
            }
        }
    }
}

/// One-off `N_k(x_t)` lookup. Builds a temporary [`KdTree`]; callers issuing
/// many queries should build the tree once instead.
pub fn knn(cloud: &PointCloud, t: usize, k: usize) -> Result<IndexSet> {
    KdTree::build(cloud).knn(t, k)
}

/// Greedy farthest-point sampling of `count` landmark indices.
///
/// The first landmark is `start`; each subsequent pick maximizes the minimum
/// distance to the landmarks chosen so far, with ties resolved toward the
/// lower index. The achieved max-min distances are non-increasing.
pub fn farthest_point_sample(cloud: &PointCloud, count: usize, start: usize) -> Result<Vec<usize>> {
    cloud.check_index(start)?;
    let n = cloud.len();
    if count == 0 || count > n {
        return Err(Error::InvalidParameter {
            what: "sample count",
            detail: format!("count={count} must satisfy 1 <= count <= {n}"),
        });
    }
    let mut selected = Vec::with_capacity(count);
    selected.push(start);
    let mut min_d2 = vec![f64::INFINITY; n];
    min_d2[start] = 0.0;
    for _ in 1..count {
        let last = *selected.last().expect("nonempty");
        use rayon::prelude::*;
        // Update min distances against the newest landmark, then take the
        // arg-max with deterministic lower-index tie-breaking. Both steps are
        // elementwise/associative, so the result is worker-independent.
        let best = min_d2
            .par_iter_mut()
            .enumerate()
            .map(|(i, md)| {
                let d = cloud.dist2(i, last);
                if d < *md {
                    *md = d;
                }
                (*md, i)
            })
            .reduce(
                || (f64::NEG_INFINITY, usize::MAX),
                |a, b| {
                    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                        b
                    } else {
                        a
                    }
                },
            );
        selected.push(best.1);
        min_d2[best.1] = 0.0;
    }
    Ok(selected)
}

/// Partition of a member set into epsilon-connected blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentPartition {
    /// Blocks sorted by their smallest member; each block is itself sorted.
    pub blocks: Vec<IndexSet>,
    /// The chaining threshold the partition was computed at.
    pub epsilon: f64,
}

impl ComponentPartition {
    pub fn component_count(&self) -> usize {
        self.blocks.len()
    }
}

/// Splits `members` into maximal epsilon-connected blocks: two members chain
/// when their distance is strictly below `epsilon`, and blocks are the
/// transitive closure of chaining.
///
/// All-pairs union-find, O(m^2) in the member count; intended for the small
/// neighborhood-sized sets this crate works with.
pub fn epsilon_components(
    cloud: &PointCloud,
    members: &IndexSet,
    epsilon: f64,
) -> Result<ComponentPartition> {
    if members.is_empty() {
        return Err(Error::InsufficientData { what: "members", needed: 1, found: 0 });
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter {
            what: "epsilon",
            detail: format!("epsilon={epsilon} must be a positive finite real"),
        });
    }
    for t in members.iter() {
        cloud.check_index(t)?;
    }
    let idx: Vec<usize> = members.iter().collect();
    let m = idx.len();
    let eps2 = epsilon * epsilon;
    let mut dsu = DisjointSet::new(m);
    for i in 0..m {
        for j in (i + 1)..m {
            if cloud.dist2(idx[i], idx[j]) < eps2 {
                dsu.union(i, j);
            }
        }
    }
    let mut by_root: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for (pos, &t) in idx.iter().enumerate() {
        let root = dsu.find(pos);
        by_root.entry(root).or_default().push(t);
    }
    let mut blocks: Vec<IndexSet> = by_root.into_values().map(IndexSet::new).collect();
    blocks.sort_by_key(|b| b.as_slice()[0]);
    Ok(ComponentPartition { blocks, epsilon })
}

/// Number of epsilon-connected blocks without materializing the partition.
pub(crate) fn component_count(cloud: &PointCloud, indices: &[usize], epsilon: f64) -> usize {
    let m = indices.len();
    let eps2 = epsilon * epsilon;
    let mut dsu = DisjointSet::new(m);
    for i in 0..m {
        for j in (i + 1)..m {
            if cloud.dist2(indices[i], indices[j]) < eps2 {
                dsu.union(i, j);
            }
        }
    }
    let mut roots: Vec<usize> = (0..m).map(|i| dsu.find(i)).collect();
    roots.sort_unstable();
    roots.dedup();
    roots.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud_1d(xs: &[f64]) -> PointCloud {
        PointCloud::new(xs.iter().map(|&x| vec![x]).collect()).unwrap()
    }

    /// Deterministic pseudo-random points without pulling in an RNG: a simple
    /// splitmix-style integer hash mapped to [0, 1).
    fn hashed_unit(seed: u64, i: u64) -> f64 {
        let mut z = seed.wrapping_add(i.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z = z ^ (z >> 31);
        (z >> 11) as f64 / (1u64 << 53) as f64
    }

    fn random_cloud(seed: u64, n: usize, dim: usize) -> PointCloud {
        let pts = (0..n)
            .map(|i| (0..dim).map(|d| hashed_unit(seed, (i * dim + d) as u64)).collect())
            .collect();
        PointCloud::new(pts).unwrap()
    }

    /// Full-sort oracle for N_k: query point first, all others ordered by
    /// (distance, index).
    fn knn_oracle(cloud: &PointCloud, t: usize, k: usize) -> Vec<usize> {
        let mut others: Vec<(f64, usize)> = (0..cloud.len())
            .filter(|&i| i != t)
            .map(|i| (cloud.dist2(t, i), i))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut out: Vec<usize> = std::iter::once(t)
            .chain(others.into_iter().take(k - 1).map(|(_, i)| i))
            .collect();
        out.sort_unstable();
        out
    }

    /// Breadth-first-search oracle for epsilon components over all pairs.
    fn components_oracle(cloud: &PointCloud, members: &[usize], eps: f64) -> Vec<Vec<usize>> {
        let m = members.len();
        let mut adj = vec![Vec::new(); m];
        for i in 0..m {
            for j in 0..m {
                if i != j && cloud.dist2(members[i], members[j]).sqrt() < eps {
                    adj[i].push(j);
                }
            }
        }
        let mut seen = vec![false; m];
        let mut blocks = Vec::new();
        for s in 0..m {
            if seen[s] {
                continue;
            }
            let mut queue = std::collections::VecDeque::from([s]);
            seen[s] = true;
            let mut block = Vec::new();
            while let Some(u) = queue.pop_front() {
                block.push(members[u]);
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            block.sort_unstable();
            blocks.push(block);
        }
        blocks.sort_by_key(|b| b[0]);
        blocks
    }

    #[test]
    fn distance_matches_hand_values() {
        assert_eq!(distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(distance(&[1.5], &[1.5]).unwrap(), 0.0);
        assert!(matches!(
            distance(&[0.0], &[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn distance_agrees_with_componentwise_formula() {
        for pair in 0..100u64 {
            let a: Vec<f64> = (0..3).map(|d| hashed_unit(7, pair * 6 + d)).collect();
            let b: Vec<f64> = (0..3).map(|d| hashed_unit(7, pair * 6 + 3 + d)).collect();
            let expected = a
                .iter()
                .zip(&b)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            assert_eq!(distance(&a, &b).unwrap(), expected);
        }
    }

    #[test]
    fn knn_line_example() {
        let cloud = cloud_1d(&[0.0, 1.0, 2.0, 10.0]);
        let got = knn(&cloud, 1, 3).unwrap();
        assert_eq!(got.as_slice(), &[0, 1, 2]);
    }

    #[test]
    fn knn_duplicate_points_tie_break_lower_index() {
        // Points 1 and 3 sit at the same location; the tie goes to index 1.
        let cloud = cloud_1d(&[0.0, 5.0, 9.0, 5.0, 5.1]);
        let got = knn(&cloud, 4, 2).unwrap();
        assert_eq!(got.as_slice(), &[1, 4]);
        // The query point is always a member even when other points coincide
        // with it exactly.
        let got = knn(&cloud, 3, 1).unwrap();
        assert_eq!(got.as_slice(), &[3]);
        let got = knn(&cloud, 3, 2).unwrap();
        assert_eq!(got.as_slice(), &[1, 3]);
    }

    #[test]
    fn knn_k_equals_len_returns_everything() {
        let cloud = random_cloud(3, 37, 2);
        let got = knn(&cloud, 5, 37).unwrap();
        assert_eq!(got.len(), 37);
    }

    #[test]
    fn knn_rejects_bad_arguments() {
        let cloud = cloud_1d(&[0.0, 1.0]);
        assert!(matches!(knn(&cloud, 0, 3), Err(Error::InvalidParameter { .. })));
        assert!(matches!(knn(&cloud, 0, 0), Err(Error::InvalidParameter { .. })));
        assert!(matches!(knn(&cloud, 9, 1), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn kdtree_matches_full_sort_oracle() {
        for seed in 0..4u64 {
            let cloud = random_cloud(seed, 157, 2 + (seed as usize % 2));
            let tree = KdTree::build(&cloud);
            for q in 0..40 {
                let t = (q * 13) % cloud.len();
                let k = 1 + (q % 12);
                let got = tree.knn(t, k).unwrap();
                assert_eq!(got.as_slice(), knn_oracle(&cloud, t, k), "seed {seed} t {t} k {k}");
            }
        }
    }

    #[test]
    fn epsilon_components_line_example() {
        let cloud = cloud_1d(&[0.0, 1.0, 5.0]);
        let members = IndexSet::new(vec![0, 1, 2]);
        let parts = epsilon_components(&cloud, &members, 1.5).unwrap();
        assert_eq!(parts.component_count(), 2);
        assert_eq!(parts.blocks[0].as_slice(), &[0, 1]);
        assert_eq!(parts.blocks[1].as_slice(), &[2]);
    }

    #[test]
    fn epsilon_threshold_is_strict() {
        // Two points exactly epsilon apart do not chain.
        let cloud = cloud_1d(&[0.0, 1.0]);
        let members = IndexSet::new(vec![0, 1]);
        let parts = epsilon_components(&cloud, &members, 1.0).unwrap();
        assert_eq!(parts.component_count(), 2);
        let parts = epsilon_components(&cloud, &members, 1.0 + 1e-12).unwrap();
        assert_eq!(parts.component_count(), 1);
    }

    #[test]
    fn epsilon_components_match_bfs_oracle() {
        for case in 0..100u64 {
            let n = 5 + (case as usize % 46);
            let cloud = random_cloud(case, n, 2);
            let members: Vec<usize> = (0..n).filter(|i| (i + case as usize) % 3 != 0).collect();
            let members = IndexSet::new(members);
            let eps = 0.02 + 0.3 * hashed_unit(99, case);
            let got = epsilon_components(&cloud, &members, eps).unwrap();
            let want = components_oracle(&cloud, members.as_slice(), eps);
            let got_plain: Vec<Vec<usize>> =
                got.blocks.iter().map(|b| b.as_slice().to_vec()).collect();
            assert_eq!(got_plain, want, "case {case}");
        }
    }

    #[test]
    fn epsilon_components_rejects_empty_and_bad_epsilon() {
        let cloud = cloud_1d(&[0.0, 1.0]);
        let empty = IndexSet::new(vec![]);
        assert!(matches!(
            epsilon_components(&cloud, &empty, 0.5),
            Err(Error::InsufficientData { .. })
        ));
        let members = IndexSet::new(vec![0, 1]);
        assert!(matches!(
            epsilon_components(&cloud, &members, 0.0),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            epsilon_components(&cloud, &members, f64::NAN),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn one_block_above_longest_mst_edge() {
        // With epsilon strictly greater than the longest edge of a minimum
        // spanning tree, the whole set is one block.
        for case in 0..20u64 {
            let n = 8 + (case as usize % 20);
            let cloud = random_cloud(case.wrapping_add(500), n, 2);
            // Prim's algorithm, O(n^2).
            let mut in_tree = vec![false; n];
            let mut best = vec![f64::INFINITY; n];
            in_tree[0] = true;
            best.iter_mut().enumerate().for_each(|(i, b)| *b = cloud.dist2(0, i));
            let mut longest = 0.0f64;
            for _ in 1..n {
                let (next, d2) = best
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !in_tree[*i])
                    .map(|(i, &d)| (i, d))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                in_tree[next] = true;
                longest = longest.max(d2.sqrt());
                for i in 0..n {
                    best[i] = best[i].min(cloud.dist2(next, i));
                }
            }
            let members = IndexSet::new((0..n).collect());
            let parts =
                epsilon_components(&cloud, &members, longest + 1e-9).unwrap();
            assert_eq!(parts.component_count(), 1, "case {case}");
        }
    }

    #[test]
    fn fps_square_example() {
        // Unit square corners: starting at 0 = (0,0), the first jump goes to
        // the diagonal corner.
        let cloud = PointCloud::new(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let picks = farthest_point_sample(&cloud, 4, 0).unwrap();
        assert_eq!(picks[0], 0);
        assert_eq!(picks[1], 3);
        // Corners 1 and 2 are now equidistant from {0, 3}; the lower index wins.
        assert_eq!(picks[2], 1);
        assert_eq!(picks[3], 2);
    }

    #[test]
    fn fps_prefixes_match_exhaustive_scan() {
        let cloud = random_cloud(42, 300, 2);
        let count = 24;
        let picks = farthest_point_sample(&cloud, count, 17).unwrap();
        assert_eq!(picks[0], 17);
        let mut chosen = vec![picks[0]];
        for step in 1..count {
            // Oracle: scan every point, compute its min distance to the
            // current prefix, take the max with lower-index ties.
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            for i in 0..cloud.len() {
                let md = chosen.iter().map(|&c| cloud.dist2(i, c)).fold(f64::INFINITY, f64::min);
                if md > best.0 || (md == best.0 && i < best.1) {
                    best = (md, i);
                }
            }
            assert_eq!(picks[step], best.1, "step {step}");
            chosen.push(best.1);
        }
    }

    #[test]
    fn fps_min_distances_are_non_increasing() {
        let cloud = random_cloud(7, 250, 2);
        let picks = farthest_point_sample(&cloud, 40, 3).unwrap();
        let mut prev = f64::INFINITY;
        for step in 1..picks.len() {
            let d = picks[..step]
                .iter()
                .map(|&c| cloud.dist2(picks[step], c))
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            assert!(d <= prev + 1e-12, "step {step}: {d} > {prev}");
            prev = d;
        }
    }

    #[test]
    fn fps_rejects_bad_count() {
        let cloud = cloud_1d(&[0.0, 1.0, 2.0]);
        assert!(matches!(
            farthest_point_sample(&cloud, 4, 0),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            farthest_point_sample(&cloud, 0, 0),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            farthest_point_sample(&cloud, 2, 9),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn cloud_rejects_non_finite_and_ragged_input() {
        assert!(matches!(
            PointCloud::new(vec![vec![0.0], vec![f64::NAN]]),
            Err(Error::NonFinite { .. })
        ));
        assert!(matches!(
            PointCloud::new(vec![vec![0.0, 1.0], vec![2.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Refinement: every block at a smaller epsilon is contained in a
        /// single block at any larger epsilon, so counts are non-increasing.
        #[test]
        fn components_refine_monotonically(
            seed in 0u64..1000,
            n in 4usize..40,
            e1 in 0.01f64..0.4,
            bump in 0.0f64..0.4,
        ) {
            let cloud = random_cloud(seed, n, 2);
            let members = IndexSet::new((0..n).collect());
            let e2 = e1 + bump;
            let fine = epsilon_components(&cloud, &members, e1).unwrap();
            let coarse = epsilon_components(&cloud, &members, e2).unwrap();
            prop_assert!(fine.component_count() >= coarse.component_count());
            for small in &fine.blocks {
                let hosts = coarse
                    .blocks
                    .iter()
                    .filter(|big| small.iter().all(|t| big.contains(t)))
                    .count();
                prop_assert_eq!(hosts, 1);
            }
        }

        /// The kd-tree answer is the brute-force answer on any input.
        #[test]
        fn kdtree_equals_oracle(seed in 0u64..500, n in 2usize..80, t in 0usize..80, k in 1usize..80) {
            let n = n.max(2);
            let t = t % n;
            let k = 1 + (k - 1) % n;
            let cloud = random_cloud(seed, n, 1 + (seed as usize % 3));
            let got = knn(&cloud, t, k).unwrap();
            let want = knn_oracle(&cloud, t, k);
            prop_assert_eq!(got.as_slice(), want.as_slice());
        }

        /// Partition blocks cover the member set exactly once.
        #[test]
        fn components_partition_members(seed in 0u64..500, n in 1usize..30, eps in 0.01f64..1.0) {
            let cloud = random_cloud(seed, n.max(1), 2);
            let members = IndexSet::new((0..cloud.len()).collect());
            let parts = epsilon_components(&cloud, &members, eps).unwrap();
            let mut all: Vec<usize> = parts.blocks.iter().flat_map(|b| b.iter()).collect();
            all.sort_unstable();
            prop_assert_eq!(all, members.as_slice().to_vec());
        }
    }
}
