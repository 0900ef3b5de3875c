//! Separating a switching trajectory into its constituent maps.
//!
//! Once a chaining threshold epsilon is known, each small neighborhood of the
//! cloud has an image whose epsilon-components correspond to the maps that
//! acted on its members. Components from different neighborhoods that claim a
//! common trajectory point must belong to the same map, so gluing them along
//! shared points assembles, one patch at a time, a global partition of the
//! steps by regime — without ever observing the regime sequence.
//!
//! The pipeline: [`build_cover`] picks well-spread nexus points and their
//! k-nearest neighborhoods, [`split_images`] breaks every neighborhood image
//! into epsilon-components ([`SubNeighborhood`]s), [`build_overlap_graph`]
//! glues sub-neighborhoods sharing a member, and [`label_regimes`] reads the
//! regime labels off the largest glued components. [`separate`] chains the
//! four. [`evaluate_separation`] scores a labeling against a known regime
//! sequence when one is available.
//!
//! Image proximity alone is not quite trustworthy: the image sets of the two
//! maps are one-dimensional strands that cross each other, and near a
//! crossing a long run chains the two regimes through pairs of points that
//! are close in the image while their sources sit far apart inside the
//! neighborhood. Such pairs cannot be close in both senses at once — the two
//! maps send any single point to images a fixed distance apart, so an
//! image-close cross pair must pay for it with source separation. Capping
//! the *sum* of image and source distance therefore rejects every
//! cross-regime link while genuine same-map chains, whose links are short in
//! both senses, stay intact. [`split_images_budgeted`] implements the capped
//! rule and [`DEFAULT_LINK_BUDGET`] carries the calibrated cap.

use crate::error::{Error, Result};
use crate::geometry::{farthest_point_sample, IndexSet, KdTree, PointCloud};
use rayon::prelude::*;

/// Well-spread sample of the cloud together with each sample's k-nearest
/// neighborhood (the nexus itself included).
#[derive(Debug, Clone)]
pub struct NeighborhoodCover {
    pub nexus_indices: Vec<usize>,
    /// `neighborhoods[i]` lists the members of `N_k` around `nexus_indices[i]`.
    pub neighborhoods: Vec<IndexSet>,
    pub k: usize,
}

impl NeighborhoodCover {
    /// Number of neighborhoods in the cover.
    pub fn j(&self) -> usize {
        self.nexus_indices.len()
    }
}

/// Farthest-point-samples `nexus_count` points beginning at `start` and
/// attaches each one's k-nearest neighborhood.
pub fn build_cover(
    cloud: &PointCloud,
    k: usize,
    nexus_count: usize,
    start: usize,
) -> Result<NeighborhoodCover> {
    if k < 2 {
        return Err(Error::InvalidParameter {
            what: "neighborhood size",
            detail: format!("k={k}: a cover neighborhood needs at least two members"),
        });
    }
    let nexus_indices = farthest_point_sample(cloud, nexus_count, start)?;
    let tree = KdTree::build(cloud);
    let neighborhoods: Vec<IndexSet> =
        nexus_indices.par_iter().map(|&t| tree.knn(t, k)).collect::<Result<_>>()?;
    Ok(NeighborhoodCover { nexus_indices, neighborhoods, k })
}

/// One epsilon-component of one neighborhood's image: the atomic "this patch
/// was produced by a single map" unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubNeighborhood {
    /// Position of the parent neighborhood within the cover.
    pub cover_index: usize,
    /// Position of this component within the parent image's partition.
    pub component_index: usize,
    /// Trajectory indices whose successors form the component.
    pub members: Vec<usize>,
    /// Successor indices: the component itself, as trajectory indices.
    pub image_members: Vec<usize>,
}

/// Combined image-plus-source distance under which a chaining link is
/// trusted by [`separate`].
///
/// Calibrated against the benchmark map family: inside a neighborhood,
/// pairs of steps driven by *different* maps never score below ≈0.036
/// (images of a single point under two distinct family members stay at
/// least ≈0.048 apart, and source separation buys image proximity at a
/// rate below one near the strand crossings), while same-map chains
/// saturate their connectivity well under this cap. Data at another scale
/// needs a different budget — or [`split_images`], which does not apply one.
pub const DEFAULT_LINK_BUDGET: f64 = 0.034;

/// Splits every cover neighborhood's image into epsilon-components. Members
/// without a successor in the cloud are dropped; neighborhoods whose members
/// all lack successors contribute nothing.
pub fn split_images(
    cloud: &PointCloud,
    cover: &NeighborhoodCover,
    epsilon: f64,
) -> Result<Vec<SubNeighborhood>> {
    split_images_budgeted(cloud, cover, epsilon, f64::INFINITY)
}

/// [`split_images`] with a cap on the combined displacement of a link: two
/// members chain only when their images are within `epsilon` *and* image
/// distance plus member distance stays within `link_budget`. An infinite
/// budget recovers plain image chaining; see the module docs for why a
/// finite budget is what keeps crossing regimes apart.
pub fn split_images_budgeted(
    cloud: &PointCloud,
    cover: &NeighborhoodCover,
    epsilon: f64,
    link_budget: f64,
) -> Result<Vec<SubNeighborhood>> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter {
            what: "epsilon",
            detail: format!("epsilon={epsilon} must be a positive finite real"),
        });
    }
    if !(link_budget > 0.0) {
        return Err(Error::InvalidParameter {
            what: "link budget",
            detail: format!("link_budget={link_budget} must be positive"),
        });
    }
    let last = cloud.len().saturating_sub(1);
    let nested: Vec<Vec<SubNeighborhood>> = cover
        .neighborhoods
        .par_iter()
        .enumerate()
        .map(|(cover_index, hood)| {
            let members: Vec<usize> = hood.iter().filter(|&s| s < last).collect();
            let n = members.len();
            if n == 0 {
                return Vec::new();
            }
            let mut dsu = crate::dsu::DisjointSet::new(n);
            for i in 0..n {
                for j in i + 1..n {
                    let img = cloud.dist2(members[i] + 1, members[j] + 1).sqrt();
                    if img > epsilon {
                        continue;
                    }
                    if img + cloud.dist2(members[i], members[j]).sqrt() > link_budget {
                        continue;
                    }
                    dsu.union(i, j);
                }
            }
            let mut groups: std::collections::BTreeMap<usize, Vec<usize>> =
                std::collections::BTreeMap::new();
            for (i, &s) in members.iter().enumerate() {
                groups.entry(dsu.find(i)).or_default().push(s);
            }
            let mut blocks: Vec<Vec<usize>> = groups.into_values().collect();
            blocks.sort_by_key(|b| b[0]);
            blocks
                .into_iter()
                .enumerate()
                .map(|(component_index, members)| {
                    let image_members = members.iter().map(|&s| s + 1).collect();
                    SubNeighborhood { cover_index, component_index, members, image_members }
                })
                .collect()
        })
        .collect();
    Ok(nested.into_iter().flatten().collect())
}

/// Sub-neighborhoods as nodes, with an edge wherever two of them share a
/// member step (and hence that step's image point).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapGraph {
    pub nodes: Vec<SubNeighborhood>,
    /// Deduplicated, each pair listed once as `(smaller, larger)`.
    pub edges: Vec<(usize, usize)>,
    /// Connected components, each sorted; components ordered by smallest node.
    pub components: Vec<Vec<usize>>,
}

/// Glues sub-neighborhoods along shared members.
pub fn build_overlap_graph(subs: Vec<SubNeighborhood>) -> OverlapGraph {
    let mut owners: std::collections::BTreeMap<usize, Vec<usize>> =
        std::collections::BTreeMap::new();
    for (id, sub) in subs.iter().enumerate() {
        for &p in &sub.members {
            owners.entry(p).or_default().push(id);
        }
    }
    let mut packed: Vec<u64> = Vec::new();
    for ids in owners.values() {
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                packed.push(((lo as u64) << 32) | hi as u64);
            }
        }
    }
    packed.par_sort_unstable();
    packed.dedup();
    let edges: Vec<(usize, usize)> =
        packed.iter().map(|&p| ((p >> 32) as usize, (p & 0xffff_ffff) as usize)).collect();

    let mut dsu = crate::dsu::DisjointSet::new(subs.len());
    for &(a, b) in &edges {
        dsu.union(a, b);
    }
    let mut by_root: std::collections::BTreeMap<usize, Vec<usize>> =
        std::collections::BTreeMap::new();
    for id in 0..subs.len() {
        let root = dsu.find(id);
        by_root.entry(root).or_default().push(id);
    }
    let mut components: Vec<Vec<usize>> = by_root.into_values().collect();
    components.sort_by_key(|c| c[0]);
    OverlapGraph { nodes: subs, edges, components }
}

/// Outcome of regime labeling over the `T - 1` steps of a `T`-point cloud.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeparationResult {
    /// Per step `t`: `Some(label)` when a chosen regime component claims the
    /// step's image point `x_{t+1}`, `None` otherwise. Labels run
    /// `0..regime_count`, ordered from the largest component down.
    pub labels: Vec<Option<usize>>,
    /// Distinct image points claimed by each label.
    pub component_sizes: Vec<usize>,
    pub labeled: usize,
}

impl SeparationResult {
    /// Number of steps (`T - 1`).
    pub fn steps(&self) -> usize {
        self.labels.len()
    }

    pub fn unidentified(&self) -> usize {
        self.steps() - self.labeled
    }

    pub fn unidentified_fraction(&self) -> f64 {
        self.unidentified() as f64 / self.steps() as f64
    }

    /// Share of all steps carrying the given label.
    pub fn step_share(&self, label: usize) -> f64 {
        self.component_sizes[label] as f64 / self.steps() as f64
    }
}

/// Reads regime labels off the overlap graph: the `regime_count` components
/// claiming the most distinct trajectory points become the regimes, ranked
/// by distinct-point count with ties broken toward the smallest claimed
/// index. Steps whose images fall outside every chosen component stay
/// unlabeled.
///
/// Distinct graph components can never share a point — any shared point is
/// an edge — so a double claim among the chosen components indicates internal
/// corruption and is reported as an integrity error rather than a panic.
pub fn label_regimes(
    graph: &OverlapGraph,
    regime_count: usize,
    point_count: usize,
) -> Result<SeparationResult> {
    if regime_count == 0 {
        return Err(Error::InvalidParameter {
            what: "regime count",
            detail: "at least one regime required".into(),
        });
    }
    if point_count < 2 {
        return Err(Error::InsufficientData { what: "points", needed: 2, found: point_count });
    }
    if graph.components.len() < regime_count {
        return Err(Error::Structure { requested: regime_count, found: graph.components.len() });
    }
    let mut ranked: Vec<Vec<usize>> = graph
        .components
        .iter()
        .map(|comp| {
            let mut claimed: Vec<usize> = comp
                .iter()
                .flat_map(|&id| graph.nodes[id].image_members.iter().copied())
                .collect();
            claimed.sort_unstable();
            claimed.dedup();
            claimed
        })
        .collect();
    ranked.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a[0].cmp(&b[0])));

    let steps = point_count - 1;
    let mut labels = vec![None; steps];
    let mut component_sizes = Vec::with_capacity(regime_count);
    let mut labeled = 0usize;
    for (label, claimed) in ranked.iter().take(regime_count).enumerate() {
        for &p in claimed {
            if p == 0 || p > steps {
                return Err(Error::Integrity {
                    detail: format!("claimed point {p} is not the image of any step"),
                });
            }
            let t = p - 1;
            if let Some(prev) = labels[t] {
                return Err(Error::Integrity {
                    detail: format!("step {t} claimed by regime components {prev} and {label}"),
                });
            }
            labels[t] = Some(label);
        }
        component_sizes.push(claimed.len());
        labeled += claimed.len();
    }
    Ok(SeparationResult { labels, component_sizes, labeled })
}

/// Full separation pipeline: cover, budgeted image splitting, gluing,
/// labeling. Uses [`DEFAULT_LINK_BUDGET`]; reach for [`separate_budgeted`]
/// when the data lives at a different scale.
pub fn separate(
    cloud: &PointCloud,
    k: usize,
    nexus_count: usize,
    start: usize,
    epsilon: f64,
    regime_count: usize,
) -> Result<SeparationResult> {
    separate_budgeted(cloud, k, nexus_count, start, epsilon, DEFAULT_LINK_BUDGET, regime_count)
}

/// [`separate`] with an explicit link budget (see [`split_images_budgeted`]).
pub fn separate_budgeted(
    cloud: &PointCloud,
    k: usize,
    nexus_count: usize,
    start: usize,
    epsilon: f64,
    link_budget: f64,
    regime_count: usize,
) -> Result<SeparationResult> {
    let cover = build_cover(cloud, k, nexus_count, start)?;
    let subs = split_images_budgeted(cloud, &cover, epsilon, link_budget)?;
    let graph = build_overlap_graph(subs);
    label_regimes(&graph, regime_count, cloud.len())
}

/// Agreement between a labeling and a known regime sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    /// Fraction of labeled steps whose true regime matches, under the best
    /// label-to-regime assignment.
    pub purity: f64,
    /// Matching fraction within each label (1.0 for a label with no steps).
    pub purity_per_label: Vec<f64>,
    /// Fraction of all steps that received a label.
    pub coverage: f64,
    /// `assignment[label]` is the true regime matched to that label.
    pub assignment: Vec<usize>,
}

/// Scores a separation against the true regime sequence (`regimes[t]` is the
/// regime that produced point `t + 1`). Tries every assignment of labels to
/// regimes and keeps the best, so label numbering does not matter.
pub fn evaluate_separation(
    result: &SeparationResult,
    regimes: &[usize],
) -> Result<EvaluationReport> {
    let steps = result.steps();
    if regimes.len() != steps {
        return Err(Error::DimensionMismatch { expected: steps, found: regimes.len() });
    }
    let label_count = result.component_sizes.len();
    let n = label_count.max(regimes.iter().copied().max().map_or(0, |r| r + 1));
    if n == 0 || n > 10 {
        return Err(Error::InvalidParameter {
            what: "regime count",
            detail: format!("{n} outside the supported range 1..=10"),
        });
    }
    let mut confusion = vec![vec![0u64; n]; n];
    let mut labeled = 0u64;
    for (lab, &truth) in result.labels.iter().zip(regimes) {
        if let Some(l) = lab {
            confusion[*l][truth] += 1;
            labeled += 1;
        }
    }
    let mut best_sum = 0u64;
    let mut best_perm: Vec<usize> = Vec::new();
    let mut perm = Vec::with_capacity(n);
    let mut used = vec![false; n];
    fn search(
        confusion: &[Vec<u64>],
        n: usize,
        perm: &mut Vec<usize>,
        used: &mut [bool],
        sum: u64,
        best_sum: &mut u64,
        best_perm: &mut Vec<usize>,
    ) {
        let l = perm.len();
        if l == n {
            if sum > *best_sum || best_perm.is_empty() {
                *best_sum = sum;
                *best_perm = perm.clone();
            }
            return;
        }
        for r in 0..n {
            if used[r] {
                continue;
            }
            used[r] = true;
            perm.push(r);
            search(confusion, n, perm, used, sum + confusion[l][r], best_sum, best_perm);
            perm.pop();
            used[r] = false;
        }
    }
    search(&confusion, n, &mut perm, &mut used, 0, &mut best_sum, &mut best_perm);
    best_perm.truncate(label_count);

    let purity = if labeled == 0 { 1.0 } else { best_sum as f64 / labeled as f64 };
    let purity_per_label = (0..label_count)
        .map(|l| {
            let row: u64 = confusion[l].iter().sum();
            if row == 0 { 1.0 } else { confusion[l][best_perm[l]] as f64 / row as f64 }
        })
        .collect();
    Ok(EvaluationReport {
        purity,
        purity_per_label,
        coverage: labeled as f64 / steps as f64,
        assignment: best_perm,
    })
}
