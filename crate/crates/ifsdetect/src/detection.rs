//! Detecting hidden map switching in a trajectory.
//!
//! The core observation: for a deterministic system the image of a tight
//! neighborhood under one time step stays tight, so the distance between the
//! successors of a point and its nearest neighbor is comparable to the
//! distance between the points themselves. When several maps act, a pair
//! straddling two regimes has successors thrown apart by the pointwise map
//! difference, and the distribution of image diameters splits into a bulk
//! plus a well-separated second mode. [`nn_diameters`] computes both
//! distributions and [`find_gap`] locates the empty interval between the
//! modes; its midpoint is the chaining threshold epsilon used everywhere
//! downstream.
//!
//! [`component_count_histogram`] counts, for every eligible step, the
//! epsilon-components of the image of `N_k(x_t)`; with independent fair map
//! choices the expected share of single-component images at `k = 5` is
//! `2 / 2^5 = 6.25%`. [`estimate_regime_count`] turns those counts into a
//! regime-count estimate: for each epsilon on a grid it takes the largest
//! component count achieved by at least [`PREVALENCE_FLOOR`] of the images,
//! and reports the common value when the grid agrees.

use crate::error::{Error, Result};
use crate::geometry::{component_count, KdTree, PointCloud};
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Minimum share of images that must achieve a component count for it to be
/// considered a regime count.
pub const PREVALENCE_FLOOR: f64 = 0.05;

/// Fraction trimmed from each end of the sorted values before gap search.
const TRIM_FRACTION: f64 = 0.01;

/// Minimum share of (trimmed) values required on each side of a gap.
const MASS_FLOOR: f64 = 0.05;

/// Share of trimmed values a gap may contain and still count as empty. A
/// mode boundary is never perfectly clean: a few stragglers (near-degenerate
/// neighbor pairs, switch-aligned coincidences) land inside the gap, and
/// insisting on a literally empty interval would shrink it to a sliver.
const VALLEY_MASS: f64 = 0.002;

/// A gap qualifies only when its upper edge exceeds this multiple of its
/// lower edge. Two modes of genuinely different scale (continuity-sized
/// versus map-separation-sized) are split by a zone several times wider than
/// its floor, while the fractal flutter inside a single mode never opens a
/// proportionally wide hole.
const MIN_RATIO: f64 = 1.5;

/// Nearest-neighbor diameters: for each eligible step `t`, the distance to
/// its nearest neighbor (`domain`) and the distance between their two
/// successors (`image`), in the same order.
#[derive(Debug, Clone)]
pub struct NnDiameters {
    pub domain: Vec<f64>,
    pub image: Vec<f64>,
}

/// Computes domain/image nearest-neighbor diameters over the cloud under the
/// index-successor shift. Step `t` is eligible when both `t` and its nearest
/// neighbor have successors in the cloud.
pub fn nn_diameters(cloud: &PointCloud) -> Result<NnDiameters> {
    if cloud.len() < 3 {
        return Err(Error::InsufficientData { what: "points", needed: 3, found: cloud.len() });
    }
    let tree = KdTree::build(cloud);
    let last = cloud.len() - 1;
    let pairs: Vec<Option<(f64, f64)>> = (0..cloud.len())
        .into_par_iter()
        .map(|t| {
            let nn = tree
                .knn(t, 2)
                .expect("k=2 within bounds")
                .iter()
                .find(|&i| i != t)
                .expect("two members");
            if t >= last || nn >= last {
                return None;
            }
            let d = cloud.dist2(t, nn).sqrt();
            let img = cloud.dist2(t + 1, nn + 1).sqrt();
            Some((d, img))
        })
        .collect();
    let mut out = NnDiameters { domain: Vec::new(), image: Vec::new() };
    for p in pairs.into_iter().flatten() {
        out.domain.push(p.0);
        out.image.push(p.1);
    }
    if out.domain.len() < 2 {
        return Err(Error::InsufficientData {
            what: "eligible steps",
            needed: 2,
            found: out.domain.len(),
        });
    }
    Ok(out)
}

/// Outcome of the gap search. When `bimodal` is false the three reals are
/// NaN; when true, `gap_low < epsilon < gap_high` and `epsilon` is the gap
/// midpoint — the chaining threshold handed downstream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    pub bimodal: bool,
    /// Largest value below the gap.
    pub gap_low: f64,
    /// Smallest value above the gap.
    pub gap_high: f64,
    pub epsilon: f64,
}

impl GapReport {
    fn unimodal() -> Self {
        GapReport { bimodal: false, gap_low: f64::NAN, gap_high: f64::NAN, epsilon: f64::NAN }
    }

    pub fn width(&self) -> f64 {
        self.gap_high - self.gap_low
    }
}

/// Searches raw values for a near-empty zone separating two modes.
///
/// The values are sorted, trimmed to their 1st–99th percentile range, and
/// scanned for zones holding at most [`VALLEY_MASS`] of the trimmed mass.
/// A zone qualifies when at least [`MASS_FLOOR`] of the mass sits on each
/// side and its edges differ by a factor of [`MIN_RATIO`]; among qualifying
/// zones the proportionally widest wins, its midpoint becoming the chaining
/// threshold. Working on raw order statistics rather than a histogram avoids
/// bin-width sensitivity.
pub fn find_gap(values: &[f64]) -> Result<GapReport> {
    if values.len() < 100 {
        return Err(Error::InsufficientData {
            what: "values for gap search",
            needed: 100,
            found: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "gap-search values" });
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    // Nearest-rank percentile trim.
    let lo = ((n - 1) as f64 * TRIM_FRACTION).round() as usize;
    let hi = ((n - 1) as f64 * (1.0 - TRIM_FRACTION)).round() as usize;
    let w = &sorted[lo..=hi];
    let m = w.len();
    // A zone from w[i] to w[i + stragglers + 1] contains exactly
    // `stragglers` interior values — the widest zone at each start that
    // still counts as empty.
    let stragglers = (m as f64 * VALLEY_MASS).ceil() as usize;
    let min_side = ((m as f64 * MASS_FLOOR).ceil() as usize).max(1);

    let mut best: Option<(f64, usize)> = None;
    for i in 0..m {
        let j = i + stragglers + 1;
        if j >= m {
            break;
        }
        if w[i] <= 0.0 {
            continue;
        }
        if i + 1 < min_side || m - j < min_side {
            continue;
        }
        let ratio = w[j] / w[i];
        if ratio < MIN_RATIO {
            continue;
        }
        if best.map_or(true, |(r, _)| ratio > r) {
            best = Some((ratio, i));
        }
    }
    Ok(match best {
        Some((_, i)) => {
            let j = i + stragglers + 1;
            GapReport {
                bimodal: true,
                gap_low: w[i],
                gap_high: w[j],
                epsilon: 0.5 * (w[i] + w[j]),
            }
        }
        None => GapReport::unimodal(),
    })
}

/// Equal-width histogram of raw values, for plotting exports.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` edges; bin `i` covers `[edges[i], edges[i+1])`, with the
    /// final bin closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn from_values(values: &[f64], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidParameter {
                what: "bin count",
                detail: "at least one bin required".into(),
            });
        }
        if values.is_empty() {
            return Err(Error::InsufficientData { what: "values", needed: 1, found: 0 });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "histogram values" });
        }
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let width = span / bins as f64;
        let mut counts = vec![0u64; bins];
        for &v in values {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
        Ok(Histogram { edges, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Distribution of image component counts over a cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentCountHistogram {
    counts: BTreeMap<usize, u64>,
    pub eligible: u64,
}

impl ComponentCountHistogram {
    /// Share of eligible images with exactly `n` components.
    pub fn fraction(&self, n: usize) -> f64 {
        *self.counts.get(&n).unwrap_or(&0) as f64 / self.eligible as f64
    }

    /// Share of eligible images with at least `n` components.
    pub fn fraction_at_least(&self, n: usize) -> f64 {
        self.counts.iter().filter(|(k, _)| **k >= n).map(|(_, v)| *v).sum::<u64>() as f64
            / self.eligible as f64
    }

    pub fn counts(&self) -> &BTreeMap<usize, u64> {
        &self.counts
    }

    /// Largest component count achieved by at least `floor` of the images.
    pub fn prevalent_max(&self, floor: f64) -> usize {
        self.counts
            .iter()
            .filter(|(_, &c)| c as f64 / self.eligible as f64 >= floor)
            .map(|(&n, _)| n)
            .max()
            .unwrap_or(0)
    }
}

fn neighborhoods(cloud: &PointCloud, k: usize) -> Result<Vec<Vec<usize>>> {
    let tree = KdTree::build(cloud);
    (0..cloud.len())
        .into_par_iter()
        .map(|t| tree.knn(t, k).map(|s| s.as_slice().to_vec()))
        .collect()
}

fn count_components_of_images(
    cloud: &PointCloud,
    hoods: &[Vec<usize>],
    epsilon: f64,
) -> Vec<Option<usize>> {
    let last = cloud.len() - 1;
    hoods
        .par_iter()
        .map(|members| {
            if members.iter().any(|&s| s >= last) {
                return None; // a member has no successor; step ineligible
            }
            let images: Vec<usize> = members.iter().map(|&s| s + 1).collect();
            Some(component_count(cloud, &images, epsilon))
        })
        .collect()
}

/// For every step `t` whose `N_k(x_t)` members all have successors, counts
/// the epsilon-components of the image set `{x_{s+1} : s in N_k(x_t)}`.
pub fn component_count_histogram(
    cloud: &PointCloud,
    k: usize,
    epsilon: f64,
) -> Result<ComponentCountHistogram> {
    if k < 2 {
        return Err(Error::InvalidParameter {
            what: "neighborhood size",
            detail: format!("k={k}: splitting a one-point image is meaningless"),
        });
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter {
            what: "epsilon",
            detail: format!("epsilon={epsilon} must be a positive finite real"),
        });
    }
    let hoods = neighborhoods(cloud, k)?;
    let per_step = count_components_of_images(cloud, &hoods, epsilon);
    let mut counts = BTreeMap::new();
    let mut eligible = 0u64;
    for c in per_step.into_iter().flatten() {
        *counts.entry(c).or_insert(0u64) += 1;
        eligible += 1;
    }
    if eligible == 0 {
        return Err(Error::InsufficientData { what: "eligible steps", needed: 1, found: 0 });
    }
    Ok(ComponentCountHistogram { counts, eligible })
}

/// Regime-count estimate across an epsilon grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeCountEstimate {
    /// `(epsilon, prevalent max component count)` per grid entry.
    pub per_epsilon: Vec<(f64, usize)>,
    pub persistent: bool,
}

impl RegimeCountEstimate {
    /// The regime count, defined only when the whole grid agrees.
    pub fn regime_count(&self) -> Option<usize> {
        if self.persistent {
            self.per_epsilon.first().map(|(_, n)| *n)
        } else {
            None
        }
    }
}

/// For each epsilon on the grid, takes the largest image component count
/// achieved by at least [`PREVALENCE_FLOOR`] of the eligible steps; the
/// estimate is persistent when every grid entry yields the same value.
pub fn estimate_regime_count(
    cloud: &PointCloud,
    k: usize,
    grid: &[f64],
) -> Result<RegimeCountEstimate> {
    if grid.is_empty() {
        return Err(Error::InsufficientData { what: "epsilon grid entries", needed: 1, found: 0 });
    }
    for &e in grid {
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::InvalidParameter {
                what: "epsilon grid",
                detail: format!("epsilon={e} must be a positive finite real"),
            });
        }
    }
    let hoods = neighborhoods(cloud, k)?;
    let mut per_epsilon = Vec::with_capacity(grid.len());
    for &eps in grid {
        let per_step = count_components_of_images(cloud, &hoods, eps);
        let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
        let mut eligible = 0u64;
        for c in per_step.into_iter().flatten() {
            *counts.entry(c).or_insert(0) += 1;
            eligible += 1;
        }
        if eligible == 0 {
            return Err(Error::InsufficientData { what: "eligible steps", needed: 1, found: 0 });
        }
        let hist = ComponentCountHistogram { counts, eligible };
        per_epsilon.push((eps, hist.prevalent_max(PREVALENCE_FLOOR)));
    }
    let first = per_epsilon[0].1;
    let persistent = per_epsilon.iter().all(|(_, n)| *n == first);
    Ok(RegimeCountEstimate { per_epsilon, persistent })
}
