//! Ghost points: periodic measurement artifacts and their removal.
//!
//! An instrument that perturbs every p-th sample injects points that sit off
//! the attractor by a fixed offset along whichever embedding coordinate holds
//! the corrupted sample. Such "ghosts" betray themselves twice over: the
//! image of a small clean neighborhood splits into two epsilon-components
//! with the ghost route in the strict minority, and the marked indices recur
//! with period p.
//!
//! The pipeline here identifies candidate ghost indices
//! ([`identify_candidates`]), reads the period and flags stray marks
//! ([`periodicity`]), estimates the injected offset ([`estimate_shift`]),
//! repairs the series ([`adjust`]), and confirms the repair by re-checking
//! one-component images at the former ghosts ([`determinism_check`]).
//! [`synth_surrogate`] manufactures a series with known injections so the
//! whole chain can be scored against ground truth.

use crate::embedding::ScalarSeries;
use crate::error::{Error, Result};
use crate::geometry::{component_count, epsilon_components, IndexSet, KdTree, PointCloud};
use crate::sim::{generate, uniform01, IfsModel, ModularRule, RegimeRule};
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rayon::prelude::*;

/// How much larger the displacement along the detected axis must be than
/// along every other axis before a split is attributed to a ghost. Attractor
/// folds displace image components along all coordinates at once; ghosts
/// displace along exactly one.
const DOMINANCE_FACTOR: f64 = 3.0;

/// Everything learned about the ghost structure of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct GhostReport {
    /// Strictly increasing candidate ghost indices, in series coordinates.
    pub ghost_indices: Vec<usize>,
    /// Consecutive deltas of `ghost_indices` (one shorter).
    pub first_differences: Vec<usize>,
    /// Modal first difference, when it reaches 50% prevalence.
    pub period: Option<usize>,
    /// Positions into `ghost_indices` flagged as stray marks: each sits
    /// between two differences that sum to the period.
    pub spurious: Vec<usize>,
    /// Estimated injected offset in series units, when measurable. Adding it
    /// at the ghost indices moves them back onto the attractor.
    pub shift: Option<f64>,
}

impl GhostReport {
    /// Ghost indices with the spurious positions removed.
    pub fn genuine(&self) -> Vec<usize> {
        let mut spurious = self.spurious.iter().copied().peekable();
        self.ghost_indices
            .iter()
            .enumerate()
            .filter_map(|(pos, &g)| {
                if spurious.peek() == Some(&pos) {
                    spurious.next();
                    None
                } else {
                    Some(g)
                }
            })
            .collect()
    }
}

fn centroid(cloud: &PointCloud, members: &[usize]) -> Vec<f64> {
    let mut sums = vec![0.0; cloud.dim()];
    for &i in members {
        for (s, &c) in sums.iter_mut().zip(cloud.point(i)) {
            *s += c;
        }
    }
    let n = members.len() as f64;
    sums.iter_mut().for_each(|s| *s /= n);
    sums
}

/// A neighborhood whose image splits cleanly in two along one axis.
struct SplitObservation {
    /// Cloud indices of the strictly smaller image component.
    minority: Vec<usize>,
    /// Embedding coordinate carrying the displacement.
    axis: usize,
    /// Majority minus minority centroid along `axis`: the correction that
    /// moves the minority onto the majority.
    correction: f64,
}

/// Examines the k-neighborhood of cloud point `t`. Returns an observation
/// only when every filter passes: all members have successors, the domain is
/// one epsilon-component, the image has exactly two with a strict minority,
/// and one axis dominates the centroid displacement.
fn split_observation(
    cloud: &PointCloud,
    tree: &KdTree<'_>,
    t: usize,
    k: usize,
    epsilon: f64,
) -> Result<Option<SplitObservation>> {
    let hood = tree.knn(t, k)?;
    let last = cloud.len() - 1;
    if hood.iter().any(|s| s >= last) {
        return Ok(None);
    }
    if component_count(cloud, hood.as_slice(), epsilon) != 1 {
        return Ok(None);
    }
    let images: Vec<usize> = hood.iter().map(|s| s + 1).collect();
    let partition = epsilon_components(cloud, &IndexSet::new(images), epsilon)?;
    if partition.blocks.len() != 2 {
        return Ok(None);
    }
    let (a, b) = (&partition.blocks[0], &partition.blocks[1]);
    let (minority, majority) = match a.len().cmp(&b.len()) {
        std::cmp::Ordering::Less => (a, b),
        std::cmp::Ordering::Greater => (b, a),
        std::cmp::Ordering::Equal => return Ok(None),
    };
    let minority: Vec<usize> = minority.iter().collect();
    let majority: Vec<usize> = majority.iter().collect();
    let cm = centroid(cloud, &minority);
    let cj = centroid(cloud, &majority);
    let deltas: Vec<f64> = cm.iter().zip(&cj).map(|(m, j)| m - j).collect();
    let axis = (0..deltas.len())
        .max_by(|&i, &j| {
            deltas[i].abs().partial_cmp(&deltas[j].abs()).unwrap().then(j.cmp(&i))
        })
        .expect("cloud dimension is positive");
    let dominant = deltas[axis].abs();
    if deltas
        .iter()
        .enumerate()
        .any(|(q, d)| q != axis && dominant <= DOMINANCE_FACTOR * d.abs())
    {
        return Ok(None);
    }
    Ok(Some(SplitObservation { minority, axis, correction: -deltas[axis] }))
}

fn validate_ghost_params(k: usize, epsilon: f64, tau: usize) -> Result<()> {
    if k < 3 {
        return Err(Error::InvalidParameter {
            what: "neighborhood size",
            detail: format!("k={k}: ghost detection needs at least three neighbors"),
        });
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter {
            what: "epsilon",
            detail: format!("epsilon={epsilon} must be a positive finite real"),
        });
    }
    if tau == 0 {
        return Err(Error::InvalidParameter {
            what: "delay",
            detail: "tau=0: the embedding delay must be at least one sample".into(),
        });
    }
    Ok(())
}

/// Scans every neighborhood of a delay-embedded cloud (built with delay
/// `tau`) for two-component images and marks the series index of each
/// minority member's displaced sample: cloud index `c` deviating on axis `q`
/// points at sample `c + q * tau`. Returns the sorted, deduplicated marks.
/// An empty result is valid — it simply means no ghosts were seen.
pub fn identify_candidates(
    cloud: &PointCloud,
    k: usize,
    epsilon: f64,
    tau: usize,
) -> Result<Vec<usize>> {
    validate_ghost_params(k, epsilon, tau)?;
    if cloud.len() < 3 {
        return Err(Error::InsufficientData { what: "points", needed: 3, found: cloud.len() });
    }
    let tree = KdTree::build(cloud);
    let per_anchor: Vec<Vec<usize>> = (0..cloud.len())
        .into_par_iter()
        .map(|t| {
            let obs = split_observation(cloud, &tree, t, k, epsilon)?;
            Ok(obs
                .map(|o| o.minority.iter().map(|&c| c + o.axis * tau).collect())
                .unwrap_or_default())
        })
        .collect::<Result<_>>()?;
    let mut marks: Vec<usize> = per_anchor.into_iter().flatten().collect();
    marks.sort_unstable();
    marks.dedup();
    Ok(marks)
}

/// Reads the rhythm of a mark sequence: the period is the modal first
/// difference when it accounts for at least half of all differences, and a
/// mark is flagged spurious when the differences on its two sides sum to the
/// period (a stray mark splitting one true interval in two). The returned
/// report carries no shift estimate.
pub fn periodicity(ghosts: &[usize]) -> Result<GhostReport> {
    if ghosts.len() < 3 {
        return Err(Error::InsufficientData {
            what: "ghost indices",
            needed: 3,
            found: ghosts.len(),
        });
    }
    if ghosts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter {
            what: "ghost indices",
            detail: "must be strictly increasing".into(),
        });
    }
    let diffs: Vec<usize> = ghosts.windows(2).map(|w| w[1] - w[0]).collect();
    let mut counts: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
    for &d in &diffs {
        *counts.entry(d).or_insert(0) += 1;
    }
    // Count ties break toward the smaller difference value.
    let (&mode, &votes) = counts
        .iter()
        .max_by(|(ka, ca), (kb, cb)| ca.cmp(cb).then(kb.cmp(ka)))
        .expect("diffs is nonempty");
    let period = (2 * votes >= diffs.len()).then_some(mode);

    let mut spurious = Vec::new();
    if let Some(p) = period {
        let mut i = 0;
        while i + 1 < diffs.len() {
            if diffs[i] + diffs[i + 1] == p {
                spurious.push(i + 1);
                i += 2;
            } else {
                i += 1;
            }
        }
    }
    Ok(GhostReport {
        ghost_indices: ghosts.to_vec(),
        first_differences: diffs,
        period,
        spurious,
        shift: None,
    })
}

/// Returns a copy of the series with `shift` added at each ghost index.
/// Repeated indices are applied once.
pub fn adjust(series: &ScalarSeries, ghosts: &[usize], shift: f64) -> Result<ScalarSeries> {
    let mut values = series.values().to_vec();
    let mut seen: Vec<usize> = ghosts.to_vec();
    seen.sort_unstable();
    seen.dedup();
    for &g in &seen {
        if g >= values.len() {
            return Err(Error::IndexOutOfRange { index: g, len: values.len() });
        }
        values[g] += shift;
    }
    ScalarSeries::new(values)
}

/// Estimates the injected offset by re-splitting, for each ghost `g`, the
/// neighborhood of its last uncorrupted predecessor (cloud index
/// `g - (m-1)*tau - 1`): the image there contains the point whose final
/// coordinate is the corrupted sample, so the split must land on the last
/// axis with the contaminated point in the minority. The estimate is the
/// median majority-minus-minority centroid gap, i.e. the correction that
/// [`adjust`] should add. Errors when no ghost yields a usable split.
pub fn estimate_shift(
    cloud: &PointCloud,
    ghosts: &[usize],
    k: usize,
    epsilon: f64,
    tau: usize,
) -> Result<f64> {
    validate_ghost_params(k, epsilon, tau)?;
    let tree = KdTree::build(cloud);
    let reach = (cloud.dim() - 1) * tau;
    let mut gaps: Vec<f64> = ghosts
        .par_iter()
        .map(|&g| {
            let Some(contaminated) = g.checked_sub(reach) else { return Ok(None) };
            let Some(anchor) = contaminated.checked_sub(1) else { return Ok(None) };
            if anchor >= cloud.len() {
                return Ok(None);
            }
            let obs = split_observation(cloud, &tree, anchor, k, epsilon)?;
            Ok(obs
                .filter(|o| o.axis == cloud.dim() - 1 && o.minority.contains(&contaminated))
                .map(|o| o.correction))
        })
        .collect::<Result<Vec<Option<f64>>>>()?
        .into_iter()
        .flatten()
        .collect();
    if gaps.is_empty() {
        return Err(Error::InsufficientData {
            what: "ghosts with a split image neighborhood",
            needed: 1,
            found: 0,
        });
    }
    gaps.sort_by(|a, b| a.partial_cmp(b).expect("centroid gaps are finite"));
    let mid = gaps.len() / 2;
    Ok(if gaps.len() % 2 == 1 { gaps[mid] } else { (gaps[mid - 1] + gaps[mid]) / 2.0 })
}

/// Outcome of re-checking former ghosts after adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeterminismCheck {
    /// Ghosts whose neighborhoods could be examined in the cloud.
    pub checked: usize,
    /// Among those, how many still have a multi-component image.
    pub failures: usize,
}

impl DeterminismCheck {
    pub fn failure_fraction(&self) -> f64 {
        if self.checked == 0 {
            0.0
        } else {
            self.failures as f64 / self.checked as f64
        }
    }
}

/// In an adjusted cloud, a repaired ghost should behave like any attractor
/// point: the image of its neighborhood should be one epsilon-component.
/// Counts the ghosts that still split. Indices beyond the cloud are skipped.
pub fn determinism_check(
    cloud: &PointCloud,
    ghosts: &[usize],
    k: usize,
    epsilon: f64,
) -> Result<DeterminismCheck> {
    validate_ghost_params(k, epsilon, 1)?;
    let tree = KdTree::build(cloud);
    let last = cloud.len().saturating_sub(1);
    let outcomes: Vec<bool> = ghosts
        .par_iter()
        .filter(|&&g| g < cloud.len())
        .map(|&g| {
            let hood = tree.knn(g, k)?;
            let images: Vec<usize> =
                hood.iter().filter(|&s| s < last).map(|s| s + 1).collect();
            Ok(images.len() > 1 && component_count(cloud, &images, epsilon) > 1)
        })
        .collect::<Result<_>>()?;
    Ok(DeterminismCheck {
        checked: outcomes.len(),
        failures: outcomes.iter().filter(|&&f| f).count(),
    })
}

/// Builds a cache-miss-like test series with ghosts at known places: the
/// first coordinate of a single-map simulation, affinely mapped onto
/// [4500, 5500], with `shift` subtracted at every index divisible by
/// `period`. Returns the series and the injection indices.
pub fn synth_surrogate(
    t_len: usize,
    period: usize,
    shift: f64,
    seed: u64,
) -> Result<(ScalarSeries, Vec<usize>)> {
    if period < 2 {
        return Err(Error::InvalidParameter {
            what: "period",
            detail: format!("period={period}: injections need at least two samples between them"),
        });
    }
    if t_len < 10 * period {
        return Err(Error::InsufficientData {
            what: "surrogate samples",
            needed: 10 * period,
            found: t_len,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = [0.6 * uniform01(&mut rng) - 0.3, 0.2 * uniform01(&mut rng) - 0.1];
    let rule = RegimeRule::Modular(ModularRule { period: 1, table: Vec::new(), default: 0 });
    let traj = generate(&IfsModel::single(), &rule, t_len, x0, 1000)?;
    let xs: Vec<f64> = (0..t_len).map(|t| traj.points.point(t)[0]).collect();
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if !(hi > lo) {
        return Err(Error::DegenerateInput { what: "surrogate base series" });
    }
    let scale = 1000.0 / (hi - lo);
    let mut values: Vec<f64> = xs.iter().map(|&v| 4500.0 + (v - lo) * scale).collect();
    let injections: Vec<usize> = (0..t_len).step_by(period).collect();
    for &j in &injections {
        values[j] -= shift;
    }
    Ok((ScalarSeries::new(values)?, injections))
}

/// Runs identification, periodicity, and shift estimation on one cloud. The
/// shift is estimated from the genuine (non-spurious) ghosts and left unset
/// when none of them yields a usable split.
pub fn ghost_report(cloud: &PointCloud, k: usize, epsilon: f64, tau: usize) -> Result<GhostReport> {
    let marks = identify_candidates(cloud, k, epsilon, tau)?;
    let mut report = periodicity(&marks)?;
    report.shift = match estimate_shift(cloud, &report.genuine(), k, epsilon, tau) {
        Ok(s) => Some(s),
        Err(Error::InsufficientData { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(report)
}
