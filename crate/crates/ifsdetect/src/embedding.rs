//! Scalar series and time-delay embedding.
//!
//! A [`ScalarSeries`] is a finite sequence of real observations. Delay
//! embedding lifts it to a point cloud with forward lags,
//!
//! ```text
//! v_t = (s_t, s_{t+tau}, ..., s_{t+(m-1) tau}),  t = 0 .. L - (m-1) tau - 1,
//! ```
//!
//! so embedded index `t` aligns with series index `t` at lag zero, and the
//! shift map on the embedded cloud is the index successor `t -> t + 1`.
//!
//! Two standard diagnostics guide parameter choice:
//!
//! * [`average_mutual_information`] over a lag sweep; the first local
//!   minimum (via [`first_minimum`]) is the customary delay choice.
//! * [`false_nearest_neighbors`] over increasing dimensions. Only the
//!   distance-ratio criterion is implemented (a point is false when the
//!   coordinate added at dimension `m + 1` moves it away from its dimension-m
//!   nearest neighbor by more than `r_tol` times their dimension-m distance).
//!   Without the attractor-size secondary criterion the fraction for pure
//!   noise collapses at higher dimensions — nearest-neighbor distances grow
//!   like `n^{-1/m}` and the ratio can no longer exceed a fixed threshold —
//!   so treat the curve as advisory and prefer an explicitly configured
//!   dimension for real data.

use crate::error::{Error, Result};
use crate::geometry::{KdTree, PointCloud};

/// A finite scalar observation sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSeries {
    values: Vec<f64>,
    /// Informational only: the sampling interval of the recording, if known.
    pub sample_interval: Option<f64>,
}

impl ScalarSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InsufficientData {
                what: "series values",
                needed: 2,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "series values" });
        }
        Ok(ScalarSeries { values, sample_interval: None })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires at least two values
    }
}

/// Delay-embedding parameters: dimension `m` and lag `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingConfig {
    pub m: usize,
    pub tau: usize,
}

impl EmbeddingConfig {
    pub fn new(m: usize, tau: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter {
                what: "embedding dimension",
                detail: "m must be at least 1".into(),
            });
        }
        if tau == 0 {
            return Err(Error::InvalidParameter {
                what: "embedding lag",
                detail: "tau must be at least 1".into(),
            });
        }
        Ok(EmbeddingConfig { m, tau })
    }

    /// Number of embedded points for a series of length `len`, if positive.
    pub fn embedded_len(&self, len: usize) -> Option<usize> {
        len.checked_sub((self.m - 1) * self.tau)
    }
}

/// Forward-lag delay embedding of the series.
pub fn delay_embed(series: &ScalarSeries, cfg: &EmbeddingConfig) -> Result<PointCloud> {
    let span = (cfg.m - 1) * cfg.tau;
    let n = cfg.embedded_len(series.len()).filter(|&n| n >= 1).ok_or(
        Error::InsufficientData {
            what: "series values for this embedding",
            needed: span + 1,
            found: series.len(),
        },
    )?;
    let s = series.values();
    let mut coords = Vec::with_capacity(n * cfg.m);
    for t in 0..n {
        for q in 0..cfg.m {
            coords.push(s[t + q * cfg.tau]);
        }
    }
    PointCloud::from_flat(coords, cfg.m)
}

/// Average mutual information (bits) between the series and its `lag`-shifted
/// copy, estimated on an equal-width joint histogram with `bins` bins per
/// axis over the observed range of the whole series.
///
/// At lag 0 this is exactly the binned marginal entropy. The estimate is
/// clamped to be nonnegative.
pub fn average_mutual_information(series: &ScalarSeries, lag: usize, bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::InvalidParameter {
            what: "bin count",
            detail: format!("bins={bins} must be at least 2"),
        });
    }
    if lag >= series.len() {
        return Err(Error::InvalidParameter {
            what: "lag",
            detail: format!("lag={lag} must be below the series length {}", series.len()),
        });
    }
    let s = series.values();
    let (lo, hi) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if lo == hi {
        return Err(Error::DegenerateInput { what: "constant series has zero entropy" });
    }
    let width = (hi - lo) / bins as f64;
    let bin_of = |v: f64| -> usize { (((v - lo) / width) as usize).min(bins - 1) };

    let n_pairs = s.len() - lag;
    let mut joint = vec![0u64; bins * bins];
    for t in 0..n_pairs {
        joint[bin_of(s[t]) * bins + bin_of(s[t + lag])] += 1;
    }
    // Marginals as row/column sums of the joint, so I(X;X) = H(X) exactly.
    let mut px = vec![0u64; bins];
    let mut py = vec![0u64; bins];
    for i in 0..bins {
        for j in 0..bins {
            px[i] += joint[i * bins + j];
            py[j] += joint[i * bins + j];
        }
    }
    let n = n_pairs as f64;
    let mut info = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            let c = joint[i * bins + j];
            if c == 0 {
                continue;
            }
            let p = c as f64 / n;
            let prod = (px[i] as f64 / n) * (py[j] as f64 / n);
            info += p * (p / prod).log2();
        }
    }
    Ok(info.max(0.0))
}

/// AMI at every lag in `0..=max_lag`; convenience for lag sweeps.
pub fn ami_curve(series: &ScalarSeries, max_lag: usize, bins: usize) -> Result<Vec<f64>> {
    (0..=max_lag).map(|lag| average_mutual_information(series, lag, bins)).collect()
}

/// Index of the first local minimum of `curve`: the smallest `i` with
/// `curve[i-1] > curve[i] <= curve[i+1]`. `None` when no interior index
/// qualifies.
pub fn first_minimum(curve: &[f64]) -> Option<usize> {
    (1..curve.len().saturating_sub(1))
        .find(|&i| curve[i - 1] > curve[i] && curve[i] <= curve[i + 1])
}

/// Fraction of false nearest neighbors when passing from dimension `m` to
/// `m + 1` at lag `tau`, using the distance-ratio criterion with threshold
/// `r_tol`.
///
/// Only points embeddable at dimension `m + 1` participate, so the same pairs
/// are compared in both dimensions. A zero-distance neighbor pair counts as
/// false exactly when the added coordinates differ.
pub fn false_nearest_neighbors(
    series: &ScalarSeries,
    tau: usize,
    m: usize,
    r_tol: f64,
) -> Result<f64> {
    if !(r_tol > 0.0) || !r_tol.is_finite() {
        return Err(Error::InvalidParameter {
            what: "r_tol",
            detail: format!("r_tol={r_tol} must be a positive finite real"),
        });
    }
    let cfg_m = EmbeddingConfig::new(m, tau)?;
    let cfg_next = EmbeddingConfig::new(m + 1, tau)?;
    let n_next = cfg_next.embedded_len(series.len()).unwrap_or(0);
    if n_next < 10 {
        return Err(Error::InsufficientData {
            what: "embeddable points",
            needed: 10,
            found: n_next,
        });
    }
    // Embed at dimension m but restrict to the n_next points that also exist
    // at dimension m + 1.
    let cloud_m = delay_embed(series, &cfg_m)?;
    let restricted = PointCloud::new(
        (0..n_next).map(|t| cloud_m.point(t).to_vec()).collect(),
    )?;
    let tree = KdTree::build(&restricted);
    let s = series.values();
    let mut false_count = 0usize;
    for t in 0..n_next {
        let pair = tree.knn(t, 2)?;
        let nn = pair.iter().find(|&i| i != t).expect("two members");
        let r_m = crate::geometry::distance(restricted.point(t), restricted.point(nn))?;
        let added = (s[t + m * tau] - s[nn + m * tau]).abs();
        let is_false = if r_m == 0.0 { added > 0.0 } else { added / r_m > r_tol };
        if is_false {
            false_count += 1;
        }
    }
    Ok(false_count as f64 / n_next as f64)
}

/// FNN fraction for every dimension in `1..=max_m`; convenience for sweeps.
pub fn fnn_curve(series: &ScalarSeries, tau: usize, max_m: usize, r_tol: f64) -> Result<Vec<f64>> {
    (1..=max_m).map(|m| false_nearest_neighbors(series, tau, m, r_tol)).collect()
}
