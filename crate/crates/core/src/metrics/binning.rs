use serde::{Deserialize, Serialize};

use super::{MetricsError, Result};

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinKind {
    EqualWidth,
    Quantile,
}

impl BinKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BinKind::EqualWidth => "equal-width",
            BinKind::Quantile => "quantile",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub bins: usize,
    pub kind: BinKind,
}

impl BinningSpec {
    pub fn new(bins: usize, kind: BinKind) -> Result<Self> {
        if bins < 1 {
            return Err(MetricsError::InvalidBinning("bin count must be at least 1".into()));
        }
        Ok(Self { bins, kind })
    }

    pub fn equal_width(bins: usize) -> Self {
        Self::new(bins, BinKind::EqualWidth).expect("bin count must be at least 1")
    }

    pub fn quantile(bins: usize) -> Self {
        Self::new(bins, BinKind::Quantile).expect("bin count must be at least 1")
    }
}

fn equal_width_bin(r: f64, m: usize) -> usize {
    let edge = |k: usize| k as f64 / m as f64;
    let mut b = ((r * m as f64).floor().max(0.0) as usize).min(m - 1);
    // Guard against rounding in r * m disagreeing with the edge values.
    while b > 0 && r < edge(b) {
        b -= 1;
    }
    while b + 1 < m && r >= edge(b + 1) {
        b += 1;
    }
    b
}

/// Bin index per score.
///
/// Equal-width bins are `[k/M, (k+1)/M)` with the last one closed. Quantile
/// bins place a score by the count of strictly smaller scores, so equal
/// scores always land together in the lower bin.
pub fn bin_assign(scores: &[f64], spec: BinningSpec) -> Vec<usize> {
    let m = spec.bins.max(1);
    match spec.kind {
        BinKind::EqualWidth => scores.iter().map(|&r| equal_width_bin(r, m)).collect(),
        BinKind::Quantile => {
            let n = scores.len();
            let mut sorted = scores.to_vec();
            sorted.sort_by(f64::total_cmp);
            scores
                .iter()
                .map(|&r| {
                    let below = sorted.partition_point(|&s| s < r);
                    below * m / n
                })
                .collect()
        }
    }
}
