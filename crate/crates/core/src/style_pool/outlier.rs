use serde::{Deserialize, Serialize};

use crate::embedding::UnitVector;
use crate::error::{Error, Result};

/// Average distance reported for points flagged by the neighbour-count pass.
pub const FIRST_PASS_SENTINEL: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierParams {
    /// Neighbourhood radius in cosine distance.
    pub r: f64,
    /// Minimum neighbour count.
    pub k: usize,
    /// Z-score multiplier for the threshold.
    pub lambda: f64,
}

impl Default for OutlierParams {
    fn default() -> Self {
        Self {
            r: 0.6,
            k: 3,
            lambda: 2.0,
        }
    }
}

impl OutlierParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) || !self.r.is_finite() {
            return Err(Error::InvalidParam(format!("r must be positive, got {}", self.r)));
        }
        if self.k < 1 {
            return Err(Error::InvalidParam("k must be at least 1".into()));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParam(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Result of a batch outlier pass.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierReport {
    pub flags: Vec<bool>,
    /// Mean neighbourhood distance, or [`FIRST_PASS_SENTINEL`] for points
    /// with fewer than `k` neighbours.
    pub avg_distances: Vec<f64>,
    pub neighbor_counts: Vec<usize>,
    pub mu: f64,
    pub sigma: f64,
    pub tau: f64,
}

impl OutlierReport {
    pub fn outlier_indices(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    }
}

/// Distance-based stylistic outlier detection over a batch of embeddings.
///
/// Points with fewer than `k` neighbours within radius `r` are flagged
/// first. Mean and population standard deviation of the remaining average
/// neighbourhood distances give `tau = mu + lambda * sigma`; any point whose
/// average exceeds `tau` is then flagged too. With no surviving points,
/// `mu = sigma = tau = 0`.
pub fn detect_outliers(embeddings: &[UnitVector], params: OutlierParams) -> Result<OutlierReport> {
    params.validate()?;
    let n = embeddings.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, actual: n });
    }
    let dim = embeddings[0].dim();
    if let Some(v) = embeddings.iter().find(|v| v.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: v.dim(),
        });
    }

    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = embeddings[i].distance(&embeddings[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    let mut flags = vec![false; n];
    let mut avg = vec![FIRST_PASS_SENTINEL; n];
    let mut counts = vec![0usize; n];
    for i in 0..n {
        let mut sum = 0.0;
        let mut count = 0usize;
        for j in 0..n {
            if j != i && dist[i * n + j] < params.r {
                sum += dist[i * n + j];
                count += 1;
            }
        }
        counts[i] = count;
        if count < params.k {
            flags[i] = true;
        } else {
            avg[i] = sum / count as f64;
        }
    }

    let kept: Vec<f64> = (0..n).filter(|&i| !flags[i]).map(|i| avg[i]).collect();
    let (mu, sigma) = mean_std(&kept);
    let tau = mu + params.lambda * sigma;
    for i in 0..n {
        if avg[i] > tau {
            flags[i] = true;
        }
    }
    Ok(OutlierReport {
        flags,
        avg_distances: avg,
        neighbor_counts: counts,
        mu,
        sigma,
        tau,
    })
}

/// Mean and population standard deviation; `(0, 0)` for an empty slice.
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
