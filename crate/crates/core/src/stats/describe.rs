//! Quantiles, summary moments and IQR outlier filtering.

use serde::{Deserialize, Serialize};

use super::StatError;
use crate::features::PerplexityPair;

/// Minimum class size accepted by [`iqr_filter`].
pub const MIN_IQR_SIZE: usize = 8;

/// Linear-interpolation quantile of already sorted data: `h = alpha (n - 1)`,
/// interpolated between the neighbouring order statistics.
pub fn quantile_sorted(sorted: &[f64], alpha: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let h = alpha.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn quantile(xs: &[f64], alpha: f64) -> Result<f64, StatError> {
    if xs.is_empty() {
        return Err(StatError::InsufficientData { needed: 1, got: 0 });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(StatError::InvalidParams(format!("quantile level {alpha} outside [0, 1]")));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&v, alpha))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(xs: &[f64]) -> Result<Summary, StatError> {
    if xs.len() < 2 {
        return Err(StatError::InsufficientData { needed: 2, got: xs.len() });
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(Summary {
        n: v.len(),
        mean: mean(&v),
        median: quantile_sorted(&v, 0.5),
        sd: variance(&v).sqrt(),
        min: v[0],
        max: v[v.len() - 1],
    })
}

/// `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]`.
pub fn iqr_bounds(xs: &[f64]) -> Result<(f64, f64), StatError> {
    let q1 = quantile(xs, 0.25)?;
    let q3 = quantile(xs, 0.75)?;
    let iqr = q3 - q1;
    Ok((q1 - 1.5 * iqr, q3 + 1.5 * iqr))
}

/// Keep-mask for one class: a pair is dropped when its `ppl` or its
/// `ppl_shuf` falls outside that variable's IQR fences.
pub fn iqr_filter(pairs: &[PerplexityPair]) -> Result<Vec<bool>, StatError> {
    if pairs.len() < MIN_IQR_SIZE {
        return Err(StatError::InsufficientData {
            needed: MIN_IQR_SIZE,
            got: pairs.len(),
        });
    }
    let ppl: Vec<f64> = pairs.iter().map(|p| p.ppl).collect();
    let shuf: Vec<f64> = pairs.iter().map(|p| p.ppl_shuf).collect();
    let (a_lo, a_hi) = iqr_bounds(&ppl)?;
    let (b_lo, b_hi) = iqr_bounds(&shuf)?;
    Ok(pairs
        .iter()
        .map(|p| (a_lo..=a_hi).contains(&p.ppl) && (b_lo..=b_hi).contains(&p.ppl_shuf))
        .collect())
}
