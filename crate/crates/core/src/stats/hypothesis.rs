//! Two-sample location tests: Welch's t and Mann–Whitney U.

use serde::{Deserialize, Serialize};

use super::describe::{mean, variance};
use super::special::{normal_quantile, normal_sf, student_t_quantile, student_t_two_sided};
use super::StatError;

/// Exact Mann–Whitney enumeration is used up to this combined size.
pub const EXACT_MW_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub effect: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
}

/// Welch's unequal-variance t test. `effect` is `mean(x) - mean(y)` with a
/// 95% confidence interval.
pub fn welch_t(x: &[f64], y: &[f64]) -> Result<TestReport, StatError> {
    for s in [x, y] {
        if s.len() < 2 {
            return Err(StatError::InsufficientData { needed: 2, got: s.len() });
        }
    }
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let (vx, vy) = (variance(x) / nx, variance(y) / ny);
    if vx == 0.0 && vy == 0.0 {
        return Err(StatError::DegenerateVariance);
    }
    let effect = mean(x) - mean(y);
    let se = (vx + vy).sqrt();
    let df = (vx + vy).powi(2) / (vx * vx / (nx - 1.0) + vy * vy / (ny - 1.0));
    let t = effect / se;
    let p_value = student_t_two_sided(t, df).clamp(0.0, 1.0);
    let half = student_t_quantile(0.975, df) * se;
    Ok(TestReport {
        effect,
        ci_low: effect - half,
        ci_high: effect + half,
        p_value,
    })
}

/// Midranks of the pooled sample, `x` first.
fn pooled_ranks(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    idx.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && pooled[idx[j + 1]] == pooled[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

/// Mann–Whitney U test. `effect` is the rank-biserial correlation
/// `2 U_x / (n_x n_y) - 1`, positive when `x` tends to exceed `y`.
pub fn mannwhitney_u(x: &[f64], y: &[f64]) -> Result<TestReport, StatError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatError::InsufficientData { needed: 1, got: 0 });
    }
    let (n1, n2) = (x.len(), y.len());
    let (ranks, ties) = pooled_ranks(x, y);
    let r1: f64 = ranks[..n1].iter().sum();
    let u_x = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let prod = (n1 * n2) as f64;
    let effect = 2.0 * u_x / prod - 1.0;
    let mu = prod / 2.0;
    let n = (n1 + n2) as f64;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum();
    let sigma = (prod / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)))).max(0.0).sqrt();

    let p_value = if n1 + n2 <= EXACT_MW_LIMIT {
        exact_p(&ranks, n1, u_x)
    } else if sigma == 0.0 {
        1.0
    } else {
        let z = ((u_x - mu).abs() - 0.5).max(0.0) / sigma;
        (2.0 * normal_sf(z)).min(1.0)
    };
    let half = normal_quantile(0.975) * 2.0 * sigma / prod;
    Ok(TestReport {
        effect,
        ci_low: (effect - half).max(-1.0),
        ci_high: (effect + half).min(1.0),
        p_value,
    })
}

/// Two-sided exact p by enumerating every assignment of `n1` of the pooled
/// midranks to the first sample.
fn exact_p(ranks: &[f64], n1: usize, u_obs: f64) -> f64 {
    let n = ranks.len();
    let mu = (n1 * (n - n1)) as f64 / 2.0;
    let obs_dev = (u_obs - mu).abs() - 1e-9;
    let offset = (n1 * (n1 + 1)) as f64 / 2.0;
    let (mut total, mut extreme) = (0u64, 0u64);
    let mut pick: Vec<usize> = (0..n1).collect();
    loop {
        let r: f64 = pick.iter().map(|&i| ranks[i]).sum();
        total += 1;
        if (r - offset - mu).abs() >= obs_dev {
            extreme += 1;
        }
        // next combination in lexicographic order
        let mut i = n1;
        loop {
            if i == 0 {
                return extreme as f64 / total as f64;
            }
            i -= 1;
            if pick[i] < n - n1 + i {
                break;
            }
        }
        pick[i] += 1;
        for j in i + 1..n1 {
            pick[j] = pick[j - 1] + 1;
        }
    }
}
