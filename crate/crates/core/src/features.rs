//! The five scalar perplexity features computed from an original / shuffled
//! perplexity pair. Each feature is analysed and fitted separately; they are
//! never merged into one statistic.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PairError {
    #[error("perplexities must be finite and >= 1 (got ppl={ppl}, ppl_shuf={ppl_shuf})")]
    OutOfRange { ppl: f64, ppl_shuf: f64 },
}

/// Perplexity of a document (`ppl`) and of its shuffled version (`ppl_shuf`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerplexityPair {
    pub ppl: f64,
    pub ppl_shuf: f64,
}

impl PerplexityPair {
    pub fn new(ppl: f64, ppl_shuf: f64) -> Result<Self, PairError> {
        let pair = PerplexityPair { ppl, ppl_shuf };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<(), PairError> {
        let ok = |v: f64| v.is_finite() && v >= 1.0;
        if ok(self.ppl) && ok(self.ppl_shuf) {
            Ok(())
        } else {
            Err(PairError::OutOfRange {
                ppl: self.ppl,
                ppl_shuf: self.ppl_shuf,
            })
        }
    }

    pub fn feature(&self, feature: FeatureType) -> f64 {
        compute_feature(*self, feature)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureType {
    Sum,
    Diff,
    Ratio,
    LogRatio,
    Change,
}

impl FeatureType {
    pub const ALL: [FeatureType; 5] = [
        FeatureType::Sum,
        FeatureType::Diff,
        FeatureType::Ratio,
        FeatureType::LogRatio,
        FeatureType::Change,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureType::Sum => "sum",
            FeatureType::Diff => "diff",
            FeatureType::Ratio => "ratio",
            FeatureType::LogRatio => "logratio",
            FeatureType::Change => "change",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for FeatureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureType::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown feature type `{s}`"))
    }
}

pub fn compute_feature(pair: PerplexityPair, feature: FeatureType) -> f64 {
    let PerplexityPair { ppl, ppl_shuf } = pair;
    match feature {
        FeatureType::Sum => ppl + ppl_shuf,
        FeatureType::Diff => ppl_shuf - ppl,
        FeatureType::Ratio => ppl_shuf / ppl,
        FeatureType::LogRatio => (ppl_shuf / ppl).ln(),
        // percent
        FeatureType::Change => 100.0 * (ppl_shuf - ppl) / ppl,
    }
}

/// All five features of one pair, indexed by [`FeatureType`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector([f64; 5]);

impl FeatureVector {
    pub fn get(&self, feature: FeatureType) -> f64 {
        self.0[feature.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (FeatureType, f64)> + '_ {
        FeatureType::ALL.into_iter().map(|f| (f, self.get(f)))
    }
}

pub fn compute_all(pair: PerplexityPair) -> FeatureVector {
    FeatureVector(FeatureType::ALL.map(|f| compute_feature(pair, f)))
}

/// Column of one feature over many pairs.
pub fn feature_column(pairs: &[PerplexityPair], feature: FeatureType) -> Vec<f64> {
    pairs.iter().map(|p| compute_feature(*p, feature)).collect()
}
