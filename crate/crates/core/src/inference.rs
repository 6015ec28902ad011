//! Per-feature density comparison, implausibility filtering and voting.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{compute_feature, FeatureType, PerplexityPair};
use crate::par::Exec;
use crate::repository::Repository;
use crate::scoring::{score_pair, ScoreCache, Scorer};
use crate::shuffle::ShuffleSeed;
use crate::Class;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("feature {0} is not in the repository")]
    UnknownFeature(FeatureType),
    #[error("both densities are zero")]
    ZeroDensitySum,
    #[error("p_MGT is zero, the ratio forms are undefined")]
    DivisionDomain,
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UpsilonVariant {
    #[default]
    None,
    D,
    R,
    Lr,
}

impl UpsilonVariant {
    pub const ALL: [UpsilonVariant; 4] = [UpsilonVariant::None, UpsilonVariant::D, UpsilonVariant::R, UpsilonVariant::Lr];

    pub fn default_epsilon(self) -> f64 {
        match self {
            UpsilonVariant::None => 0.0,
            UpsilonVariant::D => 0.001,
            UpsilonVariant::R => 0.025,
            UpsilonVariant::Lr => 0.05,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            UpsilonVariant::None => "none",
            UpsilonVariant::D => "d",
            UpsilonVariant::R => "r",
            UpsilonVariant::Lr => "lr",
        }
    }
}

impl fmt::Display for UpsilonVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UpsilonVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        UpsilonVariant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown upsilon variant `{s}` (none, d, r, lr)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecisionLogic {
    #[default]
    MajorityConsensus,
    MeanProbability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub use_implausibility: bool,
    pub upsilon: UpsilonVariant,
    /// `None` means the variant's default.
    pub epsilon: Option<f64>,
    pub logic: DecisionLogic,
    /// Label given when majority votes are split evenly.
    pub tie_break: Class,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            use_implausibility: true,
            upsilon: UpsilonVariant::None,
            epsilon: None,
            logic: DecisionLogic::MajorityConsensus,
            tie_break: Class::Mgt,
        }
    }
}

impl DetectorConfig {
    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or_else(|| self.upsilon.default_epsilon())
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        let e = self.epsilon();
        if e.is_finite() && e >= 0.0 {
            Ok(())
        } else {
            Err(InferenceError::InvalidConfig(format!("epsilon must be finite and >= 0, got {e}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "MGT")]
    Mgt,
    #[serde(rename = "HGT")]
    Hgt,
    #[serde(rename = "REJECT")]
    Reject,
}

impl From<Class> for Label {
    fn from(c: Class) -> Self {
        match c {
            Class::Mgt => Label::Mgt,
            Class::Hgt => Label::Hgt,
        }
    }
}

impl Label {
    pub fn class(self) -> Option<Class> {
        match self {
            Label::Mgt => Some(Class::Mgt),
            Label::Hgt => Some(Class::Hgt),
            Label::Reject => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Mgt => "MGT",
            Label::Hgt => "HGT",
            Label::Reject => "REJECT",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub feature: FeatureType,
    pub z: f64,
    pub pdf_mgt: f64,
    pub pdf_hgt: f64,
    /// Absent when the feature was rejected or abstained.
    pub p_mgt: Option<f64>,
    pub vote: Option<Class>,
    /// Filtered by the implausibility check.
    pub rejected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VoteTally {
    pub mgt: usize,
    pub hgt: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub label: Label,
    pub mgt_probability: Option<f64>,
    pub features: Vec<FeatureRecord>,
    pub votes: VoteTally,
}

impl Decision {
    pub fn rejected_features(&self) -> Vec<FeatureType> {
        self.features.iter().filter(|r| r.rejected).map(|r| r.feature).collect()
    }
}

/// Densities of the stored MGT and HGT fits at `z`.
pub fn eval_densities(z: f64, feature: FeatureType, repo: &Repository) -> Result<(f64, f64), InferenceError> {
    let m = repo.entry(feature, Class::Mgt).ok_or(InferenceError::UnknownFeature(feature))?;
    let h = repo.entry(feature, Class::Hgt).ok_or(InferenceError::UnknownFeature(feature))?;
    let clean = |v: f64| if v.is_finite() { v.max(0.0) } else if v > 0.0 { f64::MAX } else { 0.0 };
    Ok((clean(m.dist.pdf(z)), clean(h.dist.pdf(z))))
}

/// Neither class explains `z`: `max(pdf_M, pdf_H) < tau`.
pub fn implausible(pdf_mgt: f64, pdf_hgt: f64, tau: f64) -> bool {
    pdf_mgt.max(pdf_hgt) < tau
}

/// `pdf_M / (pdf_M + pdf_H)`.
pub fn ensemble_prob(pdf_mgt: f64, pdf_hgt: f64) -> Result<f64, InferenceError> {
    let sum = pdf_mgt + pdf_hgt;
    if !(sum > 0.0) {
        return Err(InferenceError::ZeroDensitySum);
    }
    if sum.is_infinite() {
        // rescale to keep the ratio finite
        let m = pdf_mgt / 2.0;
        return Ok(m / (m + pdf_hgt / 2.0));
    }
    Ok(pdf_mgt / sum)
}

/// Uncertainty margin added to the vote threshold.
pub fn upsilon(variant: UpsilonVariant, p_hgt: f64, p_mgt: f64, epsilon: f64) -> Result<f64, InferenceError> {
    match variant {
        UpsilonVariant::None => Ok(0.0),
        UpsilonVariant::D => Ok(p_hgt - p_mgt + epsilon),
        UpsilonVariant::R | UpsilonVariant::Lr if p_mgt == 0.0 => Err(InferenceError::DivisionDomain),
        UpsilonVariant::R => Ok(p_hgt / p_mgt - 1.0 + epsilon),
        UpsilonVariant::Lr => Ok((p_hgt / p_mgt).ln() + epsilon),
    }
}

/// MGT iff `p_M >= p_H - upsilon`.
pub fn vote(p_mgt: f64, p_hgt: f64, upsilon: f64) -> Class {
    if p_mgt >= p_hgt - upsilon {
        Class::Mgt
    } else {
        Class::Hgt
    }
}

/// Density evidence for one feature of one document.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evidence {
    pub feature: FeatureType,
    pub z: f64,
    pub pdf_mgt: f64,
    pub pdf_hgt: f64,
    pub tau: f64,
}

/// Classifies one scored pair against a repository.
pub fn classify(pair: PerplexityPair, repo: &Repository, cfg: &DetectorConfig) -> Result<Decision, InferenceError> {
    pair.validate().map_err(|e| InferenceError::InvalidConfig(e.to_string()))?;
    let evidence = repo
        .feature_set
        .iter()
        .map(|&feature| {
            let z = compute_feature(pair, feature);
            let (pdf_mgt, pdf_hgt) = eval_densities(z, feature, repo)?;
            let tau = repo.tau(feature).ok_or(InferenceError::UnknownFeature(feature))?;
            Ok(Evidence {
                feature,
                z,
                pdf_mgt,
                pdf_hgt,
                tau,
            })
        })
        .collect::<Result<Vec<_>, InferenceError>>()?;
    decide(&evidence, cfg)
}

/// Classifies many pairs; results keep the input order.
pub fn classify_batch(
    pairs: &[PerplexityPair],
    repo: &Repository,
    cfg: &DetectorConfig,
    exec: Exec,
) -> Vec<Result<Decision, InferenceError>> {
    exec.map_slice(pairs, |&p| classify(p, repo, cfg))
}

/// Filtering, per-feature votes and the final decision.
pub fn decide(evidence: &[Evidence], cfg: &DetectorConfig) -> Result<Decision, InferenceError> {
    cfg.validate()?;
    let eps = cfg.epsilon();
    let mut records = Vec::with_capacity(evidence.len());
    let mut tally = VoteTally::default();
    let mut probs = Vec::new();
    for ev in evidence {
        let (pdf_mgt, pdf_hgt) = (ev.pdf_mgt, ev.pdf_hgt);
        let mut rec = FeatureRecord {
            feature: ev.feature,
            z: ev.z,
            pdf_mgt,
            pdf_hgt,
            p_mgt: None,
            vote: None,
            rejected: false,
        };
        if cfg.use_implausibility && implausible(pdf_mgt, pdf_hgt, ev.tau) {
            rec.rejected = true;
            records.push(rec);
            continue;
        }
        let p_m = match ensemble_prob(pdf_mgt, pdf_hgt) {
            Ok(p) => p,
            // only reachable with the check off: the feature abstains
            Err(InferenceError::ZeroDensitySum) => {
                records.push(rec);
                continue;
            }
            Err(e) => return Err(e),
        };
        let p_h = 1.0 - p_m;
        let u = match upsilon(cfg.upsilon, p_h, p_m, eps) {
            Ok(u) => u,
            // the ratio forms diverge as p_M -> 0
            Err(InferenceError::DivisionDomain) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        let v = vote(p_m, p_h, u);
        match v {
            Class::Mgt => tally.mgt += 1,
            Class::Hgt => tally.hgt += 1,
        }
        rec.p_mgt = Some(p_m);
        rec.vote = Some(v);
        probs.push(p_m);
        records.push(rec);
    }
    if probs.is_empty() {
        return Ok(Decision {
            label: Label::Reject,
            mgt_probability: None,
            features: records,
            votes: tally,
        });
    }
    let mean_p = probs.iter().sum::<f64>() / probs.len() as f64;
    let class = match cfg.logic {
        DecisionLogic::MajorityConsensus => match tally.mgt.cmp(&tally.hgt) {
            std::cmp::Ordering::Greater => Class::Mgt,
            std::cmp::Ordering::Less => Class::Hgt,
            std::cmp::Ordering::Equal => cfg.tie_break,
        },
        DecisionLogic::MeanProbability => {
            if mean_p >= 0.5 {
                Class::Mgt
            } else {
                Class::Hgt
            }
        }
    };
    Ok(Decision {
        label: class.into(),
        mgt_probability: Some(mean_p),
        features: records,
        votes: tally,
    })
}

/// Shuffles, scores both versions and classifies.
pub fn detect_text(
    text: &str,
    repo: &Repository,
    scorer: &mut dyn Scorer,
    cache: Option<&ScoreCache>,
    cfg: &DetectorConfig,
    seed: ShuffleSeed,
) -> Result<Decision, crate::Error> {
    let pair = score_pair(text, seed, scorer, cache)?;
    Ok(classify(pair, repo, cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn implausibility_boundary() {
        assert!(implausible(0.001, 0.002, 0.01));
        assert!(!implausible(0.5, 0.0001, 0.01));
        assert!(!implausible(0.01, 0.0, 0.01));
    }

    #[test]
    fn ensemble_examples() {
        assert!((ensemble_prob(0.3, 0.1).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(ensemble_prob(0.2, 0.2).unwrap(), 0.5);
        assert_eq!(ensemble_prob(0.0, 0.4).unwrap(), 0.0);
        assert_eq!(ensemble_prob(0.0, 0.0), Err(InferenceError::ZeroDensitySum));
        assert_eq!(ensemble_prob(f64::MAX, f64::MAX).unwrap(), 0.5);
    }

    #[test]
    fn upsilon_examples() {
        assert!((upsilon(UpsilonVariant::D, 0.6, 0.4, 0.001).unwrap() - 0.201).abs() < 1e-12);
        assert!((upsilon(UpsilonVariant::R, 0.5, 0.5, 0.025).unwrap() - 0.025).abs() < 1e-15);
        let lr = upsilon(UpsilonVariant::Lr, 0.8, 0.2, 0.05).unwrap();
        assert!((lr - (4f64.ln() + 0.05)).abs() < 1e-12);
        assert!((lr - 1.43629).abs() < 1e-5);
        assert_eq!(upsilon(UpsilonVariant::None, 0.9, 0.1, 0.3).unwrap(), 0.0);
        assert_eq!(upsilon(UpsilonVariant::R, 1.0, 0.0, 0.025), Err(InferenceError::DivisionDomain));
    }

    #[test]
    fn vote_examples() {
        assert_eq!(vote(0.5, 0.5, 0.0), Class::Mgt);
        assert_eq!(vote(0.2, 0.8, 0.0), Class::Hgt);
        assert_eq!(vote(0.2, 0.8, 0.7), Class::Mgt);
    }

    proptest! {
        #[test]
        fn ensemble_is_scale_invariant(m in 1e-6f64..10.0, h in 1e-6f64..10.0, k in 1e-3f64..1e3) {
            let a = ensemble_prob(m, h).unwrap();
            let b = ensemble_prob(m * k, h * k).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn raising_upsilon_never_flips_to_hgt(p in 0.0f64..=1.0, u in -2.0f64..2.0, du in 0.0f64..2.0) {
            if vote(p, 1.0 - p, u) == Class::Mgt {
                prop_assert_eq!(vote(p, 1.0 - p, u + du), Class::Mgt);
            }
        }

        #[test]
        fn difference_margin_always_votes_mgt(p in 0.0f64..=1.0, eps in 0.0f64..0.1) {
            let u = upsilon(UpsilonVariant::D, 1.0 - p, p, eps).unwrap();
            prop_assert_eq!(vote(p, 1.0 - p, u), Class::Mgt);
        }
    }

    #[test]
    fn config_defaults() {
        let c = DetectorConfig::default();
        assert!(c.use_implausibility);
        assert_eq!(c.upsilon, UpsilonVariant::None);
        assert_eq!(c.tie_break, Class::Mgt);
        let lr = DetectorConfig { upsilon: UpsilonVariant::Lr, ..c };
        assert_eq!(lr.epsilon(), 0.05);
        let bad = DetectorConfig { epsilon: Some(-1.0), ..c };
        assert!(bad.validate().is_err());
        let parsed: DetectorConfig = serde_json::from_str(r#"{"upsilon":"r"}"#).unwrap();
        assert_eq!(parsed.epsilon(), 0.025);
        assert!(parsed.use_implausibility);
    }
}
