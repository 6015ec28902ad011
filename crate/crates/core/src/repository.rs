//! The per-domain fitted-distribution repository: for every usable feature
//! the best family fitted to each class, plus implausibility thresholds.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{feature_column, FeatureType, PerplexityPair};
use crate::par::{derive_seed, Exec};
use crate::scoring::ScorerMeta;
use crate::stats::{bootstrap_ks_with, iqr_filter, quantile, BootstrapOptions, Family, FittedDist, StatError};
use crate::Class;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_MIN_PAIRS: usize = 50;
pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;
pub const DEFAULT_ALPHA_IMPL: f64 = 0.01;

#[derive(Debug, Error)]
pub enum RepoError {
    #[error("{class} has {got} pairs, at least {needed} are required")]
    InsufficientData { class: Class, needed: usize, got: usize },
    #[error("no feature type has a family that fits both classes")]
    EmptyFeatureSet,
    #[error("invalid fit options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Stat(#[from] StatError),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("corrupt repository file: {0}")]
    CorruptFile(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepoEntry {
    pub feature: FeatureType,
    pub class: Class,
    pub dist: FittedDist,
    pub boot_p: f64,
    pub n_fit: usize,
}

/// Outcome of one `(feature, family)` candidate, kept for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub feature: FeatureType,
    pub family: Family,
    pub hgt_p: Option<f64>,
    pub mgt_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Candidate {
    /// `min(p_HGT, p_MGT)` when both classes were tested.
    pub fn min_p(&self) -> Option<f64> {
        Some(self.hgt_p?.min(self.mgt_p?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub replicates: usize,
    pub families: Vec<Family>,
    pub outlier_removal: bool,
    /// Share of input pairs removed by the IQR filter, both classes pooled.
    pub outlier_fraction: f64,
    pub n_hgt: usize,
    pub n_mgt: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repository {
    pub schema_version: u32,
    pub domain_id: String,
    pub scorer_meta: Option<ScorerMeta>,
    pub significance: f64,
    pub alpha_impl: f64,
    pub feature_set: Vec<FeatureType>,
    pub entries: Vec<RepoEntry>,
    pub tau: BTreeMap<FeatureType, f64>,
    /// Class whose quantile produced each threshold.
    pub tau_source: BTreeMap<FeatureType, Class>,
    pub provenance: Provenance,
    #[serde(default)]
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone)]
pub struct FitRepoOptions {
    pub families: Vec<Family>,
    pub replicates: usize,
    pub significance: f64,
    pub alpha_impl: f64,
    pub outlier_removal: bool,
    pub seed: u64,
    pub min_pairs: usize,
    pub domain_id: String,
    pub scorer_meta: Option<ScorerMeta>,
    pub exec: Exec,
}

impl Default for FitRepoOptions {
    fn default() -> Self {
        FitRepoOptions {
            families: Family::ALL.to_vec(),
            replicates: crate::stats::gof::DEFAULT_REPLICATES,
            significance: DEFAULT_SIGNIFICANCE,
            alpha_impl: DEFAULT_ALPHA_IMPL,
            outlier_removal: true,
            seed: 0,
            min_pairs: DEFAULT_MIN_PAIRS,
            domain_id: "default".into(),
            scorer_meta: None,
            exec: Exec::default(),
        }
    }
}

struct CellFit {
    fit: FittedDist,
    p: f64,
}

fn filter_class(pairs: &[PerplexityPair], on: bool) -> Result<Vec<PerplexityPair>, RepoError> {
    if !on {
        return Ok(pairs.to_vec());
    }
    let keep = iqr_filter(pairs)?;
    Ok(pairs.iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| *p).collect())
}

/// Threshold for one class: the `alpha` quantile of the class's own fitted
/// density over its fitting observations.
pub fn class_tau(dist: &FittedDist, xs: &[f64], alpha: f64) -> Result<f64, StatError> {
    let dens: Vec<f64> = xs.iter().map(|&x| dist.pdf(x)).collect();
    quantile(&dens, alpha)
}

fn pick_best(cands: &[&Candidate], significance: f64) -> Option<Family> {
    cands
        .iter()
        .filter(|c| c.hgt_p.is_some_and(|p| p > significance) && c.mgt_p.is_some_and(|p| p > significance))
        .max_by(|a, b| {
            let (pa, pb) = (a.min_p().unwrap(), b.min_p().unwrap());
            pa.total_cmp(&pb)
                .then_with(|| b.family.arity().cmp(&a.family.arity()))
                .then_with(|| b.family.name().cmp(a.family.name()))
        })
        .map(|c| c.family)
}

/// Builds a repository from scored pairs of each class.
pub fn fit_repository(
    hgt_pairs: &[PerplexityPair],
    mgt_pairs: &[PerplexityPair],
    opts: &FitRepoOptions,
) -> Result<Repository, RepoError> {
    if opts.families.is_empty() {
        return Err(RepoError::InvalidOptions("no candidate families".into()));
    }
    if !(opts.significance > 0.0 && opts.significance < 1.0) {
        return Err(RepoError::InvalidOptions(format!("significance {} not in (0,1)", opts.significance)));
    }
    if !(opts.alpha_impl > 0.0 && opts.alpha_impl < 1.0) {
        return Err(RepoError::InvalidOptions(format!("alpha_impl {} not in (0,1)", opts.alpha_impl)));
    }
    for (class, pairs) in [(Class::Hgt, hgt_pairs), (Class::Mgt, mgt_pairs)] {
        if pairs.len() < opts.min_pairs {
            return Err(RepoError::InsufficientData {
                class,
                needed: opts.min_pairs,
                got: pairs.len(),
            });
        }
        for p in pairs {
            p.validate().map_err(|e| RepoError::InvalidOptions(e.to_string()))?;
        }
    }
    let hgt = filter_class(hgt_pairs, opts.outlier_removal)?;
    let mgt = filter_class(mgt_pairs, opts.outlier_removal)?;
    let total = hgt_pairs.len() + mgt_pairs.len();
    let outlier_fraction = (total - hgt.len() - mgt.len()) as f64 / total as f64;

    let mut families = opts.families.clone();
    families.sort();
    families.dedup();

    let columns: Vec<[Vec<f64>; 2]> = FeatureType::ALL
        .iter()
        .map(|&f| [feature_column(&hgt, f), feature_column(&mgt, f)])
        .collect();

    let cells: Vec<(FeatureType, Family)> = FeatureType::ALL
        .iter()
        .flat_map(|&f| families.iter().map(move |&fam| (f, fam)))
        .collect();

    let fit_cell = |feature: FeatureType, family: Family, class_idx: usize| -> Result<CellFit, StatError> {
        let fam_idx = Family::ALL.iter().position(|&f| f == family).unwrap() as u64;
        let cell = (feature.index() as u64 * 16 + fam_idx) * 2 + class_idx as u64;
        let bopts = BootstrapOptions {
            replicates: opts.replicates,
            seed: derive_seed(opts.seed, cell),
            exec: opts.exec,
            ..Default::default()
        };
        let (fit, gof) = bootstrap_ks_with(family, &columns[feature.index()][class_idx], &bopts)?;
        Ok(CellFit { fit, p: gof.boot_p })
    };

    // HGT first; MGT is only tested when HGT does not already rule the
    // family out.
    let outcomes = opts.exec.map_slice(&cells, |&(feature, family)| {
        let mut cand = Candidate {
            feature,
            family,
            hgt_p: None,
            mgt_p: None,
            note: None,
        };
        let mut fits = [None, None];
        match fit_cell(feature, family, 0) {
            Err(e) => cand.note = Some(format!("HGT: {e}")),
            Ok(h) => {
                cand.hgt_p = Some(h.p);
                fits[0] = Some(h.fit);
                if h.p > opts.significance {
                    match fit_cell(feature, family, 1) {
                        Err(e) => cand.note = Some(format!("MGT: {e}")),
                        Ok(m) => {
                            cand.mgt_p = Some(m.p);
                            fits[1] = Some(m.fit);
                        }
                    }
                }
            }
        }
        (cand, fits)
    });

    let mut feature_set = Vec::new();
    let mut entries = Vec::new();
    let mut tau = BTreeMap::new();
    let mut tau_source = BTreeMap::new();
    let mut candidates: Vec<Candidate> = outcomes.iter().map(|(c, _)| c.clone()).collect();

    for feature in FeatureType::ALL {
        let here: Vec<&Candidate> = candidates.iter().filter(|c| c.feature == feature).collect();
        let Some(best) = pick_best(&here, opts.significance) else {
            continue;
        };
        let (cand, fits) = outcomes
            .iter()
            .find(|(c, _)| c.feature == feature && c.family == best)
            .expect("selected candidate exists");
        let cols = &columns[feature.index()];
        let mut class_taus = Vec::with_capacity(2);
        let mut new_entries = Vec::with_capacity(2);
        for (idx, class) in [(0, Class::Hgt), (1, Class::Mgt)] {
            let dist = fits[idx].expect("both classes fitted");
            class_taus.push((class_tau(&dist, &cols[idx], opts.alpha_impl)?, class));
            new_entries.push(RepoEntry {
                feature,
                class,
                dist,
                boot_p: if idx == 0 { cand.hgt_p } else { cand.mgt_p }.unwrap(),
                n_fit: cols[idx].len(),
            });
        }
        // ties go to HGT, the first class considered
        let (t, src) = class_taus
            .iter()
            .copied()
            .fold((f64::INFINITY, Class::Hgt), |acc, (t, c)| if t < acc.0 { (t, c) } else { acc });
        if !(t.is_finite() && t > 0.0) {
            if let Some(c) = candidates.iter_mut().find(|c| c.feature == feature && c.family == best) {
                c.note = Some(format!("threshold {t} is not positive; feature dropped"));
            }
            continue;
        }
        feature_set.push(feature);
        entries.extend(new_entries);
        tau.insert(feature, t);
        tau_source.insert(feature, src);
    }

    if feature_set.is_empty() {
        return Err(RepoError::EmptyFeatureSet);
    }
    candidates.sort_by(|a, b| (a.feature, a.family).cmp(&(b.feature, b.family)));

    Ok(Repository {
        schema_version: SCHEMA_VERSION,
        domain_id: opts.domain_id.clone(),
        scorer_meta: opts.scorer_meta.clone(),
        significance: opts.significance,
        alpha_impl: opts.alpha_impl,
        feature_set,
        entries,
        tau,
        tau_source,
        provenance: Provenance {
            seed: opts.seed,
            replicates: opts.replicates,
            families,
            outlier_removal: opts.outlier_removal,
            outlier_fraction,
            n_hgt: hgt.len(),
            n_mgt: mgt.len(),
        },
        candidates,
    })
}

impl Repository {
    pub fn entry(&self, feature: FeatureType, class: Class) -> Option<&RepoEntry> {
        self.entries.iter().find(|e| e.feature == feature && e.class == class)
    }

    pub fn tau(&self, feature: FeatureType) -> Option<f64> {
        self.tau.get(&feature).copied()
    }

    /// Structural checks applied after loading.
    pub fn validate(&self) -> Result<(), RepoError> {
        let bad = |m: String| Err(RepoError::CorruptFile(m));
        if self.feature_set.is_empty() {
            return bad("empty feature set".into());
        }
        if self.entries.len() != 2 * self.feature_set.len() {
            return bad(format!(
                "{} entries for {} features",
                self.entries.len(),
                self.feature_set.len()
            ));
        }
        for &f in &self.feature_set {
            for c in Class::ALL {
                let Some(e) = self.entry(f, c) else {
                    return bad(format!("missing {c} entry for {f}"));
                };
                if e.dist.dist.validate().is_err() {
                    return bad(format!("invalid parameters in {c} entry for {f}"));
                }
                if !(e.boot_p > self.significance) {
                    return bad(format!("{c} entry for {f} has boot_p {} <= significance", e.boot_p));
                }
                if !self.provenance.families.contains(&e.dist.family()) {
                    return bad(format!("{c} entry for {f} uses a family that was not offered"));
                }
            }
            match self.tau(f) {
                Some(t) if t > 0.0 && t.is_finite() => {}
                _ => return bad(format!("missing or non-positive threshold for {f}")),
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("repository serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, RepoError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| RepoError::CorruptFile(e.to_string()))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(RepoError::SchemaMismatch(format!(
                    "schema_version {v}, expected {SCHEMA_VERSION}"
                )))
            }
            None => return Err(RepoError::SchemaMismatch("missing schema_version".into())),
        }
        let repo: Repository = serde_json::from_value(value).map_err(|e| RepoError::SchemaMismatch(e.to_string()))?;
        repo.validate()?;
        Ok(repo)
    }

    pub fn save(&self, path: &Path) -> Result<(), RepoError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RepoError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Dist;

    fn cand(family: Family, h: f64, m: f64) -> Candidate {
        Candidate {
            feature: FeatureType::Ratio,
            family,
            hgt_p: Some(h),
            mgt_p: Some(m),
            note: None,
        }
    }

    #[test]
    fn best_maximises_the_smaller_p() {
        let a = cand(Family::Gamma, 0.9, 0.1);
        let b = cand(Family::LogNormal, 0.3, 0.4);
        assert_eq!(pick_best(&[&a, &b], 0.05), Some(Family::LogNormal));
    }

    #[test]
    fn rejected_in_one_class_is_not_a_candidate() {
        let a = cand(Family::Gamma, 0.9, 0.04);
        assert_eq!(pick_best(&[&a], 0.05), None);
        let b = Candidate { mgt_p: None, ..cand(Family::Normal, 0.9, 0.0) };
        assert_eq!(pick_best(&[&b], 0.05), None);
    }

    #[test]
    fn ties_prefer_fewer_parameters_then_name() {
        let burr = cand(Family::Burr, 0.5, 0.5);
        let gamma = cand(Family::Gamma, 0.5, 0.5);
        let normal = cand(Family::Normal, 0.5, 0.5);
        let expon = cand(Family::Exponential, 0.5, 0.5);
        assert_eq!(pick_best(&[&burr, &gamma], 0.05), Some(Family::Gamma));
        assert_eq!(pick_best(&[&normal, &expon, &burr], 0.05), Some(Family::Exponential));
        let lognormal = cand(Family::LogNormal, 0.5, 0.5);
        assert_eq!(pick_best(&[&lognormal, &gamma], 0.05), Some(Family::Gamma));
    }

    #[test]
    fn tau_is_a_linear_quantile_of_densities() {
        // Beta(2,1) has pdf 2x, so these points have densities 0.1..1.0
        let dist = FittedDist {
            dist: Dist::Beta {
                a: 2.0,
                b: 1.0,
                loc: 0.0,
                scale: 1.0,
            },
            nll_at_fit: 0.0,
            sample_size: 10,
        };
        let xs: Vec<f64> = (1..=10).map(|i| i as f64 / 20.0).collect();
        let t = class_tau(&dist, &xs, 0.01).unwrap();
        assert!((t - 0.109).abs() < 1e-12, "{t}");
    }

    #[test]
    fn too_few_pairs() {
        let pairs = vec![PerplexityPair::new(2.0, 3.0).unwrap(); 10];
        let err = fit_repository(&pairs, &pairs, &FitRepoOptions::default()).unwrap_err();
        assert!(matches!(err, RepoError::InsufficientData { needed: 50, got: 10, .. }));
    }

    #[test]
    fn missing_schema_version() {
        assert!(matches!(Repository::from_json("{}"), Err(RepoError::SchemaMismatch(_))));
        assert!(matches!(
            Repository::from_json(r#"{"schema_version": 99}"#),
            Err(RepoError::SchemaMismatch(_))
        ));
        assert!(matches!(Repository::from_json("not json"), Err(RepoError::CorruptFile(_))));
    }
}
