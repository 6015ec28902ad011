//! Datasets, error rates, configuration search and corpus statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use flate2::write::GzEncoder;
use flate2::Compression;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{feature_column, FeatureType, PerplexityPair};
use crate::inference::{classify, DetectorConfig, InferenceError, Label, UpsilonVariant};
use crate::par::Exec;
use crate::repository::Repository;
use crate::segment::segment;
use crate::stats::{mannwhitney_u, welch_t, StatError, TestReport};
use crate::Class;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0} decisions for {1} labels")]
    LengthMismatch(usize, usize),
    #[error("every decision is a reject, rates are undefined")]
    AllRejected,
    #[error("no evaluation groups")]
    EmptyGroup,
    #[error("input is empty")]
    EmptyInput,
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("unknown dataset format `{0}` (csv, jsonl)")]
    UnknownFormat(String),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Stat(#[from] StatError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub id: String,
    pub text: String,
    pub label: Class,
    pub domain: String,
    pub generator: Option<String>,
    pub attack: Option<String>,
    pub language: Option<String>,
    /// Columns not mapped to a field above.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Csv,
    Jsonl,
}

impl DatasetFormat {
    /// Guesses from the file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => DatasetFormat::Csv,
            _ => DatasetFormat::Jsonl,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DatasetFormat::Csv),
            "jsonl" | "ndjson" => Ok(DatasetFormat::Jsonl),
            _ => Err(EvalError::UnknownFormat(s.into())),
        }
    }
}

/// A document as read from disk. Only the text is required; scoring and
/// detection work without a label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub id: String,
    pub text: String,
    pub label: Option<Class>,
    pub domain: Option<String>,
    pub generator: Option<String>,
    pub attack: Option<String>,
    pub language: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
    /// Source line, for error messages.
    #[serde(skip)]
    pub line: usize,
}

impl InputRecord {
    pub fn labeled(self) -> Result<LabeledRecord, EvalError> {
        let label = self.label.ok_or(EvalError::ParseError {
            line: self.line,
            message: "missing label".into(),
        })?;
        Ok(LabeledRecord {
            id: self.id,
            text: self.text,
            label,
            domain: self.domain.unwrap_or_else(|| "default".into()),
            generator: self.generator,
            attack: self.attack,
            language: self.language,
            metadata: self.metadata,
        })
    }
}

const TEXT_KEYS: [&str; 2] = ["text", "generation"];
const GENERATOR_KEYS: [&str; 2] = ["generator", "model"];
const LANGUAGE_KEYS: [&str; 2] = ["language", "lang"];

/// Builds a record from string columns. Benchmark spellings are accepted:
/// `generation` for the text, `model` for the generator (where `human`
/// also implies the label) and `lang` for the language.
fn record_from_fields(mut fields: BTreeMap<String, String>, line: usize) -> Result<InputRecord, EvalError> {
    let err = |message: String| EvalError::ParseError { line, message };
    let mut take = |keys: &[&str]| keys.iter().find_map(|k| fields.remove(*k)).filter(|v| !v.trim().is_empty());
    let text = take(&TEXT_KEYS).ok_or_else(|| err("missing text".into()))?;
    let generator = take(&GENERATOR_KEYS);
    let label = match take(&["label"]) {
        Some(l) => Some(l.parse::<Class>().map_err(err)?),
        None => generator
            .as_deref()
            .map(|g| if g.eq_ignore_ascii_case("human") { Class::Hgt } else { Class::Mgt }),
    };
    let id = take(&["id"]).unwrap_or_else(|| line.to_string());
    let domain = take(&["domain"]);
    let attack = take(&["attack"]).filter(|a| !a.eq_ignore_ascii_case("none"));
    let language = take(&LANGUAGE_KEYS);
    let generator = generator.filter(|g| !g.eq_ignore_ascii_case("human"));
    Ok(InputRecord {
        id,
        text,
        label,
        domain,
        generator,
        attack,
        language,
        metadata: fields,
        line,
    })
}

fn value_to_string(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::Null => None,
        serde_json::Value::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

pub fn parse_inputs_jsonl(text: &str) -> Result<Vec<InputRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| EvalError::ParseError { line: i + 1, message };
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let obj = value.as_object().ok_or_else(|| err("expected a JSON object".into()))?;
        let fields = obj
            .iter()
            .filter_map(|(k, v)| value_to_string(v).map(|s| (k.clone(), s)))
            .collect();
        out.push(record_from_fields(fields, i + 1)?);
    }
    Ok(out)
}

pub fn parse_inputs_csv<R: std::io::Read>(reader: R) -> Result<Vec<InputRecord>, EvalError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| EvalError::ParseError { line: 1, message: e.to_string() })?
        .clone();
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        // header is line 1
        let line = row.as_ref().ok().and_then(|r| r.position()).map_or(i + 2, |p| p.line() as usize);
        let row = row.map_err(|e| EvalError::ParseError { line, message: e.to_string() })?;
        let fields = headers.iter().zip(row.iter()).map(|(k, v)| (k.to_string(), v.to_string())).collect();
        out.push(record_from_fields(fields, line)?);
    }
    Ok(out)
}

pub fn parse_inputs(text: &str, format: DatasetFormat) -> Result<Vec<InputRecord>, EvalError> {
    match format {
        DatasetFormat::Csv => parse_inputs_csv(text.as_bytes()),
        DatasetFormat::Jsonl => parse_inputs_jsonl(text),
    }
}

pub fn load_inputs(path: &Path, format: Option<DatasetFormat>) -> Result<Vec<InputRecord>, EvalError> {
    let text = std::fs::read_to_string(path)?;
    parse_inputs(&text, format.unwrap_or_else(|| DatasetFormat::from_path(path)))
}

pub fn parse_jsonl(text: &str) -> Result<Vec<LabeledRecord>, EvalError> {
    parse_inputs_jsonl(text)?.into_iter().map(InputRecord::labeled).collect()
}

pub fn parse_csv<R: std::io::Read>(reader: R) -> Result<Vec<LabeledRecord>, EvalError> {
    parse_inputs_csv(reader)?.into_iter().map(InputRecord::labeled).collect()
}

pub fn load_dataset(path: &Path, format: Option<DatasetFormat>) -> Result<Vec<LabeledRecord>, EvalError> {
    load_inputs(path, format)?.into_iter().map(InputRecord::labeled).collect()
}

/// Column used to split records into evaluation groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    #[default]
    None,
    Domain,
    Generator,
    Attack,
    Language,
}

impl FromStr for GroupBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(GroupBy::None),
            "domain" => Ok(GroupBy::Domain),
            "generator" | "model" => Ok(GroupBy::Generator),
            "attack" => Ok(GroupBy::Attack),
            "language" | "lang" => Ok(GroupBy::Language),
            _ => Err(format!("unknown grouping `{s}` (none, domain, generator, attack, language)")),
        }
    }
}

/// One line of a scored-pairs file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Class>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    pub ppl: f64,
    pub ppl_shuf: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scorer: Option<crate::scoring::ScorerMeta>,
}

impl PairRecord {
    pub fn pair(&self) -> PerplexityPair {
        PerplexityPair {
            ppl: self.ppl,
            ppl_shuf: self.ppl_shuf,
        }
    }

    pub fn group(&self, by: GroupBy) -> Option<String> {
        match by {
            GroupBy::None => None,
            GroupBy::Domain => self.domain.clone(),
            GroupBy::Generator => self.generator.clone(),
            GroupBy::Attack => self.attack.clone(),
            GroupBy::Language => self.language.clone(),
        }
    }
}

pub fn parse_pairs(text: &str) -> Result<Vec<PairRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| EvalError::ParseError { line: i + 1, message };
        let rec: PairRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        rec.pair().validate().map_err(|e| err(e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn load_pairs(path: &Path) -> Result<Vec<PairRecord>, EvalError> {
    parse_pairs(&std::fs::read_to_string(path)?)
}

/// Error rates with rejects kept out of the denominators.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RateReport {
    /// `fp / (fp + tn)`; `None` when no HGT record was classified.
    pub fpr: Option<f64>,
    /// `fn / (fn + tp)`; `None` when no MGT record was classified.
    pub fnr: Option<f64>,
    pub reject_rate_hgt: f64,
    pub reject_rate_mgt: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub rejects_hgt: usize,
    pub rejects_mgt: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn rates(decisions: &[Label], labels: &[Class]) -> Result<RateReport, EvalError> {
    if decisions.len() != labels.len() {
        return Err(EvalError::LengthMismatch(decisions.len(), labels.len()));
    }
    if decisions.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut r = RateReport::default();
    for (&d, &l) in decisions.iter().zip(labels) {
        match (l, d) {
            (Class::Mgt, Label::Mgt) => r.tp += 1,
            (Class::Mgt, Label::Hgt) => r.fn_ += 1,
            (Class::Mgt, Label::Reject) => r.rejects_mgt += 1,
            (Class::Hgt, Label::Mgt) => r.fp += 1,
            (Class::Hgt, Label::Hgt) => r.tn += 1,
            (Class::Hgt, Label::Reject) => r.rejects_hgt += 1,
        }
    }
    if r.rejects_hgt + r.rejects_mgt == decisions.len() {
        return Err(EvalError::AllRejected);
    }
    r.fpr = ratio(r.fp, r.fp + r.tn);
    r.fnr = ratio(r.fn_, r.fn_ + r.tp);
    r.reject_rate_hgt = ratio(r.rejects_hgt, r.fp + r.tn + r.rejects_hgt).unwrap_or(0.0);
    r.reject_rate_mgt = ratio(r.rejects_mgt, r.fn_ + r.tp + r.rejects_mgt).unwrap_or(0.0);
    Ok(r)
}

/// A labelled pair that has already been scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub id: String,
    pub label: Class,
    /// `None` puts the record in every group, which is how human texts
    /// without a generator are compared against each generator.
    pub group: Option<String>,
    pub pair: PerplexityPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridConfig {
    pub outlier_removal: bool,
    pub use_implausibility: bool,
    pub upsilon: UpsilonVariant,
}

impl GridConfig {
    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            use_implausibility: self.use_implausibility,
            upsilon: self.upsilon,
            ..Default::default()
        }
    }
}

impl fmt::Display for GridConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "outliers={} implausibility={} upsilon={}",
            if self.outlier_removal { "removed" } else { "kept" },
            if self.use_implausibility { "on" } else { "off" },
            self.upsilon
        )
    }
}

/// All 16 combinations, in a fixed order that also breaks final ties.
pub fn config_space() -> Vec<GridConfig> {
    let mut out = Vec::with_capacity(16);
    for outlier_removal in [true, false] {
        for use_implausibility in [true, false] {
            for upsilon in UpsilonVariant::ALL {
                out.push(GridConfig {
                    outlier_removal,
                    use_implausibility,
                    upsilon,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    LowFpr,
    LowFnr,
}

impl Mode {
    fn target(self, r: &RateReport) -> Option<f64> {
        match self {
            Mode::LowFpr => r.fpr,
            Mode::LowFnr => r.fnr,
        }
    }

    fn secondary(self, r: &RateReport) -> Option<f64> {
        match self {
            Mode::LowFpr => r.fnr,
            Mode::LowFnr => r.fpr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEval {
    pub group: String,
    /// One report per entry of the config list, `None` when every record of
    /// the group was rejected.
    pub reports: Vec<Option<RateReport>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub mode: Mode,
    pub winner: GridConfig,
    pub group_winners: Vec<(String, GridConfig)>,
    pub wins: Vec<(GridConfig, usize)>,
    pub mean_target: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub configs: Vec<GridConfig>,
    pub groups: Vec<GroupEval>,
    pub low_fpr: Selection,
    pub low_fnr: Selection,
}

fn or_inf(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::INFINITY)
}

fn group_winner(reports: &[Option<RateReport>], mode: Mode) -> Option<usize> {
    (0..reports.len())
        .filter(|&i| reports[i].is_some())
        .min_by(|&a, &b| {
            let (ra, rb) = (reports[a].as_ref().unwrap(), reports[b].as_ref().unwrap());
            or_inf(mode.target(ra))
                .total_cmp(&or_inf(mode.target(rb)))
                .then(or_inf(mode.secondary(ra)).total_cmp(&or_inf(mode.secondary(rb))))
                .then(a.cmp(&b))
        })
}

fn mean_target(groups: &[GroupEval], idx: usize, mode: Mode) -> Option<f64> {
    let vals: Vec<f64> = groups
        .iter()
        .filter_map(|g| g.reports[idx].as_ref().and_then(|r| mode.target(r)))
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Majority over per-group winners. Ties go to the config with the best
/// (lowest) mean target rate across groups, then to config order.
pub fn select(configs: &[GridConfig], groups: &[GroupEval], mode: Mode) -> Result<Selection, EvalError> {
    if groups.is_empty() {
        return Err(EvalError::EmptyGroup);
    }
    let mut wins = vec![0usize; configs.len()];
    let mut group_winners = Vec::new();
    for g in groups {
        if let Some(w) = group_winner(&g.reports, mode) {
            wins[w] += 1;
            group_winners.push((g.group.clone(), configs[w]));
        }
    }
    let top = *wins.iter().max().unwrap_or(&0);
    if top == 0 {
        return Err(EvalError::AllRejected);
    }
    let winner = (0..configs.len())
        .filter(|&i| wins[i] == top)
        .min_by(|&a, &b| {
            or_inf(mean_target(groups, a, mode))
                .total_cmp(&or_inf(mean_target(groups, b, mode)))
                .then(a.cmp(&b))
        })
        .expect("at least one config has the top count");
    Ok(Selection {
        mode,
        winner: configs[winner],
        group_winners,
        wins: configs.iter().copied().zip(wins.iter().copied()).filter(|(_, w)| *w > 0).collect(),
        mean_target: mean_target(groups, winner, mode),
    })
}

/// Evaluates every config on every group. `with_removal` and
/// `without_removal` are the repositories fitted with and without outlier
/// removal; no scorer is involved.
pub fn grid_search(
    records: &[ScoredRecord],
    with_removal: &Repository,
    without_removal: &Repository,
    exec: Exec,
) -> Result<GridReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let configs = config_space();
    let mut names: Vec<String> = records.iter().filter_map(|r| r.group.clone()).collect();
    names.sort();
    names.dedup();
    if names.is_empty() {
        names.push("all".into());
    }
    let decisions: Vec<Vec<Label>> = exec.map_slice(&configs, |c| {
        let repo = if c.outlier_removal { with_removal } else { without_removal };
        let cfg = c.detector();
        records
            .iter()
            .map(|r| classify(r.pair, repo, &cfg).map(|d| d.label))
            .collect::<Result<Vec<_>, _>>()
    })
    .into_iter()
    .collect::<Result<_, _>>()?;

    let mut groups = Vec::with_capacity(names.len());
    for name in &names {
        let members: Vec<usize> = (0..records.len())
            .filter(|&i| records[i].group.as_ref().is_none_or(|g| g == name))
            .collect();
        let labels: Vec<Class> = members.iter().map(|&i| records[i].label).collect();
        let mut reports = Vec::with_capacity(configs.len());
        for d in &decisions {
            let labs: Vec<Label> = members.iter().map(|&i| d[i]).collect();
            reports.push(match rates(&labs, &labels) {
                Ok(r) => Some(r),
                Err(EvalError::AllRejected) => None,
                Err(e) => return Err(e),
            });
        }
        groups.push(GroupEval {
            group: name.clone(),
            reports,
        });
    }
    Ok(GridReport {
        low_fpr: select(&configs, &groups, Mode::LowFpr)?,
        low_fnr: select(&configs, &groups, Mode::LowFnr)?,
        configs,
        groups,
    })
}

/// Vowel groups (`aeiouy`), less a trailing silent `e` unless it is the
/// only group, at least one per word.
pub fn syllables(word: &str) -> usize {
    let w: Vec<char> = word.chars().filter(|c| c.is_alphabetic()).flat_map(char::to_lowercase).collect();
    let is_vowel = |c: char| "aeiouy".contains(c);
    let mut groups = 0;
    let mut prev = false;
    for &c in &w {
        let v = is_vowel(c);
        if v && !prev {
            groups += 1;
        }
        prev = v;
    }
    let n = w.len();
    let lone_final_e = n >= 2 && w[n - 1] == 'e' && !is_vowel(w[n - 2]);
    if lone_final_e && groups > 1 {
        groups -= 1;
    }
    groups.max(1)
}

/// `206.835 - 1.015 (words / sentences) - 84.6 (syllables / words)`.
pub fn flesch_reading_ease(text: &str) -> Result<f64, EvalError> {
    let doc = segment(text).map_err(|_| EvalError::EmptyInput)?;
    let words: Vec<&str> = doc.words().collect();
    let sentences = doc.sentence_count();
    if words.is_empty() || sentences == 0 {
        return Err(EvalError::EmptyInput);
    }
    let syl: usize = words.iter().map(|w| syllables(w)).sum();
    let nw = words.len() as f64;
    Ok(206.835 - 1.015 * (nw / sentences as f64) - 84.6 * (syl as f64 / nw))
}

/// UTF-8 size over gzip (level 6) size.
pub fn compression_ratio(text: &str) -> Result<f64, EvalError> {
    if text.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut enc = GzEncoder::new(Vec::new(), Compression::new(6));
    enc.write_all(text.as_bytes())?;
    let gz = enc.finish()?;
    Ok(text.len() as f64 / gz.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub feature: FeatureType,
    pub welch: TestReport,
    pub mann_whitney: TestReport,
}

/// Welch and Mann–Whitney tests per feature, MGT as the first sample so
/// that a positive effect means MGT tends to be larger.
pub fn significance_report(hgt: &[PerplexityPair], mgt: &[PerplexityPair]) -> Result<Vec<SignificanceRow>, EvalError> {
    FeatureType::ALL
        .iter()
        .map(|&feature| {
            let (h, m) = (feature_column(hgt, feature), feature_column(mgt, feature));
            Ok(SignificanceRow {
                feature,
                welch: welch_t(&m, &h)?,
                mann_whitney: mannwhitney_u(&m, &h)?,
            })
        })
        .collect()
}

/// Log-normal perplexity times an independent log-normal shuffle ratio,
/// both floored at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairModel {
    pub ppl_median: f64,
    pub ppl_log_sd: f64,
    pub ratio_median: f64,
    pub ratio_log_sd: f64,
}

impl PairModel {
    /// Matches the mean and median of ppl and ratio reported for the
    /// Abstracts domain.
    pub fn abstracts(class: Class) -> Self {
        match class {
            Class::Mgt => PairModel {
                ppl_median: 4.496,
                ppl_log_sd: 0.366,
                ratio_median: 1.289,
                ratio_log_sd: 0.587,
            },
            Class::Hgt => PairModel {
                ppl_median: 10.949,
                ppl_log_sd: 0.370,
                ratio_median: 1.301,
                ratio_log_sd: 0.23,
            },
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<PerplexityPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ppl = LogNormal::new(self.ppl_median.ln(), self.ppl_log_sd).expect("valid log-normal");
        let ratio = LogNormal::new(self.ratio_median.ln(), self.ratio_log_sd).expect("valid log-normal");
        (0..n)
            .map(|_| {
                let p = ppl.sample(&mut rng).max(1.0);
                let q = (p * ratio.sample(&mut rng)).max(1.0);
                PerplexityPair { ppl: p, ppl_shuf: q }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(fpr: f64, fnr: f64) -> Option<RateReport> {
        Some(RateReport {
            fpr: Some(fpr),
            fnr: Some(fnr),
            ..Default::default()
        })
    }

    #[test]
    fn perfect_rates() {
        let labels: Vec<Class> = [Class::Hgt; 10].into_iter().chain([Class::Mgt; 10]).collect();
        let decisions: Vec<Label> = labels.iter().map(|&c| c.into()).collect();
        let r = rates(&decisions, &labels).unwrap();
        assert_eq!((r.fpr, r.fnr), (Some(0.0), Some(0.0)));
    }

    #[test]
    fn one_false_positive_in_a_hundred() {
        let labels = vec![Class::Hgt; 100];
        let mut decisions = vec![Label::Hgt; 100];
        decisions[17] = Label::Mgt;
        assert_eq!(rates(&decisions, &labels).unwrap().fpr, Some(0.01));
    }

    #[test]
    fn rejects_leave_the_denominator() {
        let labels = vec![Class::Mgt; 10];
        let mut decisions = vec![Label::Mgt; 10];
        decisions[0] = Label::Reject;
        decisions[1] = Label::Reject;
        decisions[2] = Label::Hgt;
        let r = rates(&decisions, &labels).unwrap();
        assert_eq!(r.fnr, Some(1.0 / 8.0));
        assert_eq!(r.reject_rate_mgt, 0.2);
        assert_eq!(r.fpr, None);
    }

    #[test]
    fn rate_errors() {
        assert!(matches!(rates(&[Label::Mgt], &[]), Err(EvalError::LengthMismatch(1, 0))));
        assert!(matches!(rates(&[Label::Reject], &[Class::Hgt]), Err(EvalError::AllRejected)));
    }

    #[test]
    fn sixteen_configs() {
        let c = config_space();
        assert_eq!(c.len(), 16);
        let mut d = c.clone();
        d.dedup();
        assert_eq!(d.len(), 16);
    }

    fn configs(n: usize) -> Vec<GridConfig> {
        config_space().into_iter().take(n).collect()
    }

    #[test]
    fn single_group_takes_its_best() {
        let g = GroupEval {
            group: "g".into(),
            reports: vec![rep(0.2, 0.1), rep(0.05, 0.3), rep(0.05, 0.2)],
        };
        let s = select(&configs(3), &[g], Mode::LowFpr).unwrap();
        assert_eq!(s.winner, configs(3)[2]);
    }

    #[test]
    fn majority_of_groups() {
        let c = configs(2);
        let groups: Vec<GroupEval> = [(0.0, 0.1), (0.0, 0.1), (0.1, 0.0)]
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| GroupEval {
                group: format!("g{i}"),
                reports: vec![rep(a, 0.5), rep(b, 0.5)],
            })
            .collect();
        assert_eq!(select(&c, &groups, Mode::LowFpr).unwrap().winner, c[0]);
    }

    #[test]
    fn split_wins_go_to_the_lower_mean() {
        let c = configs(2);
        let rows = [(0.01, 0.02), (0.01, 0.02), (0.30, 0.03), (0.30, 0.03)];
        let groups: Vec<GroupEval> = rows
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| GroupEval {
                group: format!("g{i}"),
                reports: vec![rep(a, 0.0), rep(b, 0.0)],
            })
            .collect();
        let s = select(&c, &groups, Mode::LowFpr).unwrap();
        assert_eq!(s.wins, vec![(c[0], 2), (c[1], 2)]);
        // mean FPR 0.155 against 0.025
        assert_eq!(s.winner, c[1]);
        assert!((s.mean_target.unwrap() - 0.025).abs() < 1e-12);
        assert!(select(&c, &[], Mode::LowFpr).is_err());
    }

    #[test]
    fn syllable_rule() {
        assert_eq!(syllables("The"), 1);
        assert_eq!(syllables("cat"), 1);
        assert_eq!(syllables("make"), 1);
        assert_eq!(syllables("reading"), 2);
        assert_eq!(syllables("rhythm"), 1);
        assert_eq!(syllables("42"), 1);
        assert_eq!(syllables("beautiful"), 3);
    }

    #[test]
    fn flesch_examples() {
        assert!((flesch_reading_ease("The cat sat.").unwrap() - 119.19).abs() < 1e-9);
        assert!((flesch_reading_ease("Go.").unwrap() - 121.22).abs() < 1e-9);
        assert!(flesch_reading_ease("").is_err());
        let a = flesch_reading_ease("The cat sat. The dog ran away.").unwrap();
        let b = flesch_reading_ease("  The   cat sat.\tThe dog\nran away.  ").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn compression_examples() {
        let a = "a".repeat(1000);
        let r = compression_ratio(&a).unwrap();
        assert!(r > 10.0);
        assert_eq!(r, compression_ratio(&a).unwrap());
        assert!(compression_ratio("q8Zr1mXw0P").unwrap() < 2.0);
        assert!(compression_ratio("").is_err());
    }

    #[test]
    fn jsonl_records() {
        let text = concat!(
            r#"{"id":"a","text":"Hello there.","label":"HGT","domain":"news"}"#,
            "\n",
            r#"{"id":"b","text":"Hi.","label":"MGT","domain":"news","attack":"homoglyph","extra":3}"#,
            "\n"
        );
        let recs = parse_jsonl(text).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].attack.as_deref(), Some("homoglyph"));
        assert_eq!(recs[1].metadata.get("extra").map(String::as_str), Some("3"));
    }

    #[test]
    fn benchmark_column_names() {
        let text = "id,generation,model,domain,attack\n1,Some text.,human,abstracts,none\n2,More text.,gpt3,abstracts,none\n";
        let recs = parse_csv(text.as_bytes()).unwrap();
        assert_eq!(recs[0].label, Class::Hgt);
        assert_eq!(recs[0].generator, None);
        assert_eq!(recs[1].label, Class::Mgt);
        assert_eq!(recs[1].generator.as_deref(), Some("gpt3"));
        assert_eq!(recs[1].attack, None);
    }

    #[test]
    fn csv_without_label_is_an_error() {
        let text = "id,text\n1,Some text.\n";
        assert!(matches!(parse_csv(text.as_bytes()), Err(EvalError::ParseError { line: 2, .. })));
    }

    #[test]
    fn identical_classes_have_no_effect() {
        let pairs = PairModel::abstracts(Class::Hgt).sample(50, 1);
        for row in significance_report(&pairs, &pairs).unwrap() {
            assert_eq!(row.welch.effect, 0.0);
            assert_eq!(row.welch.p_value, 1.0);
            assert_eq!(row.mann_whitney.effect, 0.0);
        }
    }

    #[test]
    fn abstracts_model_means() {
        let m = PairModel::abstracts(Class::Mgt).sample(200_000, 3);
        let mean = |f: &dyn Fn(&PerplexityPair) -> f64| m.iter().map(f).sum::<f64>() / m.len() as f64;
        assert!((mean(&|p| p.ppl) - 4.807).abs() < 0.03);
        assert!((mean(&|p| p.ppl_shuf / p.ppl) - 1.532).abs() < 0.02);
    }
}
