//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data, scorer or
//! protocol errors. Results go to stdout, diagnostics to stderr.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use shufppl::evaluation::{
    compression_ratio, flesch_reading_ease, grid_search, load_pairs, parse_inputs, rates, significance_report,
    DatasetFormat, GridReport, GroupBy, InputRecord, PairRecord, RateReport, ScoredRecord,
};
use shufppl::features::{feature_column, FeatureType, PerplexityPair};
use shufppl::inference::{classify, Decision, DecisionLogic, DetectorConfig, Label, UpsilonVariant};
use shufppl::par::Exec;
use shufppl::repository::{fit_repository, FitRepoOptions, Repository};
use shufppl::scoring::{serve, score_pairs_pooled, MockScorer, ProcessScorer, ScoreCache, Scorer, ScorerMeta};
use shufppl::segment::segment;
use shufppl::shuffle::{shuffle_text, ShuffleSeed};
use shufppl::stats::{summarize, Family};
use shufppl::Class;

/// Marks errors that should exit with the usage code.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(name = "shufppl", version, about = "Detect machine-generated text from perplexity shifts under shuffling")]
#[command(args_override_self = true)]
struct Cli {
    /// JSON file whose keys are long flag names of the subcommand; flags on
    /// the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Shuffle the text read from stdin (or --input) and print it.
    Shuffle(ShuffleArgs),
    /// Score documents and write perplexity pairs as JSONL.
    Score(ScoreArgs),
    /// Fit a repository from scored HGT and MGT pairs.
    Fit(FitArgs),
    /// Classify documents against a repository.
    Detect(DetectArgs),
    /// Error rates of a repository on labelled data.
    Eval(EvalArgs),
    /// Search the detector configuration space on scored pairs.
    Gridsearch(GridArgs),
    /// Corpus statistics and per-feature significance tests.
    Stats(StatsArgs),
    /// Run the built-in mock scorer as a protocol server on stdin/stdout.
    #[command(hide = true)]
    ServeMock(ServeMockArgs),
}

#[derive(Args, Debug)]
struct ShuffleArgs {
    /// Permutation seed; the same seed always gives the same output.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct ScorerArgs {
    /// Scorer process started with `sh -c`.
    #[arg(long, value_name = "CMD", conflicts_with = "scorer")]
    scorer_cmd: Option<String>,
    /// Built-in scorer, e.g. `mock:constant-nll=0.693` or `mock:hash`.
    #[arg(long, value_name = "NAME")]
    scorer: Option<String>,
    /// Number of scorer connections.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Append-only JSONL cache of scorer outputs.
    #[arg(long, value_name = "FILE")]
    cache: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct InputArgs {
    /// Documents (JSONL or CSV); stdin when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Input format; guessed from the extension, JSONL for stdin.
    #[arg(long, value_enum)]
    input_format: Option<InputFormat>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum InputFormat {
    Jsonl,
    Csv,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[command(flatten)]
    scorer: ScorerArgs,
    #[command(flatten)]
    input: InputArgs,
    /// Shuffle seed used for every document.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Scored HGT pairs.
    #[arg(long, requires = "mgt")]
    hgt: Option<PathBuf>,
    /// Scored MGT pairs.
    #[arg(long, requires = "hgt")]
    mgt: Option<PathBuf>,
    /// Scored pairs carrying labels, instead of --hgt/--mgt.
    #[arg(long, conflicts_with_all = ["hgt", "mgt"])]
    pairs: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    fit: FitFlags,
}

#[derive(Args, Debug, Clone)]
struct FitFlags {
    /// Comma-separated candidate families (default: all eleven).
    #[arg(long, value_delimiter = ',')]
    families: Vec<String>,
    #[arg(long = "bootstrap-B", default_value_t = 200)]
    bootstrap_b: usize,
    /// Implausibility quantile.
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, default_value_t = 0.05)]
    significance: f64,
    #[arg(long)]
    no_outlier_removal: bool,
    /// Seed for the bootstrap replicates.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    min_pairs: usize,
    #[arg(long, default_value = "default")]
    domain: String,
    /// Run without the thread pool.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Debug, Clone)]
struct DetectFlags {
    /// Uncertainty margin applied to each feature vote.
    #[arg(long, value_enum, default_value_t = UpsilonArg::None)]
    upsilon: UpsilonArg,
    /// Defaults to 0.001 (d), 0.025 (r) or 0.05 (lr).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Keep features whose densities both fall below the threshold.
    #[arg(long)]
    no_implausibility: bool,
    /// Majority of feature votes, or mean MGT probability against 0.5.
    #[arg(long, value_enum, default_value_t = LogicArg::Majority)]
    logic: LogicArg,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum UpsilonArg {
    None,
    D,
    R,
    Lr,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum LogicArg {
    Majority,
    Mean,
}

impl DetectFlags {
    fn config(&self) -> Result<DetectorConfig> {
        let cfg = DetectorConfig {
            use_implausibility: !self.no_implausibility,
            upsilon: match self.upsilon {
                UpsilonArg::None => UpsilonVariant::None,
                UpsilonArg::D => UpsilonVariant::D,
                UpsilonArg::R => UpsilonVariant::R,
                UpsilonArg::Lr => UpsilonVariant::Lr,
            },
            epsilon: self.epsilon,
            logic: match self.logic {
                LogicArg::Majority => DecisionLogic::MajorityConsensus,
                LogicArg::Mean => DecisionLogic::MeanProbability,
            },
            ..Default::default()
        };
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Copy, Clone, Debug, ValueEnum, PartialEq)]
enum OutFormat {
    Text,
    Jsonl,
    Json,
}

#[derive(Args, Debug)]
struct DetectArgs {
    /// Repository written by `fit`.
    #[arg(long)]
    repo: PathBuf,
    #[command(flatten)]
    scorer: ScorerArgs,
    #[command(flatten)]
    input: InputArgs,
    /// Shuffle seed used for every document.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    detect: DetectFlags,
    #[arg(long, value_enum, default_value_t = OutFormat::Text)]
    format: OutFormat,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Repository written by `fit`.
    #[arg(long)]
    repo: PathBuf,
    /// Labelled documents to score.
    #[arg(long, conflicts_with = "pairs")]
    data: Option<PathBuf>,
    /// Already scored, labelled pairs.
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[command(flatten)]
    scorer: ScorerArgs,
    /// Shuffle seed used for every document.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    detect: DetectFlags,
    #[arg(long, value_parser = parse_group_by, default_value = "none")]
    group_by: GroupBy,
    #[arg(long, value_enum, default_value_t = OutFormat::Text)]
    format: OutFormat,
}

#[derive(Args, Debug)]
struct GridArgs {
    /// Labelled pairs used for fitting.
    #[arg(long)]
    train: PathBuf,
    /// Labelled pairs used for evaluation.
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_parser = parse_group_by, default_value = "none")]
    group_by: GroupBy,
    #[command(flatten)]
    fit: FitFlags,
    #[arg(long, value_enum, default_value_t = OutFormat::Text)]
    format: OutFormat,
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// Labelled documents for text statistics.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Labelled pairs for perplexity statistics and significance tests.
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutFormat::Text)]
    format: OutFormat,
}

#[derive(Args, Debug)]
struct ServeMockArgs {
    /// Mock scorer name, as accepted by --scorer.
    #[arg(long, default_value = "mock:hash")]
    mode: String,
}

fn parse_group_by(s: &str) -> std::result::Result<GroupBy, String> {
    s.parse()
}

/// Splices `--config` entries into argv right after the subcommand so that
/// explicit flags, which come later, override them.
fn expand_config(argv: Vec<String>) -> Result<Vec<String>> {
    let pos = argv.iter().position(|a| a == "--config" || a.starts_with("--config="));
    let Some(pos) = pos else { return Ok(argv) };
    let path = if let Some(v) = argv[pos].strip_prefix("--config=") {
        v.to_string()
    } else {
        argv.get(pos + 1).cloned().ok_or_else(|| usage("--config needs a file"))?
    };
    let text = fs::read_to_string(&path).map_err(|e| usage(format!("cannot read config {path}: {e}")))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| usage(format!("config {path} is not valid JSON: {e}")))?;
    let obj = value.as_object().ok_or_else(|| usage(format!("config {path} must be a JSON object")))?;
    let mut extra = Vec::new();
    for (key, v) in obj {
        let flag = format!("--{key}");
        match v {
            serde_json::Value::Bool(true) => extra.push(flag),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::Array(items) => {
                let parts: Vec<String> = items.iter().map(plain).collect();
                extra.push(flag);
                extra.push(parts.join(","));
            }
            other => {
                extra.push(flag);
                extra.push(plain(other));
            }
        }
    }
    let sub = argv
        .iter()
        .enumerate()
        .skip(1)
        .find(|(i, a)| !a.starts_with('-') && *i != pos + 1)
        .map(|(i, _)| i)
        .ok_or_else(|| usage("missing subcommand"))?;
    let mut out = argv[..=sub].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[sub + 1..]);
    Ok(out)
}

fn plain(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Shuffle(a) => cmd_shuffle(a),
        Command::Score(a) => cmd_score(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gridsearch(a) => cmd_gridsearch(a),
        Command::Stats(a) => cmd_stats(a),
        Command::ServeMock(a) => {
            let mock: MockScorer = a.mode.parse().map_err(usage)?;
            let stdin = io::stdin();
            serve(&mock, stdin.lock(), io::stdout().lock())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn read_input(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s).context("reading stdin")?;
            Ok(s)
        }
    }
}

fn cmd_shuffle(a: ShuffleArgs) -> Result<ExitCode> {
    let text = read_input(a.input.as_deref())?;
    let out = shuffle_text(&text, ShuffleSeed(a.seed))?;
    println!("{out}");
    Ok(ExitCode::SUCCESS)
}

fn read_records(input: &InputArgs) -> Result<Vec<InputRecord>> {
    let text = read_input(input.input.as_deref())?;
    let format = match (input.input_format, &input.input) {
        (Some(InputFormat::Csv), _) => DatasetFormat::Csv,
        (Some(InputFormat::Jsonl), _) => DatasetFormat::Jsonl,
        (None, Some(p)) => DatasetFormat::from_path(p),
        (None, None) => DatasetFormat::Jsonl,
    };
    Ok(parse_inputs(&text, format)?)
}

fn connect(args: &ScorerArgs) -> Result<Vec<Box<dyn Scorer>>> {
    if args.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    match (&args.scorer_cmd, &args.scorer) {
        (Some(cmd), None) => (0..args.jobs)
            .map(|_| Ok(Box::new(ProcessScorer::spawn(cmd)?) as Box<dyn Scorer>))
            .collect(),
        (None, Some(spec)) => {
            if !spec.starts_with("mock:") {
                return Err(usage(format!("unknown scorer `{spec}`; use mock:<mode> or --scorer-cmd")));
            }
            let mock: MockScorer = spec.parse().map_err(usage)?;
            Ok((0..args.jobs).map(|_| Box::new(mock.clone()) as Box<dyn Scorer>).collect())
        }
        _ => Err(usage("one of --scorer-cmd or --scorer is required")),
    }
}

fn open_cache(path: Option<&Path>) -> Result<Option<ScoreCache>> {
    path.map(ScoreCache::open).transpose().map_err(Into::into)
}

/// Scores every record, keeping input order. Per-document failures are
/// returned in place; connection failures abort.
fn score_records(
    records: &[InputRecord],
    args: &ScorerArgs,
    seed: u64,
) -> Result<(ScorerMeta, Vec<Result<PerplexityPair, String>>)> {
    let mut scorers = connect(args)?;
    let meta = scorers[0].meta().clone();
    let cache = open_cache(args.cache.as_deref())?;
    let jobs: Vec<(String, ShuffleSeed)> = records.iter().map(|r| (r.text.clone(), ShuffleSeed(seed))).collect();
    let results = score_pairs_pooled(&jobs, &mut scorers, cache.as_ref());
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(p) => out.push(Ok(p)),
            Err(e @ (shufppl::scoring::ScoringError::ScorerUnavailable(_) | shufppl::scoring::ScoringError::ProtocolViolation(_))) => {
                return Err(e.into())
            }
            Err(e) => out.push(Err(e.to_string())),
        }
    }
    Ok((meta, out))
}

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_score(a: ScoreArgs) -> Result<ExitCode> {
    let records = read_records(&a.input)?;
    let (meta, results) = score_records(&records, &a.scorer, a.seed)?;
    let mut out = writer(a.out.as_deref())?;
    let mut failed = 0;
    for (rec, res) in records.iter().zip(results) {
        match res {
            Ok(p) => {
                let line = PairRecord {
                    id: rec.id.clone(),
                    label: rec.label,
                    domain: rec.domain.clone(),
                    generator: rec.generator.clone(),
                    attack: rec.attack.clone(),
                    language: rec.language.clone(),
                    ppl: p.ppl,
                    ppl_shuf: p.ppl_shuf,
                    seed: a.seed,
                    scorer: Some(meta.clone()),
                };
                writeln!(out, "{}", serde_json::to_string(&line)?)?;
            }
            Err(e) => {
                failed += 1;
                eprintln!("{}: {e}", rec.id);
            }
        }
    }
    out.flush()?;
    Ok(if failed > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn families(names: &[String]) -> Result<Vec<Family>> {
    if names.is_empty() {
        return Ok(Family::ALL.to_vec());
    }
    names.iter().map(|n| n.trim().parse::<Family>().map_err(|e| usage(e.to_string()))).collect()
}

fn fit_options(f: &FitFlags, scorer: Option<ScorerMeta>) -> Result<FitRepoOptions> {
    Ok(FitRepoOptions {
        families: families(&f.families)?,
        replicates: f.bootstrap_b,
        significance: f.significance,
        alpha_impl: f.alpha,
        outlier_removal: !f.no_outlier_removal,
        seed: f.seed,
        min_pairs: f.min_pairs,
        domain_id: f.domain.clone(),
        scorer_meta: scorer,
        exec: if f.sequential { Exec::Sequential } else { Exec::Parallel },
    })
}

fn split_by_label(recs: &[PairRecord]) -> Result<(Vec<PerplexityPair>, Vec<PerplexityPair>)> {
    let (mut h, mut m) = (Vec::new(), Vec::new());
    for r in recs {
        match r.label {
            Some(Class::Hgt) => h.push(r.pair()),
            Some(Class::Mgt) => m.push(r.pair()),
            None => bail!("pair {} has no label", r.id),
        }
    }
    Ok((h, m))
}

fn common_meta(recs: &[PairRecord]) -> Option<ScorerMeta> {
    let first = recs.first()?.scorer.clone()?;
    recs.iter().all(|r| r.scorer.as_ref() == Some(&first)).then_some(first)
}

fn cmd_fit(a: FitArgs) -> Result<ExitCode> {
    let (records, hgt, mgt) = match (&a.hgt, &a.mgt, &a.pairs) {
        (Some(h), Some(m), None) => {
            let (hr, mr) = (load_pairs(h)?, load_pairs(m)?);
            let hp = hr.iter().map(PairRecord::pair).collect();
            let mp = mr.iter().map(PairRecord::pair).collect();
            let mut all = hr;
            all.extend(mr);
            (all, hp, mp)
        }
        (None, None, Some(p)) => {
            let recs = load_pairs(p)?;
            let (h, m) = split_by_label(&recs)?;
            (recs, h, m)
        }
        _ => return Err(usage("give --hgt and --mgt, or --pairs")),
    };
    let opts = fit_options(&a.fit, common_meta(&records))?;
    let repo = fit_repository(&hgt, &mgt, &opts)?;
    repo.save(&a.out)?;
    eprintln!(
        "fitted {} features ({}) from {} HGT and {} MGT pairs",
        repo.feature_set.len(),
        repo.feature_set.iter().map(|f| f.name()).collect::<Vec<_>>().join(", "),
        repo.provenance.n_hgt,
        repo.provenance.n_mgt
    );
    Ok(ExitCode::SUCCESS)
}

fn load_repo(path: &Path, scorer: Option<&ScorerMeta>) -> Result<Repository> {
    let repo = Repository::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let (Some(want), Some(got)) = (&repo.scorer_meta, scorer) {
        if want != got {
            eprintln!(
                "warning: repository was fitted with scorer {} (W={}, S={}) but {} (W={}, S={}) is in use",
                want.model_id, want.context_window, want.stride, got.model_id, got.context_window, got.stride
            );
        }
    }
    Ok(repo)
}

fn decision_json(id: &str, d: &Decision) -> serde_json::Value {
    json!({
        "id": id,
        "label": d.label,
        "mgt_probability": d.mgt_probability,
        "rejected_features": d.rejected_features(),
        "votes": d.votes,
    })
}

fn cmd_detect(a: DetectArgs) -> Result<ExitCode> {
    let cfg = a.detect.config()?;
    let records = read_records(&a.input)?;
    let (meta, results) = score_records(&records, &a.scorer, a.seed)?;
    let repo = load_repo(&a.repo, Some(&meta))?;
    let mut out = writer(None)?;
    let mut failed = 0;
    for (rec, res) in records.iter().zip(results) {
        let decision = res.and_then(|p| classify(p, &repo, &cfg).map_err(|e| e.to_string()));
        match (decision, a.format) {
            (Ok(d), OutFormat::Text) => {
                let p = d.mgt_probability.map_or("-".to_string(), |p| format!("{p:.4}"));
                let rej: Vec<&str> = d.rejected_features().iter().map(|f| f.name()).collect();
                writeln!(
                    out,
                    "{:<12} {:<6} p_mgt={p:<7} votes={}/{} rejected={}",
                    rec.id,
                    d.label,
                    d.votes.mgt,
                    d.votes.hgt,
                    if rej.is_empty() { "-".into() } else { rej.join(",") }
                )?;
            }
            (Ok(d), _) => writeln!(out, "{}", decision_json(&rec.id, &d))?,
            (Err(e), OutFormat::Text) => {
                failed += 1;
                writeln!(out, "{:<12} ERROR  {e}", rec.id)?;
            }
            (Err(e), _) => {
                failed += 1;
                writeln!(out, "{}", json!({"id": rec.id, "error": e}))?;
            }
        }
    }
    out.flush()?;
    Ok(if failed > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or("n/a".into(), |v| format!("{v:.4}"))
}

fn rate_line(name: &str, r: &RateReport) -> String {
    format!(
        "{name:<16} FPR={:<7} FNR={:<7} reject_hgt={:.4} reject_mgt={:.4} tp={} fp={} tn={} fn={}",
        fmt_rate(r.fpr),
        fmt_rate(r.fnr),
        r.reject_rate_hgt,
        r.reject_rate_mgt,
        r.tp,
        r.fp,
        r.tn,
        r.fn_
    )
}

fn cmd_eval(a: EvalArgs) -> Result<ExitCode> {
    let cfg = a.detect.config()?;
    let pairs: Vec<PairRecord> = match (&a.data, &a.pairs) {
        (Some(path), None) => {
            let records = read_records(&InputArgs {
                input: Some(path.clone()),
                input_format: None,
            })?;
            let (meta, results) = score_records(&records, &a.scorer, a.seed)?;
            let mut out = Vec::new();
            for (rec, res) in records.into_iter().zip(results) {
                let p = res.map_err(|e| anyhow!("{}: {e}", rec.id))?;
                out.push(PairRecord {
                    id: rec.id,
                    label: rec.label,
                    domain: rec.domain,
                    generator: rec.generator,
                    attack: rec.attack,
                    language: rec.language,
                    ppl: p.ppl,
                    ppl_shuf: p.ppl_shuf,
                    seed: a.seed,
                    scorer: Some(meta.clone()),
                });
            }
            out
        }
        (None, Some(path)) => load_pairs(path)?,
        _ => return Err(usage("give --data (with a scorer) or --pairs")),
    };
    let repo = load_repo(&a.repo, common_meta(&pairs).as_ref())?;
    let mut labels = Vec::with_capacity(pairs.len());
    let mut decisions = Vec::with_capacity(pairs.len());
    for r in &pairs {
        labels.push(r.label.ok_or_else(|| anyhow!("record {} has no label", r.id))?);
        decisions.push(classify(r.pair(), &repo, &cfg)?.label);
    }
    let overall = rates(&decisions, &labels)?;
    let mut groups: Vec<(String, RateReport)> = Vec::new();
    if a.group_by != GroupBy::None {
        let mut names: Vec<String> = pairs.iter().filter_map(|r| r.group(a.group_by)).collect();
        names.sort();
        names.dedup();
        for name in names {
            let idx: Vec<usize> = (0..pairs.len())
                .filter(|&i| pairs[i].group(a.group_by).is_none_or(|g| g == name))
                .collect();
            let d: Vec<Label> = idx.iter().map(|&i| decisions[i]).collect();
            let l: Vec<Class> = idx.iter().map(|&i| labels[i]).collect();
            if let Ok(r) = rates(&d, &l) {
                groups.push((name, r));
            }
        }
    }
    let mut out = writer(None)?;
    if a.format == OutFormat::Text {
        writeln!(out, "{}", rate_line("all", &overall))?;
        for (name, r) in &groups {
            writeln!(out, "{}", rate_line(name, r))?;
        }
    } else {
        let g: serde_json::Map<String, serde_json::Value> =
            groups.iter().map(|(n, r)| (n.clone(), serde_json::to_value(r).unwrap())).collect();
        writeln!(out, "{}", json!({"config": cfg, "overall": overall, "groups": g}))?;
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn print_grid(out: &mut dyn Write, report: &GridReport) -> io::Result<()> {
    for sel in [&report.low_fpr, &report.low_fnr] {
        writeln!(out, "{:?} winner: {}", sel.mode, sel.winner)?;
        writeln!(out, "  mean target rate: {}", fmt_rate(sel.mean_target))?;
        for (cfg, wins) in &sel.wins {
            writeln!(out, "  {wins} group win(s): {cfg}")?;
        }
    }
    for g in &report.groups {
        writeln!(out, "group {}", g.group)?;
        for (cfg, r) in report.configs.iter().zip(&g.reports) {
            match r {
                Some(r) => writeln!(out, "  {:<52} FPR={:<7} FNR={:<7}", cfg.to_string(), fmt_rate(r.fpr), fmt_rate(r.fnr))?,
                None => writeln!(out, "  {:<52} all rejected", cfg.to_string())?,
            }
        }
    }
    Ok(())
}

fn cmd_gridsearch(a: GridArgs) -> Result<ExitCode> {
    let train = load_pairs(&a.train)?;
    let test = load_pairs(&a.test)?;
    let (h, m) = split_by_label(&train)?;
    let meta = common_meta(&train);
    let mut opts = fit_options(&a.fit, meta)?;
    opts.outlier_removal = true;
    let with = fit_repository(&h, &m, &opts).context("fitting with outlier removal")?;
    opts.outlier_removal = false;
    let without = fit_repository(&h, &m, &opts).context("fitting without outlier removal")?;
    let scored: Vec<ScoredRecord> = test
        .iter()
        .map(|r| {
            Ok(ScoredRecord {
                id: r.id.clone(),
                label: r.label.ok_or_else(|| anyhow!("record {} has no label", r.id))?,
                group: r.group(a.group_by),
                pair: r.pair(),
            })
        })
        .collect::<Result<_>>()?;
    let report = grid_search(&scored, &with, &without, opts.exec)?;
    let mut out = writer(None)?;
    if a.format == OutFormat::Text {
        print_grid(&mut out, &report)?;
    } else {
        writeln!(out, "{}", serde_json::to_string(&report)?)?;
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn cmd_stats(a: StatsArgs) -> Result<ExitCode> {
    if a.data.is_none() && a.pairs.is_none() {
        return Err(usage("give --data and/or --pairs"));
    }
    let mut report = serde_json::Map::new();
    let mut text_out = String::new();
    if let Some(path) = &a.data {
        let records = read_records(&InputArgs {
            input: Some(path.clone()),
            input_format: None,
        })?;
        let mut per_class = serde_json::Map::new();
        for class in Class::ALL {
            let docs: Vec<&InputRecord> = records.iter().filter(|r| r.label == Some(class)).collect();
            if docs.is_empty() {
                continue;
            }
            let (mut words, mut paras, mut sents, mut fre, mut cr) = (vec![], vec![], vec![], vec![], vec![]);
            for d in &docs {
                let doc = segment(&d.text)?;
                words.push(doc.words().count() as f64);
                paras.push(doc.paragraphs().len() as f64);
                sents.push(doc.sentence_count() as f64 / doc.paragraphs().len() as f64);
                fre.push(flesch_reading_ease(&d.text)?);
                cr.push(compression_ratio(&d.text)?);
            }
            let row = json!({
                "docs": docs.len(),
                "words": mean(&words),
                "paragraphs": mean(&paras),
                "sentences_per_paragraph": mean(&sents),
                "flesch_reading_ease": mean(&fre),
                "compression_ratio": mean(&cr),
            });
            text_out.push_str(&format!(
                "{class} docs={} words={:.2} paragraphs={:.2} sentences/paragraph={:.2} FRE={:.2} compression={:.3}\n",
                docs.len(),
                mean(&words),
                mean(&paras),
                mean(&sents),
                mean(&fre),
                mean(&cr)
            ));
            per_class.insert(class.to_string(), row);
        }
        report.insert("text".into(), per_class.into());
    }
    if let Some(path) = &a.pairs {
        let recs = load_pairs(path)?;
        let (h, m) = split_by_label(&recs)?;
        let mut summaries = serde_json::Map::new();
        for (class, pairs) in [(Class::Mgt, &m), (Class::Hgt, &h)] {
            if pairs.is_empty() {
                continue;
            }
            let mut cols = serde_json::Map::new();
            let ppl: Vec<f64> = pairs.iter().map(|p| p.ppl).collect();
            let shuf: Vec<f64> = pairs.iter().map(|p| p.ppl_shuf).collect();
            let mut line = format!("{class}");
            for (name, col) in [("ppl", ppl), ("ppl_shuf", shuf)]
                .into_iter()
                .chain(FeatureType::ALL.iter().map(|&f| (f.name(), feature_column(pairs, f))))
            {
                let s = summarize(&col)?;
                line.push_str(&format!(" {name}: mean={:.3} median={:.3} sd={:.3}", s.mean, s.median, s.sd));
                cols.insert(name.into(), serde_json::to_value(s)?);
            }
            text_out.push_str(&line);
            text_out.push('\n');
            summaries.insert(class.to_string(), cols.into());
        }
        report.insert("perplexity".into(), summaries.into());
        if !h.is_empty() && !m.is_empty() {
            let rows = significance_report(&h, &m)?;
            text_out.push_str(&format!(
                "{:<9} {:>10} {:>10} {:>10} {:>10} | {:>8} {:>8} {:>8} {:>10}\n",
                "feature", "effect", "CI low", "CI high", "p", "effect", "CI low", "CI high", "p"
            ));
            for r in &rows {
                text_out.push_str(&format!(
                    "{:<9} {:>10.3} {:>10.3} {:>10.3} {:>10.2e} | {:>8.3} {:>8.3} {:>8.3} {:>10.2e}\n",
                    r.feature.name(),
                    r.welch.effect,
                    r.welch.ci_low,
                    r.welch.ci_high,
                    r.welch.p_value,
                    r.mann_whitney.effect,
                    r.mann_whitney.ci_low,
                    r.mann_whitney.ci_high,
                    r.mann_whitney.p_value
                ));
            }
            report.insert("significance".into(), serde_json::to_value(rows)?);
        }
    }
    let mut out = writer(None)?;
    if a.format == OutFormat::Text {
        write!(out, "{text_out}")?;
    } else {
        writeln!(out, "{}", serde_json::Value::Object(report))?;
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}
