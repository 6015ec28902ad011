//! Sliding-window perplexity from an external scorer.
//!
//! The scorer is any process speaking the newline-delimited JSON protocol
//! below over stdin/stdout. It owns tokenisation; the core owns the
//! canonical [`window_plan`] so both sides can be checked against one
//! definition.
//!
//! ```text
//! -> {"op":"hello","protocol":1}
//! <- {"op":"meta","model_id":"...","context_window":2048,"stride":1024}
//! -> {"op":"score","id":0,"text":"..."}
//! <- {"op":"nll","id":0,"token_count":5,"nlls":[...4 values...]}
//! <- {"op":"error","id":0,"message":"..."}
//! ```

use std::collections::HashMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::PerplexityPair;
use crate::shuffle::{shuffle_text, ShuffleSeed};

pub const PROTOCOL_VERSION: u64 = 1;
pub const DEFAULT_CONTEXT_WINDOW: usize = 2048;
pub const DEFAULT_STRIDE: usize = 1024;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("invalid window geometry: T={tokens}, W={window}, S={stride}")]
    BadGeometry { tokens: usize, window: usize, stride: usize },
    #[error("trace has no target positions")]
    EmptyTrace,
    #[error("text is empty or whitespace only")]
    EmptyText,
    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("text tokenizes to fewer than two tokens")]
    TokenizationEmpty,
    #[error("scorer reported an error: {0}")]
    ScorerReported(String),
    #[error("cache file {path}: {message}")]
    Cache { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScorerMeta {
    pub model_id: String,
    pub context_window: usize,
    pub stride: usize,
}

impl ScorerMeta {
    pub fn new(model_id: impl Into<String>, context_window: usize, stride: usize) -> Result<Self, ScoringError> {
        let meta = ScorerMeta {
            model_id: model_id.into(),
            context_window,
            stride,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<(), ScoringError> {
        if self.context_window >= 2 && (1..=self.context_window).contains(&self.stride) {
            Ok(())
        } else {
            Err(ScoringError::BadGeometry {
                tokens: 2,
                window: self.context_window,
                stride: self.stride,
            })
        }
    }
}

/// One scoring window: tokens `context_start..target_end` are fed to the
/// model and positions `target_start..target_end` are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSegment {
    pub context_start: usize,
    pub target_start: usize,
    pub target_end: usize,
}

/// Windows covering every target position `1..T` exactly once.
pub fn window_plan(tokens: usize, window: usize, stride: usize) -> Result<Vec<WindowSegment>, ScoringError> {
    if tokens < 2 || window < 2 || stride < 1 || stride > window {
        return Err(ScoringError::BadGeometry { tokens, window, stride });
    }
    let mut plan = vec![WindowSegment {
        context_start: 0,
        target_start: 1,
        target_end: window.min(tokens),
    }];
    let mut k = 1;
    while plan[plan.len() - 1].target_end < tokens {
        let prev = plan[plan.len() - 1].target_end;
        let context_start = k * stride;
        plan.push(WindowSegment {
            context_start,
            target_start: prev,
            target_end: (context_start + window).min(tokens),
        });
        k += 1;
    }
    Ok(plan)
}

/// Per-target negative log-likelihoods in nats; `nlls[i]` belongs to token
/// `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NllTrace {
    pub token_count: usize,
    pub nlls: Vec<f64>,
}

impl NllTrace {
    pub fn new(token_count: usize, nlls: Vec<f64>) -> Result<Self, ScoringError> {
        if token_count < 2 {
            return Err(ScoringError::TokenizationEmpty);
        }
        if nlls.len() != token_count - 1 {
            return Err(ScoringError::ProtocolViolation(format!(
                "expected {} nlls for {token_count} tokens, got {}",
                token_count - 1,
                nlls.len()
            )));
        }
        if let Some(bad) = nlls.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(ScoringError::ProtocolViolation(format!("nll {bad} is negative or not finite")));
        }
        Ok(NllTrace { token_count, nlls })
    }
}

/// `exp(mean(nlls))`.
pub fn perplexity(trace: &NllTrace) -> Result<f64, ScoringError> {
    if trace.nlls.is_empty() {
        return Err(ScoringError::EmptyTrace);
    }
    let mean = trace.nlls.iter().sum::<f64>() / trace.nlls.len() as f64;
    Ok(mean.exp())
}

pub trait Scorer: Send {
    fn meta(&self) -> &ScorerMeta;
    fn score(&mut self, text: &str) -> Result<NllTrace, ScoringError>;
    /// Number of scoring requests issued so far.
    fn requests(&self) -> u64;
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn meta(&self) -> &ScorerMeta {
        (**self).meta()
    }

    fn score(&mut self, text: &str) -> Result<NllTrace, ScoringError> {
        (**self).score(text)
    }

    fn requests(&self) -> u64 {
        (**self).requests()
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum Reply {
    Meta {
        model_id: String,
        context_window: usize,
        stride: usize,
    },
    Nll {
        id: u64,
        token_count: usize,
        nlls: Vec<f64>,
    },
    Error {
        #[serde(default)]
        id: Option<u64>,
        message: String,
    },
}

/// Client side of the protocol over any line-oriented byte streams.
pub struct ProtocolClient<R, W> {
    reader: R,
    writer: W,
    meta: ScorerMeta,
    next_id: u64,
}

impl<R: BufRead, W: Write> ProtocolClient<R, W> {
    /// Sends `hello` and waits for `meta`.
    pub fn connect(mut reader: R, mut writer: W) -> Result<Self, ScoringError> {
        send(&mut writer, &json!({"op": "hello", "protocol": PROTOCOL_VERSION}))?;
        let meta = match read_reply(&mut reader)? {
            Reply::Meta {
                model_id,
                context_window,
                stride,
            } => ScorerMeta::new(model_id, context_window, stride)
                .map_err(|e| ScoringError::ProtocolViolation(format!("bad meta: {e}")))?,
            Reply::Error { message, .. } => return Err(ScoringError::ScorerReported(message)),
            other => {
                return Err(ScoringError::ProtocolViolation(format!(
                    "expected meta, got {other:?}"
                )))
            }
        };
        Ok(ProtocolClient {
            reader,
            writer,
            meta,
            next_id: 0,
        })
    }
}

impl<R: BufRead + Send, W: Write + Send> Scorer for ProtocolClient<R, W> {
    fn meta(&self) -> &ScorerMeta {
        &self.meta
    }

    fn score(&mut self, text: &str) -> Result<NllTrace, ScoringError> {
        let id = self.next_id;
        self.next_id += 1;
        send(&mut self.writer, &json!({"op": "score", "id": id, "text": text}))?;
        match read_reply(&mut self.reader)? {
            Reply::Nll {
                id: got,
                token_count,
                nlls,
            } => {
                if got != id {
                    return Err(ScoringError::ProtocolViolation(format!("response id {got} for request {id}")));
                }
                NllTrace::new(token_count, nlls)
            }
            Reply::Error { id: got, message } => {
                if got.is_some_and(|g| g != id) {
                    return Err(ScoringError::ProtocolViolation(format!("error id {got:?} for request {id}")));
                }
                if message.contains("token_count < 2") {
                    Err(ScoringError::TokenizationEmpty)
                } else {
                    Err(ScoringError::ScorerReported(message))
                }
            }
            Reply::Meta { .. } => Err(ScoringError::ProtocolViolation("unexpected meta message".into())),
        }
    }

    fn requests(&self) -> u64 {
        self.next_id
    }
}

fn send<W: Write>(writer: &mut W, value: &serde_json::Value) -> Result<(), ScoringError> {
    let io = |e: io::Error| ScoringError::ScorerUnavailable(e.to_string());
    serde_json::to_writer(&mut *writer, value).map_err(|e| ScoringError::ScorerUnavailable(e.to_string()))?;
    writer.write_all(b"\n").map_err(io)?;
    writer.flush().map_err(io)
}

fn read_reply<R: BufRead>(reader: &mut R) -> Result<Reply, ScoringError> {
    let mut line = String::new();
    let n = reader
        .read_line(&mut line)
        .map_err(|e| ScoringError::ScorerUnavailable(e.to_string()))?;
    if n == 0 {
        return Err(ScoringError::ScorerUnavailable("scorer closed its output".into()));
    }
    serde_json::from_str(line.trim_end()).map_err(|e| ScoringError::ProtocolViolation(format!("{e}: {}", line.trim_end())))
}

/// A scorer child process started through `sh -c`.
pub struct ProcessScorer {
    client: ProtocolClient<BufReader<ChildStdout>, BufWriter<ChildStdin>>,
    child: Child,
}

impl ProcessScorer {
    pub fn spawn(command: &str) -> Result<Self, ScoringError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ScoringError::ScorerUnavailable(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        match ProtocolClient::connect(BufReader::new(stdout), BufWriter::new(stdin)) {
            Ok(client) => Ok(ProcessScorer { client, child }),
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                Err(e)
            }
        }
    }
}

impl Scorer for ProcessScorer {
    fn meta(&self) -> &ScorerMeta {
        self.client.meta()
    }

    fn score(&mut self, text: &str) -> Result<NllTrace, ScoringError> {
        self.client.score(text)
    }

    fn requests(&self) -> u64 {
        self.client.requests()
    }
}

impl Drop for ProcessScorer {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Behaviour of the built-in deterministic scorer. Tokens are whitespace
/// separated words.
#[derive(Debug, Clone, PartialEq)]
pub enum MockMode {
    /// Every target gets the same nll.
    ConstantNll(f64),
    /// Target `i` gets `ln(1 + i)`.
    Position,
    /// `ln 2` when a token does not sort before its predecessor, `ln 8`
    /// otherwise, so alphabetical text is "fluent".
    OrderSensitive,
    /// A hashed bigram model: nll depends on the previous token inside the
    /// current window and on the target token.
    Hash,
}

impl fmt::Display for MockMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MockMode::ConstantNll(v) => write!(f, "constant-nll={v}"),
            MockMode::Position => f.write_str("position"),
            MockMode::OrderSensitive => f.write_str("order"),
            MockMode::Hash => f.write_str("hash"),
        }
    }
}

/// Built-in scorer used for tests and offline demos.
#[derive(Debug, Clone)]
pub struct MockScorer {
    mode: MockMode,
    meta: ScorerMeta,
    requests: u64,
}

impl MockScorer {
    pub fn new(mode: MockMode) -> Self {
        Self::with_geometry(mode, DEFAULT_CONTEXT_WINDOW, DEFAULT_STRIDE).expect("default geometry is valid")
    }

    pub fn with_geometry(mode: MockMode, window: usize, stride: usize) -> Result<Self, ScoringError> {
        let meta = ScorerMeta::new(format!("mock:{mode}"), window, stride)?;
        Ok(MockScorer { mode, meta, requests: 0 })
    }

    pub fn mode(&self) -> &MockMode {
        &self.mode
    }

    /// Scores without counting a request.
    pub fn trace(&self, text: &str) -> Result<NllTrace, ScoringError> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let t = tokens.len();
        if t < 2 {
            return Err(ScoringError::TokenizationEmpty);
        }
        let plan = window_plan(t, self.meta.context_window, self.meta.stride)?;
        let mut nlls = Vec::with_capacity(t - 1);
        for seg in plan {
            for i in seg.target_start..seg.target_end {
                let prev = (i > seg.context_start).then(|| tokens[i - 1]);
                nlls.push(self.nll_at(i, tokens[i], prev));
            }
        }
        NllTrace::new(t, nlls)
    }

    fn nll_at(&self, i: usize, token: &str, prev: Option<&str>) -> f64 {
        match self.mode {
            MockMode::ConstantNll(v) => v,
            MockMode::Position => (1.0 + i as f64).ln(),
            MockMode::OrderSensitive => match prev {
                Some(p) if token < p => 8f64.ln(),
                _ => 2f64.ln(),
            },
            MockMode::Hash => {
                let mut h = Sha256::new();
                h.update(prev.unwrap_or("").as_bytes());
                h.update([0]);
                h.update(token.as_bytes());
                let d = h.finalize();
                let u = u16::from_le_bytes([d[0], d[1]]) as f64 / 65535.0;
                0.2 + 4.0 * u
            }
        }
    }
}

impl FromStr for MockMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "position" => Ok(MockMode::Position),
            "order" | "order-sensitive" => Ok(MockMode::OrderSensitive),
            "hash" => Ok(MockMode::Hash),
            _ => {
                let v = s
                    .strip_prefix("constant-nll=")
                    .ok_or_else(|| format!("unknown mock scorer mode `{s}`"))?;
                let v: f64 = v.parse().map_err(|_| format!("bad constant nll `{v}`"))?;
                if v.is_finite() && v >= 0.0 {
                    Ok(MockMode::ConstantNll(v))
                } else {
                    Err(format!("constant nll must be finite and >= 0, got {v}"))
                }
            }
        }
    }
}

impl FromStr for MockScorer {
    type Err = String;

    /// `mock:<mode>[,window=W][,stride=S]`, with or without the `mock:`
    /// prefix.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let body = s.strip_prefix("mock:").unwrap_or(s);
        let mut parts = body.split(',');
        let mode: MockMode = parts.next().unwrap_or("").parse()?;
        let (mut window, mut stride) = (DEFAULT_CONTEXT_WINDOW, DEFAULT_STRIDE);
        for part in parts {
            let (key, value) = part.split_once('=').ok_or_else(|| format!("bad mock option `{part}`"))?;
            let value: usize = value.parse().map_err(|_| format!("bad mock option `{part}`"))?;
            match key {
                "window" => window = value,
                "stride" => stride = value,
                _ => return Err(format!("unknown mock option `{key}`")),
            }
        }
        MockScorer::with_geometry(mode, window, stride).map_err(|e| e.to_string())
    }
}

impl Scorer for MockScorer {
    fn meta(&self) -> &ScorerMeta {
        &self.meta
    }

    fn score(&mut self, text: &str) -> Result<NllTrace, ScoringError> {
        self.requests += 1;
        self.trace(text)
    }

    fn requests(&self) -> u64 {
        self.requests
    }
}

/// Runs the server side of the protocol until `input` reaches EOF.
/// Malformed lines are answered with an error object and skipped.
pub fn serve<R: BufRead, W: Write>(backend: &MockScorer, input: R, mut output: W) -> io::Result<()> {
    let meta = backend.meta.clone();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<serde_json::Value>(&line) {
            Err(e) => json!({"op": "error", "message": format!("malformed request: {e}")}),
            Ok(req) => match req.get("op").and_then(|v| v.as_str()) {
                Some("hello") => json!({
                    "op": "meta",
                    "model_id": meta.model_id,
                    "context_window": meta.context_window,
                    "stride": meta.stride,
                }),
                Some("score") => {
                    let id = req.get("id").and_then(|v| v.as_u64());
                    match (id, req.get("text").and_then(|v| v.as_str())) {
                        (Some(id), Some(text)) => match backend.trace(text) {
                            Ok(t) => json!({"op": "nll", "id": id, "token_count": t.token_count, "nlls": t.nlls}),
                            Err(ScoringError::TokenizationEmpty) => {
                                json!({"op": "error", "id": id, "message": "token_count < 2"})
                            }
                            Err(e) => json!({"op": "error", "id": id, "message": e.to_string()}),
                        },
                        _ => json!({"op": "error", "id": id, "message": "score needs a numeric id and a text"}),
                    }
                }
                _ => json!({"op": "error", "message": format!("unknown op in {line}")}),
            },
        };
        serde_json::to_writer(&mut output, &reply)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    key: String,
    token_count: usize,
    nlls: Vec<f64>,
}

/// Trace cache keyed by `(model_id, W, S, sha256(text))`, optionally backed
/// by an append-only JSONL file. Lookups take a shared lock; inserts take
/// the write lock and append under a separate file mutex.
#[derive(Debug, Default)]
pub struct ScoreCache {
    map: RwLock<HashMap<String, NllTrace>>,
    file: Mutex<Option<(PathBuf, File)>>,
}

impl ScoreCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a cache file and loads its records. A
    /// truncated final line, left by an interrupted append, is ignored.
    pub fn open(path: &Path) -> Result<Self, ScoringError> {
        let err = |message: String| ScoringError::Cache {
            path: path.to_owned(),
            message,
        };
        let mut map = HashMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
            let lines: Vec<&str> = text.lines().collect();
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheRecord>(line) {
                    Ok(r) => {
                        let trace = NllTrace::new(r.token_count, r.nlls).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
                        map.insert(r.key, trace);
                    }
                    Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {}
                    Err(e) => return Err(err(format!("line {}: {e}", i + 1))),
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| err(e.to_string()))?;
        Ok(ScoreCache {
            map: RwLock::new(map),
            file: Mutex::new(Some((path.to_owned(), file))),
        })
    }

    pub fn key(meta: &ScorerMeta, text: &str) -> String {
        let text_digest = Sha256::digest(text.as_bytes());
        let mut h = Sha256::new();
        h.update(meta.model_id.as_bytes());
        h.update([0]);
        h.update(meta.context_window.to_le_bytes());
        h.update(meta.stride.to_le_bytes());
        h.update(text_digest);
        hex::encode(h.finalize())
    }

    pub fn get(&self, key: &str) -> Option<NllTrace> {
        self.map.read().expect("cache lock").get(key).cloned()
    }

    pub fn insert(&self, key: String, trace: NllTrace) -> Result<(), ScoringError> {
        {
            let mut guard = self.file.lock().expect("cache file lock");
            if let Some((path, file)) = guard.as_mut() {
                let record = CacheRecord {
                    key: key.clone(),
                    token_count: trace.token_count,
                    nlls: trace.nlls.clone(),
                };
                let mut line = serde_json::to_string(&record).expect("serializable record");
                line.push('\n');
                file.write_all(line.as_bytes()).map_err(|e| ScoringError::Cache {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
            }
        }
        self.map.write().expect("cache lock").insert(key, trace);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Perplexity of `text`, consulting `cache` first.
pub fn score_document(text: &str, scorer: &mut dyn Scorer, cache: Option<&ScoreCache>) -> Result<f64, ScoringError> {
    if text.trim().is_empty() {
        return Err(ScoringError::EmptyText);
    }
    let key = cache.map(|_| ScoreCache::key(scorer.meta(), text));
    if let (Some(c), Some(k)) = (cache, &key) {
        if let Some(trace) = c.get(k) {
            return perplexity(&trace);
        }
    }
    let trace = scorer.score(text)?;
    let ppl = perplexity(&trace)?;
    if let (Some(c), Some(k)) = (cache, key) {
        c.insert(k, trace)?;
    }
    Ok(ppl)
}

/// `(ppl(text), ppl(shuffle(text, seed)))`.
pub fn score_pair(
    text: &str,
    seed: ShuffleSeed,
    scorer: &mut dyn Scorer,
    cache: Option<&ScoreCache>,
) -> Result<PerplexityPair, ScoringError> {
    let shuffled = shuffle_text(text, seed).map_err(|_| ScoringError::EmptyText)?;
    let ppl = score_document(text, scorer, cache)?;
    let ppl_shuf = score_document(&shuffled, scorer, cache)?;
    PerplexityPair::new(ppl, ppl_shuf).map_err(|e| ScoringError::ProtocolViolation(e.to_string()))
}

/// Scores `texts` over several scorer connections, one worker thread per
/// connection. Results come back in input order.
pub fn score_pairs_pooled<S: Scorer>(
    texts: &[(String, ShuffleSeed)],
    scorers: &mut [S],
    cache: Option<&ScoreCache>,
) -> Vec<Result<PerplexityPair, ScoringError>> {
    assert!(!scorers.is_empty(), "at least one scorer connection is required");
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<PerplexityPair, ScoringError>>> = (0..texts.len()).map(|_| None).collect();
    let results = Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for scorer in scorers.iter_mut() {
            let (next, results) = (&next, &results);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= texts.len() {
                    break;
                }
                let (text, seed) = &texts[i];
                let r = score_pair(text, *seed, scorer, cache);
                results.lock().expect("result lock")[i] = Some(r);
            });
        }
    });
    slots.into_iter().map(|r| r.expect("every index scored")).collect()
}
