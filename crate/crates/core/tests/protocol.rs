use std::io::{BufRead, BufReader, Write};
use std::os::unix::net::UnixStream;
use std::thread;

use shufppl::scoring::{
    perplexity, score_document, score_pairs_pooled, serve, MockMode, MockScorer, ProcessScorer, ProtocolClient,
    ScoreCache, Scorer, ScoringError,
};
use shufppl::shuffle::ShuffleSeed;

type Client = ProtocolClient<BufReader<UnixStream>, UnixStream>;

fn connect(mock: MockScorer) -> (Client, thread::JoinHandle<()>) {
    let (ours, theirs) = UnixStream::pair().unwrap();
    let server = thread::spawn(move || {
        let reader = BufReader::new(theirs.try_clone().unwrap());
        serve(&mock, reader, theirs).unwrap();
    });
    let client = ProtocolClient::connect(BufReader::new(ours.try_clone().unwrap()), ours).unwrap();
    (client, server)
}

#[test]
fn client_matches_in_process_mock() {
    let mock = MockScorer::with_geometry(MockMode::Hash, 8, 4).unwrap();
    let (mut client, server) = connect(mock.clone());
    assert_eq!(client.meta(), mock.meta());
    for text in ["one two three four five six seven eight nine ten eleven", "a b", "Short. Text here."] {
        let remote = client.score(text).unwrap();
        let local = mock.trace(text).unwrap();
        assert_eq!(remote, local);
        assert_eq!(remote.nlls.len(), remote.token_count - 1);
    }
    assert_eq!(client.requests(), 3);
    drop(client);
    server.join().unwrap();
}

#[test]
fn single_token_maps_to_tokenization_empty() {
    let (mut client, _server) = connect(MockScorer::new(MockMode::Position));
    assert!(matches!(client.score("lonely"), Err(ScoringError::TokenizationEmpty)));
    // the connection survives a per-document error
    assert!(client.score("two words").is_ok());
}

#[test]
fn constant_mock_over_the_wire_gives_exact_perplexity() {
    let (mut client, _server) = connect(MockScorer::new(MockMode::ConstantNll(3f64.ln())));
    let ppl = score_document("w ".repeat(5000).trim(), &mut client, None).unwrap();
    assert!((ppl - 3.0).abs() < 1e-12, "{ppl}");
}

/// Speaks just enough protocol to misbehave after the handshake.
fn rogue(reply: &'static str) -> Client {
    let (ours, theirs) = UnixStream::pair().unwrap();
    thread::spawn(move || {
        let mut reader = BufReader::new(theirs.try_clone().unwrap());
        let mut out = theirs;
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        writeln!(out, r#"{{"op":"meta","model_id":"rogue","context_window":16,"stride":8}}"#).unwrap();
        line.clear();
        reader.read_line(&mut line).unwrap();
        if !reply.is_empty() {
            writeln!(out, "{reply}").unwrap();
        }
    });
    ProtocolClient::connect(BufReader::new(ours.try_clone().unwrap()), ours).unwrap()
}

#[test]
fn protocol_violations_are_detected() {
    let cases = [
        r#"{"op":"nll","id":7,"token_count":3,"nlls":[0.1,0.2]}"#,
        r#"{"op":"nll","id":0,"token_count":3,"nlls":[0.1]}"#,
        r#"{"op":"nll","id":0,"token_count":3,"nlls":[0.1,-0.5]}"#,
        r#"{"op":"meta","model_id":"x","context_window":16,"stride":8}"#,
        "not json",
    ];
    for reply in cases {
        let err = rogue(reply).score("a b c").unwrap_err();
        assert!(
            matches!(err, ScoringError::ProtocolViolation(_) | ScoringError::EmptyTrace),
            "{reply}: {err:?}"
        );
    }
}

#[test]
fn closed_scorer_is_unavailable() {
    let err = rogue("").score("a b c").unwrap_err();
    assert!(matches!(err, ScoringError::ScorerUnavailable(_)), "{err:?}");
}

#[test]
fn scorer_error_messages_surface() {
    let err = rogue(r#"{"op":"error","id":0,"message":"out of memory"}"#).score("a b").unwrap_err();
    assert!(matches!(err, ScoringError::ScorerReported(ref m) if m == "out of memory"), "{err:?}");
}

#[test]
fn missing_scorer_command_is_unavailable() {
    let err = ProcessScorer::spawn("exit 0").err().expect("no handshake");
    assert!(matches!(err, ScoringError::ScorerUnavailable(_)), "{err:?}");
}

#[test]
fn file_cache_survives_reopen_and_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let text = "alpha beta gamma delta epsilon";
    let mut mock = MockScorer::new(MockMode::Hash);
    {
        let cache = ScoreCache::open(&path).unwrap();
        score_document(text, &mut mock, Some(&cache)).unwrap();
        score_document(text, &mut mock, Some(&cache)).unwrap();
        assert_eq!(mock.requests(), 1);
        assert_eq!(cache.len(), 1);
    }
    // a crash mid-append leaves a partial last line
    std::fs::OpenOptions::new()
        .append(true)
        .open(&path)
        .unwrap()
        .write_all(br#"{"key":"abc","token_co"#)
        .unwrap();
    let cache = ScoreCache::open(&path).unwrap();
    assert_eq!(cache.len(), 1);
    let mut fresh = MockScorer::new(MockMode::Hash);
    let cached = score_document(text, &mut fresh, Some(&cache)).unwrap();
    assert_eq!(fresh.requests(), 0);
    assert_eq!(cached, perplexity(&mock.trace(text).unwrap()).unwrap());
}

#[test]
fn cache_keys_separate_geometries() {
    let narrow = MockScorer::with_geometry(MockMode::Hash, 4, 2).unwrap();
    let wide = MockScorer::with_geometry(MockMode::Hash, 64, 32).unwrap();
    assert_ne!(ScoreCache::key(narrow.meta(), "x y"), ScoreCache::key(wide.meta(), "x y"));
    assert_eq!(ScoreCache::key(narrow.meta(), "x y"), ScoreCache::key(narrow.meta(), "x y"));
}

#[test]
fn pooled_scoring_keeps_order_across_connections() {
    let texts: Vec<(String, ShuffleSeed)> = (0..40)
        .map(|i| {
            let body = (0..(5 + i % 7)).map(|w| format!("w{}x{}", i, w)).collect::<Vec<_>>().join(" ");
            (format!("{body}. Second sentence {i} here. Third {i}."), ShuffleSeed(i as u64))
        })
        .collect();
    let mut one = vec![MockScorer::new(MockMode::Hash)];
    let mut three: Vec<MockScorer> = (0..3).map(|_| MockScorer::new(MockMode::Hash)).collect();
    let a = score_pairs_pooled(&texts, &mut one, None);
    let b = score_pairs_pooled(&texts, &mut three, None);
    assert_eq!(a.len(), 40);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.as_ref().unwrap(), y.as_ref().unwrap());
    }
    let total: u64 = three.iter().map(|s| s.requests()).sum();
    assert_eq!(total, 80);
}
