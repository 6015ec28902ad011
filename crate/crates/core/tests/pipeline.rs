use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Normal};

use shufppl::evaluation::{grid_search, PairModel, ScoredRecord};
use shufppl::features::{FeatureType, PerplexityPair};
use shufppl::inference::{classify, classify_batch, detect_text, DetectorConfig, Label};
use shufppl::par::Exec;
use shufppl::repository::{fit_repository, FitRepoOptions, RepoError, Repository};
use shufppl::scoring::{MockMode, MockScorer, ScoreCache, Scorer};
use shufppl::shuffle::ShuffleSeed;
use shufppl::stats::{Dist, Family};
use shufppl::Class;

/// Pairs whose `ppl_shuf / ppl` follows a Gamma(shape, scale) law.
fn gamma_ratio_pairs(shape: f64, scale: f64, n: usize, seed: u64) -> Vec<PerplexityPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ppl = LogNormal::new(4.0, 0.2).unwrap();
    let ratio = Gamma::new(shape, scale).unwrap();
    (0..n)
        .map(|_| {
            let p = ppl.sample(&mut rng);
            PerplexityPair::new(p, p * ratio.sample(&mut rng)).unwrap()
        })
        .collect()
}

fn small_options(families: Vec<Family>) -> FitRepoOptions {
    FitRepoOptions {
        families,
        replicates: 99,
        outlier_removal: false,
        seed: 11,
        ..Default::default()
    }
}

#[test]
fn true_family_wins_for_ratio() {
    let hgt = gamma_ratio_pairs(3.0, 0.45, 1000, 1);
    let mgt = gamma_ratio_pairs(5.0, 0.9, 1000, 2);
    let repo = fit_repository(&hgt, &mgt, &small_options(vec![Family::Gamma, Family::Normal])).unwrap();
    assert!(repo.feature_set.contains(&FeatureType::Ratio));
    for class in Class::ALL {
        let entry = repo.entry(FeatureType::Ratio, class).unwrap();
        assert_eq!(entry.dist.dist.family(), Family::Gamma, "{class}");
        assert!(entry.boot_p > repo.significance);
    }
    assert_eq!(repo.entries.len(), 2 * repo.feature_set.len());
    assert!(repo.tau.values().all(|&t| t > 0.0));
}

#[test]
fn bimodal_diff_is_excluded() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (lo, hi) = (Normal::new(2.0, 0.3).unwrap(), Normal::new(9.0, 0.3).unwrap());
    let mut make = |n: usize| -> Vec<PerplexityPair> {
        (0..n)
            .map(|i| {
                let p = 20.0;
                let d = if i % 2 == 0 { lo.sample(&mut rng) } else { hi.sample(&mut rng) };
                PerplexityPair::new(p, p + d).unwrap()
            })
            .collect()
    };
    let (hgt, mgt) = (make(400), make(400));
    match fit_repository(&hgt, &mgt, &small_options(vec![Family::Exponential])) {
        Ok(repo) => assert!(!repo.feature_set.contains(&FeatureType::Diff)),
        Err(e) => assert!(matches!(e, RepoError::EmptyFeatureSet), "{e}"),
    }
}

#[test]
fn fitting_is_deterministic_and_schedule_independent() {
    let hgt = PairModel::abstracts(Class::Hgt).sample(300, 1);
    let mgt = PairModel::abstracts(Class::Mgt).sample(300, 2);
    let families = vec![Family::Normal, Family::LogNormal, Family::Gamma, Family::Weibull];
    let par = fit_repository(&hgt, &mgt, &FitRepoOptions { exec: Exec::Parallel, ..small_options(families.clone()) }).unwrap();
    let seq = fit_repository(&hgt, &mgt, &FitRepoOptions { exec: Exec::Sequential, ..small_options(families.clone()) }).unwrap();
    let again = fit_repository(&hgt, &mgt, &small_options(families)).unwrap();
    assert_eq!(par.to_json(), seq.to_json());
    assert_eq!(par, again);
}

#[test]
fn too_few_pairs_is_reported() {
    let pairs = PairModel::abstracts(Class::Hgt).sample(20, 1);
    let err = fit_repository(&pairs, &pairs, &FitRepoOptions::default()).unwrap_err();
    assert!(matches!(err, RepoError::InsufficientData { needed: 50, got: 20, .. }), "{err}");
}

#[test]
fn handmade_repository_round_trips_through_text() {
    let hgt = gamma_ratio_pairs(3.0, 0.45, 200, 3);
    let mgt = gamma_ratio_pairs(5.0, 0.9, 200, 4);
    let repo = fit_repository(&hgt, &mgt, &small_options(vec![Family::Gamma])).unwrap();
    let text = repo.to_json();
    assert_eq!(Repository::from_json(&text).unwrap(), repo);
    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value.as_object_mut().unwrap().remove("tau");
    assert!(matches!(
        Repository::from_json(&value.to_string()),
        Err(RepoError::SchemaMismatch(_))
    ));
    assert!(matches!(Repository::from_json("{\"schema_version\": 1,"), Err(RepoError::CorruptFile(_))));
}

fn abstracts_repo() -> Repository {
    let hgt = PairModel::abstracts(Class::Hgt).sample(300, 21);
    let mgt = PairModel::abstracts(Class::Mgt).sample(300, 22);
    fit_repository(&hgt, &mgt, &small_options(vec![Family::Normal, Family::LogNormal, Family::Gamma])).unwrap()
}

#[test]
fn batch_classification_matches_single_calls() {
    let repo = abstracts_repo();
    let cfg = DetectorConfig::default();
    let pairs = PairModel::abstracts(Class::Mgt).sample(200, 9);
    let batch = classify_batch(&pairs, &repo, &cfg, Exec::Parallel);
    for (p, d) in pairs.iter().zip(batch) {
        assert_eq!(d.unwrap(), classify(*p, &repo, &cfg).unwrap());
    }
}

#[test]
fn detect_text_with_mock_scorer() {
    let repo = abstracts_repo();
    let cfg = DetectorConfig::default();
    let cache = ScoreCache::in_memory();
    let text = "The committee met on Tuesday. It approved the budget after a long debate.\n\n\
                Several members objected. The vote was close. A revised plan is due next month.";
    let mut scorer = MockScorer::new(MockMode::Hash);
    let first = detect_text(text, &repo, &mut scorer, Some(&cache), &cfg, ShuffleSeed(3)).unwrap();
    let second = detect_text(text, &repo, &mut scorer, Some(&cache), &cfg, ShuffleSeed(3)).unwrap();
    assert_eq!(first, second);
    assert_eq!(scorer.requests(), 2, "second call is served from the cache");
    assert!(matches!(first.label, Label::Mgt | Label::Hgt | Label::Reject));
    assert_eq!(first.votes.mgt + first.votes.hgt + first.rejected_features().len(), repo.feature_set.len());

    let err = detect_text("single", &repo, &mut scorer, None, &cfg, ShuffleSeed(0)).unwrap_err();
    assert!(err.to_string().contains("token"), "{err}");
}

#[test]
fn grid_search_is_reproducible() {
    let hgt = PairModel::abstracts(Class::Hgt).sample(300, 31);
    let mgt = PairModel::abstracts(Class::Mgt).sample(300, 32);
    let families = vec![Family::Normal, Family::LogNormal, Family::Gamma];
    let with = fit_repository(&hgt, &mgt, &FitRepoOptions { outlier_removal: true, ..small_options(families.clone()) }).unwrap();
    let without = fit_repository(&hgt, &mgt, &small_options(families)).unwrap();
    let mut records = Vec::new();
    for (class, seed) in [(Class::Hgt, 41), (Class::Mgt, 42)] {
        for (i, pair) in PairModel::abstracts(class).sample(150, seed).into_iter().enumerate() {
            records.push(ScoredRecord {
                id: format!("{class}-{i}"),
                label: class,
                group: Some(if i % 2 == 0 { "even" } else { "odd" }.to_string()),
                pair,
            });
        }
    }
    let a = grid_search(&records, &with, &without, Exec::Parallel).unwrap();
    let b = grid_search(&records, &with, &without, Exec::Sequential).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.configs.len(), 16);
    assert_eq!(a.groups.len(), 2);
    assert!(a.configs.contains(&a.low_fpr.winner));
}

#[test]
fn fitted_dist_accessors_are_consistent() {
    let repo = abstracts_repo();
    for e in &repo.entries {
        assert!(
            matches!(e.dist.dist, Dist::LogNormal { .. } | Dist::Normal { .. } | Dist::Gamma { .. }),
            "unexpected family {}",
            e.dist.dist.family()
        );
        assert!(e.n_fit >= 250);
    }
}
