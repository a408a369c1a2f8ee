//! Pipeline invariants as property checks with a deterministic runner.
//! Shared by the integration tests and the acceptance run.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;
use std::sync::Arc;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use repurpose_core::dataset::{self, BalanceConfig, BalanceRule, DedupKey, LabeledExample, SplitMode, SplitSpec, WEIGHT_MAX, WEIGHT_MIN};
use repurpose_core::models::{CnnConfig, LstmConfig, Model, ModelConfig};
use repurpose_core::report::{postprocess, SequenceId};
use repurpose_core::synth::{generate, SynthSpec};
use repurpose_core::train::{train, Confusion, TrainConfig};
use repurpose_core::{corpus, labels};

fn check<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn example(acc: String, species: String, residues: String, labels: Vec<u8>) -> LabeledExample {
    LabeledExample {
        accession: acc,
        residues,
        species,
        genbank_title: String::new(),
        labels: Arc::from(labels),
    }
}

/// Small corpora with frequent (species, length) collisions.
fn arb_examples() -> impl Strategy<Value = Vec<LabeledExample>> {
    prop::collection::vec((0usize..5, 1usize..10, 0usize..3, any::<bool>()), 0..120).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (s, len, variant, l))| {
                let residues: String = (0..len).map(|j| if j == 0 { ['A', 'C', 'D'][variant] } else { 'K' }).collect();
                example(format!("x{i}"), format!("sp{s}"), residues, vec![l as u8, (s & 1) as u8])
            })
            .collect()
    })
}

pub fn dedup_idempotent_with_unique_keys() -> Result<(), String> {
    check(256, (arb_examples(), any::<bool>()), |(v, exact)| {
        let key = if exact { DedupKey::ExactContent } else { DedupKey::SpeciesLength };
        let (once, report) = dataset::deduplicate(v.clone(), key);
        prop_assert_eq!(report.total_before(), v.len());
        prop_assert_eq!(report.total_after(), once.len());
        let unique = match key {
            DedupKey::SpeciesLength => once.iter().map(|e| (e.species.clone(), e.residues.len().to_string())).collect::<HashSet<_>>().len(),
            DedupKey::ExactContent => once.iter().map(|e| (e.species.clone(), e.residues.clone())).collect::<HashSet<_>>().len(),
        };
        prop_assert_eq!(unique, once.len());
        let (twice, _) = dataset::deduplicate(once.clone(), key);
        prop_assert_eq!(twice, once);
        Ok(())
    })
}

pub fn exclusion_idempotent() -> Result<(), String> {
    check(256, (arb_examples(), 0.001f64..0.4), |(v, frac)| {
        let (once, _) = dataset::exclude_rare(v, frac);
        let (twice, excluded) = dataset::exclude_rare(once.clone(), frac);
        prop_assert!(excluded.is_empty());
        prop_assert_eq!(twice, once);
        Ok(())
    })
}

fn block(species: &str, count: usize) -> Vec<LabeledExample> {
    let labels: Arc<[u8]> = Arc::from(vec![1u8, 0]);
    (0..count)
        .map(|i| LabeledExample {
            accession: format!("{species}/{i}"),
            residues: "M".repeat(i % 50 + 1),
            species: species.to_string(),
            genbank_title: String::new(),
            labels: Arc::clone(&labels),
        })
        .collect()
}

pub fn balanced_counts_in_range() -> Result<(), String> {
    check(64, (prop::collection::vec(1usize..2500, 1..8), any::<bool>(), any::<u64>()), |(counts, nearest, seed)| {
        let mut v = Vec::new();
        for (i, c) in counts.iter().enumerate() {
            v.extend(block(&format!("sp{i}"), *c));
        }
        let cfg = BalanceConfig {
            rule: if nearest { BalanceRule::NearestSixHundred } else { BalanceRule::Ceiling },
            seed,
            ..Default::default()
        };
        let (out, report) = dataset::balance(v, &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
        for (_, n) in dataset::species_counts(&out) {
            prop_assert!((400..=936).contains(&n), "count {}", n);
        }
        prop_assert_eq!(out.len(), report.total());
        Ok(())
    })
}

fn read_counts(path: &Path) -> Vec<(String, usize)> {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    text.lines()
        .skip(1)
        .map(|l| {
            let (s, c) = l.rsplit_once('\t').expect("two columns");
            (s.to_string(), c.parse().expect("count"))
        })
        .collect()
}

/// The published deduplicated pool: 65 species, 14,370 sequences, rarity
/// threshold 71.85, and exactly the 47 published species survive. Both
/// balance rules keep every survivor in [400, 936].
pub fn published_pool(fixtures: &Path) -> Result<(), String> {
    let dedup = read_counts(&fixtures.join("dedup_counts.tsv"));
    let published: BTreeSet<String> = read_counts(&fixtures.join("balanced_counts.tsv")).into_iter().map(|r| r.0).collect();
    let total: usize = dedup.iter().map(|r| r.1).sum();
    if dedup.len() != 65 || total != 14_370 || published.len() != 47 {
        return Err(format!("fixture sizes {} species / {total} sequences / {} kept", dedup.len(), published.len()));
    }
    let mut pool = Vec::new();
    for (s, c) in &dedup {
        pool.extend(block(s, *c));
    }
    let threshold = 0.005 * pool.len() as f64;
    if (threshold - 71.85).abs() > 1e-9 {
        return Err(format!("threshold {threshold}"));
    }
    let (kept, _) = dataset::exclude_rare(pool, 0.005);
    let kept_species: BTreeSet<String> = dataset::species_counts(&kept).into_keys().collect();
    if kept_species != published {
        let diff: Vec<_> = kept_species.symmetric_difference(&published).collect();
        return Err(format!("kept species differ from the published list: {diff:?}"));
    }
    for rule in [BalanceRule::Ceiling, BalanceRule::NearestSixHundred] {
        let cfg = BalanceConfig { rule, ..Default::default() };
        let (_, report) = dataset::balance(kept.clone(), &cfg).map_err(|e| e.to_string())?;
        if let Some(s) = report.species.iter().find(|s| !(400..=936).contains(&s.after)) {
            return Err(format!("{rule:?}: {} {} -> {}", s.species, s.before, s.after));
        }
    }
    Ok(())
}

pub fn synthetic_examples(per_species: usize, seed: u64) -> Vec<LabeledExample> {
    let c = generate(&SynthSpec {
        per_species,
        min_len: 60,
        max_len: 90,
        ..SynthSpec::standard(seed)
    })
    .expect("synthetic corpus");
    let viruses = corpus::virus_list(&c.drug_table);
    let aliases = corpus::SpeciesAliasTable::defaults().restricted_to(&viruses);
    let (merged, _) = corpus::merge(&c.sequences, &c.metadata, &viruses, &aliases);
    let dict = labels::build_label_dictionary(&c.drug_table, labels::LabelVersion::V3, &viruses).expect("labels");
    labels::attach_labels(&merged, &dict).expect("attach").0
}

pub fn split_disjoint_with_pinned_holdout() -> Result<(), String> {
    let ex = synthetic_examples(6, 3);
    check(64, (any::<u64>(), 0usize..5, 0.05f64..0.95), |(seed, n_random, ratio)| {
        let spec = SplitSpec {
            mode: SplitMode::BySpecies,
            n_random_holdouts: n_random,
            seed,
            ..Default::default()
        };
        let (tr, ev, rep) = dataset::split(&ex, &spec).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let tr_s: BTreeSet<_> = tr.iter().map(|e| e.species.as_str()).collect();
        let ev_s: BTreeSet<_> = ev.iter().map(|e| e.species.as_str()).collect();
        prop_assert!(tr_s.is_disjoint(&ev_s));
        prop_assert!(ev_s.contains("SARS-CoV-2"));
        prop_assert_eq!(rep.holdouts.len(), n_random + 1);
        prop_assert_eq!(tr.len() + ev.len(), ex.len());

        let random = SplitSpec {
            mode: SplitMode::Random,
            ratio,
            seed,
            ..Default::default()
        };
        let (tr, ev, _) = dataset::split(&ex, &random).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let a: HashSet<_> = tr.iter().map(|e| &e.accession).collect();
        prop_assert!(ev.iter().all(|e| !a.contains(&e.accession)));
        prop_assert_eq!(tr.len() + ev.len(), ex.len());
        Ok(())
    })
}

/// Per slot, w⁺·P = w⁻·(N−P) = N/2 unless a weight hit its clamp.
pub fn class_weight_mass_balance() -> Result<(), String> {
    let strategy = (1usize..400, prop::collection::vec(0.0f64..1.0, 1..6));
    check(128, strategy, |(n, rates)| {
        let rows: Vec<LabeledExample> = (0..n)
            .map(|i| {
                let labels = rates.iter().map(|&r| ((i as f64) < r * n as f64) as u8).collect();
                example(i.to_string(), "s".into(), "A".into(), labels)
            })
            .collect();
        let w = dataset::compute_class_weights(&rows).map_err(|e| TestCaseError::fail(e.to_string()))?;
        for j in 0..rates.len() {
            let p = rows.iter().filter(|e| e.labels[j] == 1).count();
            let (wp, wn) = (w.positive[j], w.negative[j]);
            prop_assert!((WEIGHT_MIN..=WEIGHT_MAX).contains(&wp) && (WEIGHT_MIN..=WEIGHT_MAX).contains(&wn));
            let clamped = |x: f64| x == WEIGHT_MIN || x == WEIGHT_MAX;
            if p > 0 && p < n && !clamped(wp) && !clamped(wn) {
                let half = n as f64 / 2.0;
                prop_assert!((wp * p as f64 - half).abs() < 1e-9 && (wn * (n - p) as f64 - half).abs() < 1e-9);
            }
        }
        Ok(())
    })
}

pub fn threshold_monotonicity() -> Result<(), String> {
    let strategy = (prop::collection::vec(0.0f64..1.0, 12), prop::collection::vec(0u8..2, 12), 0.01f64..0.99, 0.01f64..0.99);
    check(256, strategy, |(probs, targets, a, b)| {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let c_lo = Confusion::count(&probs, &targets, 4, lo, None);
        let c_hi = Confusion::count(&probs, &targets, 4, hi, None);
        prop_assert!(c_hi.tp + c_hi.fp <= c_lo.tp + c_lo.fp);
        prop_assert!(c_hi.metrics().recall <= c_lo.metrics().recall);

        let drugs: Vec<String> = (0..4).map(|i| format!("D{i}")).collect();
        let ids: Vec<SequenceId> = (0..3)
            .map(|i| SequenceId {
                accession: i.to_string(),
                species: "s".into(),
                genbank_title: String::new(),
            })
            .collect();
        let r_lo = postprocess(&ids, &probs, &drugs, lo).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let r_hi = postprocess(&ids, &probs, &drugs, hi).map_err(|e| TestCaseError::fail(e.to_string()))?;
        for (x, y) in r_lo.iter().zip(&r_hi) {
            let lo_set: BTreeSet<&str> = x.drugs.iter().map(|d| d.0.as_str()).collect();
            prop_assert!(y.drugs.iter().all(|d| lo_set.contains(d.0.as_str())));
        }
        Ok(())
    })
}

fn two_epoch_checkpoint(config: ModelConfig, data: &[LabeledExample], workers: usize) -> Result<Vec<u8>, String> {
    let mut model = Model::build(config, 21).map_err(|e| e.to_string())?;
    let (tr, ev) = data.split_at(data.len() * 4 / 5);
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 32,
        lr: 1e-2,
        seed: 21,
        shard_size: 8,
        workers,
        ..Default::default()
    };
    train(&mut model, tr, ev, &cfg, |_, _| Ok(())).map_err(|e| e.to_string())?;
    model.to_container(serde_json::json!({"run": 0})).and_then(|c| c.to_bytes()).map_err(|e| e.to_string())
}

/// Two identical 2-epoch runs, and a run with more worker threads, give
/// byte-identical checkpoints for both architectures.
pub fn identical_runs_identical_checkpoints() -> Result<(), String> {
    let data = synthetic_examples(12, 9);
    let cnn = ModelConfig::Cnn(CnnConfig {
        max_len: 90,
        filters_per_bank: 6,
        out_dim: 16,
        paper_exact: false,
    });
    let lstm = ModelConfig::Lstm(LstmConfig {
        max_len: 90,
        embed_dim: 6,
        conv_filters: 6,
        conv_kernel: 3,
        pool: 3,
        lstm_hidden: 5,
        fc1_dim: 8,
        out_dim: 16,
        dropout: 0.2,
        masking: true,
    });
    for config in [cnn, lstm] {
        let a = two_epoch_checkpoint(config.clone(), &data, 1)?;
        let b = two_epoch_checkpoint(config.clone(), &data, 1)?;
        let c = two_epoch_checkpoint(config.clone(), &data, 3)?;
        if a != b {
            return Err(format!("{} checkpoints differ between identical runs", config.kind()));
        }
        if a != c {
            return Err(format!("{} checkpoint depends on the worker count", config.kind()));
        }
    }
    Ok(())
}
