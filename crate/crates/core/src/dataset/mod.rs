//! Deduplication, rarity exclusion, balancing, class weights and splits.

mod balance;
mod io;
mod split;

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use balance::{balance, replication_factor, BalanceConfig, BalanceReport, BalanceRule, SpeciesBalance};
pub use io::{read_dataset, write_dataset, DatasetFile};
pub use split::{split, SplitMode, SplitReport, SplitSpec, PINNED_HOLDOUT};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledExample {
    pub accession: String,
    pub residues: String,
    pub species: String,
    pub genbank_title: String,
    /// Shared by every example of the same species.
    pub labels: Arc<[u8]>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DedupKey {
    /// Same species and same residue length.
    #[default]
    SpeciesLength,
    /// Same species and identical residues.
    ExactContent,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupReport {
    pub before: BTreeMap<String, usize>,
    pub after: BTreeMap<String, usize>,
}

impl DedupReport {
    pub fn total_before(&self) -> usize {
        self.before.values().sum()
    }

    pub fn total_after(&self) -> usize {
        self.after.values().sum()
    }
}

/// Keeps the first example per key, in input order.
pub fn deduplicate(examples: Vec<LabeledExample>, key: DedupKey) -> (Vec<LabeledExample>, DedupReport) {
    let before = species_counts(&examples);
    let mut seen_len: HashSet<(String, usize)> = HashSet::new();
    let mut seen_content: HashSet<(String, String)> = HashSet::new();
    let kept: Vec<LabeledExample> = examples
        .into_iter()
        .filter(|e| match key {
            DedupKey::SpeciesLength => seen_len.insert((e.species.clone(), e.residues.len())),
            DedupKey::ExactContent => seen_content.insert((e.species.clone(), e.residues.clone())),
        })
        .collect();
    let after = species_counts(&kept);
    (kept, DedupReport { before, after })
}

/// Removes every species holding fewer than `fraction` of all examples.
/// Returns the survivors and the excluded species names.
pub fn exclude_rare(examples: Vec<LabeledExample>, fraction: f64) -> (Vec<LabeledExample>, Vec<String>) {
    let counts = species_counts(&examples);
    let threshold = fraction * examples.len() as f64;
    let excluded: Vec<String> = counts.iter().filter(|(_, &c)| (c as f64) < threshold).map(|(s, _)| s.clone()).collect();
    if excluded.is_empty() {
        return (examples, excluded);
    }
    let drop: HashSet<&str> = excluded.iter().map(String::as_str).collect();
    let kept = examples.into_iter().filter(|e| !drop.contains(e.species.as_str())).collect();
    (kept, excluded)
}

pub fn species_counts(examples: &[LabeledExample]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for e in examples {
        *m.entry(e.species.clone()).or_insert(0) += 1;
    }
    m
}

/// Per-species counts sorted by descending count, then name.
pub fn profile(examples: &[LabeledExample]) -> Vec<(String, usize)> {
    let mut rows: Vec<(String, usize)> = species_counts(examples).into_iter().collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rows
}

pub const WEIGHT_MIN: f64 = 0.05;
pub const WEIGHT_MAX: f64 = 20.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

impl ClassWeights {
    /// All-ones weights.
    pub fn uniform(width: usize) -> Self {
        ClassWeights {
            positive: vec![1.0; width],
            negative: vec![1.0; width],
        }
    }

    pub fn len(&self) -> usize {
        self.positive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positive.is_empty()
    }
}

/// Inverse-frequency weights per label slot: w⁺ = N/(2·max(P,1)),
/// w⁻ = N/(2·max(N−P,1)), each clamped to [0.05, 20].
pub fn compute_class_weights(examples: &[LabeledExample]) -> Result<ClassWeights> {
    let first = examples.first().ok_or(Error::EmptyInput("class weights need at least one example"))?;
    let width = first.labels.len();
    let mut positives = vec![0usize; width];
    for e in examples {
        if e.labels.len() != width {
            return Err(Error::LabelLength {
                expected: width,
                found: e.labels.len(),
            });
        }
        for (p, &b) in positives.iter_mut().zip(e.labels.iter()) {
            *p += b as usize;
        }
    }
    let n = examples.len() as f64;
    let clamp = |w: f64| w.clamp(WEIGHT_MIN, WEIGHT_MAX);
    Ok(ClassWeights {
        positive: positives.iter().map(|&p| clamp(n / (2.0 * p.max(1) as f64))).collect(),
        negative: positives.iter().map(|&p| clamp(n / (2.0 * (examples.len() - p).max(1) as f64))).collect(),
    })
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn ex(acc: &str, species: &str, residues: &str, labels: &[u8]) -> LabeledExample {
        LabeledExample {
            accession: acc.into(),
            residues: residues.into(),
            species: species.into(),
            genbank_title: String::new(),
            labels: Arc::from(labels),
        }
    }

    /// `count` examples of `species` with distinct lengths.
    pub fn species_block(species: &str, count: usize, labels: &[u8]) -> Vec<LabeledExample> {
        let shared: Arc<[u8]> = Arc::from(labels);
        (0..count)
            .map(|i| LabeledExample {
                accession: format!("{species}-{i}"),
                residues: "A".repeat(i + 1),
                species: species.into(),
                genbank_title: String::new(),
                labels: Arc::clone(&shared),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn same_length_same_species_collapses() {
        let input = vec![ex("a", "Herpes simplex virus 1", &"M".repeat(312), &[1]), ex("b", "Herpes simplex virus 1", &"K".repeat(312), &[1])];
        let (out, report) = deduplicate(input, DedupKey::SpeciesLength);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].accession, "a");
        assert_eq!(report.before["Herpes simplex virus 1"], 2);
        assert_eq!(report.after["Herpes simplex virus 1"], 1);
    }

    #[test]
    fn distinct_lengths_or_content_survive() {
        let input = vec![ex("a", "H", &"M".repeat(312), &[1]), ex("b", "H", &"M".repeat(313), &[1])];
        assert_eq!(deduplicate(input, DedupKey::SpeciesLength).0.len(), 2);
        let input = vec![ex("a", "H", "MKV", &[1]), ex("b", "H", "MKW", &[1]), ex("c", "H", "MKV", &[1])];
        let (out, _) = deduplicate(input, DedupKey::ExactContent);
        assert_eq!(out.iter().map(|e| e.accession.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn rare_species_excluded_against_pool() {
        let mut v = species_block("big", 995, &[0]);
        v.extend(species_block("small", 4, &[0]));
        let (kept, excluded) = exclude_rare(v, 0.005);
        assert_eq!(excluded, ["small"]);
        assert_eq!(kept.len(), 995);
        let (kept, excluded) = exclude_rare(species_block("only", 3, &[0]), 0.005);
        assert!(excluded.is_empty());
        assert_eq!(kept.len(), 3);
    }

    #[test]
    fn class_weight_examples() {
        let mut v = Vec::new();
        for i in 0..100 {
            v.push(ex(&i.to_string(), "s", "A", &[(i < 50) as u8, (i < 10) as u8, 0]));
        }
        let w = compute_class_weights(&v).unwrap();
        assert_eq!((w.positive[0], w.negative[0]), (1.0, 1.0));
        assert_eq!(w.positive[1], 5.0);
        assert!((w.negative[1] - 100.0 / 180.0).abs() < 1e-15);
        assert_eq!(w.positive[2], 20.0);
        assert_eq!(w.negative[2], 0.5);
        assert!(compute_class_weights(&[]).is_err());
    }

    fn arb_examples() -> impl Strategy<Value = Vec<LabeledExample>> {
        prop::collection::vec((0usize..4, 1usize..12, any::<bool>()), 0..80).prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (s, len, l))| ex(&format!("x{i}"), &format!("sp{s}"), &"ACDE".repeat(len)[..len + (i % 3)], &[l as u8, s as u8 & 1]))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn dedup_idempotent_with_unique_keys(v in arb_examples()) {
            let (once, _) = deduplicate(v, DedupKey::SpeciesLength);
            let keys: HashSet<_> = once.iter().map(|e| (e.species.clone(), e.residues.len())).collect();
            prop_assert_eq!(keys.len(), once.len());
            let (twice, _) = deduplicate(once.clone(), DedupKey::SpeciesLength);
            prop_assert_eq!(twice, once);
        }

        #[test]
        fn exclusion_idempotent(v in arb_examples(), frac in 0.01f64..0.5) {
            let (once, _) = exclude_rare(v, frac);
            let (twice, excluded) = exclude_rare(once.clone(), frac);
            prop_assert!(excluded.is_empty());
            prop_assert_eq!(twice, once);
        }

        #[test]
        fn unclamped_weights_balance_mass(pos in 1usize..99) {
            let v: Vec<_> = (0..100).map(|i| ex("a", "s", "A", &[(i < pos) as u8])).collect();
            let w = compute_class_weights(&v).unwrap();
            let mass_pos = w.positive[0] * pos as f64;
            let mass_neg = w.negative[0] * (100 - pos) as f64;
            if w.positive[0] < WEIGHT_MAX && w.negative[0] > WEIGHT_MIN && w.negative[0] < WEIGHT_MAX {
                prop_assert!((mass_pos - mass_neg).abs() < 1e-9);
            }
        }
    }
}
