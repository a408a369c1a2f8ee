use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index::sample, SliceRandom};
use serde::{Deserialize, Serialize};

use super::{species_counts, LabeledExample};
use crate::error::{Error, Result};
use crate::rng;

/// Species that is always held out in a by-species split.
pub const PINNED_HOLDOUT: &str = "SARS-CoV-2";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    #[default]
    Random,
    BySpecies,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub ratio: f64,
    pub holdouts: Vec<String>,
    pub n_random_holdouts: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            mode: SplitMode::Random,
            ratio: 0.8,
            holdouts: vec![PINNED_HOLDOUT.to_string()],
            n_random_holdouts: 3,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            SplitMode::Random if !(self.ratio > 0.0 && self.ratio < 1.0) => Err(Error::Config(format!("split ratio {} outside (0, 1)", self.ratio))),
            SplitMode::BySpecies if !self.holdouts.iter().any(|h| h == PINNED_HOLDOUT) => {
                Err(Error::Config(format!("holdout list must include {PINNED_HOLDOUT}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitReport {
    /// Eval-only species (by-species mode).
    pub holdouts: Vec<String>,
    pub train: BTreeMap<String, usize>,
    pub eval: BTreeMap<String, usize>,
}

/// Splits into (train, eval). Both sides keep input order.
pub fn split(examples: &[LabeledExample], spec: &SplitSpec) -> Result<(Vec<LabeledExample>, Vec<LabeledExample>, SplitReport)> {
    spec.validate()?;
    let mut holdouts = Vec::new();
    let to_eval: Vec<bool> = match spec.mode {
        SplitMode::Random => {
            let n = examples.len();
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng::stream(spec.seed, "split/random"));
            let n_train = (spec.ratio * n as f64).round() as usize;
            let mut flags = vec![false; n];
            for &i in &order[n_train..] {
                flags[i] = true;
            }
            flags
        }
        SplitMode::BySpecies => {
            let present = species_counts(examples);
            let mut chosen: BTreeSet<String> = BTreeSet::new();
            for h in &spec.holdouts {
                if !present.contains_key(h) {
                    return Err(Error::HoldoutNotFound { species: h.clone() });
                }
                chosen.insert(h.clone());
            }
            let rest: Vec<&String> = present.keys().filter(|s| !chosen.contains(*s)).collect();
            if spec.n_random_holdouts > rest.len() {
                return Err(Error::Config(format!(
                    "{} random holdouts requested but only {} other species",
                    spec.n_random_holdouts,
                    rest.len()
                )));
            }
            let mut r = rng::stream(spec.seed, "split/holdouts");
            for i in sample(&mut r, rest.len(), spec.n_random_holdouts) {
                chosen.insert(rest[i].clone());
            }
            holdouts = chosen.iter().cloned().collect();
            examples.iter().map(|e| chosen.contains(&e.species)).collect()
        }
    };
    let (mut train, mut eval) = (Vec::new(), Vec::new());
    for (e, &ev) in examples.iter().zip(&to_eval) {
        if ev { &mut eval } else { &mut train }.push(e.clone());
    }
    if train.is_empty() {
        return Err(Error::EmptySplit { side: "train" });
    }
    if eval.is_empty() {
        return Err(Error::EmptySplit { side: "eval" });
    }
    let report = SplitReport {
        holdouts,
        train: species_counts(&train),
        eval: species_counts(&eval),
    };
    Ok((train, eval, report))
}

#[cfg(test)]
mod tests {
    use super::super::testutil::species_block;
    use super::*;
    use proptest::prelude::*;

    fn corpus() -> Vec<LabeledExample> {
        let mut v = Vec::new();
        for s in [PINNED_HOLDOUT, "Herpes simplex virus 1", "Human Astrovirus", "Ebola virus", "Zika virus", "Dengue virus"] {
            v.extend(species_block(s, 5, &[1, 0]));
        }
        v
    }

    #[test]
    fn random_ratio_cut() {
        let v = species_block("s", 10, &[1]);
        let (tr, ev, _) = split(&v, &SplitSpec::default()).unwrap();
        assert_eq!((tr.len(), ev.len()), (8, 2));
        let mut all: Vec<_> = tr.iter().chain(&ev).map(|e| e.accession.clone()).collect();
        all.sort();
        let mut orig: Vec<_> = v.iter().map(|e| e.accession.clone()).collect();
        orig.sort();
        assert_eq!(all, orig);
    }

    #[test]
    fn explicit_holdouts_go_to_eval() {
        let spec = SplitSpec {
            mode: SplitMode::BySpecies,
            holdouts: vec![PINNED_HOLDOUT.into(), "Herpes simplex virus 1".into(), "Human Astrovirus".into(), "Ebola virus".into()],
            n_random_holdouts: 0,
            ..Default::default()
        };
        let (tr, ev, rep) = split(&corpus(), &spec).unwrap();
        assert_eq!(rep.eval.len(), 4);
        assert_eq!(ev.len(), 20);
        assert!(tr.iter().all(|e| !spec.holdouts.contains(&e.species)));
    }

    #[test]
    fn holdout_errors() {
        let missing = SplitSpec {
            mode: SplitMode::BySpecies,
            holdouts: vec![PINNED_HOLDOUT.into(), "Nipah virus".into()],
            ..Default::default()
        };
        assert!(matches!(split(&corpus(), &missing), Err(Error::HoldoutNotFound { .. })));
        let unpinned = SplitSpec {
            mode: SplitMode::BySpecies,
            holdouts: vec!["Zika virus".into()],
            ..Default::default()
        };
        assert!(matches!(split(&corpus(), &unpinned), Err(Error::Config(_))));
        let all = SplitSpec {
            mode: SplitMode::BySpecies,
            n_random_holdouts: 5,
            ..Default::default()
        };
        assert!(matches!(split(&corpus(), &all), Err(Error::EmptySplit { side: "train" })));
    }

    proptest! {
        #[test]
        fn by_species_disjoint_with_pinned_in_eval(seed in any::<u64>(), n in 0usize..4) {
            let spec = SplitSpec { mode: SplitMode::BySpecies, n_random_holdouts: n, seed, ..Default::default() };
            let (_, _, rep) = split(&corpus(), &spec).unwrap();
            prop_assert!(rep.eval.contains_key(PINNED_HOLDOUT));
            prop_assert_eq!(rep.eval.len(), n + 1);
            prop_assert!(rep.train.keys().all(|s| !rep.eval.contains_key(s)));
        }

        #[test]
        fn random_split_partitions(seed in any::<u64>(), ratio in 0.1f64..0.9) {
            let v = corpus();
            let spec = SplitSpec { ratio, seed, ..Default::default() };
            if let Ok((tr, ev, _)) = split(&v, &spec) {
                let a: BTreeSet<_> = tr.iter().map(|e| e.accession.clone()).collect();
                let b: BTreeSet<_> = ev.iter().map(|e| e.accession.clone()).collect();
                prop_assert!(a.is_disjoint(&b));
                prop_assert_eq!(a.len() + b.len(), v.len());
            }
        }
    }
}
