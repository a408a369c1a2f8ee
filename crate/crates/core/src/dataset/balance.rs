use std::collections::BTreeMap;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::LabeledExample;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BalanceRule {
    /// k = ⌈1.3·lower_target / c⌉, reduced while k·c exceeds the cap.
    #[default]
    Ceiling,
    /// k ∈ {⌊600/c⌋, ⌈600/c⌉} nearest to 600 with k·c ≥ lower_target,
    /// ties to the smaller k.
    NearestSixHundred,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BalanceConfig {
    pub lower_target: usize,
    pub upper_bound: usize,
    /// Largest count an oversampled species may reach.
    pub oversample_cap: usize,
    pub rarity_fraction: f64,
    pub rule: BalanceRule,
    pub seed: u64,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        BalanceConfig {
            lower_target: 400,
            upper_bound: 900,
            oversample_cap: 936,
            rarity_fraction: 0.005,
            rule: BalanceRule::Ceiling,
            seed: 0,
        }
    }
}

impl BalanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rarity_fraction > 0.0 && self.rarity_fraction < 1.0) {
            return Err(Error::Config(format!("rarity_fraction {} outside (0, 1)", self.rarity_fraction)));
        }
        if self.lower_target == 0 || self.lower_target > self.upper_bound {
            return Err(Error::Config(format!(
                "need 0 < lower_target ({}) <= upper_bound ({})",
                self.lower_target, self.upper_bound
            )));
        }
        if self.oversample_cap < self.lower_target {
            return Err(Error::Config("oversample_cap below lower_target".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeciesBalance {
    pub species: String,
    pub before: usize,
    pub after: usize,
    /// Replication factor for oversampled species; 1 otherwise.
    pub factor: usize,
    pub undersampled: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub species: Vec<SpeciesBalance>,
}

impl BalanceReport {
    pub fn total(&self) -> usize {
        self.species.iter().map(|s| s.after).sum()
    }
}

/// Whole-set replication factor for a species with `count` examples
/// (1 when `count` needs no oversampling).
pub fn replication_factor(count: usize, cfg: &BalanceConfig) -> usize {
    if count == 0 || count >= cfg.lower_target {
        return 1;
    }
    match cfg.rule {
        BalanceRule::Ceiling => {
            let target = (cfg.lower_target as f64 * 1.3).ceil() as usize;
            let mut k = target.div_ceil(count);
            while k > 1 && k * count > cfg.oversample_cap {
                k -= 1;
            }
            k
        }
        BalanceRule::NearestSixHundred => {
            let lo = (600 / count).max(1);
            let hi = 600usize.div_ceil(count);
            [lo, hi]
                .into_iter()
                .filter(|&k| k * count >= cfg.lower_target)
                .min_by_key(|&k| ((k * count).abs_diff(600), k))
                .unwrap_or(hi)
        }
    }
}

/// Replicates small species, subsamples large ones, leaves the rest.
/// Output is ordered by species name, then original input index.
pub fn balance(examples: Vec<LabeledExample>, cfg: &BalanceConfig) -> Result<(Vec<LabeledExample>, BalanceReport)> {
    cfg.validate()?;
    let mut groups: BTreeMap<String, Vec<LabeledExample>> = BTreeMap::new();
    for e in examples {
        groups.entry(e.species.clone()).or_default().push(e);
    }
    let mut out = Vec::new();
    let mut report = BalanceReport::default();
    for (species, members) in groups {
        let c = members.len();
        if c == 0 {
            return Err(Error::Internal(format!("species {species} has no examples")));
        }
        if c > cfg.upper_bound {
            let mut rng = rng::stream(cfg.seed, &format!("balance/{species}"));
            let mut picked = sample(&mut rng, c, cfg.upper_bound).into_vec();
            picked.sort_unstable();
            out.extend(picked.into_iter().map(|i| members[i].clone()));
            report.species.push(SpeciesBalance {
                species,
                before: c,
                after: cfg.upper_bound,
                factor: 1,
                undersampled: true,
            });
        } else {
            let k = replication_factor(c, cfg);
            for e in &members {
                out.extend(std::iter::repeat_n(e, k).cloned());
            }
            report.species.push(SpeciesBalance {
                species,
                before: c,
                after: k * c,
                factor: k,
                undersampled: false,
            });
        }
    }
    Ok((out, report))
}
