use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use crate::error::{Error, Result};

const DEFAULT_ALIASES: &str = include_str!("../../data/species_aliases.csv");

/// Raw NCBI species name → canonical drug-table virus name.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SpeciesAliasTable {
    map: BTreeMap<String, String>,
}

fn key(name: &str) -> String {
    name.trim().to_lowercase()
}

impl SpeciesAliasTable {
    /// Parses two-column delimited text `raw,canonical`. A first row reading
    /// `raw,canonical` is treated as a header.
    pub fn parse(input: impl Read, delimiter: u8) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(false)
            .flexible(true)
            .from_reader(input);
        let mut map = BTreeMap::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.iter().all(|f| f.trim().is_empty()) {
                continue;
            }
            if rec.len() != 2 {
                return Err(Error::RowArity {
                    row: i + 1,
                    expected: 2,
                    found: rec.len(),
                });
            }
            let (raw, canonical) = (rec[0].trim(), rec[1].trim());
            if i == 0 && raw.eq_ignore_ascii_case("raw") && canonical.eq_ignore_ascii_case("canonical") {
                continue;
            }
            for (v, col) in [(raw, "raw"), (canonical, "canonical")] {
                if v.is_empty() {
                    return Err(Error::EmptyField {
                        row: i + 1,
                        column: col.into(),
                    });
                }
            }
            map.entry(key(raw)).or_insert_with(|| canonical.to_string());
        }
        Ok(SpeciesAliasTable { map })
    }

    /// The shipped table of common NCBI spellings.
    pub fn defaults() -> Self {
        Self::parse(DEFAULT_ALIASES.as_bytes(), b',').expect("bundled alias table parses")
    }

    pub fn insert(&mut self, raw: &str, canonical: &str) {
        self.map.insert(key(raw), canonical.to_string());
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Errors if any canonical target is outside `viruses`.
    pub fn validate(&self, viruses: &BTreeSet<String>) -> Result<()> {
        let mut bad: Vec<String> = self.map.values().filter(|c| !viruses.contains(*c)).cloned().collect();
        bad.sort();
        bad.dedup();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::AliasOutsideVirusList { names: bad })
        }
    }

    /// Drops rows whose target is not in `viruses`.
    /// Adds every entry of `other`, which wins on conflicting raw names.
    pub fn extend(&mut self, other: &SpeciesAliasTable) {
        for (k, v) in &other.map {
            self.map.insert(k.clone(), v.clone());
        }
    }

    pub fn restricted_to(&self, viruses: &BTreeSet<String>) -> Self {
        SpeciesAliasTable {
            map: self
                .map
                .iter()
                .filter(|(_, c)| viruses.contains(*c))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }
}

/// Canonical name for `raw`: identity when `raw` already is a listed virus,
/// otherwise the alias table entry (matched case-insensitively).
pub fn normalize_species(raw: &str, viruses: &BTreeSet<String>, aliases: &SpeciesAliasTable) -> Result<String> {
    let trimmed = raw.trim();
    if viruses.contains(trimmed) {
        return Ok(trimmed.to_string());
    }
    match aliases.map.get(&key(trimmed)) {
        Some(c) if viruses.contains(c) => Ok(c.clone()),
        _ => Err(Error::UnmappedSpecies { raw: raw.to_string() }),
    }
}
