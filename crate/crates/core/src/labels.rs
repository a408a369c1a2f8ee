//! Virus → antiviral label vectors under the three phase-encoding versions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{DrugVirusEntry, MergedRecord};
use crate::dataset::LabeledExample;
use crate::error::{Error, Result};

/// Evidence level of a drug–virus pair, lowest first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PhaseStatus {
    CellCulture,
    PrimaryCells,
    AnimalModel,
    PhaseI,
    PhaseII,
    PhaseIII,
    PhaseIV,
    Approved,
}

impl PhaseStatus {
    pub const ALL: [PhaseStatus; 8] = [
        PhaseStatus::CellCulture,
        PhaseStatus::PrimaryCells,
        PhaseStatus::AnimalModel,
        PhaseStatus::PhaseI,
        PhaseStatus::PhaseII,
        PhaseStatus::PhaseIII,
        PhaseStatus::PhaseIV,
        PhaseStatus::Approved,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PhaseStatus::CellCulture => "CellCulture",
            PhaseStatus::PrimaryCells => "PrimaryCells",
            PhaseStatus::AnimalModel => "AnimalModel",
            PhaseStatus::PhaseI => "PhaseI",
            PhaseStatus::PhaseII => "PhaseII",
            PhaseStatus::PhaseIII => "PhaseIII",
            PhaseStatus::PhaseIV => "PhaseIV",
            PhaseStatus::Approved => "Approved",
        }
    }

    /// Accepts the database's spellings ("Cell cultures/co-cultures",
    /// "Primary cells/ organoids", "Phase III", "Phase 3", ...) and the
    /// canonical names, ignoring case, spaces and punctuation.
    pub fn parse(label: &str) -> Option<Self> {
        let k: String = label.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Some(match k.as_str() {
            "cellculture" | "cellcultures" | "cellculturescocultures" | "cellculturecoculture" | "cellculturescoculture" => {
                PhaseStatus::CellCulture
            }
            "primarycells" | "primarycellsorganoids" | "primarycell" | "organoids" => PhaseStatus::PrimaryCells,
            "animalmodel" | "animalmodels" => PhaseStatus::AnimalModel,
            "phasei" | "phase1" => PhaseStatus::PhaseI,
            "phaseii" | "phase2" => PhaseStatus::PhaseII,
            "phaseiii" | "phase3" => PhaseStatus::PhaseIII,
            "phaseiv" | "phase4" => PhaseStatus::PhaseIV,
            "approved" => PhaseStatus::Approved,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelVersion {
    /// Any recorded interaction is positive.
    V1,
    /// One slot per (drug, phase), filled up to the highest recorded phase.
    V2,
    /// Positive only from Phase II onward.
    #[default]
    V3,
}

impl FromStr for LabelVersion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "V1" | "1" => Ok(LabelVersion::V1),
            "V2" | "2" => Ok(LabelVersion::V2),
            "V3" | "3" => Ok(LabelVersion::V3),
            other => Err(Error::Config(format!("unknown label version '{other}'"))),
        }
    }
}

impl std::fmt::Display for LabelVersion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LabelVersion::V1 => "V1",
            LabelVersion::V2 => "V2",
            LabelVersion::V3 => "V3",
        })
    }
}

/// Ordered list of drug names; index order is byte-wise name order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrugRegistry {
    names: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl DrugRegistry {
    /// Size of the full antiviral table.
    pub const CAPACITY: usize = 126;

    pub fn new(names: impl IntoIterator<Item = String>) -> Result<Self> {
        let set: BTreeSet<String> = names.into_iter().collect();
        if set.len() > Self::CAPACITY {
            return Err(Error::TooManyDrugs {
                count: set.len(),
                capacity: Self::CAPACITY,
            });
        }
        let names: Vec<String> = set.into_iter().collect();
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Ok(DrugRegistry { names, index })
    }

    pub fn from_entries(entries: &[DrugVirusEntry]) -> Result<Self> {
        Self::new(entries.iter().map(|e| e.drug.clone()))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, drug: &str) -> Option<usize> {
        self.index.get(drug).copied()
    }

    /// Errors unless the registry holds exactly the full 126 drugs.
    pub fn require_full(&self) -> Result<()> {
        if self.len() == Self::CAPACITY {
            Ok(())
        } else {
            Err(Error::RegistrySize {
                count: self.len(),
                expected: Self::CAPACITY,
            })
        }
    }

    /// Hex SHA-256 over the newline-joined names.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for n in &self.names {
            h.update(n.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelDictionary {
    pub version: LabelVersion,
    pub registry: DrugRegistry,
    vectors: BTreeMap<String, Arc<[u8]>>,
}

/// Species whose label vector is all zero.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub species_without_drugs: Vec<String>,
}

impl LabelDictionary {
    pub fn width(&self) -> usize {
        slot_count(self.version, self.registry.len())
    }

    pub fn get(&self, virus: &str) -> Option<&Arc<[u8]>> {
        self.vectors.get(virus)
    }

    pub fn viruses(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }

    /// Column names: drug names, or `drug|phase` for V2.
    pub fn slot_names(&self) -> Vec<String> {
        slot_names(self.version, &self.registry)
    }

    pub fn write_grid(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "# label_version={}", self.version)?;
        let mut wr = csv::WriterBuilder::new().delimiter(b'\t').from_writer(w);
        let mut header = vec!["virus".to_string()];
        header.extend(self.slot_names());
        wr.write_record(&header)?;
        for (virus, v) in &self.vectors {
            let mut row = vec![virus.clone()];
            row.extend(v.iter().map(|b| b.to_string()));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_grid(mut r: impl BufRead) -> Result<Self> {
        let mut first = String::new();
        r.read_line(&mut first)?;
        let version: LabelVersion = first
            .trim()
            .strip_prefix("# label_version=")
            .ok_or_else(|| Error::Config("label grid lacks a version tag".into()))?
            .parse()?;
        let mut rd = csv::ReaderBuilder::new().delimiter(b'\t').from_reader(r);
        let header = rd.headers()?.clone();
        let slots: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let drugs: Vec<String> = match version {
            LabelVersion::V2 => slots.iter().step_by(8).map(|s| s.split('|').next().unwrap_or("").to_string()).collect(),
            _ => slots.clone(),
        };
        let registry = DrugRegistry::new(drugs)?;
        if registry.slot_names_for(version) != slots {
            return Err(Error::Config("label grid columns are not in registry order".into()));
        }
        let mut vectors = BTreeMap::new();
        for rec in rd.records() {
            let rec = rec?;
            let v: Vec<u8> = rec
                .iter()
                .skip(1)
                .map(|f| match f {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    other => Err(Error::NonBinaryTarget {
                        value: other.parse().unwrap_or(f64::NAN),
                    }),
                })
                .collect::<Result<_>>()?;
            if v.len() != slots.len() {
                return Err(Error::LabelLength {
                    expected: slots.len(),
                    found: v.len(),
                });
            }
            vectors.insert(rec[0].to_string(), Arc::from(v));
        }
        Ok(LabelDictionary {
            version,
            registry,
            vectors,
        })
    }
}

impl DrugRegistry {
    fn slot_names_for(&self, version: LabelVersion) -> Vec<String> {
        slot_names(version, self)
    }
}

fn slot_count(version: LabelVersion, drugs: usize) -> usize {
    match version {
        LabelVersion::V2 => drugs * PhaseStatus::ALL.len(),
        _ => drugs,
    }
}

fn slot_names(version: LabelVersion, registry: &DrugRegistry) -> Vec<String> {
    match version {
        LabelVersion::V2 => registry
            .names()
            .iter()
            .flat_map(|d| PhaseStatus::ALL.iter().map(move |p| format!("{d}|{}", p.name())))
            .collect(),
        _ => registry.names().to_vec(),
    }
}

/// Builds one label vector per virus in `viruses`. Entries must name only
/// listed viruses; listed viruses without entries get all-zero vectors.
pub fn build_label_dictionary(entries: &[DrugVirusEntry], version: LabelVersion, viruses: &BTreeSet<String>) -> Result<LabelDictionary> {
    let registry = DrugRegistry::from_entries(entries)?;
    let width = slot_count(version, registry.len());
    let mut vectors: BTreeMap<String, Vec<u8>> = viruses.iter().map(|v| (v.clone(), vec![0u8; width])).collect();
    for e in entries {
        let v = vectors.get_mut(&e.virus).ok_or_else(|| Error::UnknownVirus { virus: e.virus.clone() })?;
        let d = registry.index_of(&e.drug).expect("registry built from entries");
        let top = e.max_phase();
        match version {
            LabelVersion::V1 => v[d] = 1,
            LabelVersion::V2 => {
                for p in 0..=top.index() {
                    v[d * 8 + p] = 1;
                }
            }
            LabelVersion::V3 => {
                if top >= PhaseStatus::PhaseII {
                    v[d] = 1;
                }
            }
        }
    }
    Ok(LabelDictionary {
        version,
        registry,
        vectors: vectors.into_iter().map(|(k, v)| (k, Arc::from(v))).collect(),
    })
}

/// Pairs each record with its species' (shared) label vector.
pub fn attach_labels(records: &[MergedRecord], dict: &LabelDictionary) -> Result<(Vec<LabeledExample>, CoverageReport)> {
    let mut zero_species = BTreeSet::new();
    let examples = records
        .iter()
        .map(|r| {
            let labels = dict.get(&r.species).ok_or_else(|| Error::MissingLabels { species: r.species.clone() })?;
            if labels.iter().all(|&b| b == 0) {
                zero_species.insert(r.species.clone());
            }
            Ok(LabeledExample {
                accession: r.accession.clone(),
                residues: r.residues.clone(),
                species: r.species.clone(),
                genbank_title: r.genbank_title.clone(),
                labels: Arc::clone(labels),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        examples,
        CoverageReport {
            species_without_drugs: zero_species.into_iter().collect(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(drug: &str, virus: &str, phases: &[PhaseStatus]) -> DrugVirusEntry {
        DrugVirusEntry {
            drug: drug.into(),
            virus: virus.into(),
            phases: phases.iter().copied().collect(),
        }
    }

    fn set(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn phase_order_and_parsing() {
        assert_eq!(PhaseStatus::ALL.len(), 8);
        assert!(PhaseStatus::ALL.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(PhaseStatus::parse("Cell cultures/co-cultures"), Some(PhaseStatus::CellCulture));
        assert_eq!(PhaseStatus::parse("Primary cells/ organoids"), Some(PhaseStatus::PrimaryCells));
        assert_eq!(PhaseStatus::parse("Phase III"), Some(PhaseStatus::PhaseIII));
        assert_eq!(PhaseStatus::parse("approved"), Some(PhaseStatus::Approved));
        assert_eq!(PhaseStatus::parse("Phase V"), None);
        for p in PhaseStatus::ALL {
            assert_eq!(PhaseStatus::parse(p.name()), Some(p));
        }
    }

    #[test]
    fn v2_approved_fills_every_phase() {
        let d = build_label_dictionary(&[entry("X", "Y", &[PhaseStatus::Approved])], LabelVersion::V2, &set(&["Y"])).unwrap();
        assert_eq!(d.get("Y").unwrap().as_ref(), &[1u8; 8]);
    }

    #[test]
    fn v2_fills_gaps_below_max_phase() {
        let d = build_label_dictionary(&[entry("X", "Y", &[PhaseStatus::PhaseIII])], LabelVersion::V2, &set(&["Y"])).unwrap();
        assert_eq!(d.get("Y").unwrap().as_ref(), &[1, 1, 1, 1, 1, 1, 0, 0]);
    }

    #[test]
    fn v3_requires_phase_two() {
        let v = set(&["Y"]);
        let cc = build_label_dictionary(&[entry("X", "Y", &[PhaseStatus::CellCulture])], LabelVersion::V3, &v).unwrap();
        assert_eq!(cc.get("Y").unwrap().as_ref(), &[0]);
        let p2 = build_label_dictionary(&[entry("X", "Y", &[PhaseStatus::PhaseII])], LabelVersion::V3, &v).unwrap();
        assert_eq!(p2.get("Y").unwrap().as_ref(), &[1]);
        let v1 = build_label_dictionary(&[entry("X", "Y", &[PhaseStatus::CellCulture])], LabelVersion::V1, &v).unwrap();
        assert_eq!(v1.get("Y").unwrap().as_ref(), &[1]);
    }

    #[test]
    fn unknown_virus_and_registry_overflow() {
        assert!(matches!(
            build_label_dictionary(&[entry("X", "Z", &[PhaseStatus::PhaseI])], LabelVersion::V1, &set(&["Y"])),
            Err(Error::UnknownVirus { .. })
        ));
        let many: Vec<_> = (0..127).map(|i| entry(&format!("D{i:03}"), "Y", &[PhaseStatus::PhaseI])).collect();
        assert!(matches!(
            build_label_dictionary(&many, LabelVersion::V1, &set(&["Y"])),
            Err(Error::TooManyDrugs { count: 127, .. })
        ));
    }

    #[test]
    fn attach_shares_vectors_and_flags_zero_coverage() {
        let entries = [
            entry("Aciclovir", "Varicella zoster virus", &[PhaseStatus::Approved]),
            entry("Alisporivir", "Hepatitis C virus", &[PhaseStatus::PhaseIII]),
        ];
        let viruses = set(&["Varicella zoster virus", "Hepatitis C virus", "Hepatitis A virus"]);
        let d = build_label_dictionary(&entries, LabelVersion::V1, &viruses).unwrap();
        let rec = |acc: &str, sp: &str| MergedRecord {
            accession: acc.into(),
            residues: "YIDPVVVLDF".into(),
            species: sp.into(),
            genbank_title: String::new(),
        };
        let recs = [rec("a", "Varicella zoster virus"), rec("b", "Varicella zoster virus"), rec("c", "Hepatitis C virus"), rec("d", "Hepatitis A virus")];
        let (ex, cov) = attach_labels(&recs, &d).unwrap();
        let aci = d.registry.index_of("Aciclovir").unwrap();
        let ali = d.registry.index_of("Alisporivir").unwrap();
        assert_eq!(ex[0].labels[aci], 1);
        assert_eq!(ex[2].labels[ali], 1);
        assert!(Arc::ptr_eq(&ex[0].labels, &ex[1].labels));
        assert_eq!(cov.species_without_drugs, vec!["Hepatitis A virus".to_string()]);
        assert!(attach_labels(&[rec("e", "Nipah virus")], &d).is_err());
    }

    #[test]
    fn grid_round_trip() {
        let entries = [entry("B", "Y", &[PhaseStatus::PhaseII]), entry("A", "Z", &[PhaseStatus::AnimalModel])];
        for version in [LabelVersion::V1, LabelVersion::V2, LabelVersion::V3] {
            let d = build_label_dictionary(&entries, version, &set(&["Y", "Z"])).unwrap();
            let mut buf = Vec::new();
            d.write_grid(&mut buf).unwrap();
            let back = LabelDictionary::read_grid(buf.as_slice()).unwrap();
            assert_eq!(back.version, version);
            assert_eq!(back.vectors, d.vectors);
            assert_eq!(back.registry.hash(), d.registry.hash());
        }
    }
}
