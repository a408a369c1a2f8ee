//! Delimited metadata and drug–virus phase tables.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::io::Read;

use crate::error::{Error, Result};
use crate::labels::PhaseStatus;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SequenceMetadata {
    pub accession: String,
    pub species_raw: String,
    pub genbank_title: String,
    pub collection_date: Option<String>,
    pub study_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DrugVirusEntry {
    pub drug: String,
    pub virus: String,
    pub phases: BTreeSet<PhaseStatus>,
}

impl DrugVirusEntry {
    pub fn max_phase(&self) -> PhaseStatus {
        *self.phases.iter().next_back().expect("phases are non-empty")
    }
}

fn norm_header(h: &str) -> String {
    h.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase()
}

struct Columns {
    names: Vec<String>,
}

impl Columns {
    fn find(&self, aliases: &[&str]) -> Option<usize> {
        self.names.iter().position(|n| aliases.contains(&n.as_str()))
    }

    fn require(&self, display: &str, aliases: &[&str]) -> Result<usize> {
        self.find(aliases).ok_or_else(|| Error::MissingColumn { column: display.to_string() })
    }
}

/// Reads all records; returns normalized header names and `(line, fields)`
/// rows with the arity checked against the header.
fn read_rows(input: impl Read, delimiter: u8) -> Result<(Columns, Vec<(usize, csv::StringRecord)>)> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .has_headers(true)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let columns = Columns {
        names: headers.iter().map(norm_header).collect(),
    };
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 2);
        if rec.len() == 1 && rec.get(0).is_some_and(|f| f.trim().is_empty()) {
            continue;
        }
        if rec.len() != headers.len() {
            return Err(Error::RowArity {
                row: line,
                expected: headers.len(),
                found: rec.len(),
            });
        }
        rows.push((line, rec));
    }
    Ok((columns, rows))
}

fn required_field(rec: &csv::StringRecord, idx: usize, row: usize, column: &str) -> Result<String> {
    let v = rec.get(idx).unwrap_or("").trim();
    if v.is_empty() {
        return Err(Error::EmptyField {
            row,
            column: column.to_string(),
        });
    }
    Ok(v.to_string())
}

fn optional_field(rec: &csv::StringRecord, idx: Option<usize>) -> Option<String> {
    idx.and_then(|i| rec.get(i))
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(str::to_string)
}

/// Parses sequence metadata. Mandatory columns: `Accession`, `Species`.
/// Optional: `GenBank_Title`, `Collection_Date`, `Study_ID`/`BioProject`.
/// Row numbers in errors are 1-based line numbers of the file.
pub fn parse_metadata(input: impl Read, delimiter: u8) -> Result<Vec<SequenceMetadata>> {
    let (cols, rows) = read_rows(input, delimiter)?;
    let acc = cols.require("Accession", &["accession"])?;
    let species = cols.require("Species", &["species"])?;
    let title = cols.find(&["genbanktitle", "title"]);
    let date = cols.find(&["collectiondate"]);
    let study = cols.find(&["studyid", "study", "bioproject"]);
    rows.iter()
        .map(|(line, rec)| {
            Ok(SequenceMetadata {
                accession: required_field(rec, acc, *line, "Accession")?,
                species_raw: required_field(rec, species, *line, "Species")?,
                genbank_title: optional_field(rec, title).unwrap_or_default(),
                collection_date: optional_field(rec, date),
                study_id: optional_field(rec, study),
            })
        })
        .collect()
}

/// Parses the drug–virus phase table (`Drug`, `Virus`, `Phase` columns) and
/// folds rows of the same pair into one entry whose phase set is the union.
/// Output is ordered by (drug, virus).
pub fn parse_drugvirus(input: impl Read, delimiter: u8) -> Result<Vec<DrugVirusEntry>> {
    let (cols, rows) = read_rows(input, delimiter)?;
    let drug = cols.require("Drug", &["drug", "compound", "drugname"])?;
    let virus = cols.require("Virus", &["virus", "virusname"])?;
    let phase = cols.require("Phase", &["phase", "status", "trialphase"])?;
    let mut folded: BTreeMap<(String, String), BTreeSet<PhaseStatus>> = BTreeMap::new();
    for (line, rec) in &rows {
        let d = required_field(rec, drug, *line, "Drug")?;
        let v = required_field(rec, virus, *line, "Virus")?;
        let label = rec.get(phase).unwrap_or("").trim();
        let p = PhaseStatus::parse(label).ok_or_else(|| Error::UnknownPhase {
            row: *line,
            label: label.to_string(),
        })?;
        folded.entry((d, v)).or_default().insert(p);
    }
    Ok(folded
        .into_iter()
        .map(|((drug, virus), phases)| DrugVirusEntry { drug, virus, phases })
        .collect())
}

/// Distinct virus names of a drug–virus table, sorted.
pub fn virus_list(entries: &[DrugVirusEntry]) -> BTreeSet<String> {
    entries.iter().map(|e| e.virus.clone()).collect()
}
