use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use log::warn;
use serde::{Deserialize, Serialize};

use super::fasta::RawSequence;
use super::species::{normalize_species, SpeciesAliasTable};
use super::tables::SequenceMetadata;
use crate::error::{Error, Result};
use crate::models::encode::symbol_index;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedRecord {
    pub accession: String,
    pub residues: String,
    pub species: String,
    pub genbank_title: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeReport {
    pub sequences: usize,
    pub metadata_rows: usize,
    pub matched: usize,
    pub unmatched_sequences: usize,
    pub unmatched_metadata: usize,
    pub duplicate_metadata_accessions: usize,
    pub dropped_unmapped: usize,
    /// Raw species name → number of records dropped because it does not map
    /// onto the drug table's virus list.
    pub dropped_by_species: BTreeMap<String, usize>,
    pub merged_by_species: BTreeMap<String, usize>,
}

/// Inner join of sequences and metadata on accession, in sequence-file
/// order. Species are normalized; records whose species does not map onto
/// `viruses` are dropped and tallied. Duplicate metadata accessions keep
/// the first row.
pub fn merge(
    sequences: &[RawSequence],
    metadata: &[SequenceMetadata],
    viruses: &BTreeSet<String>,
    aliases: &SpeciesAliasTable,
) -> (Vec<MergedRecord>, MergeReport) {
    let mut report = MergeReport {
        sequences: sequences.len(),
        metadata_rows: metadata.len(),
        ..Default::default()
    };
    let mut by_acc: HashMap<&str, &SequenceMetadata> = HashMap::with_capacity(metadata.len());
    for m in metadata {
        if by_acc.contains_key(m.accession.as_str()) {
            warn!("duplicate metadata row for {}; keeping the first", m.accession);
            report.duplicate_metadata_accessions += 1;
        } else {
            by_acc.insert(&m.accession, m);
        }
    }
    let mut used = 0usize;
    let mut out = Vec::new();
    let mut species_cache: HashMap<&str, Option<String>> = HashMap::new();
    for seq in sequences {
        let Some(meta) = by_acc.get(seq.accession.as_str()) else {
            report.unmatched_sequences += 1;
            continue;
        };
        used += 1;
        let canonical = species_cache
            .entry(meta.species_raw.as_str())
            .or_insert_with(|| normalize_species(&meta.species_raw, viruses, aliases).ok())
            .clone();
        match canonical {
            Some(species) => {
                *report.merged_by_species.entry(species.clone()).or_default() += 1;
                out.push(MergedRecord {
                    accession: seq.accession.clone(),
                    residues: seq.residues.to_ascii_uppercase(),
                    species,
                    genbank_title: meta.genbank_title.clone(),
                });
            }
            None => {
                report.dropped_unmapped += 1;
                *report.dropped_by_species.entry(meta.species_raw.clone()).or_default() += 1;
            }
        }
    }
    report.matched = out.len();
    report.unmatched_metadata = by_acc.len() - used;
    (out, report)
}

const MERGED_HEADER: [&str; 4] = ["accession", "species", "genbank_title", "residues"];

pub fn write_merged(records: &[MergedRecord], w: impl Write) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().delimiter(b'\t').from_writer(w);
    wr.write_record(MERGED_HEADER)?;
    for r in records {
        wr.write_record([&r.accession, &r.species, &r.genbank_title, &r.residues])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_merged(r: impl Read) -> Result<Vec<MergedRecord>> {
    let mut rd = csv::ReaderBuilder::new().delimiter(b'\t').from_reader(r);
    let headers = rd.headers()?.clone();
    for col in MERGED_HEADER {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::MissingColumn { column: col.into() });
        }
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let residues = rec[3].to_string();
        if let Some(off) = residues.bytes().position(|b| symbol_index(b).is_none()) {
            return Err(Error::InvalidResidue {
                accession: rec[0].to_string(),
                residue: residues[off..].chars().next().unwrap_or('?'),
                offset: off,
            });
        }
        out.push(MergedRecord {
            accession: rec[0].to_string(),
            species: rec[1].to_string(),
            genbank_title: rec[2].to_string(),
            residues,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(acc: &str, res: &str) -> RawSequence {
        RawSequence {
            accession: acc.into(),
            residues: res.into(),
            source_tag: "main".into(),
        }
    }

    fn meta(acc: &str, species: &str) -> SequenceMetadata {
        SequenceMetadata {
            accession: acc.into(),
            species_raw: species.into(),
            genbank_title: format!("title {acc}"),
            collection_date: None,
            study_id: None,
        }
    }

    fn viruses() -> BTreeSet<String> {
        ["Zika virus", "SARS-CoV-2"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn inner_join_tallies_unmatched() {
        let seqs = [seq("A1", "MK"), seq("A2", "GG"), seq("A3", "WW")];
        let metas = [meta("A3", "Zika virus"), meta("A1", "Zika virus")];
        let (out, report) = merge(&seqs, &metas, &viruses(), &SpeciesAliasTable::default());
        assert_eq!(out.iter().map(|r| r.accession.as_str()).collect::<Vec<_>>(), vec!["A1", "A3"]);
        assert_eq!(report.unmatched_sequences, 1);
        assert_eq!(report.matched, 2);
    }

    #[test]
    fn unmapped_species_dropped_and_tallied() {
        let seqs = [seq("A1", "MK"), seq("A2", "GG")];
        let metas = [meta("A1", "Influenza A virus"), meta("A2", "Severe acute respiratory syndrome coronavirus 2")];
        let (out, report) = merge(&seqs, &metas, &viruses(), &SpeciesAliasTable::defaults());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].species, "SARS-CoV-2");
        assert_eq!(report.dropped_by_species.get("Influenza A virus"), Some(&1));
    }

    #[test]
    fn empty_intersection_reports() {
        let (out, report) = merge(&[seq("A1", "MK")], &[meta("B1", "Zika virus")], &viruses(), &SpeciesAliasTable::default());
        assert!(out.is_empty());
        assert_eq!(report.unmatched_sequences, 1);
        assert_eq!(report.unmatched_metadata, 1);
    }

    #[test]
    fn duplicate_metadata_first_wins() {
        let metas = [meta("A1", "Zika virus"), meta("A1", "SARS-CoV-2")];
        let (out, report) = merge(&[seq("A1", "MK")], &metas, &viruses(), &SpeciesAliasTable::default());
        assert_eq!(out[0].species, "Zika virus");
        assert_eq!(report.duplicate_metadata_accessions, 1);
    }

    #[test]
    fn merged_table_round_trips() {
        let recs = vec![MergedRecord {
            accession: "A1".into(),
            residues: "MKF".into(),
            species: "Zika virus".into(),
            genbank_title: "envelope, \"partial\"".into(),
        }];
        let mut buf = Vec::new();
        write_merged(&recs, &mut buf).unwrap();
        assert_eq!(read_merged(buf.as_slice()).unwrap(), recs);
    }
}
