use std::collections::HashSet;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::models::encode::symbol_index;

/// One FASTA record: accession plus upper-cased residues.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawSequence {
    pub accession: String,
    pub residues: String,
    pub source_tag: String,
}

/// Parses FASTA text. The accession is the first whitespace-delimited token
/// of each header; body lines are concatenated and upper-cased.
pub fn parse_fasta(reader: impl BufRead, source_tag: &str) -> Result<Vec<RawSequence>> {
    let mut records: Vec<RawSequence> = Vec::new();
    let mut seen = HashSet::new();
    let mut current: Option<RawSequence> = None;

    let finish = |rec: RawSequence, records: &mut Vec<RawSequence>, seen: &mut HashSet<String>| -> Result<()> {
        if rec.residues.is_empty() {
            return Err(Error::EmptyBody { accession: rec.accession });
        }
        if !seen.insert(rec.accession.clone()) {
            return Err(Error::DuplicateAccession { accession: rec.accession });
        }
        records.push(rec);
        Ok(())
    };

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if let Some(header) = line.strip_prefix('>') {
            if let Some(rec) = current.take() {
                finish(rec, &mut records, &mut seen)?;
            }
            let accession = header
                .split_whitespace()
                .next()
                .ok_or(Error::MissingAccession { line: lineno + 1 })?;
            current = Some(RawSequence {
                accession: accession.to_string(),
                residues: String::new(),
                source_tag: source_tag.to_string(),
            });
            continue;
        }
        let body = line.trim();
        if body.is_empty() {
            continue;
        }
        let rec = current.as_mut().ok_or(Error::OrphanSequence { line: lineno + 1 })?;
        for (i, b) in body.bytes().enumerate() {
            if symbol_index(b).is_none() {
                return Err(Error::InvalidResidue {
                    accession: rec.accession.clone(),
                    residue: body[i..].chars().next().unwrap_or('?'),
                    offset: rec.residues.len() + i,
                });
            }
        }
        rec.residues.push_str(&body.to_ascii_uppercase());
    }
    if let Some(rec) = current.take() {
        finish(rec, &mut records, &mut seen)?;
    }
    Ok(records)
}

/// Writes records with bodies wrapped at `width` columns.
pub fn write_fasta(records: &[RawSequence], mut w: impl Write, width: usize) -> Result<()> {
    let width = width.max(1);
    for rec in records {
        writeln!(w, ">{}", rec.accession)?;
        for chunk in rec.residues.as_bytes().chunks(width) {
            w.write_all(chunk)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(s: &str) -> Result<Vec<RawSequence>> {
        parse_fasta(s.as_bytes(), "main")
    }

    #[test]
    fn multi_line_bodies_concatenate() {
        let recs = parse(">A1 x\nMKF\n>A2 y\nGG\nG\n").unwrap();
        let pairs: Vec<_> = recs.iter().map(|r| (r.accession.as_str(), r.residues.as_str())).collect();
        assert_eq!(pairs, vec![("A1", "MKF"), ("A2", "GGG")]);
    }

    #[test]
    fn invalid_residue_names_accession_and_offset() {
        match parse(">A1\nMKF1\n") {
            Err(Error::InvalidResidue { accession, residue, offset }) => {
                assert_eq!((accession.as_str(), residue, offset), ("A1", '1', 3));
            }
            other => panic!("unexpected {other:?}"),
        }
        match parse(">A1\nMK\nF1\n") {
            Err(Error::InvalidResidue { offset, .. }) => assert_eq!(offset, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_body_rejected() {
        assert!(matches!(parse(">A1\n>A2\nMK\n"), Err(Error::EmptyBody { accession }) if accession == "A1"));
        assert!(matches!(parse(">A1\n"), Err(Error::EmptyBody { .. })));
    }

    #[test]
    fn duplicate_accession_rejected() {
        assert!(matches!(parse(">A1\nMK\n>A1 again\nGG\n"), Err(Error::DuplicateAccession { .. })));
    }

    #[test]
    fn lower_case_and_crlf_accepted() {
        let recs = parse(">A1 desc\r\nmkf\r\n\r\n").unwrap();
        assert_eq!(recs[0].residues, "MKF");
    }

    #[test]
    fn orphan_body_rejected() {
        assert!(matches!(parse("MKF\n>A1\nG\n"), Err(Error::OrphanSequence { line: 1 })));
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(
            seqs in prop::collection::vec("[ACDEFGHIKLMNPQRSTVWYBJOUXZ*-]{1,150}", 1..8),
            width in 1usize..80,
        ) {
            let records: Vec<RawSequence> = seqs
                .into_iter()
                .enumerate()
                .map(|(i, s)| RawSequence { accession: format!("ACC{i}"), residues: s, source_tag: "main".into() })
                .collect();
            let mut buf = Vec::new();
            write_fasta(&records, &mut buf, width).unwrap();
            let back = parse_fasta(buf.as_slice(), "main").unwrap();
            prop_assert_eq!(back, records);
        }
    }
}
