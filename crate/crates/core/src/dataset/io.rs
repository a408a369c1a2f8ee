use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use super::LabeledExample;
use crate::error::{Error, Result};
use crate::labels::LabelVersion;
use crate::models::encode::symbol_index;

const FIXED: [&str; 4] = ["accession", "sequence", "virus_name", "genbank_title"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetFile {
    pub version: LabelVersion,
    /// Label column names in slot order.
    pub slots: Vec<String>,
    pub examples: Vec<LabeledExample>,
}

/// Tab-separated: a `# label_version=` line, then accession, sequence,
/// virus name, title and one 0/1 column per label slot.
pub fn write_dataset(file: &DatasetFile, mut w: impl Write) -> Result<()> {
    writeln!(w, "# label_version={}", file.version)?;
    let mut wr = csv::WriterBuilder::new().delimiter(b'\t').from_writer(w);
    let mut header: Vec<&str> = FIXED.to_vec();
    header.extend(file.slots.iter().map(String::as_str));
    wr.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for e in &file.examples {
        if e.labels.len() != file.slots.len() {
            return Err(Error::LabelLength {
                expected: file.slots.len(),
                found: e.labels.len(),
            });
        }
        row.clear();
        row.extend([e.accession.clone(), e.residues.clone(), e.species.clone(), e.genbank_title.clone()]);
        row.extend(e.labels.iter().map(|b| b.to_string()));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_dataset(mut r: impl BufRead) -> Result<DatasetFile> {
    let mut first = String::new();
    r.read_line(&mut first)?;
    let version: LabelVersion = first
        .trim()
        .strip_prefix("# label_version=")
        .ok_or_else(|| Error::Config("dataset file lacks a label_version line".into()))?
        .parse()?;
    let mut rd = csv::ReaderBuilder::new().delimiter(b'\t').from_reader(r);
    let header = rd.headers()?.clone();
    for (i, col) in FIXED.iter().enumerate() {
        if header.get(i) != Some(col) {
            return Err(Error::MissingColumn { column: col.to_string() });
        }
    }
    let slots: Vec<String> = header.iter().skip(FIXED.len()).map(str::to_string).collect();
    let mut shared: HashMap<Vec<u8>, Arc<[u8]>> = HashMap::new();
    let mut examples = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::RowArity {
                row: i + 3,
                expected: header.len(),
                found: rec.len(),
            });
        }
        let residues = rec[1].to_string();
        if let Some(off) = residues.bytes().position(|b| symbol_index(b).is_none()) {
            return Err(Error::InvalidResidue {
                accession: rec[0].to_string(),
                residue: residues[off..].chars().next().unwrap_or('?'),
                offset: off,
            });
        }
        let labels: Vec<u8> = rec
            .iter()
            .skip(FIXED.len())
            .map(|f| match f {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(Error::NonBinaryTarget {
                    value: other.parse().unwrap_or(f64::NAN),
                }),
            })
            .collect::<Result<_>>()?;
        let labels = Arc::clone(shared.entry(labels.clone()).or_insert_with(|| Arc::from(labels)));
        examples.push(LabeledExample {
            accession: rec[0].to_string(),
            residues,
            species: rec[2].to_string(),
            genbank_title: rec[3].to_string(),
            labels,
        });
    }
    Ok(DatasetFile { version, slots, examples })
}
