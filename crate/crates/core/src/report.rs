//! Candidate-drug lists, per-species ranking tables and activation dumps.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledExample;
use crate::error::{Error, Result};
use crate::models::{Encoded, Model};
use crate::tensor::{Container, Tape};
use crate::train::mean_ci;

/// Selection threshold for candidate lists.
pub const DEFAULT_THRESHOLD: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub accession: String,
    pub species: String,
    pub genbank_title: String,
    /// (drug, probability), highest probability first.
    pub drugs: Vec<(String, f64)>,
}

/// Identity columns of a scored sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SequenceId {
    pub accession: String,
    pub species: String,
    pub genbank_title: String,
}

impl From<&LabeledExample> for SequenceId {
    fn from(e: &LabeledExample) -> Self {
        SequenceId {
            accession: e.accession.clone(),
            species: e.species.clone(),
            genbank_title: e.genbank_title.clone(),
        }
    }
}

/// One row per sequence listing every drug with probability ≥ `threshold`.
/// Equal probabilities keep slot order.
pub fn postprocess(ids: &[SequenceId], probs: &[f64], drugs: &[String], threshold: f64) -> Result<Vec<PredictionRow>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("threshold {threshold} outside (0, 1)")));
    }
    let width = drugs.len();
    if probs.len() != ids.len() * width {
        return Err(Error::Shape {
            op: "postprocess",
            lhs: vec![probs.len()],
            rhs: vec![ids.len(), width],
        });
    }
    Ok(ids
        .iter()
        .zip(probs.chunks(width.max(1)))
        .map(|(id, row)| {
            let mut picked: Vec<(String, f64)> = row.iter().enumerate().filter(|(_, &p)| p >= threshold).map(|(j, &p)| (drugs[j].clone(), p)).collect();
            picked.sort_by(|a, b| b.1.total_cmp(&a.1));
            PredictionRow {
                accession: id.accession.clone(),
                species: id.species.clone(),
                genbank_title: id.genbank_title.clone(),
                drugs: picked,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrugSummary {
    pub drug: String,
    pub count: usize,
    pub mean_probability: f64,
    /// 1.96·s/√n; `None` for a single occurrence.
    pub half_width: Option<f64>,
}

/// Count / mean-probability table for rows of one species (runs may be
/// concatenated). Sorted by count, then mean probability, descending.
pub fn summarize(rows: &[PredictionRow], top_k: Option<usize>) -> Result<Vec<DrugSummary>> {
    let first = rows.first().ok_or(Error::EmptyInput("summarize needs at least one prediction row"))?;
    if let Some(other) = rows.iter().find(|r| r.species != first.species) {
        return Err(Error::Config(format!("rows mix species '{}' and '{}'", first.species, other.species)));
    }
    let mut by_drug: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in rows {
        for (d, p) in &r.drugs {
            by_drug.entry(d.as_str()).or_default().push(*p);
        }
    }
    let mut out: Vec<DrugSummary> = by_drug
        .into_iter()
        .map(|(drug, mut ps)| {
            // Sorting first makes the sums independent of row order.
            ps.sort_by(f64::total_cmp);
            let ci = mean_ci(&ps);
            DrugSummary {
                drug: drug.to_string(),
                count: ps.len(),
                mean_probability: ci.mean,
                half_width: ci.half_width,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then(b.mean_probability.total_cmp(&a.mean_probability))
            .then_with(|| a.drug.cmp(&b.drug))
    });
    if let Some(k) = top_k {
        out.truncate(k);
    }
    Ok(out)
}

/// Groups rows by species and summarizes each group.
pub fn summarize_by_species(rows: &[PredictionRow], top_k: Option<usize>) -> Result<BTreeMap<String, Vec<DrugSummary>>> {
    let mut groups: BTreeMap<String, Vec<PredictionRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.species.clone()).or_default().push(r.clone());
    }
    groups.into_iter().map(|(s, g)| Ok((s, summarize(&g, top_k)?))).collect()
}

const PRED_HEADER: [&str; 5] = ["accession", "virus_name", "genbank_title", "antivirals", "probabilities"];

/// Tab-separated rows; drugs and probabilities are `; `-joined lists in
/// matching order.
pub fn write_predictions(rows: &[PredictionRow], w: impl Write) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().delimiter(b'\t').from_writer(w);
    wr.write_record(PRED_HEADER)?;
    for r in rows {
        let names: Vec<&str> = r.drugs.iter().map(|(d, _)| d.as_str()).collect();
        let probs: Vec<String> = r.drugs.iter().map(|(_, p)| p.to_string()).collect();
        wr.write_record([r.accession.as_str(), &r.species, &r.genbank_title, &names.join("; "), &probs.join("; ")])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_predictions(r: impl Read) -> Result<Vec<PredictionRow>> {
    let mut rd = csv::ReaderBuilder::new().delimiter(b'\t').from_reader(r);
    let header = rd.headers()?.clone();
    for col in PRED_HEADER {
        if !header.iter().any(|h| h == col) {
            return Err(Error::MissingColumn { column: col.into() });
        }
    }
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let split = |s: &str| -> Vec<String> {
            if s.is_empty() {
                Vec::new()
            } else {
                s.split("; ").map(str::to_string).collect()
            }
        };
        let names = split(&rec[3]);
        let probs = split(&rec[4])
            .iter()
            .map(|p| p.parse::<f64>().map_err(|_| Error::Config(format!("row {}: bad probability '{p}'", i + 2))))
            .collect::<Result<Vec<_>>>()?;
        if names.len() != probs.len() {
            return Err(Error::RowArity {
                row: i + 2,
                expected: names.len(),
                found: probs.len(),
            });
        }
        out.push(PredictionRow {
            accession: rec[0].to_string(),
            species: rec[1].to_string(),
            genbank_title: rec[2].to_string(),
            drugs: names.into_iter().zip(probs).collect(),
        });
    }
    Ok(out)
}

pub fn write_summary(species: &str, rows: &[DrugSummary], w: impl Write) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().delimiter(b'\t').from_writer(w);
    wr.write_record(["virus_name", "rank", "drug", "count", "mean_probability", "half_width"])?;
    for (i, s) in rows.iter().enumerate() {
        wr.write_record([
            species.to_string(),
            (i + 1).to_string(),
            s.drug.clone(),
            s.count.to_string(),
            format!("{:.3}", s.mean_probability),
            s.half_width.map_or_else(|| "n/a".to_string(), |h| format!("{h:.3}")),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Every named intermediate of one eval-mode forward pass, as a container
/// whose header lists layer names and shapes in order.
pub fn dump_activations(model: &Model, input: &Encoded) -> Result<Container> {
    let mut tape = Tape::new();
    let vars: Vec<_> = model.params().iter().map(|t| tape.constant(t.clone())).collect();
    let (_, taps) = model.forward_traced(&mut tape, &vars, input)?;
    let layers: Vec<serde_json::Value> = taps
        .iter()
        .map(|(name, v)| serde_json::json!({"name": name, "shape": tape.shape(*v)}))
        .collect();
    let mut c = Container::new(serde_json::json!({
        "format": "repurpose-activations",
        "model": model.kind(),
        "layers": layers,
    }));
    for (name, v) in taps {
        c.push(name, tape.value(v).clone());
    }
    Ok(c)
}
