//! Synthetic corpora whose labels are carried by short residue motifs.
//!
//! Each species owns a few width-3 motifs drawn from `C W H M Y`; the
//! background never uses those letters, so a motif occurrence identifies
//! its species exactly. Drug labels come from a synthetic phase table.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{write_fasta, DrugVirusEntry, RawSequence, SequenceMetadata};
use crate::error::{Error, Result};
use crate::labels::PhaseStatus;
use crate::rng;

pub const MOTIF_LETTERS: &[u8; 5] = b"CWHMY";
pub const BACKGROUND_LETTERS: &[u8; 15] = b"ADEFGIKLNPQRSTV";

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpecies {
    /// Canonical name.
    pub name: String,
    /// Name written to the metadata table (may be an alias).
    pub raw_name: String,
    /// Index of the species whose motifs this one reuses.
    pub motifs_from: Option<usize>,
    pub drugs: Vec<(usize, PhaseStatus)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub species: Vec<SynthSpecies>,
    pub drug_count: usize,
    pub per_species: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub motifs_per_species: usize,
    pub copies: usize,
    pub seed: u64,
}

pub fn drug_name(i: usize) -> String {
    format!("SYN-{:02}", i + 1)
}

impl SynthSpec {
    /// Eight species, sixteen drugs. `SARS-CoV-2` reuses the motifs and the
    /// Phase II+ drugs of `MERS coronavirus`; `Ebola virus` has motifs and
    /// drugs of its own. Some pairs are cell-culture only and so are
    /// negative under V3.
    pub fn standard(seed: u64) -> Self {
        use PhaseStatus::*;
        let sp = |name: &str, raw: &str, from: Option<usize>, drugs: &[(usize, PhaseStatus)]| SynthSpecies {
            name: name.into(),
            raw_name: raw.into(),
            motifs_from: from,
            drugs: drugs.to_vec(),
        };
        SynthSpec {
            species: vec![
                sp("MERS coronavirus", "MERS coronavirus", None, &[(0, PhaseII), (1, PhaseIII), (2, Approved)]),
                sp(
                    "SARS-CoV-2",
                    "Severe acute respiratory syndrome coronavirus 2",
                    Some(0),
                    &[(0, PhaseIII), (1, PhaseII), (2, Approved), (3, CellCulture)],
                ),
                sp("Ebola virus", "Ebola virus", None, &[(13, PhaseII), (14, Approved), (15, PhaseIII)]),
                sp("Zika virus", "Zika virus", None, &[(3, PhaseII), (4, PhaseIV), (5, Approved), (0, CellCulture)]),
                sp("Dengue virus", "Dengue virus", None, &[(3, PhaseIII), (4, PhaseII), (6, Approved), (9, AnimalModel)]),
                sp("Hepatitis C virus", "Hepatitis C virus", None, &[(7, Approved), (8, PhaseII), (9, PhaseIII), (1, PhaseII)]),
                sp("Herpes simplex virus 1", "Human alphaherpesvirus 1", None, &[(10, Approved), (11, PhaseIII), (12, PhaseII), (2, PhaseIV)]),
                sp("Measles virus", "Measles virus", None, &[(5, PhaseII), (8, PhaseIII), (11, Approved), (12, PhaseI)]),
            ],
            drug_count: 16,
            per_species: 400,
            min_len: 120,
            max_len: 500,
            motifs_per_species: 3,
            copies: 2,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub sequences: Vec<RawSequence>,
    pub metadata: Vec<SequenceMetadata>,
    pub drug_table: Vec<DrugVirusEntry>,
    /// Motifs per species, aligned with the spec's species list.
    pub motifs: Vec<Vec<[u8; 3]>>,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    let inserts = spec.motifs_per_species * spec.copies;
    if spec.min_len < inserts * 8 || spec.min_len > spec.max_len {
        return Err(Error::Config(format!("synthetic lengths {}..={} too short for {inserts} motif copies", spec.min_len, spec.max_len)));
    }
    let mut pool: Vec<[u8; 3]> = Vec::new();
    for &a in MOTIF_LETTERS {
        for &b in MOTIF_LETTERS {
            for &c in MOTIF_LETTERS {
                pool.push([a, b, c]);
            }
        }
    }
    pool.shuffle(&mut rng::stream(spec.seed, "synth/motifs"));
    let owners = spec.species.iter().filter(|s| s.motifs_from.is_none()).count();
    if owners * spec.motifs_per_species > pool.len() {
        return Err(Error::Config("not enough distinct motifs".into()));
    }
    let mut fresh = pool.chunks(spec.motifs_per_species);
    let mut motifs: Vec<Vec<[u8; 3]>> = Vec::with_capacity(spec.species.len());
    for s in &spec.species {
        let m = match s.motifs_from {
            Some(i) => motifs.get(i).cloned().ok_or_else(|| Error::Config(format!("{} borrows motifs from a later species", s.name)))?,
            None => fresh.next().expect("counted above").to_vec(),
        };
        motifs.push(m);
    }

    let mut sequences = Vec::new();
    let mut metadata = Vec::new();
    for (si, s) in spec.species.iter().enumerate() {
        let mut r = rng::stream(spec.seed, &format!("synth/sequences/{}", s.name));
        for i in 0..spec.per_species {
            let len = r.gen_range(spec.min_len..=spec.max_len);
            let mut seq: Vec<u8> = (0..len).map(|_| *BACKGROUND_LETTERS.choose(&mut r).unwrap()).collect();
            let mut placed: Vec<[u8; 3]> = motifs[si].iter().copied().cycle().take(inserts).collect();
            placed.shuffle(&mut r);
            let seg = len / inserts;
            for (k, m) in placed.iter().enumerate() {
                let pos = k * seg + r.gen_range(1..seg - 4);
                seq[pos..pos + 3].copy_from_slice(m);
            }
            let accession = format!("SYN{si}_{i:04}");
            sequences.push(RawSequence {
                accession: accession.clone(),
                residues: String::from_utf8(seq).expect("ascii"),
                source_tag: "synthetic".into(),
            });
            metadata.push(SequenceMetadata {
                accession,
                species_raw: s.raw_name.clone(),
                genbank_title: format!("synthetic protein {i}"),
                collection_date: None,
                study_id: None,
            });
        }
    }

    let mut drug_table = Vec::new();
    for s in &spec.species {
        for &(d, p) in &s.drugs {
            if d >= spec.drug_count {
                return Err(Error::Config(format!("drug index {d} outside table of {}", spec.drug_count)));
            }
            drug_table.push(DrugVirusEntry {
                drug: drug_name(d),
                virus: s.name.clone(),
                phases: BTreeSet::from([p]),
            });
        }
    }
    // Every drug appears at least once so the registry has the full width.
    let named: BTreeSet<String> = drug_table.iter().map(|e| e.drug.clone()).collect();
    for d in 0..spec.drug_count {
        if !named.contains(&drug_name(d)) {
            return Err(Error::Config(format!("drug {} has no table entry", drug_name(d))));
        }
    }
    drug_table.sort_by(|a, b| (&a.drug, &a.virus).cmp(&(&b.drug, &b.virus)));
    Ok(SynthCorpus {
        sequences,
        metadata,
        drug_table,
        motifs,
    })
}

pub struct SynthFiles {
    pub fasta: PathBuf,
    pub metadata: PathBuf,
    pub drugvirus: PathBuf,
}

impl SynthCorpus {
    /// Writes `sequences.fasta`, `metadata.csv` and `drugvirus.csv` to `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<SynthFiles> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = SynthFiles {
            fasta: dir.join("sequences.fasta"),
            metadata: dir.join("metadata.csv"),
            drugvirus: dir.join("drugvirus.csv"),
        };
        let mut fasta = Vec::new();
        write_fasta(&self.sequences, &mut fasta, 60)?;
        std::fs::write(&files.fasta, fasta).map_err(|e| Error::io(&files.fasta, e))?;

        let mut meta = csv::Writer::from_writer(Vec::new());
        meta.write_record(["Accession", "Species", "GenBank_Title"])?;
        for m in &self.metadata {
            meta.write_record([&m.accession, &m.species_raw, &m.genbank_title])?;
        }
        let meta = meta.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
        std::fs::write(&files.metadata, meta).map_err(|e| Error::io(&files.metadata, e))?;

        let mut dv = Vec::new();
        writeln!(dv, "Drug,Virus,Phase")?;
        for e in &self.drug_table {
            for p in &e.phases {
                writeln!(dv, "{},{},{}", e.drug, e.virus, p.name())?;
            }
        }
        std::fs::write(&files.drugvirus, dv).map_err(|e| Error::io(&files.drugvirus, e))?;
        Ok(files)
    }
}
