//! Source-file parsing, species normalization and the sequence/metadata join.

mod fasta;
mod merge;
mod species;
mod tables;

pub use fasta::{parse_fasta, write_fasta, RawSequence};
pub use merge::{merge, read_merged, write_merged, MergeReport, MergedRecord};
pub use species::{normalize_species, SpeciesAliasTable};
pub use tables::{parse_drugvirus, parse_metadata, virus_list, DrugVirusEntry, SequenceMetadata};
