//! Residue alphabet, character tokenizer and one-hot encoder.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// The 28 accepted residue symbols, in token order: the 20 standard amino
/// acids, the extended codes B J O U X Z, stop `*` and gap `-`.
pub const SYMBOLS: &[u8; 28] = b"ACDEFGHIKLMNPQRSTVWYBJOUXZ*-";

/// Number of residue symbols.
pub const ALPHABET_SIZE: usize = 28;

/// Token vocabulary size including the padding id 0.
pub const VOCAB_SIZE: usize = ALPHABET_SIZE + 1;

pub const PAD_ID: usize = 0;

const fn build_lookup() -> [u8; 256] {
    let mut table = [u8::MAX; 256];
    let mut i = 0;
    while i < SYMBOLS.len() {
        let c = SYMBOLS[i];
        table[c as usize] = i as u8;
        if c.is_ascii_uppercase() {
            table[c.to_ascii_lowercase() as usize] = i as u8;
        }
        i += 1;
    }
    table
}

static LOOKUP: [u8; 256] = build_lookup();

/// Column index (0..28) of a residue, accepting lower case.
pub fn symbol_index(c: u8) -> Option<usize> {
    match LOOKUP[c as usize] {
        u8::MAX => None,
        i => Some(i as usize),
    }
}

pub fn symbol(index: usize) -> Option<char> {
    SYMBOLS.get(index).map(|&b| b as char)
}

fn check(residues: &str) -> Result<()> {
    match residues.bytes().position(|b| symbol_index(b).is_none()) {
        None => Ok(()),
        Some(offset) => Err(Error::InvalidResidue {
            accession: String::new(),
            residue: residues[offset..].chars().next().unwrap_or('?'),
            offset,
        }),
    }
}

/// Token ids (1..=28) for the first `max_len` residues, right-padded with 0.
pub fn tokenize_pad(residues: &str, max_len: usize) -> Result<Vec<usize>> {
    check(residues)?;
    let mut ids = vec![PAD_ID; max_len];
    for (slot, b) in ids.iter_mut().zip(residues.bytes()) {
        *slot = symbol_index(b).expect("checked") + 1;
    }
    Ok(ids)
}

/// `max_len × 28` one-hot matrix; rows past the sequence end are zero.
pub fn one_hot(residues: &str, max_len: usize) -> Result<Tensor> {
    check(residues)?;
    let mut data = vec![0.0; max_len * ALPHABET_SIZE];
    for (row, b) in residues.bytes().take(max_len).enumerate() {
        data[row * ALPHABET_SIZE + symbol_index(b).expect("checked")] = 1.0;
    }
    Tensor::new(vec![max_len, ALPHABET_SIZE], data)
}
