//! SMILES reading and writing.

mod parser;
mod writer;

pub use parser::parse_smiles;
pub use writer::write_smiles;

use crate::canon::canonical_ranks;
use crate::mol::Molecule;
use crate::ChemError;

/// Canonical SMILES of a molecule: independent of the input atom order.
pub fn to_canonical_smiles(mol: &Molecule) -> String {
    write_smiles(mol, &canonical_ranks(mol))
}

/// Parses and re-emits a SMILES string in canonical form.
pub fn canonicalize(smiles: &str) -> Result<String, ChemError> {
    parse_smiles(smiles).map(|m| to_canonical_smiles(&m))
}
