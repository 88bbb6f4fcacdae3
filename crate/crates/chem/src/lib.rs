//! Small-molecule toolkit: SMILES I/O, aromaticity, canonical ordering,
//! BRICS fragmentation, 2D depiction coordinates and 3D conformers.

pub mod aromaticity;
pub mod brics;
pub mod canon;
pub mod conformer;
pub mod element;
mod kekulize;
pub mod layout;
pub mod mol;
pub mod rings;
pub mod smiles;

pub use brics::{brics_decompose, BricsBond};
pub use mol::{Atom, Bond, BondOrder, Molecule};
pub use smiles::{canonicalize, parse_smiles, to_canonical_smiles, write_smiles};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChemError {
    #[error("invalid SMILES {smiles:?}: {reason}")]
    InvalidSmiles { smiles: String, reason: String },
    #[error("conformer generation failed: {0}")]
    Embedding(String),
}
