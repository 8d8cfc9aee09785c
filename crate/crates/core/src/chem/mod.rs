//! Molecular graph substrate: elements, SMILES parsing, ring perception.

mod element;
mod graph;
mod rings;
mod smiles;

pub use element::Element;
pub use graph::{Atom, Bond, BondOrder, Molecule, ParseWarning};
pub use smiles::{parse_smiles, SmilesError, SmilesErrorKind};
