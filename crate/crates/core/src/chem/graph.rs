use serde::{Deserialize, Serialize};

use super::element::Element;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to an atom's valence. Aromatic bonds count one unit;
    /// the aromatic valence table accounts for the delocalised bond.
    pub fn valence_units(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub(crate) fn code(self) -> u64 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub index: usize,
    pub element: Element,
    pub formal_charge: i8,
    /// Hydrogens written inside a bracket atom.
    pub explicit_h: u8,
    /// Hydrogens implied by the default valence of an organic-subset atom.
    pub implicit_h: u8,
    pub aromatic: bool,
    pub isotope: Option<u16>,
}

impl Atom {
    pub fn total_h(&self) -> u8 {
        self.explicit_h + self.implicit_h
    }

    pub fn is_heavy(&self) -> bool {
        !self.element.is_hydrogen()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bond {
    pub atoms: (usize, usize),
    pub order: BondOrder,
    pub in_ring: bool,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.atoms.0 == atom {
            self.atoms.1
        } else {
            self.atoms.0
        }
    }

    pub fn contains(&self, atom: usize) -> bool {
        self.atoms.0 == atom || self.atoms.1 == atom
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParseWarning {
    /// Directional bond or chirality marker that was dropped.
    StereoDiscarded { offset: usize },
    /// Bracket atom class (`:n`) that was dropped.
    AtomClassDiscarded { offset: usize },
}

/// Molecular graph parsed from SMILES. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Molecule {
    pub(crate) atoms: Vec<Atom>,
    pub(crate) bonds: Vec<Bond>,
    pub(crate) rings: Vec<Vec<usize>>,
    pub(crate) source_smiles: String,
    pub(crate) warnings: Vec<ParseWarning>,
    #[serde(skip)]
    pub(crate) adjacency: Vec<Vec<(usize, usize)>>,
}

impl Molecule {
    pub(crate) fn build_adjacency(atoms: usize, bonds: &[Bond]) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); atoms];
        for (bi, b) in bonds.iter().enumerate() {
            adj[b.atoms.0].push((b.atoms.1, bi));
            adj[b.atoms.1].push((b.atoms.0, bi));
        }
        adj
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    /// Smallest set of smallest rings, each as an ordered atom cycle.
    pub fn rings(&self) -> &[Vec<usize>] {
        &self.rings
    }

    pub fn source_smiles(&self) -> &str {
        &self.source_smiles
    }

    pub fn warnings(&self) -> &[ParseWarning] {
        &self.warnings
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| a.is_heavy()).count()
    }

    pub fn net_charge(&self) -> i32 {
        self.atoms.iter().map(|a| i32::from(a.formal_charge)).sum()
    }

    /// `(neighbor, bond index)` pairs for an atom.
    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn bond(&self, index: usize) -> &Bond {
        &self.bonds[index]
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adjacency[a]
            .iter()
            .find(|(n, _)| *n == b)
            .map(|(_, bi)| &self.bonds[*bi])
    }

    /// Number of bonded neighbors that are not hydrogen atoms.
    pub fn heavy_degree(&self, atom: usize) -> usize {
        self.adjacency[atom]
            .iter()
            .filter(|(n, _)| self.atoms[*n].is_heavy())
            .count()
    }

    /// Hydrogens on an atom, counting implicit, bracket and bonded H atoms.
    pub fn hydrogen_count(&self, atom: usize) -> usize {
        let bonded = self.adjacency[atom]
            .iter()
            .filter(|(n, _)| self.atoms[*n].element.is_hydrogen())
            .count();
        usize::from(self.atoms[atom].total_h()) + bonded
    }

    pub fn valence_units(&self, atom: usize) -> u8 {
        self.adjacency[atom]
            .iter()
            .map(|(_, bi)| self.bonds[*bi].order.valence_units())
            .sum()
    }

    /// Number of connected fragments.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.atoms.len()];
        let mut count = 0;
        for start in 0..self.atoms.len() {
            if seen[start] {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(a) = stack.pop() {
                for &(n, _) in &self.adjacency[a] {
                    if !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        count
    }

    /// Rebuilds the skipped adjacency after deserialization.
    pub fn rebuild_index(&mut self) {
        self.adjacency = Self::build_adjacency(self.atoms.len(), &self.bonds);
    }
}
