//! The five molecular properties and their computed fallbacks.
//!
//! Counting conventions used throughout the repo:
//!
//! * **HBD**: N or O atoms carrying at least one hydrogen (donor atoms, not
//!   donor hydrogens).
//! * **HBA**: every N and O, except neutral amide N (N singly bonded to a
//!   carbon that carries a C=O), positively charged N, and aromatic
//!   pyrrole-type N (three connections counting hydrogens).
//! * **Rotatable bonds**: single, non-ring bonds between two heavy atoms of
//!   heavy degree >= 2, excluding the amide C-N bond.
//! * **Molecular weight**: standard atomic weights of all atoms plus all
//!   hydrogens; a bracket isotope contributes its mass number instead.
//! * **logP**: atom-contribution estimate (see [`crippen`]).

pub mod crippen;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chem::{BondOrder, Element, Molecule};

pub use crippen::LogP;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PropertyKind {
    #[serde(rename = "hba")]
    HBondAcceptorCount,
    #[serde(rename = "hbd")]
    HBondDonorCount,
    #[serde(rename = "rotatable")]
    RotatableBondCount,
    #[serde(rename = "logp")]
    LogP,
    #[serde(rename = "mw")]
    MolecularWeight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Integer,
    Decimal,
}

impl PropertyKind {
    pub const ALL: [PropertyKind; 5] = [
        PropertyKind::HBondAcceptorCount,
        PropertyKind::HBondDonorCount,
        PropertyKind::RotatableBondCount,
        PropertyKind::LogP,
        PropertyKind::MolecularWeight,
    ];

    /// Label used when a property is named in generated text.
    pub fn display_name(self) -> &'static str {
        match self {
            PropertyKind::HBondAcceptorCount => "Hydrogen Bond Acceptor Count",
            PropertyKind::HBondDonorCount => "Hydrogen Bond Donor Count",
            PropertyKind::RotatableBondCount => "Rotatable Bond Count",
            PropertyKind::LogP => "Octanol-water Partition Coefficient",
            PropertyKind::MolecularWeight => "Molecular Weight",
        }
    }

    /// Column name in CSV input and key name in JSONL input.
    pub fn key(self) -> &'static str {
        match self {
            PropertyKind::HBondAcceptorCount => "hba",
            PropertyKind::HBondDonorCount => "hbd",
            PropertyKind::RotatableBondCount => "rotatable",
            PropertyKind::LogP => "logp",
            PropertyKind::MolecularWeight => "mw",
        }
    }

    pub fn value_kind(self) -> ValueKind {
        match self {
            PropertyKind::LogP | PropertyKind::MolecularWeight => ValueKind::Decimal,
            _ => ValueKind::Integer,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<PropertyKind> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for PropertyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for PropertyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PropertyKind::ALL
            .into_iter()
            .find(|k| k.key() == s || k.display_name() == s)
            .ok_or_else(|| format!("unknown property '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Database,
    Computed,
}

/// A property value with where it came from. Database values keep their
/// source text so rendering reproduces the stored precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyValue {
    pub kind: PropertyKind,
    pub value: f64,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_text: Option<String>,
}

impl PropertyValue {
    pub fn from_database(kind: PropertyKind, value: f64, text: impl Into<String>) -> Self {
        PropertyValue {
            kind,
            value,
            provenance: Provenance::Database,
            source_text: Some(text.into()),
        }
    }

    pub fn computed(kind: PropertyKind, value: f64) -> Self {
        PropertyValue {
            kind,
            value,
            provenance: Provenance::Computed,
            source_text: None,
        }
    }

    /// Text used when the value is written into generated data.
    pub fn render(&self) -> String {
        crate::render::render_property(self)
    }
}

pub fn hbd_count(mol: &Molecule) -> usize {
    (0..mol.atom_count())
        .filter(|&i| {
            let a = &mol.atoms()[i];
            (a.element == Element::N || a.element == Element::O) && mol.hydrogen_count(i) > 0
        })
        .count()
}

/// Carbon bearing a C=O double bond.
fn is_carbonyl_carbon(mol: &Molecule, atom: usize) -> bool {
    mol.atoms()[atom].element == Element::C
        && mol.neighbors(atom).iter().any(|&(n, bi)| {
            mol.bond(bi).order == BondOrder::Double && mol.atoms()[n].element == Element::O
        })
}

fn is_amide_nitrogen(mol: &Molecule, atom: usize) -> bool {
    let a = &mol.atoms()[atom];
    a.element == Element::N
        && a.formal_charge == 0
        && !a.aromatic
        && mol
            .neighbors(atom)
            .iter()
            .any(|&(n, bi)| mol.bond(bi).order == BondOrder::Single && is_carbonyl_carbon(mol, n))
}

fn is_pyrrole_type_nitrogen(mol: &Molecule, atom: usize) -> bool {
    let a = &mol.atoms()[atom];
    a.element == Element::N && a.aromatic && mol.neighbors(atom).len() + usize::from(a.total_h()) == 3
}

pub fn hba_count(mol: &Molecule) -> usize {
    (0..mol.atom_count())
        .filter(|&i| {
            let a = &mol.atoms()[i];
            if a.element == Element::O {
                return true;
            }
            a.element == Element::N
                && a.formal_charge <= 0
                && !is_amide_nitrogen(mol, i)
                && !is_pyrrole_type_nitrogen(mol, i)
        })
        .count()
}

pub fn rotatable_bond_count(mol: &Molecule) -> usize {
    mol.bonds()
        .iter()
        .filter(|b| {
            let (x, y) = b.atoms;
            if b.order != BondOrder::Single || b.in_ring {
                return false;
            }
            if !mol.atoms()[x].is_heavy() || !mol.atoms()[y].is_heavy() {
                return false;
            }
            if mol.heavy_degree(x) < 2 || mol.heavy_degree(y) < 2 {
                return false;
            }
            let amide = |c: usize, n: usize| {
                mol.atoms()[n].element == Element::N && is_carbonyl_carbon(mol, c)
            };
            !(amide(x, y) || amide(y, x))
        })
        .count()
}

pub fn molecular_weight(mol: &Molecule) -> f64 {
    let h = Element::H.atomic_weight();
    mol.atoms()
        .iter()
        .map(|a| {
            let own = match a.isotope {
                Some(mass) => f64::from(mass),
                None => a.element.atomic_weight(),
            };
            own + f64::from(a.total_h()) * h
        })
        .sum()
}

pub fn logp(mol: &Molecule) -> LogP {
    crippen::logp(mol)
}

/// Computes one property; integer kinds come back as whole numbers.
pub fn compute(kind: PropertyKind, mol: &Molecule) -> f64 {
    match kind {
        PropertyKind::HBondAcceptorCount => hba_count(mol) as f64,
        PropertyKind::HBondDonorCount => hbd_count(mol) as f64,
        PropertyKind::RotatableBondCount => rotatable_bond_count(mol) as f64,
        PropertyKind::LogP => logp(mol).value,
        PropertyKind::MolecularWeight => molecular_weight(mol),
    }
}
