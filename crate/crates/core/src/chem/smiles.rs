//! SMILES reader: organic subset, bracket atoms (isotope, charge, explicit
//! H), branches, ring closures (`0`-`9`, `%nn`) and `.` fragments.
//! Stereo markers are read and dropped with a warning. Aromaticity is taken
//! from lowercase input as-is; no kekulization is attempted.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use super::element::Element;
use super::graph::{Atom, Bond, BondOrder, Molecule, ParseWarning};
use super::rings;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SmilesErrorKind {
    Empty,
    NonAscii,
    UnexpectedCharacter(char),
    UnbalancedParenthesis,
    UnbalancedBracket,
    UnresolvedRingClosure(u16),
    UnknownElement(String),
    UnsupportedBond(char),
    DanglingBond,
    ConflictingRingBond(u16),
    SelfBond,
    DuplicateBond,
    InvalidBracketAtom(String),
    Valence { element: String, valence: u8 },
}

impl fmt::Display for SmilesErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SmilesErrorKind::Empty => write!(f, "empty SMILES"),
            SmilesErrorKind::NonAscii => write!(f, "non-ASCII character"),
            SmilesErrorKind::UnexpectedCharacter(c) => write!(f, "unexpected character '{c}'"),
            SmilesErrorKind::UnbalancedParenthesis => write!(f, "unbalanced parenthesis"),
            SmilesErrorKind::UnbalancedBracket => write!(f, "unbalanced bracket"),
            SmilesErrorKind::UnresolvedRingClosure(n) => write!(f, "unresolved ring closure {n}"),
            SmilesErrorKind::UnknownElement(s) => write!(f, "unknown element '{s}'"),
            SmilesErrorKind::UnsupportedBond(c) => write!(f, "unsupported bond symbol '{c}'"),
            SmilesErrorKind::DanglingBond => write!(f, "bond symbol without a following atom"),
            SmilesErrorKind::ConflictingRingBond(n) => {
                write!(f, "conflicting bond orders on ring closure {n}")
            }
            SmilesErrorKind::SelfBond => write!(f, "ring closure bonds an atom to itself"),
            SmilesErrorKind::DuplicateBond => write!(f, "duplicate bond between the same atoms"),
            SmilesErrorKind::InvalidBracketAtom(s) => write!(f, "invalid bracket atom: {s}"),
            SmilesErrorKind::Valence { element, valence } => {
                write!(f, "valence {valence} not allowed for {element}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at offset {offset}")]
pub struct SmilesError {
    pub offset: usize,
    pub kind: SmilesErrorKind,
}

impl SmilesError {
    fn new(offset: usize, kind: SmilesErrorKind) -> Self {
        SmilesError { offset, kind }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BondSymbol {
    Single,
    Double,
    Triple,
    Aromatic,
    /// `/` or `\`: single bond with stereo information dropped.
    Directional,
}

impl BondSymbol {
    fn order(self) -> BondOrder {
        match self {
            BondSymbol::Single | BondSymbol::Directional => BondOrder::Single,
            BondSymbol::Double => BondOrder::Double,
            BondSymbol::Triple => BondOrder::Triple,
            BondSymbol::Aromatic => BondOrder::Aromatic,
        }
    }
}

struct RawBond {
    a: usize,
    b: usize,
    order: BondOrder,
    /// No bond symbol was written; aromatic-aromatic defaults may be demoted.
    implicit: bool,
}

struct OpenRing {
    atom: usize,
    bond: Option<BondSymbol>,
    offset: usize,
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    /// Whether each atom was written in brackets (no implicit H).
    bracketed: Vec<bool>,
    atom_offsets: Vec<usize>,
    bonds: Vec<RawBond>,
    warnings: Vec<ParseWarning>,
}

/// Parses a SMILES string into a molecular graph with rings perceived and
/// implicit hydrogens assigned.
pub fn parse_smiles(text: &str) -> Result<Molecule, SmilesError> {
    if text.is_empty() {
        return Err(SmilesError::new(0, SmilesErrorKind::Empty));
    }
    if let Some(i) = text.bytes().position(|b| !b.is_ascii()) {
        return Err(SmilesError::new(i, SmilesErrorKind::NonAscii));
    }
    let mut p = Parser {
        text: text.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bracketed: Vec::new(),
        atom_offsets: Vec::new(),
        bonds: Vec::new(),
        warnings: Vec::new(),
    };
    p.parse()?;
    p.finish(text)
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn peek_at(&self, i: usize) -> Option<u8> {
        self.text.get(self.pos + i).copied()
    }

    fn parse(&mut self) -> Result<(), SmilesError> {
        let mut prev: Option<usize> = None;
        let mut pending: Option<(BondSymbol, usize)> = None;
        let mut branches: Vec<(usize, usize)> = Vec::new();
        let mut open_rings: BTreeMap<u16, OpenRing> = BTreeMap::new();

        while let Some(c) = self.peek() {
            let offset = self.pos;
            match c {
                b'(' => {
                    let Some(p) = prev else {
                        return Err(SmilesError::new(offset, SmilesErrorKind::UnexpectedCharacter('(')));
                    };
                    if pending.is_some() {
                        return Err(SmilesError::new(offset, SmilesErrorKind::DanglingBond));
                    }
                    branches.push((p, offset));
                    self.pos += 1;
                }
                b')' => {
                    if pending.is_some() {
                        return Err(SmilesError::new(offset, SmilesErrorKind::DanglingBond));
                    }
                    let Some((p, _)) = branches.pop() else {
                        return Err(SmilesError::new(offset, SmilesErrorKind::UnbalancedParenthesis));
                    };
                    prev = Some(p);
                    self.pos += 1;
                }
                b'.' => {
                    if pending.is_some() {
                        return Err(SmilesError::new(offset, SmilesErrorKind::DanglingBond));
                    }
                    prev = None;
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if pending.is_some() || prev.is_none() {
                        return Err(SmilesError::new(offset, SmilesErrorKind::DanglingBond));
                    }
                    let sym = match c {
                        b'-' => BondSymbol::Single,
                        b'=' => BondSymbol::Double,
                        b'#' => BondSymbol::Triple,
                        b':' => BondSymbol::Aromatic,
                        _ => {
                            self.warnings.push(ParseWarning::StereoDiscarded { offset });
                            BondSymbol::Directional
                        }
                    };
                    pending = Some((sym, offset));
                    self.pos += 1;
                }
                b'$' => {
                    return Err(SmilesError::new(offset, SmilesErrorKind::UnsupportedBond('$')));
                }
                b'0'..=b'9' | b'%' => {
                    let Some(atom) = prev else {
                        return Err(SmilesError::new(offset, SmilesErrorKind::UnexpectedCharacter(c as char)));
                    };
                    let number = self.ring_number()?;
                    let bond = pending.take().map(|(s, _)| s);
                    match open_rings.remove(&number) {
                        Some(open) => {
                            let sym = match (open.bond, bond) {
                                (Some(a), Some(b)) if a.order() != b.order() => {
                                    return Err(SmilesError::new(
                                        offset,
                                        SmilesErrorKind::ConflictingRingBond(number),
                                    ));
                                }
                                (a, b) => a.or(b),
                            };
                            if open.atom == atom {
                                return Err(SmilesError::new(offset, SmilesErrorKind::SelfBond));
                            }
                            self.add_bond(open.atom, atom, sym, offset)?;
                        }
                        None => {
                            open_rings.insert(number, OpenRing { atom, bond, offset });
                        }
                    }
                }
                _ => {
                    let idx = if c == b'[' {
                        self.bracket_atom()?
                    } else {
                        self.organic_atom()?
                    };
                    if let Some(p) = prev {
                        let sym = pending.take().map(|(s, _)| s);
                        self.add_bond(p, idx, sym, offset)?;
                    } else if let Some((_, off)) = pending {
                        return Err(SmilesError::new(off, SmilesErrorKind::DanglingBond));
                    }
                    prev = Some(idx);
                }
            }
        }

        if let Some((_, off)) = pending {
            return Err(SmilesError::new(off, SmilesErrorKind::DanglingBond));
        }
        if let Some(&(_, off)) = branches.first() {
            return Err(SmilesError::new(off, SmilesErrorKind::UnbalancedParenthesis));
        }
        if let Some((n, open)) = open_rings
            .iter()
            .min_by_key(|(_, o)| o.offset)
            .map(|(n, o)| (*n, o))
        {
            return Err(SmilesError::new(open.offset, SmilesErrorKind::UnresolvedRingClosure(n)));
        }
        Ok(())
    }

    fn ring_number(&mut self) -> Result<u16, SmilesError> {
        let offset = self.pos;
        if self.peek() == Some(b'%') {
            let (Some(d1), Some(d2)) = (self.peek_at(1), self.peek_at(2)) else {
                return Err(SmilesError::new(offset, SmilesErrorKind::UnexpectedCharacter('%')));
            };
            if !d1.is_ascii_digit() || !d2.is_ascii_digit() {
                return Err(SmilesError::new(offset, SmilesErrorKind::UnexpectedCharacter('%')));
            }
            self.pos += 3;
            Ok(u16::from(d1 - b'0') * 10 + u16::from(d2 - b'0'))
        } else {
            let d = self.peek().unwrap_or(b'0');
            self.pos += 1;
            Ok(u16::from(d - b'0'))
        }
    }

    fn add_bond(&mut self, a: usize, b: usize, sym: Option<BondSymbol>, offset: usize) -> Result<(), SmilesError> {
        let duplicate = self
            .bonds
            .iter()
            .any(|r| (r.a == a && r.b == b) || (r.a == b && r.b == a));
        if duplicate {
            return Err(SmilesError::new(offset, SmilesErrorKind::DuplicateBond));
        }
        let (order, implicit) = match sym {
            Some(s) => (s.order(), false),
            None if self.atoms[a].aromatic && self.atoms[b].aromatic => (BondOrder::Aromatic, true),
            None => (BondOrder::Single, true),
        };
        self.bonds.push(RawBond { a, b, order, implicit });
        Ok(())
    }

    fn push_atom(&mut self, atom: Atom, bracketed: bool, offset: usize) -> usize {
        let idx = self.atoms.len();
        self.atoms.push(Atom { index: idx, ..atom });
        self.bracketed.push(bracketed);
        self.atom_offsets.push(offset);
        idx
    }

    fn organic_atom(&mut self) -> Result<usize, SmilesError> {
        let offset = self.pos;
        let c = self.peek().unwrap_or(b' ');
        let (symbol, aromatic, len): (&str, bool, usize) = match c {
            b'B' if self.peek_at(1) == Some(b'r') => ("Br", false, 2),
            b'C' if self.peek_at(1) == Some(b'l') => ("Cl", false, 2),
            b'B' => ("B", false, 1),
            b'C' => ("C", false, 1),
            b'N' => ("N", false, 1),
            b'O' => ("O", false, 1),
            b'P' => ("P", false, 1),
            b'S' => ("S", false, 1),
            b'F' => ("F", false, 1),
            b'I' => ("I", false, 1),
            b'b' => ("B", true, 1),
            b'c' => ("C", true, 1),
            b'n' => ("N", true, 1),
            b'o' => ("O", true, 1),
            b'p' => ("P", true, 1),
            b's' => ("S", true, 1),
            b']' => return Err(SmilesError::new(offset, SmilesErrorKind::UnbalancedBracket)),
            c if c.is_ascii_alphabetic() || c == b'*' => {
                let end = (offset + 2).min(self.text.len());
                let guess = String::from_utf8_lossy(&self.text[offset..end]).into_owned();
                let guess = if guess.len() == 2 && guess.as_bytes()[1].is_ascii_lowercase() {
                    guess
                } else {
                    (c as char).to_string()
                };
                return Err(SmilesError::new(offset, SmilesErrorKind::UnknownElement(guess)));
            }
            c => return Err(SmilesError::new(offset, SmilesErrorKind::UnexpectedCharacter(c as char))),
        };
        let element = Element::from_symbol(symbol).expect("organic subset symbol");
        self.pos += len;
        Ok(self.push_atom(
            Atom {
                index: 0,
                element,
                formal_charge: 0,
                explicit_h: 0,
                implicit_h: 0,
                aromatic,
                isotope: None,
            },
            false,
            offset,
        ))
    }

    fn digits(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            None
        } else {
            std::str::from_utf8(&self.text[start..self.pos]).ok()?.parse().ok()
        }
    }

    fn bracket_atom(&mut self) -> Result<usize, SmilesError> {
        let open = self.pos;
        let Some(close_rel) = self.text[open..].iter().position(|&c| c == b']') else {
            return Err(SmilesError::new(open, SmilesErrorKind::UnbalancedBracket));
        };
        let close = open + close_rel;
        if let Some(inner_open) = self.text[open + 1..close].iter().position(|&c| c == b'[') {
            return Err(SmilesError::new(open + 1 + inner_open, SmilesErrorKind::UnbalancedBracket));
        }
        let invalid = |p: &Parser<'_>| {
            SmilesError::new(
                open,
                SmilesErrorKind::InvalidBracketAtom(String::from_utf8_lossy(&p.text[open..=close]).into_owned()),
            )
        };
        self.pos += 1;

        let isotope = match self.digits() {
            Some(v) => Some(u16::try_from(v).map_err(|_| invalid(self))?),
            None => None,
        };

        // Element symbol.
        let sym_offset = self.pos;
        let c0 = self.peek().ok_or_else(|| invalid(self))?;
        let c1 = self.peek_at(1);
        let (element, aromatic) = if c0.is_ascii_uppercase() {
            let two = c1
                .filter(|c| c.is_ascii_lowercase())
                .and_then(|c1| Element::from_symbol(&format!("{}{}", c0 as char, c1 as char)));
            match two {
                Some(e) => {
                    self.pos += 2;
                    (e, false)
                }
                None => {
                    let sym = (c0 as char).to_string();
                    let e = Element::from_symbol(&sym).ok_or_else(|| {
                        SmilesError::new(sym_offset, SmilesErrorKind::UnknownElement(sym.clone()))
                    })?;
                    self.pos += 1;
                    (e, false)
                }
            }
        } else if c0.is_ascii_lowercase() {
            let two: Option<&str> = match (c0, c1) {
                (b's', Some(b'e')) => Some("Se"),
                (b'a', Some(b's')) => Some("As"),
                (b't', Some(b'e')) => Some("Te"),
                _ => None,
            };
            if let Some(sym) = two {
                self.pos += 2;
                (Element::from_symbol(sym).expect("aromatic symbol"), true)
            } else {
                let sym = match c0 {
                    b'b' => "B",
                    b'c' => "C",
                    b'n' => "N",
                    b'o' => "O",
                    b'p' => "P",
                    b's' => "S",
                    _ => {
                        return Err(SmilesError::new(
                            sym_offset,
                            SmilesErrorKind::UnknownElement((c0 as char).to_string()),
                        ))
                    }
                };
                self.pos += 1;
                (Element::from_symbol(sym).expect("aromatic symbol"), true)
            }
        } else if c0 == b'*' {
            return Err(SmilesError::new(sym_offset, SmilesErrorKind::UnknownElement("*".into())));
        } else {
            return Err(invalid(self));
        };

        // Chirality.
        if self.peek() == Some(b'@') {
            self.warnings.push(ParseWarning::StereoDiscarded { offset: self.pos });
            self.pos += 1;
            if self.peek() == Some(b'@') {
                self.pos += 1;
            } else if self.peek().is_some_and(|c| c.is_ascii_uppercase() && c != b'H') {
                // @TH1, @AL2, @SP3, @TB12, @OH25
                self.pos += 2;
                if self.digits().is_none() {
                    return Err(invalid(self));
                }
            }
        }

        let mut explicit_h = 0u8;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            explicit_h = match self.digits() {
                Some(n) => u8::try_from(n).map_err(|_| invalid(self))?,
                None => 1,
            };
        }

        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let s = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            if let Some(n) = self.digits() {
                charge = s * n as i32;
            } else {
                charge = s;
                while self.peek() == Some(sign) {
                    charge += s;
                    self.pos += 1;
                }
            }
        }
        let formal_charge = i8::try_from(charge).map_err(|_| invalid(self))?;
        if !(-15..=15).contains(&formal_charge) {
            return Err(invalid(self));
        }

        if self.peek() == Some(b':') {
            self.warnings.push(ParseWarning::AtomClassDiscarded { offset: self.pos });
            self.pos += 1;
            if self.digits().is_none() {
                return Err(invalid(self));
            }
        }

        if self.pos != close {
            return Err(invalid(self));
        }
        self.pos = close + 1;

        Ok(self.push_atom(
            Atom {
                index: 0,
                element,
                formal_charge,
                explicit_h,
                implicit_h: 0,
                aromatic,
                isotope,
            },
            true,
            open,
        ))
    }

    fn finish(self, text: &str) -> Result<Molecule, SmilesError> {
        let Parser {
            mut atoms,
            bracketed,
            atom_offsets,
            bonds: raw,
            warnings,
            ..
        } = self;

        let mut bonds: Vec<Bond> = raw
            .iter()
            .map(|r| Bond {
                atoms: (r.a, r.b),
                order: r.order,
                in_ring: false,
            })
            .collect();
        let adjacency = Molecule::build_adjacency(atoms.len(), &bonds);
        let mask = rings::ring_bond_mask(atoms.len(), &adjacency, bonds.len());
        for (bond, (raw, in_ring)) in bonds.iter_mut().zip(raw.iter().zip(&mask)) {
            bond.in_ring = *in_ring;
            // Unwritten bond joining two aromatic rings (biaryl) is single.
            if raw.implicit && bond.order == BondOrder::Aromatic && !in_ring {
                bond.order = BondOrder::Single;
            }
        }

        let components = {
            let probe = Molecule {
                atoms: atoms.clone(),
                bonds: bonds.clone(),
                rings: Vec::new(),
                source_smiles: String::new(),
                warnings: Vec::new(),
                adjacency: adjacency.clone(),
            };
            probe.component_count()
        };
        let cyclomatic = (bonds.len() + components).saturating_sub(atoms.len());
        let rings = rings::smallest_rings(atoms.len(), &bonds, &adjacency, &mask, cyclomatic);

        for i in 0..atoms.len() {
            let units: u8 = adjacency[i]
                .iter()
                .map(|(_, bi)| bonds[*bi].order.valence_units())
                .sum();
            let atom = &atoms[i];
            let allowed = atom.element.allowed_valences(atom.formal_charge, atom.aromatic);
            let valence_error = |valence: u8| {
                SmilesError::new(
                    atom_offsets[i],
                    SmilesErrorKind::Valence {
                        element: atom.element.symbol().to_string(),
                        valence,
                    },
                )
            };
            if bracketed[i] {
                let total = units + atom.explicit_h;
                if let Some(allowed) = allowed {
                    if allowed.last().is_none_or(|&max| total > max) {
                        return Err(valence_error(total));
                    }
                }
            } else {
                let allowed = allowed.expect("organic subset has a valence table");
                match allowed.iter().find(|&&v| v >= units) {
                    Some(&v) => atoms[i].implicit_h = v - units,
                    None => return Err(valence_error(units)),
                }
            }
        }

        Ok(Molecule {
            atoms,
            bonds,
            rings,
            source_smiles: text.to_string(),
            warnings,
            adjacency,
        })
    }
}
