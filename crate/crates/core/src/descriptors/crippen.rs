//! Atom-contribution logP.
//!
//! Every atom, hydrogens included, is typed by the first row of
//! `data/crippen.tsv` whose pattern matches it, and the contributions are
//! summed. Patterns are a tree-shaped subset of SMARTS: bracket atoms with
//! `#n`, element, `A`/`a`, `H<n>`, `X<n>` and charge primitives combined by
//! `!`, `&`, `,` and `;`, bare organic atoms, bonds `- = # : ~` and branches.
//! Ring closures and recursive SMARTS are not needed by the table.

use std::sync::OnceLock;

use crate::chem::{BondOrder, Element, Molecule};

const TABLE_TEXT: &str = include_str!("../../data/crippen.tsv");

#[derive(Debug, Clone, PartialEq)]
enum Prim {
    Any,
    AtomicNum(u8),
    Element { z: u8, aromatic: bool },
    Aliphatic,
    Aromatic,
    HCount(u8),
    Connectivity(u8),
    Charge(i8),
}

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Prim(Prim),
    Not(Box<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BondQuery {
    SingleOrAromatic,
    Single,
    Double,
    Triple,
    Aromatic,
    Any,
}

impl BondQuery {
    fn matches(self, order: BondOrder) -> bool {
        match self {
            BondQuery::SingleOrAromatic => matches!(order, BondOrder::Single | BondOrder::Aromatic),
            BondQuery::Single => order == BondOrder::Single,
            BondQuery::Double => order == BondOrder::Double,
            BondQuery::Triple => order == BondOrder::Triple,
            BondQuery::Aromatic => order == BondOrder::Aromatic,
            BondQuery::Any => true,
        }
    }
}

#[derive(Debug, Clone)]
struct PatternAtom {
    expr: Expr,
    /// Parent pattern atom and the bond to it; `None` for the root.
    parent: Option<(usize, BondQuery)>,
}

/// Pattern atoms in depth-first order; atom 0 is the typed atom.
#[derive(Debug, Clone)]
struct Pattern {
    atoms: Vec<PatternAtom>,
}

#[derive(Debug, Clone)]
pub(crate) struct ContributionRow {
    pub(crate) type_id: String,
    pattern: Pattern,
    pub(crate) contribution: f64,
}

#[derive(Debug)]
struct PatternError(String);

struct PatternParser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl PatternParser<'_> {
    fn err(&self, what: &str) -> PatternError {
        PatternError(format!(
            "{what} at {} in {}",
            self.pos,
            String::from_utf8_lossy(self.s)
        ))
    }

    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn number(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        (self.pos > start).then(|| {
            std::str::from_utf8(&self.s[start..self.pos])
                .unwrap()
                .parse()
                .unwrap()
        })
    }

    fn parse(mut self) -> Result<Pattern, PatternError> {
        let mut atoms: Vec<PatternAtom> = Vec::new();
        let mut prev: Option<usize> = None;
        let mut stack: Vec<usize> = Vec::new();
        let mut bond: Option<BondQuery> = None;
        while let Some(c) = self.peek() {
            match c {
                b'(' => {
                    stack.push(prev.ok_or_else(|| self.err("branch before atom"))?);
                    self.pos += 1;
                }
                b')' => {
                    prev = Some(stack.pop().ok_or_else(|| self.err("unbalanced ')'"))?);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'~' => {
                    bond = Some(match c {
                        b'-' => BondQuery::Single,
                        b'=' => BondQuery::Double,
                        b'#' => BondQuery::Triple,
                        b':' => BondQuery::Aromatic,
                        _ => BondQuery::Any,
                    });
                    self.pos += 1;
                }
                _ => {
                    let expr = if c == b'[' {
                        self.pos += 1;
                        let e = self.low_and()?;
                        if self.peek() != Some(b']') {
                            return Err(self.err("expected ']'"));
                        }
                        self.pos += 1;
                        e
                    } else {
                        self.bare_atom()?
                    };
                    let parent = prev.map(|p| (p, bond.take().unwrap_or(BondQuery::SingleOrAromatic)));
                    if prev.is_none() && !atoms.is_empty() {
                        return Err(self.err("disconnected pattern"));
                    }
                    atoms.push(PatternAtom { expr, parent });
                    prev = Some(atoms.len() - 1);
                }
            }
        }
        if atoms.is_empty() || !stack.is_empty() {
            return Err(self.err("incomplete pattern"));
        }
        Ok(Pattern { atoms })
    }

    fn bare_atom(&mut self) -> Result<Expr, PatternError> {
        let c = self.peek().ok_or_else(|| self.err("expected atom"))?;
        let two = self.s.get(self.pos..self.pos + 2);
        let prim = match (c, two) {
            (_, Some(b"Cl")) => {
                self.pos += 1;
                Prim::Element { z: 17, aromatic: false }
            }
            (_, Some(b"Br")) => {
                self.pos += 1;
                Prim::Element { z: 35, aromatic: false }
            }
            (b'A', _) => Prim::Aliphatic,
            (b'a', _) => Prim::Aromatic,
            (b'*', _) => Prim::Any,
            _ => self.element_letter(c)?,
        };
        self.pos += 1;
        Ok(Expr::Prim(prim))
    }

    fn element_letter(&self, c: u8) -> Result<Prim, PatternError> {
        let (sym, aromatic) = if c.is_ascii_lowercase() {
            ((c.to_ascii_uppercase() as char).to_string(), true)
        } else {
            ((c as char).to_string(), false)
        };
        let e = Element::from_symbol(&sym).ok_or_else(|| self.err("unknown element"))?;
        Ok(Prim::Element {
            z: e.atomic_number(),
            aromatic,
        })
    }

    fn low_and(&mut self) -> Result<Expr, PatternError> {
        let mut parts = vec![self.or()?];
        while self.peek() == Some(b';') {
            self.pos += 1;
            parts.push(self.or()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Expr::And(parts) })
    }

    fn or(&mut self) -> Result<Expr, PatternError> {
        let mut parts = vec![self.high_and()?];
        while self.peek() == Some(b',') {
            self.pos += 1;
            parts.push(self.high_and()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Expr::Or(parts) })
    }

    fn high_and(&mut self) -> Result<Expr, PatternError> {
        let mut parts = vec![self.unary()?];
        loop {
            match self.peek() {
                Some(b'&') => {
                    self.pos += 1;
                    parts.push(self.unary()?);
                }
                Some(b';' | b',' | b']') | None => break,
                Some(_) => parts.push(self.unary()?),
            }
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Expr::And(parts) })
    }

    fn unary(&mut self) -> Result<Expr, PatternError> {
        if self.peek() == Some(b'!') {
            self.pos += 1;
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        Ok(Expr::Prim(self.primitive()?))
    }

    fn primitive(&mut self) -> Result<Prim, PatternError> {
        let c = self.peek().ok_or_else(|| self.err("expected primitive"))?;
        match c {
            b'#' => {
                self.pos += 1;
                let n = self.number().ok_or_else(|| self.err("expected atomic number"))?;
                Ok(Prim::AtomicNum(n as u8))
            }
            b'*' => {
                self.pos += 1;
                Ok(Prim::Any)
            }
            b'A' => {
                self.pos += 1;
                Ok(Prim::Aliphatic)
            }
            b'a' => {
                self.pos += 1;
                Ok(Prim::Aromatic)
            }
            b'H' => {
                self.pos += 1;
                Ok(Prim::HCount(self.number().unwrap_or(1) as u8))
            }
            b'X' => {
                self.pos += 1;
                Ok(Prim::Connectivity(self.number().unwrap_or(1) as u8))
            }
            b'+' | b'-' => {
                let sign: i8 = if c == b'+' { 1 } else { -1 };
                self.pos += 1;
                if let Some(n) = self.number() {
                    return Ok(Prim::Charge(sign * n as i8));
                }
                let mut charge = sign;
                while self.peek() == Some(c) {
                    charge += sign;
                    self.pos += 1;
                }
                Ok(Prim::Charge(charge))
            }
            c if c.is_ascii_uppercase() => {
                if let Some(&n) = self.s.get(self.pos + 1) {
                    if n.is_ascii_lowercase() {
                        let sym = format!("{}{}", c as char, n as char);
                        if let Some(e) = Element::from_symbol(&sym) {
                            self.pos += 2;
                            return Ok(Prim::Element {
                                z: e.atomic_number(),
                                aromatic: false,
                            });
                        }
                    }
                }
                let p = self.element_letter(c)?;
                self.pos += 1;
                Ok(p)
            }
            c if c.is_ascii_lowercase() => {
                let p = self.element_letter(c)?;
                self.pos += 1;
                Ok(p)
            }
            _ => Err(self.err("unsupported primitive")),
        }
    }
}

fn parse_table(text: &str) -> Result<Vec<ContributionRow>, PatternError> {
    let mut rows = Vec::new();
    for line in text.lines() {
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(id), Some(smarts), Some(value)) = (cols.next(), cols.next(), cols.next()) else {
            return Err(PatternError(format!("malformed row: {line}")));
        };
        let contribution: f64 = value
            .trim()
            .parse()
            .map_err(|_| PatternError(format!("bad contribution in row: {line}")))?;
        let pattern = PatternParser {
            s: smarts.trim().as_bytes(),
            pos: 0,
        }
        .parse()?;
        rows.push(ContributionRow {
            type_id: id.trim().to_string(),
            pattern,
            contribution,
        });
    }
    Ok(rows)
}

pub(crate) fn table() -> &'static [ContributionRow] {
    static TABLE: OnceLock<Vec<ContributionRow>> = OnceLock::new();
    TABLE.get_or_init(|| parse_table(TABLE_TEXT).unwrap_or_else(|e| panic!("crippen table: {}", e.0)))
}

/// Hydrogen-expanded view of a molecule used for typing.
struct Node {
    z: u8,
    aromatic: bool,
    charge: i8,
    h_count: u8,
    neighbors: Vec<(usize, BondOrder)>,
    /// Heavy atom this node belongs to (itself, or the H's parent).
    owner: usize,
}

fn expand(mol: &Molecule) -> Vec<Node> {
    let mut nodes: Vec<Node> = mol
        .atoms()
        .iter()
        .map(|a| Node {
            z: a.element.atomic_number(),
            aromatic: a.aromatic,
            charge: a.formal_charge,
            h_count: 0,
            neighbors: Vec::new(),
            owner: a.index,
        })
        .collect();
    for b in mol.bonds() {
        let (x, y) = b.atoms;
        nodes[x].neighbors.push((y, b.order));
        nodes[y].neighbors.push((x, b.order));
    }
    for a in mol.atoms() {
        for _ in 0..a.total_h() {
            let h = nodes.len();
            nodes.push(Node {
                z: 1,
                aromatic: false,
                charge: 0,
                h_count: 0,
                neighbors: vec![(a.index, BondOrder::Single)],
                owner: a.index,
            });
            nodes[a.index].neighbors.push((h, BondOrder::Single));
        }
    }
    for i in 0..nodes.len() {
        let h = nodes[i].neighbors.iter().filter(|(n, _)| nodes[*n].z == 1).count();
        nodes[i].h_count = h as u8;
    }
    nodes
}

fn eval(expr: &Expr, node: &Node) -> bool {
    match expr {
        Expr::Prim(p) => match *p {
            Prim::Any => true,
            Prim::AtomicNum(z) => node.z == z,
            Prim::Element { z, aromatic } => node.z == z && node.aromatic == aromatic,
            Prim::Aliphatic => !node.aromatic,
            Prim::Aromatic => node.aromatic,
            Prim::HCount(n) => node.h_count == n,
            Prim::Connectivity(n) => node.neighbors.len() == n as usize,
            Prim::Charge(c) => node.charge == c,
        },
        Expr::Not(e) => !eval(e, node),
        Expr::And(es) => es.iter().all(|e| eval(e, node)),
        Expr::Or(es) => es.iter().any(|e| eval(e, node)),
    }
}

fn embed(pattern: &Pattern, nodes: &[Node], mapping: &mut Vec<usize>) -> bool {
    let k = mapping.len();
    if k == pattern.atoms.len() {
        return true;
    }
    let patom = &pattern.atoms[k];
    let (parent, bond) = patom.parent.expect("non-root pattern atom has a parent");
    let anchor = mapping[parent];
    for &(candidate, order) in &nodes[anchor].neighbors {
        if mapping.contains(&candidate) || !bond.matches(order) || !eval(&patom.expr, &nodes[candidate]) {
            continue;
        }
        mapping.push(candidate);
        if embed(pattern, nodes, mapping) {
            return true;
        }
        mapping.pop();
    }
    false
}

fn matches_at(pattern: &Pattern, nodes: &[Node], root: usize) -> bool {
    if !eval(&pattern.atoms[0].expr, &nodes[root]) {
        return false;
    }
    let mut mapping = vec![root];
    embed(pattern, nodes, &mut mapping)
}

/// Outcome of the contribution sum.
#[derive(Debug, Clone, PartialEq)]
pub struct LogP {
    pub value: f64,
    /// Heavy atoms (or hydrogen owners) typed only by a wildcard class, or
    /// by no class at all.
    pub fallback_atoms: Vec<usize>,
}

/// Type id of every atom of the hydrogen-expanded molecule: heavy atoms
/// first in molecule order, then hydrogens grouped by owner.
pub fn atom_types(mol: &Molecule) -> Vec<Option<&'static str>> {
    let nodes = expand(mol);
    let rows = table();
    (0..nodes.len())
        .map(|i| {
            rows.iter()
                .find(|r| matches_at(&r.pattern, &nodes, i))
                .map(|r| r.type_id.as_str())
        })
        .collect()
}

fn is_wildcard(type_id: &str) -> bool {
    matches!(type_id, "CS" | "HS" | "NS" | "OS")
}

pub fn logp(mol: &Molecule) -> LogP {
    let nodes = expand(mol);
    let rows = table();
    let mut value = 0.0;
    let mut fallback_atoms = Vec::new();
    for i in 0..nodes.len() {
        match rows.iter().find(|r| matches_at(&r.pattern, &nodes, i)) {
            Some(row) => {
                value += row.contribution;
                if is_wildcard(&row.type_id) {
                    fallback_atoms.push(nodes[i].owner);
                }
            }
            None => fallback_atoms.push(nodes[i].owner),
        }
    }
    fallback_atoms.sort_unstable();
    fallback_atoms.dedup();
    if !fallback_atoms.is_empty() {
        log::warn!(
            "logP: {} atom(s) of {} fell back to wildcard contributions",
            fallback_atoms.len(),
            mol.source_smiles()
        );
    }
    LogP { value, fallback_atoms }
}

#[cfg(test)]
pub(crate) fn contribution_of(type_id: &str) -> Option<f64> {
    table().iter().find(|r| r.type_id == type_id).map(|r| r.contribution)
}
