//! Periodic table snapshot: symbols, standard atomic weights and the
//! permissive allowed-valence lists used by the SMILES valence check.
//!
//! Weights are conventional standard atomic weights rounded to three
//! decimals; radioactive elements carry the mass number of their most
//! stable isotope. The table is fixed at build time and never fetched.

use serde::{Deserialize, Serialize};
use std::fmt;

/// (symbol, standard atomic weight), indexed by atomic number - 1.
const TABLE: [(&str, f64); 118] = [
    ("H", 1.008),
    ("He", 4.003),
    ("Li", 6.941),
    ("Be", 9.012),
    ("B", 10.811),
    ("C", 12.011),
    ("N", 14.007),
    ("O", 15.999),
    ("F", 18.998),
    ("Ne", 20.180),
    ("Na", 22.990),
    ("Mg", 24.305),
    ("Al", 26.982),
    ("Si", 28.086),
    ("P", 30.974),
    ("S", 32.065),
    ("Cl", 35.453),
    ("Ar", 39.948),
    ("K", 39.098),
    ("Ca", 40.078),
    ("Sc", 44.956),
    ("Ti", 47.867),
    ("V", 50.942),
    ("Cr", 51.996),
    ("Mn", 54.938),
    ("Fe", 55.845),
    ("Co", 58.933),
    ("Ni", 58.693),
    ("Cu", 63.546),
    ("Zn", 65.380),
    ("Ga", 69.723),
    ("Ge", 72.630),
    ("As", 74.922),
    ("Se", 78.960),
    ("Br", 79.904),
    ("Kr", 83.798),
    ("Rb", 85.468),
    ("Sr", 87.620),
    ("Y", 88.906),
    ("Zr", 91.224),
    ("Nb", 92.906),
    ("Mo", 95.960),
    ("Tc", 98.0),
    ("Ru", 101.070),
    ("Rh", 102.906),
    ("Pd", 106.420),
    ("Ag", 107.868),
    ("Cd", 112.411),
    ("In", 114.818),
    ("Sn", 118.710),
    ("Sb", 121.760),
    ("Te", 127.600),
    ("I", 126.904),
    ("Xe", 131.293),
    ("Cs", 132.905),
    ("Ba", 137.327),
    ("La", 138.905),
    ("Ce", 140.116),
    ("Pr", 140.908),
    ("Nd", 144.242),
    ("Pm", 145.0),
    ("Sm", 150.360),
    ("Eu", 151.964),
    ("Gd", 157.250),
    ("Tb", 158.925),
    ("Dy", 162.500),
    ("Ho", 164.930),
    ("Er", 167.259),
    ("Tm", 168.934),
    ("Yb", 173.054),
    ("Lu", 174.967),
    ("Hf", 178.490),
    ("Ta", 180.948),
    ("W", 183.840),
    ("Re", 186.207),
    ("Os", 190.230),
    ("Ir", 192.217),
    ("Pt", 195.084),
    ("Au", 196.967),
    ("Hg", 200.590),
    ("Tl", 204.383),
    ("Pb", 207.200),
    ("Bi", 208.980),
    ("Po", 209.0),
    ("At", 210.0),
    ("Rn", 222.0),
    ("Fr", 223.0),
    ("Ra", 226.0),
    ("Ac", 227.0),
    ("Th", 232.038),
    ("Pa", 231.036),
    ("U", 238.029),
    ("Np", 237.0),
    ("Pu", 244.0),
    ("Am", 243.0),
    ("Cm", 247.0),
    ("Bk", 247.0),
    ("Cf", 251.0),
    ("Es", 252.0),
    ("Fm", 257.0),
    ("Md", 258.0),
    ("No", 259.0),
    ("Lr", 262.0),
    ("Rf", 267.0),
    ("Db", 268.0),
    ("Sg", 271.0),
    ("Bh", 272.0),
    ("Hs", 270.0),
    ("Mt", 276.0),
    ("Ds", 281.0),
    ("Rg", 280.0),
    ("Cn", 285.0),
    ("Nh", 284.0),
    ("Fl", 289.0),
    ("Mc", 288.0),
    ("Lv", 293.0),
    ("Ts", 294.0),
    ("Og", 294.0),
];

/// A chemical element, stored as its atomic number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Element(u8);

impl Element {
    pub const H: Element = Element(1);
    pub const B: Element = Element(5);
    pub const C: Element = Element(6);
    pub const N: Element = Element(7);
    pub const O: Element = Element(8);
    pub const F: Element = Element(9);
    pub const P: Element = Element(15);
    pub const S: Element = Element(16);
    pub const CL: Element = Element(17);
    pub const BR: Element = Element(35);
    pub const I: Element = Element(53);

    pub fn from_atomic_number(z: u8) -> Option<Element> {
        (1..=118).contains(&z).then_some(Element(z))
    }

    /// Looks up a properly capitalised symbol ("C", "Cl", "Na").
    pub fn from_symbol(symbol: &str) -> Option<Element> {
        TABLE
            .iter()
            .position(|(s, _)| *s == symbol)
            .map(|i| Element(i as u8 + 1))
    }

    pub fn atomic_number(self) -> u8 {
        self.0
    }

    pub fn symbol(self) -> &'static str {
        TABLE[self.0 as usize - 1].0
    }

    pub fn atomic_weight(self) -> f64 {
        TABLE[self.0 as usize - 1].1
    }

    pub fn is_hydrogen(self) -> bool {
        self.0 == 1
    }

    /// Neutral allowed valences, or `None` for elements the valence check
    /// does not cover (metals, noble gases).
    fn neutral_valences(self) -> Option<&'static [u8]> {
        Some(match self.0 {
            1 => &[1],
            5 | 13 => &[3],
            6 | 14 => &[4],
            7 | 15 | 33 => &[3, 5],
            8 => &[2],
            16 | 34 | 52 => &[2, 4, 6],
            9 => &[1],
            17 | 35 | 53 => &[1, 3, 5, 7],
            _ => return None,
        })
    }

    /// Allowed total valences for this element at a formal charge, with
    /// aromatic bonds counted as one unit each. Aromatic atoms also accept
    /// one unit less than the aliphatic valence (the shared pi bond).
    pub fn allowed_valences(self, charge: i8, aromatic: bool) -> Option<Vec<u8>> {
        let base = self.neutral_valences()?;
        let charge = i16::from(charge);
        let mut out: Vec<u8> = Vec::with_capacity(base.len() * 2);
        for &v in base {
            let v = i16::from(v);
            let shifted = match self.0 {
                1 | 6 | 14 => v - charge.abs(),
                5 | 13 => v - charge,
                _ => v + charge,
            };
            let candidates = if aromatic {
                [shifted - 1, shifted]
            } else {
                [shifted, shifted]
            };
            for c in candidates {
                if (0..=u8::MAX as i16).contains(&c) {
                    out.push(c as u8);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        Some(out)
    }

    /// Elements that may be written outside brackets.
    pub fn in_organic_subset(self) -> bool {
        matches!(self.0, 5 | 6 | 7 | 8 | 9 | 15 | 16 | 17 | 35 | 53)
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbols_round_trip() {
        for z in 1..=118u8 {
            let e = Element::from_atomic_number(z).unwrap();
            assert_eq!(Element::from_symbol(e.symbol()), Some(e));
        }
        assert_eq!(Element::from_symbol("Xx"), None);
        assert_eq!(Element::from_symbol("cl"), None);
    }

    #[test]
    fn charged_valences() {
        assert_eq!(Element::N.allowed_valences(1, false).unwrap(), vec![4, 6]);
        assert_eq!(Element::O.allowed_valences(-1, false).unwrap(), vec![1]);
        assert_eq!(Element::C.allowed_valences(-1, false).unwrap(), vec![3]);
        assert_eq!(Element::B.allowed_valences(-1, false).unwrap(), vec![4]);
        assert_eq!(Element::CL.allowed_valences(-1, false).unwrap(), vec![0, 2, 4, 6]);
        assert_eq!(Element::C.allowed_valences(0, true).unwrap(), vec![3, 4]);
        assert!(Element::from_symbol("Na").unwrap().allowed_valences(1, false).is_none());
    }
}
