use std::collections::BTreeMap;

use crate::aromaticity;
use crate::element;
use crate::kekulize::{kekulize, needs_pi};
use crate::mol::{Atom, BondOrder, Molecule};
use crate::rings::RingInfo;
use crate::ChemError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BondToken {
    Single,
    Double,
    Triple,
    Quadruple,
    Aromatic,
    // directional single bonds; stereo is not retained
    Up,
    Down,
}

impl BondToken {
    fn order(self) -> BondOrder {
        match self {
            BondToken::Single | BondToken::Up | BondToken::Down => BondOrder::Single,
            BondToken::Double => BondOrder::Double,
            BondToken::Triple => BondOrder::Triple,
            BondToken::Quadruple => BondOrder::Quadruple,
            BondToken::Aromatic => BondOrder::Aromatic,
        }
    }
}

struct Parser<'s> {
    src: &'s str,
    bytes: &'s [u8],
    pos: usize,
    mol: Molecule,
    /// Per atom: hydrogen count is fixed (bracket atom).
    bracket: Vec<bool>,
    /// Per atom: hydrogens given explicitly (bracket count or folded `[H]`).
    explicit_h: Vec<u8>,
    rings: BTreeMap<u32, (usize, Option<BondToken>)>,
}

/// Parses a SMILES string into a sanitised molecule: hydrogens resolved,
/// aromaticity perceived, stereo discarded.
pub fn parse_smiles(smiles: &str) -> Result<Molecule, ChemError> {
    let mut p = Parser {
        src: smiles,
        bytes: smiles.as_bytes(),
        pos: 0,
        mol: Molecule::new(),
        bracket: Vec::new(),
        explicit_h: Vec::new(),
        rings: BTreeMap::new(),
    };
    p.parse_graph()?;
    p.sanitize()?;
    Ok(p.mol)
}

impl<'s> Parser<'s> {
    fn err(&self, reason: impl Into<String>) -> ChemError {
        ChemError::InvalidSmiles {
            smiles: self.src.to_string(),
            reason: reason.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn parse_graph(&mut self) -> Result<(), ChemError> {
        if self.bytes.is_empty() {
            return Err(self.err("empty string"));
        }
        let mut prev: Option<usize> = None;
        let mut pending: Option<BondToken> = None;
        let mut branches: Vec<Option<usize>> = Vec::new();
        // true once a dot is seen and before the next atom
        let mut after_dot = false;

        while let Some(c) = self.peek() {
            match c {
                b'(' => {
                    if prev.is_none() || pending.is_some() {
                        return Err(self.err(format!("unexpected '(' at {}", self.pos)));
                    }
                    branches.push(prev);
                    self.pos += 1;
                }
                b')' => {
                    if pending.is_some() {
                        return Err(self.err(format!("dangling bond before ')' at {}", self.pos)));
                    }
                    prev = branches
                        .pop()
                        .ok_or_else(|| self.err(format!("unbalanced ')' at {}", self.pos)))?;
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b'$' | b':' | b'/' | b'\\' => {
                    if prev.is_none() || pending.is_some() {
                        return Err(self.err(format!("misplaced bond at {}", self.pos)));
                    }
                    pending = Some(match c {
                        b'-' => BondToken::Single,
                        b'=' => BondToken::Double,
                        b'#' => BondToken::Triple,
                        b'$' => BondToken::Quadruple,
                        b':' => BondToken::Aromatic,
                        b'/' => BondToken::Up,
                        _ => BondToken::Down,
                    });
                    self.pos += 1;
                }
                b'.' => {
                    if prev.is_none() || pending.is_some() || after_dot {
                        return Err(self.err(format!("misplaced '.' at {}", self.pos)));
                    }
                    prev = None;
                    after_dot = true;
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => {
                    let atom = prev.ok_or_else(|| {
                        self.err(format!("ring bond without atom at {}", self.pos))
                    })?;
                    let label = self.ring_label()?;
                    self.ring_bond(atom, label, pending.take())?;
                }
                _ => {
                    let idx = self.parse_atom()?;
                    if let Some(p) = prev {
                        let order = match pending.take() {
                            Some(tok) => tok.order(),
                            None => self.implicit_order(p, idx),
                        };
                        self.mol.add_bond(p, idx, order);
                    } else if pending.is_some() {
                        return Err(self.err("bond without preceding atom"));
                    }
                    prev = Some(idx);
                    after_dot = false;
                }
            }
        }
        if pending.is_some() {
            return Err(self.err("string ends with a bond"));
        }
        if after_dot {
            return Err(self.err("string ends with '.'"));
        }
        if !branches.is_empty() {
            return Err(self.err("unclosed branch"));
        }
        if let Some((label, _)) = self.rings.iter().next() {
            return Err(self.err(format!("unclosed ring {label}")));
        }
        Ok(())
    }

    fn implicit_order(&self, a: usize, b: usize) -> BondOrder {
        if self.mol.atom(a).aromatic && self.mol.atom(b).aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn ring_label(&mut self) -> Result<u32, ChemError> {
        if self.peek() == Some(b'%') {
            let digits = self.bytes.get(self.pos + 1..self.pos + 3);
            match digits {
                Some(d) if d.iter().all(u8::is_ascii_digit) => {
                    self.pos += 3;
                    Ok(((d[0] - b'0') * 10 + (d[1] - b'0')) as u32)
                }
                _ => Err(self.err(format!("bad ring label at {}", self.pos))),
            }
        } else {
            let d = self.bytes[self.pos] - b'0';
            self.pos += 1;
            Ok(d as u32)
        }
    }

    fn ring_bond(
        &mut self,
        atom: usize,
        label: u32,
        tok: Option<BondToken>,
    ) -> Result<(), ChemError> {
        match self.rings.remove(&label) {
            None => {
                self.rings.insert(label, (atom, tok));
            }
            Some((open, open_tok)) => {
                let order = match (open_tok, tok) {
                    (Some(a), Some(b)) if a.order() != b.order() => {
                        return Err(self.err(format!("conflicting ring bond {label}")));
                    }
                    (Some(a), _) | (None, Some(a)) => a.order(),
                    (None, None) => self.implicit_order(open, atom),
                };
                if self.mol.add_bond(open, atom, order).is_none() {
                    return Err(self.err(format!("ring bond {label} duplicates a bond")));
                }
            }
        }
        Ok(())
    }

    fn parse_atom(&mut self) -> Result<usize, ChemError> {
        let c = self.bytes[self.pos];
        if c == b'[' {
            return self.parse_bracket_atom();
        }
        let two = self.bytes.get(self.pos..self.pos + 2);
        let (element, aromatic, len) = match (c, two) {
            (b'C', Some(b"Cl")) => (element::CHLORINE, false, 2),
            (b'B', Some(b"Br")) => (element::BROMINE, false, 2),
            (b'B', _) => (element::BORON, false, 1),
            (b'C', _) => (element::CARBON, false, 1),
            (b'N', _) => (element::NITROGEN, false, 1),
            (b'O', _) => (element::OXYGEN, false, 1),
            (b'P', _) => (element::PHOSPHORUS, false, 1),
            (b'S', _) => (element::SULFUR, false, 1),
            (b'F', _) => (element::FLUORINE, false, 1),
            (b'I', _) => (element::IODINE, false, 1),
            (b'b', _) => (element::BORON, true, 1),
            (b'c', _) => (element::CARBON, true, 1),
            (b'n', _) => (element::NITROGEN, true, 1),
            (b'o', _) => (element::OXYGEN, true, 1),
            (b'p', _) => (element::PHOSPHORUS, true, 1),
            (b's', _) => (element::SULFUR, true, 1),
            (b'*', _) => (element::DUMMY, false, 1),
            _ => {
                return Err(self.err(format!(
                    "unexpected character {:?} at {}",
                    c as char, self.pos
                )))
            }
        };
        self.pos += len;
        let mut atom = Atom::new(element);
        atom.aromatic = aromatic;
        Ok(self.push_atom(atom, element == element::DUMMY, 0))
    }

    fn push_atom(&mut self, atom: Atom, bracket: bool, hydrogens: u8) -> usize {
        self.bracket.push(bracket);
        self.explicit_h.push(hydrogens);
        self.mol.add_atom(atom)
    }

    fn parse_bracket_atom(&mut self) -> Result<usize, ChemError> {
        let start = self.pos;
        self.pos += 1;
        let close = self.src[self.pos..]
            .find(']')
            .map(|i| self.pos + i)
            .ok_or_else(|| self.err(format!("unclosed bracket atom at {start}")))?;
        let body = &self.bytes[self.pos..close];
        let mut i = 0;

        let mut isotope = 0u32;
        while i < body.len() && body[i].is_ascii_digit() {
            isotope = isotope * 10 + (body[i] - b'0') as u32;
            if isotope > u16::MAX as u32 {
                return Err(self.err("isotope out of range"));
            }
            i += 1;
        }

        let (element, aromatic, len) = self
            .bracket_symbol(&body[i..])
            .ok_or_else(|| self.err(format!("unknown element in bracket atom at {start}")))?;
        i += len;

        // chirality: @, @@, @TH1, @AL2, @SP3, @TB12, @OH27
        if i < body.len() && body[i] == b'@' {
            i += 1;
            if i < body.len() && body[i] == b'@' {
                i += 1;
            } else if i + 1 < body.len() && body[i].is_ascii_uppercase() && body[i + 1].is_ascii_uppercase() && body[i] != b'H' {
                i += 2;
                while i < body.len() && body[i].is_ascii_digit() {
                    i += 1;
                }
            }
        }

        let mut hydrogens = 0u8;
        if i < body.len() && body[i] == b'H' {
            i += 1;
            hydrogens = 1;
            if i < body.len() && body[i].is_ascii_digit() {
                hydrogens = body[i] - b'0';
                i += 1;
            }
        }

        let mut charge: i32 = 0;
        if i < body.len() && (body[i] == b'+' || body[i] == b'-') {
            let sign = if body[i] == b'+' { 1 } else { -1 };
            let sym = body[i];
            i += 1;
            if i < body.len() && body[i].is_ascii_digit() {
                let mut mag = 0i32;
                while i < body.len() && body[i].is_ascii_digit() {
                    mag = mag * 10 + (body[i] - b'0') as i32;
                    i += 1;
                }
                charge = sign * mag;
            } else {
                charge = sign;
                while i < body.len() && body[i] == sym {
                    charge += sign;
                    i += 1;
                }
            }
        }
        if !(-15..=15).contains(&charge) {
            return Err(self.err("charge out of range"));
        }

        if i < body.len() && body[i] == b':' {
            i += 1;
            let digits_start = i;
            while i < body.len() && body[i].is_ascii_digit() {
                i += 1;
            }
            if i == digits_start {
                return Err(self.err("empty atom class"));
            }
        }
        if i != body.len() {
            return Err(self.err(format!("malformed bracket atom at {start}")));
        }
        self.pos = close + 1;

        let mut atom = Atom::new(element);
        atom.isotope = isotope as u16;
        atom.charge = charge as i8;
        atom.aromatic = aromatic;
        Ok(self.push_atom(atom, true, hydrogens))
    }

    fn bracket_symbol(&self, s: &[u8]) -> Option<(u8, bool, usize)> {
        let first = *s.first()?;
        if first == b'*' {
            return Some((element::DUMMY, false, 1));
        }
        if first.is_ascii_lowercase() {
            for (sym, len) in [("se", 2), ("as", 2), ("te", 2), ("b", 1), ("c", 1), ("n", 1), ("o", 1), ("p", 1), ("s", 1)] {
                if s.starts_with(sym.as_bytes()) {
                    let mut up = sym.to_string();
                    up[..1].make_ascii_uppercase();
                    return Some((element::from_symbol(&up)?, true, len));
                }
            }
            return None;
        }
        if !first.is_ascii_uppercase() {
            return None;
        }
        if let Some(&second) = s.get(1) {
            if second.is_ascii_lowercase() {
                let sym = std::str::from_utf8(&s[..2]).ok()?;
                if let Some(z) = element::from_symbol(sym) {
                    return Some((z, false, 2));
                }
            }
        }
        let sym = std::str::from_utf8(&s[..1]).ok()?;
        element::from_symbol(sym).map(|z| (z, false, 1))
    }

    fn sanitize(&mut self) -> Result<(), ChemError> {
        self.fold_explicit_hydrogens();

        // aromatic bonds must sit in rings; acyclic ones between aromatic
        // atoms (biaryl links written without '-') are single
        let info = RingInfo::new(&self.mol);
        for b in 0..self.mol.num_bonds() {
            if self.mol.bond(b).order == BondOrder::Aromatic && !info.bond_in_ring[b] {
                self.mol.set_bond_order(b, BondOrder::Single);
            }
        }
        for a in 0..self.mol.num_atoms() {
            if self.mol.atom(a).aromatic && !info.atom_in_ring[a] {
                return Err(self.err(format!("non-ring atom {a} marked aromatic")));
            }
        }

        let pi: Vec<bool> = (0..self.mol.num_atoms())
            .map(|a| self.mol.atom(a).aromatic && needs_pi(&self.mol, a, self.explicit_h[a]))
            .collect();
        kekulize(&mut self.mol, &pi).map_err(|reason| self.err(reason))?;

        for a in 0..self.mol.num_atoms() {
            let used = self.mol.sigma_valence(a) + self.explicit_h[a];
            let atom = self.mol.atom(a);
            let allowed = element::charged_valences(atom.element, atom.charge);
            let hydrogens = if self.bracket[a] || allowed.is_empty() {
                self.explicit_h[a]
            } else {
                match allowed.iter().find(|v| **v >= used) {
                    Some(v) => v - used + self.explicit_h[a],
                    None => {
                        return Err(self.err(format!(
                            "valence {used} too high for {} at atom {a}",
                            atom.symbol()
                        )))
                    }
                }
            };
            if let Some(max) = allowed.last() {
                if self.mol.sigma_valence(a) + hydrogens > *max && atom.element != element::DUMMY {
                    return Err(self.err(format!(
                        "valence too high for {} at atom {a}",
                        atom.symbol()
                    )));
                }
            }
            self.mol.atom_mut(a).hydrogens = hydrogens;
        }

        aromaticity::perceive(&mut self.mol);
        Ok(())
    }

    /// Removes plain `[H]` atoms bonded to one heavy atom, recording them as
    /// explicit hydrogens on that atom.
    fn fold_explicit_hydrogens(&mut self) {
        let mut doomed = Vec::new();
        for a in 0..self.mol.num_atoms() {
            let atom = self.mol.atom(a);
            if atom.element != element::HYDROGEN
                || atom.isotope != 0
                || atom.charge != 0
                || self.explicit_h[a] != 0
                || self.mol.degree(a) != 1
            {
                continue;
            }
            let (heavy, bond) = self.mol.neighbors(a)[0];
            if self.mol.atom(heavy).element == element::HYDROGEN
                || self.mol.bond(bond).order != BondOrder::Single
            {
                continue;
            }
            self.explicit_h[heavy] += 1;
            doomed.push(a);
        }
        if doomed.is_empty() {
            return;
        }
        let keep: Vec<usize> = (0..self.mol.num_atoms())
            .filter(|a| !doomed.contains(a))
            .collect();
        self.bracket = keep.iter().map(|&a| self.bracket[a]).collect();
        self.explicit_h = keep.iter().map(|&a| self.explicit_h[a]).collect();
        self.mol.remove_atoms(&doomed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hs(smi: &str) -> Vec<u8> {
        parse_smiles(smi)
            .unwrap()
            .atoms()
            .iter()
            .map(|a| a.hydrogens)
            .collect()
    }

    #[test]
    fn implicit_hydrogens() {
        assert_eq!(hs("C"), vec![4]);
        assert_eq!(hs("CCO"), vec![3, 2, 1]);
        assert_eq!(hs("C=O"), vec![2, 0]);
        assert_eq!(hs("c1ccccc1"), vec![1; 6]);
        assert_eq!(hs("c1cc[nH]c1"), vec![1, 1, 1, 1, 1]);
        assert_eq!(hs("[NH4+]"), vec![4]);
        assert_eq!(hs("CS(=O)(=O)C"), vec![3, 0, 0, 0, 3]);
        assert_eq!(hs("[H]OC([H])([H])C"), vec![1, 2, 3]);
    }

    #[test]
    fn bracket_fields() {
        let m = parse_smiles("[13CH3:2][O-].[Na+]").unwrap();
        assert_eq!(m.atom(0).isotope, 13);
        assert_eq!(m.atom(0).hydrogens, 3);
        assert_eq!(m.atom(1).charge, -1);
        assert_eq!(m.atom(2).charge, 1);
        assert_eq!(m.components().len(), 2);
        let d = parse_smiles("[16*]c1ccccc1").unwrap();
        assert_eq!(d.atom(0).element, element::DUMMY);
        assert_eq!(d.atom(0).isotope, 16);
    }

    #[test]
    fn stereo_is_accepted_and_dropped() {
        let a = parse_smiles("C[C@@H](N)C(=O)O").unwrap();
        let b = parse_smiles("CC(N)C(=O)O").unwrap();
        assert_eq!(a, b);
        assert!(parse_smiles("F/C=C/F").is_ok());
    }

    #[test]
    fn malformed_inputs() {
        for bad in [
            "", "C1CC", "C(C", "C)C", "C==C", "C.", ".C", "[C", "c1cccc1", "Xy", "C(=)C",
            "CC(C)(C)(C)(C)C", "c", "C%1C",
        ] {
            assert!(parse_smiles(bad).is_err(), "{bad:?} should fail");
        }
    }

    #[test]
    fn ring_closure_bond_orders() {
        let m = parse_smiles("C1CCCCC=1").unwrap();
        assert_eq!(
            m.bonds().iter().filter(|b| b.order == BondOrder::Double).count(),
            1
        );
        assert!(parse_smiles("C=1CCCCC#1").is_err());
        let big = parse_smiles("C%10CC%10").unwrap();
        assert_eq!(big.num_bonds(), 3);
    }
}
