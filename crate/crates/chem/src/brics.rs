//! BRICS retrosynthetic fragmentation.
//!
//! Each environment label is a predicate on an atom; a cleavable bond joins
//! two atoms whose environments form one of the allowed label pairs through a
//! non-ring single (or, for the 7-7 pair, double) bond.

use crate::mol::{Atom, BondOrder, Molecule};
use crate::rings::RingInfo;
use crate::smiles::{parse_smiles, to_canonical_smiles};
use crate::ChemError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Env {
    L1,
    L3,
    L4,
    L5,
    L6,
    L7a,
    L7b,
    L8,
    L9,
    L10,
    L11,
    L12,
    L13,
    L14,
    L15,
    L16,
}

impl Env {
    fn label(self) -> u16 {
        match self {
            Env::L1 => 1,
            Env::L3 => 3,
            Env::L4 => 4,
            Env::L5 => 5,
            Env::L6 => 6,
            Env::L7a | Env::L7b => 7,
            Env::L8 => 8,
            Env::L9 => 9,
            Env::L10 => 10,
            Env::L11 => 11,
            Env::L12 => 12,
            Env::L13 => 13,
            Env::L14 => 14,
            Env::L15 => 15,
            Env::L16 => 16,
        }
    }
}

/// Allowed label pairs in matching priority order. The bool marks the
/// double-bond pair.
const PAIRS: &[(Env, Env, bool)] = {
    use Env::*;
    &[
        (L1, L3, false),
        (L1, L5, false),
        (L1, L10, false),
        (L3, L4, false),
        (L3, L13, false),
        (L3, L14, false),
        (L3, L15, false),
        (L3, L16, false),
        (L4, L5, false),
        (L4, L11, false),
        (L5, L12, false),
        (L5, L14, false),
        (L5, L16, false),
        (L5, L13, false),
        (L5, L15, false),
        (L6, L13, false),
        (L6, L14, false),
        (L6, L15, false),
        (L6, L16, false),
        (L7a, L7b, true),
        (L8, L9, false),
        (L8, L10, false),
        (L8, L13, false),
        (L8, L14, false),
        (L8, L15, false),
        (L8, L16, false),
        (L9, L13, false),
        (L9, L14, false),
        (L9, L15, false),
        (L9, L16, false),
        (L10, L13, false),
        (L10, L14, false),
        (L10, L15, false),
        (L10, L16, false),
        (L11, L13, false),
        (L11, L14, false),
        (L11, L15, false),
        (L11, L16, false),
        (L13, L14, false),
        (L13, L15, false),
        (L13, L16, false),
        (L14, L14, false),
        (L14, L15, false),
        (L14, L16, false),
        (L15, L16, false),
        (L16, L16, false),
    ]
};

/// A cleavable bond with the environment label of each end.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BricsBond {
    pub atoms: (usize, usize),
    pub labels: (u16, u16),
}

struct Ctx<'m> {
    mol: &'m Molecule,
    ring: RingInfo,
}

impl<'m> Ctx<'m> {
    fn atom(&self, a: usize) -> &Atom {
        self.mol.atom(a)
    }

    fn aliphatic(&self, a: usize, elements: &[u8]) -> bool {
        let at = self.atom(a);
        !at.aromatic && elements.contains(&at.element)
    }

    fn aromatic(&self, a: usize, elements: &[u8]) -> bool {
        let at = self.atom(a);
        at.aromatic && elements.contains(&at.element)
    }

    fn any_of(&self, a: usize, elements: &[u8]) -> bool {
        elements.contains(&self.atom(a).element)
    }

    fn order(&self, b: usize) -> BondOrder {
        self.mol.bond(b).order
    }

    fn in_ring(&self, a: usize) -> bool {
        self.ring.atom_in_ring[a]
    }

    fn ring_bond(&self, b: usize) -> bool {
        self.ring.bond_in_ring[b]
    }

    fn deg(&self, a: usize) -> usize {
        self.mol.degree(a)
    }

    fn exists(&self, a: usize, pred: impl Fn(usize, usize) -> bool) -> bool {
        self.mol.neighbors(a).iter().any(|&(w, b)| pred(w, b))
    }

    fn count(&self, a: usize, pred: impl Fn(usize, usize) -> bool) -> usize {
        self.mol.neighbors(a).iter().filter(|&&(w, b)| pred(w, b)).count()
    }

    /// Two distinct neighbours, the first satisfying `p`, the second `q`.
    fn exists_pair(
        &self,
        a: usize,
        p: impl Fn(usize, usize) -> bool,
        q: impl Fn(usize, usize) -> bool,
    ) -> bool {
        let nb = self.mol.neighbors(a);
        nb.iter().any(|&(x, bx)| {
            p(x, bx) && nb.iter().any(|&(y, by)| y != x && q(y, by))
        })
    }

    fn single(&self, b: usize) -> bool {
        self.order(b) == BondOrder::Single
    }

    fn double(&self, b: usize) -> bool {
        self.order(b) == BondOrder::Double
    }

    fn arom_bond(&self, b: usize) -> bool {
        self.order(b) == BondOrder::Aromatic
    }

    fn acyclic_single(&self, b: usize) -> bool {
        self.single(b) && !self.ring_bond(b)
    }

    /// Unspecified bond in a pattern: single or aromatic.
    fn default_bond(&self, b: usize) -> bool {
        self.single(b) || self.arom_bond(b)
    }

    fn has_carbonyl_o(&self, a: usize) -> bool {
        self.exists(a, |w, b| self.double(b) && self.aliphatic(w, &[8]))
    }

    fn matches(&self, a: usize, env: Env) -> bool {
        const C: u8 = 6;
        const N: u8 = 7;
        const O: u8 = 8;
        const S: u8 = 16;
        match env {
            Env::L1 => {
                self.aliphatic(a, &[C])
                    && self.deg(a) == 3
                    && self.exists(a, |w, b| self.default_bond(b) && self.any_of(w, &[0, C, N, O]))
                    && self.has_carbonyl_o(a)
            }
            Env::L3 => {
                self.aliphatic(a, &[O])
                    && self.deg(a) == 2
                    && self.exists(a, |w, b| self.acyclic_single(b) && self.any_of(w, &[0, C, 1]))
            }
            Env::L4 => {
                self.aliphatic(a, &[C])
                    && self.deg(a) != 1
                    && !self.exists(a, |_, b| self.double(b))
                    && self.exists(a, |w, b| self.acyclic_single(b) && self.any_of(w, &[C]))
            }
            Env::L5 => {
                self.aliphatic(a, &[N])
                    && self.deg(a) != 1
                    && !self.exists(a, |_, b| self.double(b))
                    && !self.exists(a, |w, b| {
                        self.single(b) && !self.any_of(w, &[C, S, 0, 1])
                    })
                    && !(self.in_ring(a)
                        && self.exists(a, |w, b| {
                            self.ring_bond(b)
                                && self.aliphatic(w, &[C])
                                && self.in_ring(w)
                                && self.has_carbonyl_o(w)
                        }))
            }
            Env::L6 => {
                self.aliphatic(a, &[C])
                    && self.deg(a) == 3
                    && !self.in_ring(a)
                    && self.has_carbonyl_o(a)
                    && self.exists(a, |w, b| self.acyclic_single(b) && self.any_of(w, &[0, C, N, O]))
            }
            Env::L7a | Env::L7b => {
                self.aliphatic(a, &[C])
                    && matches!(self.deg(a), 2 | 3)
                    && self.exists(a, |w, b| self.single(b) && self.any_of(w, &[C]))
            }
            Env::L8 => {
                self.aliphatic(a, &[C])
                    && !self.in_ring(a)
                    && self.deg(a) != 1
                    && !self.exists(a, |_, b| !self.single(b))
            }
            Env::L9 => {
                let ring_partner =
                    |w: usize, b: usize| self.arom_bond(b) && self.aromatic(w, &[C, N, O, S]);
                self.aromatic(a, &[N])
                    && self.atom(a).charge == 0
                    && self.exists_pair(a, ring_partner, ring_partner)
            }
            Env::L10 => {
                self.aliphatic(a, &[N])
                    && self.in_ring(a)
                    && self.exists_pair(
                        a,
                        |w, b| {
                            self.ring_bond(b) && self.aliphatic(w, &[C]) && self.has_carbonyl_o(w)
                        },
                        |w, b| self.ring_bond(b) && self.aliphatic(w, &[C, N, O, S]),
                    )
            }
            Env::L11 => {
                self.aliphatic(a, &[S])
                    && self.deg(a) == 2
                    && self.exists(a, |w, b| self.acyclic_single(b) && self.any_of(w, &[0, C]))
            }
            Env::L12 => {
                self.aliphatic(a, &[S])
                    && self.deg(a) == 4
                    && self.exists(a, |w, b| self.default_bond(b) && self.any_of(w, &[C, 0]))
                    && self.count(a, |w, b| self.double(b) && self.aliphatic(w, &[O])) >= 2
            }
            Env::L13 => {
                self.aliphatic(a, &[C])
                    && self.exists_pair(
                        a,
                        |w, b| self.single(b) && self.ring_bond(b) && self.aliphatic(w, &[C, N, O, S]),
                        |w, b| self.single(b) && self.ring_bond(b) && self.aliphatic(w, &[N, O, S]),
                    )
            }
            Env::L14 => {
                self.aromatic(a, &[C])
                    && self.exists_pair(
                        a,
                        |w, b| self.arom_bond(b) && self.aromatic(w, &[C, N, O, S]),
                        |w, b| self.arom_bond(b) && self.aromatic(w, &[N, O, S]),
                    )
            }
            Env::L15 => {
                let p = |w: usize, b: usize| {
                    self.single(b) && self.ring_bond(b) && self.aliphatic(w, &[C])
                };
                self.aliphatic(a, &[C]) && self.exists_pair(a, p, p)
            }
            Env::L16 => {
                let p = |w: usize, b: usize| self.arom_bond(b) && self.aromatic(w, &[C]);
                self.aromatic(a, &[C]) && self.exists_pair(a, p, p)
            }
        }
    }

    fn bond_matches(&self, a: usize, b: usize, bond: usize, pair: (Env, Env, bool)) -> bool {
        let (e1, e2, double) = pair;
        if self.ring_bond(bond) {
            return false;
        }
        let order_ok = if double {
            self.double(bond)
        } else {
            self.single(bond)
        };
        order_ok
            && self.matches(a, e1)
            && self.matches(b, e2)
    }
}

/// Finds cleavable bonds. For each bond the first matching label pair in
/// priority order decides the labels.
pub fn find_brics_bonds(mol: &Molecule) -> Vec<BricsBond> {
    let ctx = Ctx {
        mol,
        ring: RingInfo::new(mol),
    };
    let mut done = vec![false; mol.num_bonds()];
    let mut out = Vec::new();
    for &pair in PAIRS {
        // matches ordered by the first pattern atom, as a substructure search
        // over atoms in index order would report them
        let mut hits: Vec<(usize, usize, usize)> = Vec::new();
        for (bidx, bond) in mol.bonds().iter().enumerate() {
            for (a, b) in [(bond.a, bond.b), (bond.b, bond.a)] {
                if ctx.bond_matches(a, b, bidx, pair) {
                    hits.push((a, b, bidx));
                }
            }
        }
        hits.sort_unstable();
        for (a, b, bidx) in hits {
            if done[bidx] {
                continue;
            }
            done[bidx] = true;
            out.push(BricsBond {
                atoms: (a, b),
                labels: (pair.0.label(), pair.1.label()),
            });
        }
    }
    out
}

/// Cuts every cleavable bond, capping each side with a dummy atom whose
/// isotope is the environment label of the atom it is attached to.
pub fn break_brics_bonds(mol: &Molecule) -> Molecule {
    let bonds = find_brics_bonds(mol);
    let mut out = mol.clone();
    for bb in &bonds {
        let (a, b) = bb.atoms;
        let idx = out.bond_between(a, b).expect("bond present");
        let order = out.bond(idx).order;
        out.remove_bond(idx);
        let da = out.add_atom(Atom::dummy(bb.labels.0));
        out.add_bond(a, da, order);
        let db = out.add_atom(Atom::dummy(bb.labels.1));
        out.add_bond(b, db, order);
    }
    out
}

/// Fragments of the broken molecule, ordered by their lowest original atom
/// index. Duplicates are kept.
pub fn brics_fragments(mol: &Molecule) -> Vec<Molecule> {
    let broken = break_brics_bonds(mol);
    broken
        .components()
        .iter()
        .map(|c| broken.subgraph(c))
        .collect()
}

/// Canonical SMILES of every BRICS fragment of `smiles`. A molecule without
/// cleavable bonds yields its own canonical SMILES.
pub fn brics_decompose(smiles: &str) -> Result<Vec<String>, ChemError> {
    let mol = parse_smiles(smiles)?;
    Ok(brics_fragments(&mol)
        .iter()
        .map(to_canonical_smiles)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ethanol_has_no_cut() {
        let m = parse_smiles("CCO").unwrap();
        assert!(find_brics_bonds(&m).is_empty());
        assert_eq!(brics_decompose("OCC").unwrap(), vec!["CCO".to_string()]);
    }

    #[test]
    fn ester_cut_labels() {
        let m = parse_smiles("CC(=O)OC").unwrap();
        let bonds = find_brics_bonds(&m);
        let mut labels: Vec<(u16, u16)> = bonds.iter().map(|b| b.labels).collect();
        labels.sort();
        assert_eq!(labels, vec![(1, 3)]);
    }

    #[test]
    fn ring_bonds_never_cut() {
        let m = parse_smiles("C1CCC(CC1)N1CCOCC1").unwrap();
        let info = RingInfo::new(&m);
        for b in find_brics_bonds(&m) {
            let idx = m.bond_between(b.atoms.0, b.atoms.1).unwrap();
            assert!(!info.bond_in_ring[idx]);
        }
    }
}
