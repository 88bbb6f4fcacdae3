//! Hückel aromaticity perception over SSSR rings and small fused ring
//! combinations.

use crate::element;
use crate::mol::{BondOrder, Molecule};
use crate::rings::RingInfo;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Donor {
    Vacant,
    One,
    Two,
    /// Wildcard atoms adapt to whatever makes the ring aromatic.
    Any,
}

impl Donor {
    fn electrons(self) -> u32 {
        match self {
            Donor::Vacant | Donor::Any => 0,
            Donor::One => 1,
            Donor::Two => 2,
        }
    }
}

const MAX_FUSED_COMBINATION: usize = 3;

/// Clears and re-derives aromatic flags on atoms and bonds. The molecule
/// must be in Kekulé form (no aromatic bonds) with hydrogens assigned.
pub fn perceive(mol: &mut Molecule) {
    for a in 0..mol.num_atoms() {
        mol.atom_mut(a).aromatic = false;
    }
    let info = RingInfo::new(mol);
    let donors: Vec<Option<Donor>> = (0..mol.num_atoms())
        .map(|a| donor_type(mol, &info, a))
        .collect();

    let ring_bonds: Vec<Vec<usize>> = (0..info.rings.len())
        .map(|r| info.ring_bonds(mol, r))
        .collect();
    let eligible: Vec<usize> = (0..info.rings.len())
        .filter(|&r| info.rings[r].iter().all(|a| donors[*a].is_some()))
        .collect();

    let mut arom_bond = vec![false; mol.num_bonds()];
    let mut arom_ring = vec![false; info.rings.len()];
    for &r in &eligible {
        if huckel(info.rings[r].iter().map(|a| donors[*a].unwrap())) {
            arom_ring[r] = true;
            for &b in &ring_bonds[r] {
                arom_bond[b] = true;
            }
        }
    }

    // Fused systems: try connected combinations of rings sharing bonds, and
    // count electrons over the envelope.
    for size in 2..=MAX_FUSED_COMBINATION.min(eligible.len()) {
        for combo in combinations(&eligible, size) {
            if combo.iter().all(|r| arom_ring[*r]) || !fused_connected(&combo, &ring_bonds) {
                continue;
            }
            let mut count = vec![0usize; mol.num_bonds()];
            for &r in &combo {
                for &b in &ring_bonds[r] {
                    count[b] += 1;
                }
            }
            let envelope: Vec<usize> = (0..mol.num_bonds()).filter(|b| count[*b] == 1).collect();
            let mut atoms: Vec<usize> = combo
                .iter()
                .flat_map(|r| info.rings[*r].iter().copied())
                .collect();
            atoms.sort_unstable();
            atoms.dedup();
            // all union atoms must lie on the envelope
            let on_env = |a: usize| {
                envelope
                    .iter()
                    .any(|b| mol.bond(*b).a == a || mol.bond(*b).b == a)
            };
            if !atoms.iter().all(|a| on_env(*a)) {
                continue;
            }
            if huckel(atoms.iter().map(|a| donors[*a].unwrap())) {
                for &b in &envelope {
                    arom_bond[b] = true;
                }
            }
        }
    }

    for b in 0..mol.num_bonds() {
        if arom_bond[b] {
            let (x, y) = (mol.bond(b).a, mol.bond(b).b);
            mol.atom_mut(x).aromatic = true;
            mol.atom_mut(y).aromatic = true;
            mol.set_bond_order(b, BondOrder::Aromatic);
        }
    }
}

fn huckel(donors: impl Iterator<Item = Donor>) -> bool {
    let mut total = 0;
    let mut wild = 0;
    for d in donors {
        if d == Donor::Any {
            wild += 1;
        }
        total += d.electrons();
    }
    // each wildcard may contribute 0..=2 electrons
    (0..=2 * wild).any(|extra| {
        let e = total + extra;
        e >= 2 && (e - 2) % 4 == 0
    })
}

fn fused_connected(combo: &[usize], ring_bonds: &[Vec<usize>]) -> bool {
    let mut reached = vec![combo[0]];
    let mut changed = true;
    while changed {
        changed = false;
        for &r in combo {
            if reached.contains(&r) {
                continue;
            }
            let touches = reached
                .iter()
                .any(|q| ring_bonds[*q].iter().any(|b| ring_bonds[r].contains(b)));
            if touches {
                reached.push(r);
                changed = true;
            }
        }
    }
    reached.len() == combo.len()
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > items.len() {
        return out;
    }
    loop {
        out.push(idx.iter().map(|i| items[*i]).collect());
        let mut i = k;
        while i > 0 {
            i -= 1;
            if idx[i] != i + items.len() - k {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
            if i == 0 {
                return out;
            }
        }
    }
}

fn donor_type(mol: &Molecule, info: &RingInfo, a: usize) -> Option<Donor> {
    let atom = mol.atom(a);
    if !info.atom_in_ring[a] {
        return None;
    }
    if atom.element == element::DUMMY {
        return Some(Donor::Any);
    }
    if !matches!(atom.element, 5 | 6 | 7 | 8 | 15 | 16 | 33 | 34 | 52) {
        return None;
    }
    let degree = mol.degree(a) as i32 + atom.hydrogens as i32;
    if degree > 3 {
        return None;
    }
    let multiple: Vec<(usize, usize)> = mol
        .neighbors(a)
        .iter()
        .copied()
        .filter(|(_, b)| mol.bond(*b).order.is_multiple())
        .collect();
    if multiple.len() > 1 {
        return None;
    }
    let default_valence = element::valences(atom.element)[0] as i32;
    let lone = (element::outer_electrons(atom.element) as i32 - default_valence - atom.charge as i32).max(0);
    let mut nelec = default_valence - degree + lone;
    let unsaturation = mol.sigma_valence(a) as i32 - mol.degree(a) as i32;
    if nelec > 1 && unsaturation > 1 {
        nelec = 1;
    }
    let exocyclic = multiple.iter().find(|(_, b)| !info.bond_in_ring[*b]).map(|(w, _)| *w);
    let cyclic = multiple.iter().any(|(_, b)| info.bond_in_ring[*b]);
    let more_en = |w: usize| {
        element::electronegativity(mol.atom(w).element) > element::electronegativity(atom.element)
    };
    match nelec {
        n if n < 0 => None,
        0 => {
            if exocyclic.is_none() && cyclic {
                Some(Donor::One)
            } else {
                Some(Donor::Vacant)
            }
        }
        1 => {
            if let Some(w) = exocyclic {
                Some(if more_en(w) { Donor::Vacant } else { Donor::One })
            } else if !multiple.is_empty() {
                Some(Donor::One)
            } else if atom.charge == 1 {
                Some(Donor::Vacant)
            } else {
                None
            }
        }
        mut n => {
            if let Some(w) = exocyclic {
                if more_en(w) {
                    n -= 1;
                }
            }
            Some(if n % 2 == 1 { Donor::One } else { Donor::Two })
        }
    }
}
