//! Canonical atom ranking by iterative neighbourhood refinement with
//! tie-breaking.

use crate::mol::Molecule;
use crate::rings::RingInfo;

/// Returns a permutation of `0..n` such that isomorphic molecules receive
/// corresponding ranks regardless of input atom order.
pub fn canonical_ranks(mol: &Molecule) -> Vec<usize> {
    let n = mol.num_atoms();
    if n == 0 {
        return Vec::new();
    }
    let info = RingInfo::new(mol);
    let invariants: Vec<_> = (0..n)
        .map(|a| {
            let at = mol.atom(a);
            // degree first so that terminal atoms start the output
            (
                mol.degree(a),
                at.element,
                at.isotope,
                at.charge,
                at.hydrogens,
                at.aromatic,
                info.atom_in_ring[a],
            )
        })
        .collect();
    let mut ranks = ranks_from_keys(&invariants);
    refine(mol, &mut ranks);

    // break remaining ties one atom at a time
    loop {
        let mut counts = vec![0usize; n];
        for &r in &ranks {
            counts[r] += 1;
        }
        let Some(tied) = (0..n).find(|r| counts[*r] > 1) else {
            break;
        };
        let pick = (0..n).find(|a| ranks[*a] == tied).unwrap();
        for (a, r) in ranks.iter_mut().enumerate() {
            if *r == tied && a != pick {
                *r = tied + 1;
            }
        }
        refine(mol, &mut ranks);
    }
    ranks
}

/// Rank = number of atoms with a strictly smaller key, so tied atoms share
/// the lowest rank of their class.
fn ranks_from_keys<K: Ord>(keys: &[K]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|a, b| keys[*a].cmp(&keys[*b]));
    let mut ranks = vec![0; keys.len()];
    for (pos, &i) in idx.iter().enumerate() {
        ranks[i] = if pos > 0 && keys[idx[pos - 1]] == keys[i] {
            ranks[idx[pos - 1]]
        } else {
            pos
        };
    }
    ranks
}

fn refine(mol: &Molecule, ranks: &mut Vec<usize>) {
    let mut classes = distinct(ranks);
    loop {
        let keys: Vec<(usize, Vec<(usize, u8)>)> = (0..mol.num_atoms())
            .map(|a| {
                let mut nb: Vec<(usize, u8)> = mol
                    .neighbors(a)
                    .iter()
                    .map(|(w, b)| (ranks[*w], mol.bond(*b).order.code()))
                    .collect();
                nb.sort_unstable();
                (ranks[a], nb)
            })
            .collect();
        let next = ranks_from_keys(&keys);
        let c = distinct(&next);
        *ranks = next;
        if c == classes {
            break;
        }
        classes = c;
    }
}

fn distinct(ranks: &[usize]) -> usize {
    let mut v = ranks.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}
