//! Ring membership and smallest set of smallest rings.

use std::collections::VecDeque;

use crate::mol::Molecule;

#[derive(Clone, Debug)]
pub struct RingInfo {
    pub bond_in_ring: Vec<bool>,
    pub atom_in_ring: Vec<bool>,
    /// SSSR; each ring is a closed walk of atom indices (first atom not repeated).
    pub rings: Vec<Vec<usize>>,
}

impl RingInfo {
    pub fn new(mol: &Molecule) -> Self {
        let bond_in_ring = ring_bonds(mol);
        let mut atom_in_ring = vec![false; mol.num_atoms()];
        for (i, b) in mol.bonds().iter().enumerate() {
            if bond_in_ring[i] {
                atom_in_ring[b.a] = true;
                atom_in_ring[b.b] = true;
            }
        }
        let rings = sssr(mol, &bond_in_ring);
        RingInfo {
            bond_in_ring,
            atom_in_ring,
            rings,
        }
    }

    /// Bond indices of a ring, in walk order.
    pub fn ring_bonds(&self, mol: &Molecule, ring: usize) -> Vec<usize> {
        let r = &self.rings[ring];
        (0..r.len())
            .map(|i| {
                mol.bond_between(r[i], r[(i + 1) % r.len()])
                    .expect("ring walk follows bonds")
            })
            .collect()
    }

    pub fn num_rings_containing(&self, atom: usize) -> usize {
        self.rings.iter().filter(|r| r.contains(&atom)).count()
    }
}

/// A bond is cyclic iff it is not a bridge of the graph.
fn ring_bonds(mol: &Molecule) -> Vec<bool> {
    let n = mol.num_atoms();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut in_ring = vec![true; mol.num_bonds()];
    let mut timer = 0;
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        // (atom, parent bond, next neighbour slot)
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(top) = stack.len().checked_sub(1) {
            let (v, parent_bond, slot) = stack[top];
            if let Some(&(w, bidx)) = mol.neighbors(v).get(slot) {
                stack[top].2 += 1;
                if bidx == parent_bond {
                    continue;
                }
                if disc[w] == usize::MAX {
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    stack.push((w, bidx, 0));
                } else {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if let Some(&(p, _, _)) = stack.last() {
                    low[p] = low[p].min(low[v]);
                    if low[v] > disc[p] {
                        in_ring[parent_bond] = false;
                    }
                }
            }
        }
    }
    in_ring
}

fn sssr(mol: &Molecule, bond_in_ring: &[bool]) -> Vec<Vec<usize>> {
    let n_ring_bonds = bond_in_ring.iter().filter(|b| **b).count();
    if n_ring_bonds == 0 {
        return Vec::new();
    }
    // cyclomatic number of the ring subgraph
    let mut ring_atoms = vec![false; mol.num_atoms()];
    for (i, b) in mol.bonds().iter().enumerate() {
        if bond_in_ring[i] {
            ring_atoms[b.a] = true;
            ring_atoms[b.b] = true;
        }
    }
    let n_ring_atoms = ring_atoms.iter().filter(|a| **a).count();
    let n_components = ring_components(mol, bond_in_ring, &ring_atoms);
    let target = n_ring_bonds + n_components - n_ring_atoms;

    let mut candidates: Vec<Vec<usize>> = Vec::new();
    for (bidx, bond) in mol.bonds().iter().enumerate() {
        if !bond_in_ring[bidx] {
            continue;
        }
        if let Some(path) = shortest_path_avoiding(mol, bond_in_ring, bond.a, bond.b, bidx) {
            candidates.push(path);
        }
    }
    for c in candidates.iter_mut() {
        *c = normalize_cycle(c);
    }
    candidates.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    candidates.dedup();

    let words = mol.num_bonds().div_ceil(64);
    let mut basis: Vec<(usize, Vec<u64>)> = Vec::new(); // (pivot, reduced vector)
    let mut rings = Vec::new();
    for cycle in candidates {
        if rings.len() == target {
            break;
        }
        let mut v = vec![0u64; words];
        for i in 0..cycle.len() {
            let b = mol
                .bond_between(cycle[i], cycle[(i + 1) % cycle.len()])
                .expect("cycle follows bonds");
            v[b / 64] ^= 1 << (b % 64);
        }
        for (pivot, row) in &basis {
            if v[pivot / 64] >> (pivot % 64) & 1 == 1 {
                for (x, y) in v.iter_mut().zip(row) {
                    *x ^= y;
                }
            }
        }
        if let Some(pivot) = first_bit(&v) {
            basis.push((pivot, v));
            rings.push(cycle);
        }
    }
    rings
}

/// Connected components of the subgraph made of ring bonds only.
fn ring_components(mol: &Molecule, bond_in_ring: &[bool], ring_atoms: &[bool]) -> usize {
    let mut parent: Vec<usize> = (0..mol.num_atoms()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (i, b) in mol.bonds().iter().enumerate() {
        if bond_in_ring[i] {
            let (ra, rb) = (find(&mut parent, b.a), find(&mut parent, b.b));
            parent[ra] = rb;
        }
    }
    (0..mol.num_atoms())
        .filter(|&a| ring_atoms[a] && find(&mut parent, a) == a)
        .count()
}

fn first_bit(v: &[u64]) -> Option<usize> {
    v.iter()
        .enumerate()
        .find(|(_, w)| **w != 0)
        .map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
}

/// Rotates/reflects a cycle so it starts at its smallest atom and proceeds
/// towards the smaller neighbour.
fn normalize_cycle(c: &[usize]) -> Vec<usize> {
    let n = c.len();
    let (start, _) = c.iter().enumerate().min_by_key(|(_, a)| **a).unwrap();
    let fwd: Vec<usize> = (0..n).map(|i| c[(start + i) % n]).collect();
    let bwd: Vec<usize> = (0..n).map(|i| c[(start + n - i) % n]).collect();
    if fwd <= bwd {
        fwd
    } else {
        bwd
    }
}

/// BFS over ring bonds from `from` to `to` without using bond `skip`.
/// Returns the atom path from `from` to `to` inclusive.
fn shortest_path_avoiding(
    mol: &Molecule,
    bond_in_ring: &[bool],
    from: usize,
    to: usize,
    skip: usize,
) -> Option<Vec<usize>> {
    let mut prev = vec![usize::MAX; mol.num_atoms()];
    prev[from] = from;
    let mut queue = VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        if v == to {
            break;
        }
        let mut nbrs: Vec<(usize, usize)> = mol.neighbors(v).to_vec();
        nbrs.sort_unstable();
        for (w, b) in nbrs {
            if b == skip || !bond_in_ring[b] || prev[w] != usize::MAX {
                continue;
            }
            prev[w] = v;
            queue.push_back(w);
        }
    }
    if prev[to] == usize::MAX {
        return None;
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = prev[cur];
        path.push(cur);
    }
    path.reverse();
    Some(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::parse_smiles;

    fn ring_sizes(smi: &str) -> Vec<usize> {
        let m = parse_smiles(smi).unwrap();
        let mut s: Vec<usize> = RingInfo::new(&m).rings.iter().map(|r| r.len()).collect();
        s.sort();
        s
    }

    #[test]
    fn sssr_sizes() {
        assert_eq!(ring_sizes("CCO"), Vec::<usize>::new());
        assert_eq!(ring_sizes("c1ccccc1"), vec![6]);
        assert_eq!(ring_sizes("c1ccc2ccccc2c1"), vec![6, 6]);
        assert_eq!(ring_sizes("C12C3C4C1C5C2C3C45"), vec![4, 4, 4, 4, 4]);
        assert_eq!(ring_sizes("C1CC2CCC1C2"), vec![5, 5]);
        assert_eq!(ring_sizes("c1ccccc1-c1ccccc1"), vec![6, 6]);
    }

    #[test]
    fn bridge_detection() {
        let m = parse_smiles("c1ccccc1CC1CC1").unwrap();
        let info = RingInfo::new(&m);
        let chain: Vec<usize> = m
            .bonds()
            .iter()
            .enumerate()
            .filter(|(i, _)| !info.bond_in_ring[*i])
            .map(|(i, _)| i)
            .collect();
        assert_eq!(chain.len(), 2);
        assert!(!info.atom_in_ring[6]);
        assert!(info.atom_in_ring[7]);
    }
}
