use crate::element;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Quadruple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to an atom's valence, counting aromatic bonds as single
    /// (the delocalised electron is accounted for separately).
    pub fn sigma_valence(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Quadruple => 4,
        }
    }

    pub fn is_multiple(self) -> bool {
        matches!(self, BondOrder::Double | BondOrder::Triple | BondOrder::Quadruple)
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Quadruple => 4,
            BondOrder::Aromatic => 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Atom {
    /// Atomic number; 0 is the `*` wildcard used for attachment points.
    pub element: u8,
    /// Mass number, 0 when unspecified. On dummy atoms this carries the
    /// attachment label (`[16*]`).
    pub isotope: u16,
    pub charge: i8,
    /// Total attached hydrogens (explicit and implicit).
    pub hydrogens: u8,
    pub aromatic: bool,
}

impl Atom {
    pub fn new(element: u8) -> Self {
        Atom {
            element,
            isotope: 0,
            charge: 0,
            hydrogens: 0,
            aromatic: false,
        }
    }

    pub fn dummy(label: u16) -> Self {
        Atom {
            isotope: label,
            ..Atom::new(element::DUMMY)
        }
    }

    pub fn symbol(&self) -> &'static str {
        element::symbol(self.element)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

/// Hydrogen-suppressed molecular graph.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Molecule {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    /// Per atom: (neighbour, bond index).
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl Molecule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_atom(&mut self, atom: Atom) -> usize {
        self.atoms.push(atom);
        self.adjacency.push(Vec::new());
        self.atoms.len() - 1
    }

    /// Adds a bond; returns `None` if it would duplicate an existing bond or
    /// join an atom to itself.
    pub fn add_bond(&mut self, a: usize, b: usize, order: BondOrder) -> Option<usize> {
        if a == b || self.bond_between(a, b).is_some() {
            return None;
        }
        self.bonds.push(Bond { a, b, order });
        let idx = self.bonds.len() - 1;
        self.adjacency[a].push((b, idx));
        self.adjacency[b].push((a, idx));
        Some(idx)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, idx: usize) -> &Atom {
        &self.atoms[idx]
    }

    pub fn atom_mut(&mut self, idx: usize) -> &mut Atom {
        &mut self.atoms[idx]
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn bond(&self, idx: usize) -> &Bond {
        &self.bonds[idx]
    }

    pub fn set_bond_order(&mut self, idx: usize, order: BondOrder) {
        self.bonds[idx].order = order;
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn num_bonds(&self) -> usize {
        self.bonds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    /// Number of explicit (heavy or dummy) neighbours.
    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency[a]
            .iter()
            .find(|(n, _)| *n == b)
            .map(|(_, bidx)| *bidx)
    }

    /// Sum of bond orders with aromatic bonds counted as one.
    pub fn sigma_valence(&self, atom: usize) -> u8 {
        self.adjacency[atom]
            .iter()
            .map(|(_, b)| self.bonds[*b].order.sigma_valence())
            .sum()
    }

    /// Connected components, each listed in ascending atom order; components
    /// are ordered by their lowest atom index.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.atoms.len()];
        let mut out = Vec::new();
        for start in 0..self.atoms.len() {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut head = 0;
            while head < comp.len() {
                let cur = comp[head];
                head += 1;
                for &(n, _) in &self.adjacency[cur] {
                    if !seen[n] {
                        seen[n] = true;
                        comp.push(n);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Copies the induced subgraph over `atoms` (in the given order).
    pub fn subgraph(&self, atoms: &[usize]) -> Molecule {
        let mut map = vec![usize::MAX; self.atoms.len()];
        let mut out = Molecule::new();
        for &a in atoms {
            map[a] = out.add_atom(self.atoms[a].clone());
        }
        for bond in &self.bonds {
            let (a, b) = (map[bond.a], map[bond.b]);
            if a != usize::MAX && b != usize::MAX {
                out.add_bond(a, b, bond.order);
            }
        }
        out
    }

    /// Removes a bond, keeping all other indices stable except bond indices
    /// above the removed one, which shift down by one.
    pub fn remove_bond(&mut self, idx: usize) {
        self.bonds.remove(idx);
        self.rebuild_adjacency();
    }

    pub fn remove_atoms(&mut self, doomed: &[usize]) {
        let mut keep = vec![true; self.atoms.len()];
        for &d in doomed {
            keep[d] = false;
        }
        let kept: Vec<usize> = (0..self.atoms.len()).filter(|&i| keep[i]).collect();
        *self = self.subgraph(&kept);
    }

    fn rebuild_adjacency(&mut self) {
        self.adjacency = vec![Vec::new(); self.atoms.len()];
        for (i, bond) in self.bonds.iter().enumerate() {
            self.adjacency[bond.a].push((bond.b, i));
            self.adjacency[bond.b].push((bond.a, i));
        }
    }

    pub fn heavy_atom_count(&self) -> usize {
        self.atoms
            .iter()
            .filter(|a| a.element != element::HYDROGEN && a.element != element::DUMMY)
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_bonds_rejected() {
        let mut m = Molecule::new();
        let a = m.add_atom(Atom::new(6));
        let b = m.add_atom(Atom::new(6));
        assert!(m.add_bond(a, b, BondOrder::Single).is_some());
        assert!(m.add_bond(b, a, BondOrder::Double).is_none());
        assert!(m.add_bond(a, a, BondOrder::Single).is_none());
    }

    #[test]
    fn components_and_subgraph() {
        let mut m = Molecule::new();
        for _ in 0..5 {
            m.add_atom(Atom::new(6));
        }
        m.add_bond(0, 3, BondOrder::Single);
        m.add_bond(1, 2, BondOrder::Double);
        m.add_bond(2, 4, BondOrder::Single);
        assert_eq!(m.components(), vec![vec![0, 3], vec![1, 2, 4]]);
        let sub = m.subgraph(&[1, 2, 4]);
        assert_eq!(sub.num_bonds(), 2);
        assert_eq!(sub.sigma_valence(1), 3);
        m.remove_bond(0);
        assert_eq!(m.components().len(), 3);
    }
}
