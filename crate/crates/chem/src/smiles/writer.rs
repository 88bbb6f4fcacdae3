use std::fmt::Write as _;

use crate::element;
use crate::mol::{BondOrder, Molecule};

/// Writes SMILES visiting atoms in the order implied by `ranks`: each
/// component starts at its lowest-ranked atom and branches are explored in
/// ascending rank. Distinct ranks give a unique string.
pub fn write_smiles(mol: &Molecule, ranks: &[usize]) -> String {
    assert_eq!(ranks.len(), mol.num_atoms(), "one rank per atom");
    let mut comps = mol.components();
    comps.sort_by_key(|c| c.iter().map(|a| ranks[*a]).min());
    let mut out = String::new();
    for (i, comp) in comps.iter().enumerate() {
        if i > 0 {
            out.push('.');
        }
        let root = *comp.iter().min_by_key(|a| ranks[**a]).unwrap();
        Emitter::new(mol, ranks).component(root, &mut out);
    }
    out
}

struct Emitter<'m> {
    mol: &'m Molecule,
    ranks: &'m [usize],
    visited: Vec<bool>,
    /// Tree children per atom, in output order.
    children: Vec<Vec<(usize, usize)>>,
    /// Ring-closure bonds per atom as (partner, bond).
    closures: Vec<Vec<(usize, usize)>>,
    tree_bond: Vec<bool>,
    order: Vec<usize>,
}

impl<'m> Emitter<'m> {
    fn new(mol: &'m Molecule, ranks: &'m [usize]) -> Self {
        let n = mol.num_atoms();
        Emitter {
            mol,
            ranks,
            visited: vec![false; n],
            children: vec![Vec::new(); n],
            closures: vec![Vec::new(); n],
            tree_bond: vec![false; mol.num_bonds()],
            order: vec![usize::MAX; n],
        }
    }

    fn component(mut self, root: usize, out: &mut String) {
        self.build_tree(root);
        let mut digits: Vec<Option<(usize, usize)>> = Vec::new(); // digit -> (opener, bond)
        self.emit(root, None, out, &mut digits);
    }

    fn sorted_neighbors(&self, v: usize) -> Vec<(usize, usize)> {
        let mut nbrs = self.mol.neighbors(v).to_vec();
        nbrs.sort_by_key(|(w, _)| self.ranks[*w]);
        nbrs
    }

    fn build_tree(&mut self, root: usize) {
        // iterative DFS: (atom, neighbour list, cursor)
        let mut counter = 0;
        self.visited[root] = true;
        self.order[root] = counter;
        counter += 1;
        let mut stack = vec![(root, self.sorted_neighbors(root), 0usize)];
        let mut seen_closure = vec![false; self.mol.num_bonds()];
        while let Some(top) = stack.len().checked_sub(1) {
            let v = stack[top].0;
            let Some(&(w, b)) = stack[top].1.get(stack[top].2) else {
                stack.pop();
                continue;
            };
            stack[top].2 += 1;
            if self.tree_bond[b] || seen_closure[b] {
                continue;
            }
            if self.visited[w] {
                seen_closure[b] = true;
                self.closures[v].push((w, b));
                self.closures[w].push((v, b));
            } else {
                self.visited[w] = true;
                self.order[w] = counter;
                counter += 1;
                self.tree_bond[b] = true;
                self.children[v].push((w, b));
                stack.push((w, self.sorted_neighbors(w), 0));
            }
        }
    }

    fn emit(
        &self,
        v: usize,
        via: Option<usize>,
        out: &mut String,
        digits: &mut Vec<Option<(usize, usize)>>,
    ) {
        if let Some(b) = via {
            out.push_str(bond_symbol(self.mol, b));
        }
        out.push_str(&atom_token(self.mol, v));

        // closings: partner already written; in order of the partner's position
        let mut closing: Vec<(usize, usize)> = self.closures[v]
            .iter()
            .copied()
            .filter(|(w, _)| self.order[*w] < self.order[v])
            .collect();
        closing.sort_by_key(|(w, _)| self.order[*w]);
        let mut opening: Vec<(usize, usize)> = self.closures[v]
            .iter()
            .copied()
            .filter(|(w, _)| self.order[*w] > self.order[v])
            .collect();
        opening.sort_by_key(|(w, _)| self.order[*w]);

        for (_, b) in closing {
            let d = digits
                .iter()
                .position(|slot| matches!(slot, Some((_, bb)) if *bb == b))
                .expect("ring opened before closing");
            digits[d] = None;
            out.push_str(bond_symbol(self.mol, b));
            push_digit(out, d + 1);
        }
        for (_, b) in opening {
            let d = match digits.iter().position(Option::is_none) {
                Some(d) => d,
                None => {
                    digits.push(None);
                    digits.len() - 1
                }
            };
            digits[d] = Some((v, b));
            push_digit(out, d + 1);
        }

        let kids = &self.children[v];
        for (i, &(w, b)) in kids.iter().enumerate() {
            if i + 1 < kids.len() {
                out.push('(');
                self.emit(w, Some(b), out, digits);
                out.push(')');
            } else {
                self.emit(w, Some(b), out, digits);
            }
        }
    }
}

fn push_digit(out: &mut String, d: usize) {
    if d < 10 {
        write!(out, "{d}").unwrap();
    } else {
        write!(out, "%{d:02}").unwrap();
    }
}

fn bond_symbol(mol: &Molecule, b: usize) -> &'static str {
    let bond = mol.bond(b);
    let both_aromatic = mol.atom(bond.a).aromatic && mol.atom(bond.b).aromatic;
    match bond.order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Quadruple => "$",
        BondOrder::Aromatic if both_aromatic => "",
        BondOrder::Aromatic => ":",
    }
}

/// Hydrogen count a reader would infer for an unbracketed atom in this
/// position, or `None` if the atom cannot be written unbracketed.
fn implied_hydrogens(mol: &Molecule, v: usize) -> Option<u8> {
    let atom = mol.atom(v);
    let s = mol.sigma_valence(v);
    let target = *element::valences(atom.element).iter().find(|x| **x >= s)?;
    let aromatic_bonds = mol
        .neighbors(v)
        .iter()
        .any(|(_, b)| mol.bond(*b).order == BondOrder::Aromatic);
    if atom.aromatic && aromatic_bonds && target > s {
        Some(target - s - 1)
    } else {
        Some(target - s)
    }
}

fn atom_token(mol: &Molecule, v: usize) -> String {
    let atom = mol.atom(v);
    let organic = matches!(atom.element, 5 | 6 | 7 | 8 | 9 | 15 | 16 | 17 | 35 | 53);
    let aromatic_ok = !atom.aromatic || matches!(atom.element, 5 | 6 | 7 | 8 | 15 | 16);
    let sym = if atom.element == element::DUMMY {
        "*".to_string()
    } else if atom.aromatic {
        atom.symbol().to_ascii_lowercase()
    } else {
        atom.symbol().to_string()
    };

    if atom.isotope == 0 && atom.charge == 0 {
        if atom.element == element::DUMMY && atom.hydrogens == 0 {
            return sym;
        }
        if organic && aromatic_ok && implied_hydrogens(mol, v) == Some(atom.hydrogens) {
            return sym;
        }
    }

    let mut s = String::from("[");
    if atom.isotope != 0 {
        write!(s, "{}", atom.isotope).unwrap();
    }
    s.push_str(&sym);
    match atom.hydrogens {
        0 => {}
        1 => s.push('H'),
        h => write!(s, "H{h}").unwrap(),
    }
    match atom.charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        c if c > 0 => write!(s, "+{c}").unwrap(),
        c => write!(s, "-{}", -c).unwrap(),
    }
    s.push(']');
    s
}
