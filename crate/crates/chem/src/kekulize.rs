//! Assignment of alternating single/double bonds to aromatic bonds.

use crate::element;
use crate::mol::{BondOrder, Molecule};

/// Whether aromatic atom `atom` must take part in a double bond of the
/// Kekulé structure, given `known_h` explicitly specified hydrogens.
pub(crate) fn needs_pi(mol: &Molecule, atom: usize, known_h: u8) -> bool {
    let a = mol.atom(atom);
    if a.element == element::DUMMY {
        return false;
    }
    let used = mol.sigma_valence(atom) + known_h;
    // an atom already carrying a double bond to a ring neighbour or an
    // exocyclic multiple bond has no spare valence
    let allowed = element::charged_valences(a.element, a.charge);
    match allowed.iter().find(|v| **v >= used) {
        Some(target) => *target > used,
        None => false,
    }
}

/// Replaces every aromatic bond by single or double so that each atom with
/// `pi[atom]` set gets exactly one double bond among its aromatic bonds.
pub(crate) fn kekulize(mol: &mut Molecule, pi: &[bool]) -> Result<(), String> {
    let n = mol.num_atoms();
    let mut cand: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (bidx, bond) in mol.bonds().iter().enumerate() {
        if bond.order == BondOrder::Aromatic && pi[bond.a] && pi[bond.b] {
            cand[bond.a].push((bond.b, bidx));
            cand[bond.b].push((bond.a, bidx));
        }
    }
    let mut mate: Vec<Option<usize>> = vec![None; n];
    let mut budget = 1_000_000usize;
    if !match_all(&cand, pi, &mut mate, &mut budget) {
        return Err("cannot kekulize aromatic system".into());
    }
    let aromatic: Vec<usize> = (0..mol.num_bonds())
        .filter(|&b| mol.bond(b).order == BondOrder::Aromatic)
        .collect();
    for b in aromatic {
        let (x, y) = (mol.bond(b).a, mol.bond(b).b);
        let order = if mate[x] == Some(y) {
            BondOrder::Double
        } else {
            BondOrder::Single
        };
        mol.set_bond_order(b, order);
    }
    Ok(())
}

/// Perfect matching of the `pi` atoms by backtracking, always branching on
/// the unmatched atom with the fewest free partners.
fn match_all(
    cand: &[Vec<(usize, usize)>],
    pi: &[bool],
    mate: &mut Vec<Option<usize>>,
    budget: &mut usize,
) -> bool {
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    let mut best: Option<(usize, usize)> = None;
    for v in 0..cand.len() {
        if !pi[v] || mate[v].is_some() {
            continue;
        }
        let free = cand[v].iter().filter(|(w, _)| mate[*w].is_none()).count();
        if best.is_none_or(|(_, f)| free < f) {
            best = Some((v, free));
            if free == 0 {
                return false;
            }
        }
    }
    let Some((v, _)) = best else {
        return true;
    };
    for &(w, _) in &cand[v] {
        if mate[w].is_some() {
            continue;
        }
        mate[v] = Some(w);
        mate[w] = Some(v);
        if match_all(cand, pi, mate, budget) {
            return true;
        }
        mate[v] = None;
        mate[w] = None;
    }
    false
}

#[cfg(test)]
mod tests {
    use crate::smiles::parse_smiles;

    #[test]
    fn kekule_forms_parse_to_same_graph() {
        let a = parse_smiles("c1ccc2ccccc2c1").unwrap();
        let b = parse_smiles("C1=CC=C2C=CC=CC2=C1").unwrap();
        assert_eq!(a.bonds().len(), b.bonds().len());
        assert_eq!(
            a.atoms().iter().filter(|x| x.aromatic).count(),
            b.atoms().iter().filter(|x| x.aromatic).count()
        );
    }

    #[test]
    fn pyrrole_nitrogen_needs_hydrogen() {
        assert!(parse_smiles("c1cc[nH]c1").is_ok());
        assert!(parse_smiles("c1ccnc1").is_err());
        assert!(parse_smiles("c1ccncc1").is_ok());
        assert!(parse_smiles("O=c1cccc[nH]1").is_ok());
        assert!(parse_smiles("c1cc[n+]([O-])cc1").is_ok());
    }
}
