//! Fragmentation and perception checked against reference output of an
//! established cheminformatics toolkit (see tests/data/gen_brics_golden.py).

use imageddi_chem::{brics_decompose, canonicalize, parse_smiles};
use serde::Deserialize;

#[derive(Deserialize)]
struct Golden {
    molecules: Vec<Case>,
}

#[derive(Deserialize)]
struct Case {
    name: String,
    smiles: String,
    canonical: String,
    aromatic_atoms: usize,
    heavy_atoms: usize,
    total_h: usize,
    fragments: Vec<String>,
}

fn golden() -> Golden {
    let raw = include_str!("data/brics_golden.json");
    serde_json::from_str(raw).expect("golden file parses")
}

#[test]
fn perception_matches_reference() {
    let mut failures = Vec::new();
    for case in golden().molecules {
        let mol = parse_smiles(&case.smiles).unwrap();
        let arom = mol.atoms().iter().filter(|a| a.aromatic).count();
        let h: usize = mol.atoms().iter().map(|a| a.hydrogens as usize).sum();
        if (arom, mol.num_atoms(), h) != (case.aromatic_atoms, case.heavy_atoms, case.total_h) {
            failures.push(format!(
                "{}: aromatic {arom} vs {}, atoms {} vs {}, H {h} vs {}",
                case.name,
                case.aromatic_atoms,
                mol.num_atoms(),
                case.heavy_atoms,
                case.total_h
            ));
        }
        let mine = canonicalize(&case.smiles).unwrap();
        let theirs = canonicalize(&case.canonical).unwrap();
        if mine != theirs {
            failures.push(format!("{}: canonical {mine} vs {theirs}", case.name));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn fragments_match_reference() {
    let mut failures = Vec::new();
    for case in golden().molecules {
        let mine = brics_decompose(&case.smiles).unwrap();
        let theirs: Vec<String> = case
            .fragments
            .iter()
            .map(|f| canonicalize(f).unwrap())
            .collect();
        if mine != theirs {
            failures.push(format!("{}:\n  got  {mine:?}\n  want {theirs:?}", case.name));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn canonical_output_reparses_to_itself() {
    for case in golden().molecules {
        let c = canonicalize(&case.smiles).unwrap();
        assert_eq!(canonicalize(&c).unwrap(), c, "{}", case.name);
    }
}
