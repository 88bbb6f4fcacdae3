//! Dataset ingest, transductive and inductive splits, split manifests.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::DrugRecord;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interaction {
    pub drug_x: String,
    pub drug_y: String,
    pub event: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdiDataset {
    pub drugs: Vec<DrugRecord>,
    pub interactions: Vec<Interaction>,
    pub num_events: usize,
    /// Rows dropped at load time as repeats of an earlier (unordered) pair.
    pub duplicates_removed: usize,
}

impl DdiDataset {
    /// Validates references and event range, then deduplicates treating
    /// (x, y) and (y, x) with the same event as one interaction.
    pub fn new(drugs: Vec<DrugRecord>, interactions: Vec<Interaction>, num_events: Option<usize>) -> Result<Self> {
        let mut seen_ids = HashSet::new();
        for d in &drugs {
            if !seen_ids.insert(d.drug_id.as_str()) {
                return Err(Error::DataError(format!("duplicate drug id {}", d.drug_id)));
            }
        }
        let inferred = interactions.iter().map(|i| i.event as usize + 1).max().unwrap_or(0);
        let num_events = match num_events {
            Some(n) if n < inferred => {
                return Err(Error::DataError(format!(
                    "event id {} exceeds configured |R| = {n}",
                    inferred - 1
                )))
            }
            Some(n) => n,
            None => inferred,
        };
        let total = interactions.len();
        let mut keys = HashSet::new();
        let mut kept = Vec::with_capacity(total);
        for it in interactions {
            for d in [&it.drug_x, &it.drug_y] {
                if !seen_ids.contains(d.as_str()) {
                    return Err(Error::DataError(format!("interaction references unknown drug {d}")));
                }
            }
            if keys.insert(undirected_key(&it)) {
                kept.push(it);
            }
        }
        Ok(DdiDataset {
            drugs,
            duplicates_removed: total - kept.len(),
            interactions: kept,
            num_events,
        })
    }

    pub fn drug_index(&self) -> HashMap<&str, usize> {
        self.drugs.iter().enumerate().map(|(i, d)| (d.drug_id.as_str(), i)).collect()
    }

    pub fn smiles_of(&self, drug_id: &str) -> Option<&str> {
        self.drugs.iter().find(|d| d.drug_id == drug_id).map(|d| d.smiles.as_str())
    }

    /// Events that occur at least once.
    pub fn events_present(&self) -> Vec<u32> {
        let mut e: Vec<u32> = self.interactions.iter().map(|i| i.event).collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    pub fn save(&self, drugs_path: &Path, interactions_path: &Path) -> Result<()> {
        let mut w = tsv_writer(drugs_path)?;
        w.write_record(["drug_id", "smiles"]).map_err(|e| csv_err(drugs_path, e))?;
        for d in &self.drugs {
            w.write_record([&d.drug_id, &d.smiles]).map_err(|e| csv_err(drugs_path, e))?;
        }
        w.flush().map_err(Error::io(drugs_path))?;
        let mut w = tsv_writer(interactions_path)?;
        w.write_record(["drug_id_x", "drug_id_y", "event_id"])
            .map_err(|e| csv_err(interactions_path, e))?;
        for i in &self.interactions {
            w.write_record([&i.drug_x, &i.drug_y, &i.event.to_string()])
                .map_err(|e| csv_err(interactions_path, e))?;
        }
        w.flush().map_err(Error::io(interactions_path))?;
        Ok(())
    }
}

fn undirected_key(it: &Interaction) -> (String, String, u32) {
    if it.drug_x <= it.drug_y {
        (it.drug_x.clone(), it.drug_y.clone(), it.event)
    } else {
        (it.drug_y.clone(), it.drug_x.clone(), it.event)
    }
}

fn tsv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(Error::io(path))?;
    Ok(csv::WriterBuilder::new().delimiter(b'\t').from_writer(f))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::ParseError {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

fn tsv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let f = std::fs::File::open(path).map_err(Error::io(path))?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .quoting(false)
        .from_reader(f))
}

fn read_rows(path: &Path, columns: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rdr = tsv_reader(path)?;
    let header_len = rdr.headers().map_err(|e| csv_err(path, e))?.len();
    if header_len != columns {
        return Err(Error::ParseError {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected {columns} header columns, found {header_len}"),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if rec.len() != columns {
            return Err(Error::ParseError {
                path: path.to_path_buf(),
                line,
                message: format!("expected {columns} fields, found {}", rec.len()),
            });
        }
        out.push((line, rec.iter().map(|f| f.trim().to_string()).collect()));
    }
    Ok(out)
}

/// Reads `drug_id<TAB>smiles` and `drug_id_x<TAB>drug_id_y<TAB>event_id`
/// files (each with a header row).
pub fn load_dataset(drugs_path: &Path, interactions_path: &Path, num_events: Option<usize>) -> Result<DdiDataset> {
    let mut drugs = Vec::new();
    let mut ids = HashSet::new();
    for (line, f) in read_rows(drugs_path, 2)? {
        if f[0].is_empty() || f[1].is_empty() {
            return Err(Error::ParseError {
                path: drugs_path.to_path_buf(),
                line,
                message: "empty drug id or SMILES".into(),
            });
        }
        if !ids.insert(f[0].clone()) {
            return Err(Error::ParseError {
                path: drugs_path.to_path_buf(),
                line,
                message: format!("duplicate drug id {}", f[0]),
            });
        }
        drugs.push(DrugRecord::new(&f[0], &f[1]));
    }
    let mut interactions = Vec::new();
    for (line, f) in read_rows(interactions_path, 3)? {
        for d in [&f[0], &f[1]] {
            if !ids.contains(d) {
                return Err(Error::UnknownDrugReference {
                    path: interactions_path.to_path_buf(),
                    line,
                    drug: d.clone(),
                });
            }
        }
        let event: u32 = f[2].parse().map_err(|_| Error::ParseError {
            path: interactions_path.to_path_buf(),
            line,
            message: format!("event id {:?} is not a non-negative integer", f[2]),
        })?;
        interactions.push(Interaction {
            drug_x: f[0].clone(),
            drug_y: f[1].clone(),
            event,
        });
    }
    let ds = DdiDataset::new(drugs, interactions, num_events)?;
    if ds.duplicates_removed > 0 {
        log::warn!(
            "{}: dropped {} duplicate interactions",
            interactions_path.display(),
            ds.duplicates_removed
        );
    }
    Ok(ds)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Transductive,
    Inductive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub ratios: (f64, f64, f64),
    pub seed: u64,
}

impl SplitSpec {
    pub fn transductive(seed: u64) -> Self {
        SplitSpec {
            mode: SplitMode::Transductive,
            ratios: (0.7, 0.1, 0.2),
            seed,
        }
    }
}

/// Interaction indices per bucket.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransductiveSplit {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-class seeded shuffle then test = round(r_test * n), valid =
/// round(r_valid * n), each at least one, train the remainder.
pub fn split_transductive(ds: &DdiDataset, spec: &SplitSpec) -> Result<TransductiveSplit> {
    let (r_train, r_valid, r_test) = spec.ratios;
    if (r_train + r_valid + r_test - 1.0).abs() > 1e-9 || r_train <= 0.0 || r_valid <= 0.0 || r_test <= 0.0 {
        return Err(Error::ConfigError(format!("split ratios {:?} must be positive and sum to 1", spec.ratios)));
    }
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, it) in ds.interactions.iter().enumerate() {
        by_class.entry(it.event).or_default().push(i);
    }
    if by_class.is_empty() {
        return Err(Error::EmptyInput);
    }
    let small: Vec<u32> = by_class.iter().filter(|(_, v)| v.len() < 3).map(|(k, _)| *k).collect();
    if !small.is_empty() {
        return Err(Error::ClassTooSmall { events: small });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = TransductiveSplit::default();
    for (_, mut idx) in by_class {
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_test = ((r_test * n as f64).round() as usize).max(1);
        let n_valid = ((r_valid * n as f64).round() as usize).max(1);
        let n_test = n_test.min(n - 2);
        let n_valid = n_valid.min(n - 1 - n_test);
        out.test.extend_from_slice(&idx[..n_test]);
        out.valid.extend_from_slice(&idx[n_test..n_test + n_valid]);
        out.train.extend_from_slice(&idx[n_test + n_valid..]);
    }
    out.train.sort_unstable();
    out.valid.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InductiveSplit {
    pub train: Vec<usize>,
    /// Exactly one drug unseen in training.
    pub s1: Vec<usize>,
    /// Both drugs unseen in training.
    pub s2: Vec<usize>,
    pub new_drugs: Vec<String>,
    pub old_drugs: Vec<String>,
}

/// Routes every interaction by how many of its drugs are in `new_drugs`.
/// Empty buckets are allowed here.
pub fn route_pairs(ds: &DdiDataset, new_drugs: &HashSet<String>) -> InductiveSplit {
    let mut out = InductiveSplit::default();
    for (i, it) in ds.interactions.iter().enumerate() {
        let k = usize::from(new_drugs.contains(&it.drug_x)) + usize::from(new_drugs.contains(&it.drug_y));
        match k {
            0 => out.train.push(i),
            1 => out.s1.push(i),
            _ => out.s2.push(i),
        }
    }
    for d in &ds.drugs {
        if new_drugs.contains(&d.drug_id) {
            out.new_drugs.push(d.drug_id.clone());
        } else {
            out.old_drugs.push(d.drug_id.clone());
        }
    }
    out
}

/// Seeded drug shuffle; the first round(new_fraction * |D|) drugs are new.
pub fn split_inductive(ds: &DdiDataset, new_fraction: f64, seed: u64) -> Result<InductiveSplit> {
    if !(new_fraction > 0.0 && new_fraction < 1.0) {
        return Err(Error::ConfigError(format!("new_fraction {new_fraction} must lie in (0,1)")));
    }
    let mut ids: Vec<String> = ds.drugs.iter().map(|d| d.drug_id.clone()).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_new = (new_fraction * ids.len() as f64).round() as usize;
    let new: HashSet<String> = ids.into_iter().take(n_new).collect();
    let split = route_pairs(ds, &new);
    for (name, bucket) in [("train", &split.train), ("S1", &split.s1), ("S2", &split.s2)] {
        if bucket.is_empty() {
            return Err(Error::EmptyPartition(name));
        }
    }
    Ok(split)
}

/// Moves a seeded `fraction` of `train` (at least one item when possible)
/// into a validation list. Both outputs are sorted.
pub fn carve_validation(train: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx = train.to_vec();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_valid = ((fraction * idx.len() as f64).round() as usize)
        .max(usize::from(idx.len() > 1))
        .min(idx.len().saturating_sub(1));
    let mut valid = idx[..n_valid].to_vec();
    let mut rest = idx[n_valid..].to_vec();
    valid.sort_unstable();
    rest.sort_unstable();
    (rest, valid)
}

/// Violations of the inductive membership rules; empty when the split is sound.
pub fn audit_inductive(ds: &DdiDataset, split: &InductiveSplit) -> Vec<String> {
    let new: HashSet<&str> = split.new_drugs.iter().map(String::as_str).collect();
    let old: HashSet<&str> = split.old_drugs.iter().map(String::as_str).collect();
    let mut problems = Vec::new();
    if new.intersection(&old).next().is_some() {
        problems.push("a drug is both new and old".to_string());
    }
    if new.len() + old.len() != ds.drugs.len() {
        problems.push("new and old drugs do not cover the drug set".to_string());
    }
    let mut train_drugs = HashSet::new();
    for &i in &split.train {
        let it = &ds.interactions[i];
        train_drugs.insert(it.drug_x.as_str());
        train_drugs.insert(it.drug_y.as_str());
        if new.contains(it.drug_x.as_str()) || new.contains(it.drug_y.as_str()) {
            problems.push(format!("train pair {i} contains a new drug"));
        }
    }
    for &i in &split.s1 {
        let it = &ds.interactions[i];
        let k = usize::from(new.contains(it.drug_x.as_str())) + usize::from(new.contains(it.drug_y.as_str()));
        if k != 1 {
            problems.push(format!("S1 pair {i} has {k} new drugs"));
        }
    }
    for &i in &split.s2 {
        let it = &ds.interactions[i];
        for d in [&it.drug_x, &it.drug_y] {
            if train_drugs.contains(d.as_str()) {
                problems.push(format!("S2 drug {d} appears in training"));
            }
        }
    }
    problems
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum SplitManifest {
    Transductive {
        seed: u64,
        ratios: (f64, f64, f64),
        train: Vec<usize>,
        valid: Vec<usize>,
        test: Vec<usize>,
    },
    Inductive {
        seed: u64,
        new_fraction: f64,
        train: Vec<usize>,
        valid: Vec<usize>,
        s1: Vec<usize>,
        s2: Vec<usize>,
        new_drugs: Vec<String>,
    },
}

impl SplitManifest {
    pub fn bucket(&self, name: &str) -> Option<&[usize]> {
        match (self, name) {
            (SplitManifest::Transductive { train, .. }, "train")
            | (SplitManifest::Inductive { train, .. }, "train") => Some(train),
            (SplitManifest::Transductive { valid, .. }, "valid")
            | (SplitManifest::Inductive { valid, .. }, "valid") => Some(valid),
            (SplitManifest::Transductive { test, .. }, "test") => Some(test),
            (SplitManifest::Inductive { s1, .. }, "s1") | (SplitManifest::Inductive { s1, .. }, "S1") => Some(s1),
            (SplitManifest::Inductive { s2, .. }, "s2") | (SplitManifest::Inductive { s2, .. }, "S2") => Some(s2),
            _ => None,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            SplitManifest::Transductive { seed, .. } | SplitManifest::Inductive { seed, .. } => *seed,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(Error::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Builds the split for one run. Inductive validation is a seeded 10% of
/// the old-drug pairs.
pub fn make_split(ds: &DdiDataset, mode: SplitMode, new_fraction: f64, seed: u64) -> Result<SplitManifest> {
    match mode {
        SplitMode::Transductive => {
            let spec = SplitSpec::transductive(seed);
            let s = split_transductive(ds, &spec)?;
            Ok(SplitManifest::Transductive {
                seed,
                ratios: spec.ratios,
                train: s.train,
                valid: s.valid,
                test: s.test,
            })
        }
        SplitMode::Inductive => {
            let s = split_inductive(ds, new_fraction, seed)?;
            let (train, valid) = carve_validation(&s.train, 0.1, seed ^ 0x5A17);
            Ok(SplitManifest::Inductive {
                seed,
                new_fraction,
                train,
                valid,
                s1: s.s1,
                s2: s.s2,
                new_drugs: s.new_drugs,
            })
        }
    }
}

/// Deterministic synthetic dataset: simple valid SMILES, unique unordered
/// pairs, every event used at least `min(3, ..)` times when pairs allow.
pub fn synthetic_dataset(num_drugs: usize, num_pairs: usize, num_events: usize, seed: u64) -> Result<DdiDataset> {
    let max_pairs = num_drugs * num_drugs.saturating_sub(1) / 2;
    if num_pairs > max_pairs || num_events == 0 {
        return Err(Error::ConfigError(format!(
            "cannot place {num_pairs} pairs over {num_drugs} drugs and {num_events} events"
        )));
    }
    let tails = ["O", "N", "Cl", "F", "C(=O)O", "c1ccccc1", "OC", "C#N", "S", "C(N)=O"];
    let drugs: Vec<DrugRecord> = (0..num_drugs)
        .map(|i| {
            let chain = "C".repeat(1 + i % 7);
            let tail = tails[(i / 7) % tails.len()];
            let ring = if (i / 70) % 2 == 1 { "c1ccncc1" } else { "" };
            DrugRecord::new(format!("DB{:05}", i + 1), format!("{ring}{chain}{tail}"))
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = HashSet::new();
    let mut interactions = Vec::with_capacity(num_pairs);
    while interactions.len() < num_pairs {
        let a = rng.random_range(0..num_drugs);
        let b = rng.random_range(0..num_drugs);
        if a == b || !used.insert((a.min(b), a.max(b))) {
            continue;
        }
        // the first 3 * |R| pairs cycle through events so every class is populated
        let k = interactions.len();
        let event = if k < 3 * num_events {
            (k % num_events) as u32
        } else {
            rng.random_range(0..num_events) as u32
        };
        interactions.push(Interaction {
            drug_x: drugs[a].drug_id.clone(),
            drug_y: drugs[b].drug_id.clone(),
            event,
        });
    }
    DdiDataset::new(drugs, interactions, Some(num_events))
}

/// Conventional file names inside a dataset directory.
pub fn dataset_paths(dir: &Path) -> (PathBuf, PathBuf) {
    (dir.join("drugs.tsv"), dir.join("interactions.tsv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn toy(n_per_class: &[usize]) -> DdiDataset {
        let drugs: Vec<DrugRecord> = (0..40).map(|i| DrugRecord::new(format!("d{i}"), "C")).collect();
        let mut inter = Vec::new();
        let mut k = 0;
        for (c, &n) in n_per_class.iter().enumerate() {
            for _ in 0..n {
                let (a, b) = (k % 40, (k / 40 + k % 40 + 1) % 40);
                k += 1;
                inter.push(Interaction {
                    drug_x: format!("d{a}"),
                    drug_y: format!("d{b}"),
                    event: c as u32,
                });
            }
        }
        DdiDataset::new(drugs, inter, None).unwrap()
    }

    #[test]
    fn minimal_ingest_infers_event_count() {
        let dir = tempfile::tempdir().unwrap();
        let d = write(dir.path(), "d.tsv", "drug_id\tsmiles\nA\tCCO\nB\tc1ccccc1\n");
        let i = write(dir.path(), "i.tsv", "drug_id_x\tdrug_id_y\tevent_id\nA\tB\t4\n");
        let ds = load_dataset(&d, &i, None).unwrap();
        assert_eq!(ds.drugs.len(), 2);
        assert_eq!(ds.interactions.len(), 1);
        assert_eq!(ds.num_events, 5);
    }

    #[test]
    fn unknown_drug_and_bad_rows_are_located() {
        let dir = tempfile::tempdir().unwrap();
        let d = write(dir.path(), "d.tsv", "drug_id\tsmiles\nA\tCCO\n");
        let i = write(dir.path(), "i.tsv", "drug_id_x\tdrug_id_y\tevent_id\nA\tA\t0\nA\tZ\t1\n");
        match load_dataset(&d, &i, None) {
            Err(Error::UnknownDrugReference { line, drug, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(drug, "Z");
            }
            other => panic!("unexpected {other:?}"),
        }
        let i2 = write(dir.path(), "i2.tsv", "drug_id_x\tdrug_id_y\tevent_id\nA\tA\tx\n");
        assert!(matches!(load_dataset(&d, &i2, None), Err(Error::ParseError { line: 2, .. })));
    }

    #[test]
    fn mirrored_duplicates_are_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let d = write(dir.path(), "d.tsv", "drug_id\tsmiles\nA\tC\nB\tN\n");
        let i = write(dir.path(), "i.tsv", "x\ty\te\nA\tB\t0\nB\tA\t0\nA\tB\t0\n");
        let ds = load_dataset(&d, &i, None).unwrap();
        assert_eq!(ds.interactions.len(), 1);
        assert_eq!(ds.duplicates_removed, 2);
        assert_eq!(ds.interactions[0].drug_x, "A");
    }

    #[test]
    fn ten_samples_split_seven_one_two() {
        let ds = toy(&[10]);
        let s = split_transductive(&ds, &SplitSpec::transductive(3)).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (7, 1, 2));
        assert_eq!(s, split_transductive(&ds, &SplitSpec::transductive(3)).unwrap());
    }

    #[test]
    fn tiny_class_is_reported() {
        let ds = toy(&[5, 2, 1]);
        match split_transductive(&ds, &SplitSpec::transductive(0)) {
            Err(Error::ClassTooSmall { events }) => assert_eq!(events, vec![1, 2]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn all_old_routes_everything_to_train() {
        let ds = toy(&[6, 6]);
        let r = route_pairs(&ds, &HashSet::new());
        assert_eq!(r.train.len(), 12);
        assert!(r.s1.is_empty() && r.s2.is_empty());
        assert!(matches!(split_inductive(&ds, 0.001, 1), Err(Error::EmptyPartition(_))));
    }

    #[test]
    fn inductive_split_passes_audit() {
        let ds = synthetic_dataset(60, 600, 4, 7).unwrap();
        let s = split_inductive(&ds, 0.2, 1).unwrap();
        assert!(audit_inductive(&ds, &s).is_empty());
        assert_eq!(s.train.len() + s.s1.len() + s.s2.len(), 600);
    }

    #[test]
    fn carve_validation_partitions() {
        let train: Vec<usize> = (0..50).collect();
        let (rest, valid) = carve_validation(&train, 0.1, 3);
        assert_eq!(valid.len(), 5);
        let mut all = [rest, valid].concat();
        all.sort_unstable();
        assert_eq!(all, train);
    }

    #[test]
    fn manifest_round_trip_and_buckets() {
        let ds = synthetic_dataset(30, 200, 3, 1).unwrap();
        let m = make_split(&ds, SplitMode::Transductive, 0.1, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("split.json");
        m.save(&p).unwrap();
        let back = SplitManifest::load(&p).unwrap();
        assert_eq!(back, m);
        assert!(back.bucket("test").is_some());
        assert!(back.bucket("s2").is_none());
    }

    #[test]
    fn dataset_save_load_round_trip() {
        let ds = synthetic_dataset(20, 50, 3, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (d, i) = dataset_paths(dir.path());
        ds.save(&d, &i).unwrap();
        let back = load_dataset(&d, &i, Some(3)).unwrap();
        assert_eq!(back, ds);
    }
}
