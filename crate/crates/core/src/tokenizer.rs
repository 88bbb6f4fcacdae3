//! BRICS motif tokenization, the motif vocabulary and joint pair sequences.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrugRecord {
    pub drug_id: String,
    pub smiles: String,
}

impl DrugRecord {
    pub fn new(drug_id: impl Into<String>, smiles: impl Into<String>) -> Self {
        DrugRecord {
            drug_id: drug_id.into(),
            smiles: smiles.into(),
        }
    }
}

/// BRICS fragments of a molecule as canonical SMILES, in the
/// fragmentation routine's native order.
pub fn decompose(smiles: &str) -> Result<Vec<String>> {
    Ok(imageddi_chem::brics_decompose(smiles)?)
}

/// Bijection between canonical fragment SMILES and ids. Ids 0 and 1 are the
/// padding and unknown specials.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MotifVocabulary {
    by_id: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Default for MotifVocabulary {
    fn default() -> Self {
        MotifVocabulary {
            by_id: vec!["[PAD]".into(), "[UNK]".into()],
            ids: HashMap::new(),
        }
    }
}

impl MotifVocabulary {
    pub fn pad_id(&self) -> u32 {
        PAD_ID
    }

    pub fn unk_id(&self) -> u32 {
        UNK_ID
    }

    /// Number of ids including the two specials.
    pub fn size(&self) -> usize {
        self.by_id.len()
    }

    pub fn id(&self, motif: &str) -> Option<u32> {
        self.ids.get(motif).copied()
    }

    /// Fragment string of a non-special id.
    pub fn motif(&self, id: u32) -> Option<&str> {
        if id < 2 {
            return None;
        }
        self.by_id.get(id as usize).map(String::as_str)
    }

    /// Display label for any id, specials included.
    pub fn label(&self, id: u32) -> &str {
        self.by_id.get(id as usize).map(String::as_str).unwrap_or("[UNK]")
    }

    fn insert(&mut self, motif: String) -> u32 {
        if let Some(id) = self.ids.get(&motif) {
            return *id;
        }
        let id = self.by_id.len() as u32;
        self.ids.insert(motif.clone(), id);
        self.by_id.push(motif);
        id
    }

    /// Motifs ordered by id (specials excluded).
    pub fn motifs(&self) -> impl Iterator<Item = (u32, &str)> {
        self.by_id
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, m)| (i as u32, m.as_str()))
    }

    /// Byte-stable JSON: `{"pad_id":0,"unk_id":1,"motifs":{...}}` with keys
    /// in id order.
    pub fn to_json(&self) -> String {
        let mut s = format!("{{\"pad_id\":{PAD_ID},\"unk_id\":{UNK_ID},\"motifs\":{{");
        for (k, (id, motif)) in self.motifs().enumerate() {
            if k > 0 {
                s.push(',');
            }
            let key = serde_json::to_string(motif).expect("string serializes");
            write!(s, "{key}:{id}").unwrap();
        }
        s.push_str("}}");
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            pad_id: u32,
            unk_id: u32,
            motifs: HashMap<String, u32>,
        }
        let raw: Raw = serde_json::from_str(text)?;
        if raw.pad_id != PAD_ID || raw.unk_id != UNK_ID {
            return Err(Error::DataError("vocabulary specials must be 0 and 1".into()));
        }
        let mut pairs: Vec<(u32, String)> = raw.motifs.into_iter().map(|(m, i)| (i, m)).collect();
        pairs.sort();
        let mut vocab = MotifVocabulary::default();
        for (expected, (id, motif)) in (2u32..).zip(pairs) {
            if id != expected {
                return Err(Error::DataError(format!(
                    "vocabulary ids are not contiguous at {expected}"
                )));
            }
            vocab.insert(motif);
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(Error::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        Self::from_json(&text)
    }

    /// SHA-1 of the canonical JSON form, used to tie checkpoints to a
    /// vocabulary.
    pub fn hash(&self) -> String {
        let digest = Sha1::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Builds the vocabulary in first-encounter order over `drugs` and their
/// fragments.
pub fn build_vocabulary(drugs: &[DrugRecord]) -> Result<MotifVocabulary> {
    let mut vocab = MotifVocabulary::default();
    for d in drugs {
        let frags = decompose(&d.smiles).map_err(|e| with_drug(e, &d.drug_id))?;
        for f in frags {
            vocab.insert(f);
        }
    }
    Ok(vocab)
}

fn with_drug(e: Error, drug_id: &str) -> Error {
    match e {
        Error::InvalidSmiles { source, .. } => Error::InvalidSmiles {
            drug: Some(drug_id.to_string()),
            source,
        },
        other => other,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotifSequence {
    pub drug_id: String,
    pub token_ids: Vec<u32>,
    /// Number of motifs before padding or truncation.
    pub raw_length: usize,
}

impl MotifSequence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// Maps a drug's fragments to ids, keeping the first `l` and padding the rest.
pub fn encode_drug(smiles: &str, vocab: &MotifVocabulary, l: usize) -> Result<MotifSequence> {
    encode_drug_with_id("", smiles, vocab, l)
}

pub fn encode_drug_with_id(
    drug_id: &str,
    smiles: &str,
    vocab: &MotifVocabulary,
    l: usize,
) -> Result<MotifSequence> {
    if l == 0 {
        return Err(Error::ConfigError("sequence length L must be at least 1".into()));
    }
    let frags = decompose(smiles).map_err(|e| with_drug(e, drug_id))?;
    let raw_length = frags.len();
    let mut token_ids: Vec<u32> = frags
        .iter()
        .take(l)
        .map(|f| vocab.id(f).unwrap_or(UNK_ID))
        .collect();
    token_ids.resize(l, PAD_ID);
    Ok(MotifSequence {
        drug_id: drug_id.to_string(),
        token_ids,
        raw_length,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSequence {
    pub token_ids: Vec<u32>,
    pub segment_ids: Vec<u32>,
    /// True where the token is not padding.
    pub key_mask: Vec<bool>,
}

impl PairSequence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// Concatenates two drug sequences in (x, y) order.
pub fn join_pair(x: &MotifSequence, y: &MotifSequence) -> Result<PairSequence> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let l = x.len();
    let token_ids: Vec<u32> = x.token_ids.iter().chain(&y.token_ids).copied().collect();
    let segment_ids = (0..2 * l).map(|i| u32::from(i >= l)).collect();
    let key_mask = token_ids.iter().map(|t| *t != PAD_ID).collect();
    Ok(PairSequence {
        token_ids,
        segment_ids,
        key_mask,
    })
}
