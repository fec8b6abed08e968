use std::collections::HashMap;
use std::io::Read;
use std::sync::Arc;

use once_cell::sync::Lazy;

use crate::error::{Error, Result};

pub const BOS_TOKEN: &str = "<|startoftext|>";
pub const EOS_TOKEN: &str = "<|endoftext|>";
pub const PAD_TOKEN: &str = "<|pad|>";

/// Token ↔ id maps. Ids are dense in `0..len()`; the pad id falls back to the
/// eos id when the vocabulary has no dedicated pad token.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    pub bos_id: u32,
    pub eos_id: u32,
    pub pad_id: u32,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }
}

/// Ranked BPE merge list; rank is the position in the source. Lookups are
/// keyed by the vocabulary ids of the two halves.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeRules {
    pairs: Vec<(String, String)>,
    ranks: HashMap<(u32, u32), (usize, u32)>,
}

impl MergeRules {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    /// Rank and merged-token id for an adjacent pair, if a rule exists.
    pub fn lookup(&self, left: u32, right: u32) -> Option<(usize, u32)> {
        self.ranks.get(&(left, right)).copied()
    }
}

fn parse_vocab_entries(src: &str) -> Result<Vec<(usize, String, u32)>> {
    let trimmed = src.trim_start();
    if trimmed.starts_with('{') {
        let map: HashMap<String, u32> = serde_json::from_str(trimmed).map_err(|e| Error::Vocabulary {
            line: e.line(),
            content: String::new(),
            message: format!("invalid JSON vocabulary: {e}"),
        })?;
        let mut entries: Vec<_> = map.into_iter().map(|(t, id)| (0, t, id)).collect();
        entries.sort_by_key(|e| e.2);
        return Ok(entries);
    }
    let mut entries = Vec::new();
    for (idx, raw) in src.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let bad = |message: &str| Error::Vocabulary {
            line,
            content: raw.to_string(),
            message: message.to_string(),
        };
        let mut parts = raw.split_whitespace();
        let (Some(token), Some(id), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad("expected \"token id\""));
        };
        let id: u32 = id.parse().map_err(|_| bad("id is not a non-negative integer"))?;
        entries.push((line, token.to_string(), id));
    }
    Ok(entries)
}

/// Loads a vocabulary (`"token id"` lines or a JSON token→id map) and a merge
/// list (`"left right"` lines, optional `#version` header).
pub fn load_vocabulary(vocab_source: &str, merges_source: &str) -> Result<(Vocabulary, MergeRules)> {
    let entries = parse_vocab_entries(vocab_source)?;
    let mut token_to_id = HashMap::with_capacity(entries.len());
    let mut id_to_token: Vec<Option<String>> = vec![None; entries.len()];
    for (line, token, id) in entries {
        let err = |message: String| Error::Vocabulary {
            line,
            content: format!("{token} {id}"),
            message,
        };
        if token_to_id.contains_key(&token) {
            return Err(err(format!("duplicate token {token:?}")));
        }
        let n = id_to_token.len();
        let slot = id_to_token
            .get_mut(id as usize)
            .ok_or_else(|| err(format!("id {id} outside dense range 0..{n}")))?;
        if slot.is_some() {
            return Err(err(format!("duplicate id {id}")));
        }
        *slot = Some(token.clone());
        token_to_id.insert(token, id);
    }
    // Every id slot is filled: n distinct ids all below n.
    let id_to_token: Vec<String> = id_to_token.into_iter().map(Option::unwrap).collect();

    let special = |name: &str| {
        token_to_id.get(name).copied().ok_or_else(|| Error::Vocabulary {
            line: 0,
            content: String::new(),
            message: format!("missing special token {name}"),
        })
    };
    let bos_id = special(BOS_TOKEN)?;
    let eos_id = special(EOS_TOKEN)?;
    let pad_id = token_to_id.get(PAD_TOKEN).copied().unwrap_or(eos_id);
    let vocab = Vocabulary {
        token_to_id,
        id_to_token,
        bos_id,
        eos_id,
        pad_id,
    };

    let mut pairs = Vec::new();
    let mut ranks = HashMap::new();
    for (idx, raw) in merges_source.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() || (idx == 0 && raw.starts_with("#version")) {
            continue;
        }
        let bad = |message: String| Error::Merges {
            line,
            content: raw.to_string(),
            message,
        };
        let mut parts = raw.split_whitespace();
        let (Some(left), Some(right), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad("expected \"left right\"".into()));
        };
        let known = |side: &str| {
            vocab
                .id(side)
                .ok_or_else(|| bad(format!("unknown token {side:?}")))
        };
        let (left_id, right_id) = (known(left)?, known(right)?);
        let merged = format!("{left}{right}");
        let merged_id = vocab
            .id(&merged)
            .ok_or_else(|| bad(format!("merged token {merged:?} is not in the vocabulary")))?;
        if ranks.contains_key(&(left_id, right_id)) {
            return Err(bad("duplicate merge pair".into()));
        }
        ranks.insert((left_id, right_id), (pairs.len(), merged_id));
        pairs.push((left.to_string(), right.to_string()));
    }
    Ok((vocab, MergeRules { pairs, ranks }))
}

static CLIP_VOCAB_GZ: &[u8] = include_bytes!("../../assets/clip_vocab.txt.gz");
static CLIP_MERGES_GZ: &[u8] = include_bytes!("../../assets/clip_merges.txt.gz");

fn gunzip(bytes: &[u8]) -> String {
    let mut out = String::new();
    flate2::read::GzDecoder::new(bytes)
        .read_to_string(&mut out)
        .expect("bundled asset is valid gzip UTF-8");
    out
}

/// Raw text of the bundled CLIP vocabulary and merge files.
pub fn clip_sources() -> (String, String) {
    (gunzip(CLIP_VOCAB_GZ), gunzip(CLIP_MERGES_GZ))
}

static CLIP: Lazy<Arc<(Vocabulary, MergeRules)>> = Lazy::new(|| {
    let (v, m) = clip_sources();
    Arc::new(load_vocabulary(&v, &m).expect("bundled CLIP vocabulary is well-formed"))
});

/// The bundled 49,408-entry CLIP vocabulary and its merges, parsed once.
pub fn clip_vocabulary() -> Arc<(Vocabulary, MergeRules)> {
    Arc::clone(&CLIP)
}
