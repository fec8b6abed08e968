//! CLIP-style byte-pair-encoding tokenizer.
//!
//! Text is NFC-normalized, whitespace-collapsed and lowercased, split into
//! pre-tokens with CLIP's pattern, mapped byte-wise onto printable stand-in
//! characters, and merged with ranked BPE rules where the final symbol of
//! every word carries the `</w>` marker.

mod vocab;

use std::sync::Arc;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

pub use vocab::{
    clip_sources, clip_vocabulary, load_vocabulary, MergeRules, Vocabulary, BOS_TOKEN, EOS_TOKEN,
    PAD_TOKEN,
};

use crate::error::{Error, Result};

pub const END_OF_WORD: &str = "</w>";
pub const DEFAULT_CONTEXT_LEN: usize = 77;

static PRE_TOKEN: Lazy<Regex> = Lazy::new(|| {
    Regex::new(
        r"(?i)<\|startoftext\|>|<\|endoftext\|>|'s|'t|'re|'ve|'m|'ll|'d|[\p{L}]+|[\p{N}]|[^\s\p{L}\p{N}]+",
    )
    .expect("pre-token pattern compiles")
});

/// GPT-2/CLIP reversible byte → printable character table.
static BYTE_TO_CHAR: Lazy<[char; 256]> = Lazy::new(|| {
    let printable = |b: u32| {
        (u32::from(b'!')..=u32::from(b'~')).contains(&b)
            || (0xA1..=0xAC).contains(&b)
            || (0xAE..=0xFF).contains(&b)
    };
    let mut table = ['\0'; 256];
    let mut extra = 0;
    for b in 0..256u32 {
        table[b as usize] = if printable(b) {
            char::from_u32(b).unwrap()
        } else {
            extra += 1;
            char::from_u32(255 + extra).unwrap()
        };
    }
    table
});

static CHAR_TO_BYTE: Lazy<std::collections::HashMap<char, u8>> = Lazy::new(|| {
    BYTE_TO_CHAR
        .iter()
        .enumerate()
        .map(|(b, &c)| (c, b as u8))
        .collect()
});

/// Fixed-length id sequence: `[bos, content…, eos, pad…]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    /// Content tokens plus bos and eos.
    pub length: usize,
}

impl TokenSequence {
    pub fn context_len(&self) -> usize {
        self.ids.len()
    }

    /// Ids strictly between bos and eos.
    pub fn content_ids(&self) -> &[u32] {
        &self.ids[1..self.length - 1]
    }
}

/// Case and whitespace normalization applied before pre-tokenization.
pub fn normalize(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    nfc.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn bpe_word(word: &str, vocab: &Vocabulary, merges: &MergeRules, out: &mut Vec<u32>) -> Result<()> {
    let mut symbols: Vec<u32> = Vec::with_capacity(word.len());
    let total_bytes = word.len();
    let mut seen = 0;
    for ch in word.chars() {
        let mut buf = [0u8; 4];
        for &b in ch.encode_utf8(&mut buf).as_bytes() {
            seen += 1;
            let mut sym = BYTE_TO_CHAR[b as usize].to_string();
            if seen == total_bytes {
                sym.push_str(END_OF_WORD);
            }
            symbols.push(vocab.id(&sym).ok_or(Error::Unrepresentable { ch })?);
        }
    }
    loop {
        let best = symbols
            .windows(2)
            .filter_map(|w| merges.lookup(w[0], w[1]).map(|(rank, _)| (rank, w[0], w[1])))
            .min_by_key(|&(rank, _, _)| rank);
        let Some((_, left, right)) = best else { break };
        let (_, merged) = merges.lookup(left, right).unwrap();
        let mut next = Vec::with_capacity(symbols.len());
        let mut i = 0;
        while i < symbols.len() {
            if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
                next.push(merged);
                i += 2;
            } else {
                next.push(symbols[i]);
                i += 1;
            }
        }
        symbols = next;
    }
    out.extend(symbols);
    Ok(())
}

/// Content ids for `text` (no bos/eos, no truncation).
pub fn encode_content(text: &str, vocab: &Vocabulary, merges: &MergeRules) -> Result<Vec<u32>> {
    let normalized = normalize(text);
    let mut ids = Vec::new();
    for m in PRE_TOKEN.find_iter(&normalized) {
        let piece = m.as_str();
        if piece == BOS_TOKEN || piece == EOS_TOKEN {
            if let Some(id) = vocab.id(piece) {
                ids.push(id);
                continue;
            }
        }
        bpe_word(piece, vocab, merges, &mut ids)?;
    }
    Ok(ids)
}

pub fn encode(
    text: &str,
    vocab: &Vocabulary,
    merges: &MergeRules,
    context_len: usize,
) -> Result<TokenSequence> {
    if context_len < 2 {
        return Err(Error::invalid(format!(
            "context_len must be at least 2, got {context_len}"
        )));
    }
    let mut content = encode_content(text, vocab, merges)?;
    content.truncate(context_len - 2);
    let mut ids = Vec::with_capacity(context_len);
    ids.push(vocab.bos_id);
    ids.extend(content);
    ids.push(vocab.eos_id);
    let length = ids.len();
    ids.resize(context_len, vocab.pad_id);
    Ok(TokenSequence { ids, length })
}

/// Inverse of [`encode`] up to normalization. Spaces that the tokenizer
/// introduced before punctuation and contractions are removed again.
pub fn decode(seq: &TokenSequence, vocab: &Vocabulary) -> Result<String> {
    let mut joined = String::new();
    for &id in &seq.ids {
        let token = vocab.token(id).ok_or(Error::UnknownTokenId(id))?;
        if id == vocab.eos_id {
            break;
        }
        if id == vocab.bos_id || id == vocab.pad_id {
            continue;
        }
        joined.push_str(token);
    }
    let mut bytes = Vec::with_capacity(joined.len());
    let mut text = String::new();
    let flush = |bytes: &mut Vec<u8>, text: &mut String| {
        text.push_str(&String::from_utf8_lossy(bytes));
        bytes.clear();
    };
    let mut rest = joined.as_str();
    while let Some(ch) = rest.chars().next() {
        if let Some(tail) = rest.strip_prefix(END_OF_WORD) {
            flush(&mut bytes, &mut text);
            text.push(' ');
            rest = tail;
            continue;
        }
        match CHAR_TO_BYTE.get(&ch) {
            Some(&b) => bytes.push(b),
            None => {
                flush(&mut bytes, &mut text);
                text.push(ch);
            }
        }
        rest = &rest[ch.len_utf8()..];
    }
    flush(&mut bytes, &mut text);
    Ok(cleanup_spaces(text.trim()))
}

fn cleanup_spaces(text: &str) -> String {
    const RULES: [(&str, &str); 10] = [
        (" .", "."),
        (" ?", "?"),
        (" !", "!"),
        (" ,", ","),
        (" ' ", "'"),
        (" n't", "n't"),
        (" 'm", "'m"),
        (" 's", "'s"),
        (" 've", "'ve"),
        (" 're", "'re"),
    ];
    RULES
        .iter()
        .fold(text.to_string(), |acc, (from, to)| acc.replace(from, to))
}

/// Vocabulary, merges and context length bundled for repeated use.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    tables: Arc<(Vocabulary, MergeRules)>,
    context_len: usize,
}

impl Tokenizer {
    pub fn new(vocab: Vocabulary, merges: MergeRules, context_len: usize) -> Result<Self> {
        if context_len < 2 {
            return Err(Error::invalid("context_len must be at least 2"));
        }
        Ok(Self {
            tables: Arc::new((vocab, merges)),
            context_len,
        })
    }

    /// The bundled CLIP vocabulary at context length 77.
    pub fn clip() -> Self {
        Self {
            tables: clip_vocabulary(),
            context_len: DEFAULT_CONTEXT_LEN,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.tables.0
    }

    pub fn merges(&self) -> &MergeRules {
        &self.tables.1
    }

    pub fn context_len(&self) -> usize {
        self.context_len
    }

    pub fn encode(&self, text: &str) -> Result<TokenSequence> {
        encode(text, self.vocab(), self.merges(), self.context_len)
    }

    pub fn decode(&self, seq: &TokenSequence) -> Result<String> {
        decode(seq, self.vocab())
    }

    /// Display strings for each content token, `</w>` stripped.
    pub fn token_strings(&self, seq: &TokenSequence) -> Result<Vec<String>> {
        seq.content_ids()
            .iter()
            .map(|&id| {
                let single = TokenSequence {
                    ids: vec![self.vocab().bos_id, id, self.vocab().eos_id],
                    length: 3,
                };
                decode(&single, self.vocab())
            })
            .collect()
    }
}
