use std::collections::HashMap;
use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};

use super::TextError;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const BOS_ID: usize = 2;
pub const EOS_ID: usize = 3;

const RESERVED: [&str; 4] = [PAD, UNK, BOS, EOS];

/// Bidirectional token/id map with corpus frequencies.
///
/// Ids are dense and the four reserved tokens always occupy ids 0..4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, usize>,
    frequency: Vec<u64>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::reserved_only()
    }
}

impl Vocabulary {
    fn reserved_only() -> Self {
        let mut v = Self {
            id_to_token: Vec::new(),
            token_to_id: HashMap::new(),
            frequency: Vec::new(),
        };
        for t in RESERVED {
            v.push(t.to_string(), 0);
        }
        v
    }

    fn push(&mut self, token: String, freq: u64) {
        self.token_to_id.insert(token.clone(), self.id_to_token.len());
        self.id_to_token.push(token);
        self.frequency.push(freq);
    }

    /// Ranks tokens by descending frequency, ties broken lexicographically.
    /// Tokens below `min_freq`, and anything past `max_size` total entries, are dropped.
    pub fn build<I, S>(tokens: I, max_size: usize, min_freq: u64) -> Result<Self, TextError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if max_size < RESERVED.len() {
            return Err(TextError::VocabTooSmall(max_size));
        }
        if min_freq == 0 {
            return Err(TextError::ZeroMinFreq);
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        for t in tokens {
            let t = t.as_ref();
            if RESERVED.contains(&t) {
                continue;
            }
            *counts.entry(t.to_string()).or_default() += 1;
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().filter(|(_, c)| *c >= min_freq).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size - RESERVED.len());

        let mut v = Self::reserved_only();
        for (t, c) in ranked {
            v.push(t, c);
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    /// Always false: the reserved tokens are present.
    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn frequency(&self, id: usize) -> Option<u64> {
        self.frequency.get(id).copied()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.id_to_token.iter().map(String::as_str)
    }

    /// Hex SHA-256 over the tokens in id order. Frequencies are not part of
    /// the hash: two vocabularies with the same id mapping are interchangeable.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.id_to_token {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// TSV `token<TAB>id<TAB>frequency`, reserved tokens first.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (id, (tok, freq)) in self.id_to_token.iter().zip(&self.frequency).enumerate() {
            writeln!(w, "{tok}\t{id}\t{freq}")?;
        }
        w.flush()
    }

    pub fn read_tsv<R: BufRead>(r: R) -> Result<Self, TextError> {
        let mut v = Self {
            id_to_token: Vec::new(),
            token_to_id: HashMap::new(),
            frequency: Vec::new(),
        };
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let bad = || TextError::BadVocabLine(lineno + 1);
            let mut cols = line.split('\t');
            let (Some(tok), Some(id), Some(freq), None) = (cols.next(), cols.next(), cols.next(), cols.next()) else {
                return Err(bad());
            };
            let id: usize = id.parse().map_err(|_| bad())?;
            let freq: u64 = freq.parse().map_err(|_| bad())?;
            if id != v.len() || tok.is_empty() || v.token_to_id.contains_key(tok) {
                return Err(bad());
            }
            v.push(tok.to_string(), freq);
        }
        for (i, r) in RESERVED.iter().enumerate() {
            if v.token(i) != Some(*r) {
                return Err(TextError::MissingReserved(r));
            }
        }
        Ok(v)
    }
}
