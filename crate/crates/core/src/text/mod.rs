//! Sentence splitting, tokenization, vocabularies and batch assembly.

mod batch;
mod segment;
mod tokenize;
mod vocab;

pub use batch::{make_classifier_batches, make_lm_batches, ClassifierBatch, LmBatch};
pub use segment::{split_sentences, SentenceSplitter};
pub use tokenize::{is_word_token, tokenize, word_count};
pub use vocab::{Vocabulary, BOS, BOS_ID, EOS, EOS_ID, PAD, PAD_ID, UNK, UNK_ID};

pub(crate) use tokenize::tokenize_piece;

/// Abbreviations that never end a sentence (case-insensitive).
pub const DEFAULT_ABBREVIATIONS: &[&str] = &["e.g.", "i.e.", "mr.", "mrs.", "dr.", "vs.", "etc.", "u.s."];

pub const DEFAULT_MAX_VOCAB: usize = 30_000;
pub const DEFAULT_MIN_FREQ: u64 = 2;

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("vocabulary max_size {0} cannot hold the 4 reserved tokens")]
    VocabTooSmall(usize),
    #[error("min_freq must be at least 1")]
    ZeroMinFreq,
    #[error("malformed vocabulary line {0}")]
    BadVocabLine(usize),
    #[error("vocabulary file is missing reserved token {0}")]
    MissingReserved(&'static str),
    #[error("stream of {len} ids is too short for batch size {batch_size}")]
    StreamTooShort { len: usize, batch_size: usize },
    #[error("batch size and window length must be positive")]
    ZeroBatchDimension,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sequence {0} is empty")]
    EmptySequence(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How raw tokens are mapped onto vocabulary entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TextConfig {
    pub lowercase: bool,
}

impl Default for TextConfig {
    fn default() -> Self {
        Self { lowercase: true }
    }
}

impl TextConfig {
    /// Tokens of one sentence as they enter the vocabulary.
    pub fn vocab_tokens(&self, sentence: &str) -> Vec<String> {
        let toks = tokenize(sentence);
        if self.lowercase {
            toks.into_iter().map(|t| t.to_lowercase()).collect()
        } else {
            toks
        }
    }

    /// `<bos> tokens… <eos>` as ids.
    pub fn encode_sentence(&self, sentence: &str, vocab: &Vocabulary) -> Vec<usize> {
        let mut ids = Vec::new();
        ids.push(BOS_ID);
        ids.extend(numericalize(&tokenize(sentence), vocab, *self));
        ids.push(EOS_ID);
        ids
    }

    /// Concatenated encodings of all sentences, for LM training.
    pub fn encode_stream<'a>(&self, sentences: impl IntoIterator<Item = &'a str>, vocab: &Vocabulary) -> Vec<usize> {
        sentences
            .into_iter()
            .flat_map(|s| self.encode_sentence(s, vocab))
            .collect()
    }
}

/// In-vocabulary tokens map to their id, everything else to `<unk>`.
pub fn numericalize<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, config: TextConfig) -> Vec<usize> {
    tokens
        .iter()
        .map(|t| {
            let t = t.as_ref();
            let id = if config.lowercase {
                vocab.id(&t.to_lowercase())
            } else {
                vocab.id(t)
            };
            id.unwrap_or(UNK_ID)
        })
        .collect()
}
