//! Opinion-corpus mining from newline-delimited JSON comment dumps.
//!
//! A comment qualifies when one of its sentences contains the acronym IMO or
//! IMHO as a whole token. Only that sentence is kept, the acronym is removed,
//! and punctuation left dangling by the removal is repaired.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::text::{is_word_token, tokenize, tokenize_piece, SentenceSplitter};

/// Lines handed to the worker pool at a time.
const CHUNK_LINES: usize = 4096;

pub const DEFAULT_MIN_TOKENS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub id: String,
    pub body: String,
    pub created_utc: i64,
    pub subreddit: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Acronym {
    #[serde(rename = "IMO")]
    Imo,
    #[serde(rename = "IMHO")]
    Imho,
}

impl Acronym {
    /// Case-insensitive match of a single token.
    pub fn from_token(token: &str) -> Option<Self> {
        if token.eq_ignore_ascii_case("imo") {
            Some(Self::Imo)
        } else if token.eq_ignore_ascii_case("imho") {
            Some(Self::Imho)
        } else {
            None
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Imo => "IMO",
            Self::Imho => "IMHO",
        }
    }
}

impl fmt::Display for Acronym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Raw sentence that contained an acronym, before cleaning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchedSentence {
    pub text: String,
    pub sentence_index: usize,
    pub acronym: Acronym,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpinionSentence {
    pub source_id: String,
    pub text: String,
    pub acronym: Acronym,
    pub sentence_index: usize,
}

impl OpinionSentence {
    pub fn tsv_line(&self) -> String {
        format!("{}\t{}\t{}", self.source_id, self.acronym, self.text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    NonUtf8,
    Malformed,
    MissingId,
    MissingBody,
    EmptyBody,
    BadTimestamp,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::NonUtf8 => "non-UTF-8 bytes",
            Self::Malformed => "malformed record",
            Self::MissingId => "missing id",
            Self::MissingBody => "missing body",
            Self::EmptyBody => "empty body",
            Self::BadTimestamp => "missing or invalid created_utc",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningStats {
    pub lines_read: u64,
    pub parse_failures: u64,
    pub comments_matched: u64,
    pub sentences_emitted: u64,
    pub sentences_discarded_short: u64,
    /// Sentences dropped as exact duplicates (only with dedupe on).
    pub duplicates_dropped: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MineOptions {
    pub dedupe: bool,
    pub min_tokens: usize,
    /// Emit only the sentence text, one per line.
    pub plain: bool,
    pub jobs: usize,
}

impl Default for MineOptions {
    fn default() -> Self {
        Self {
            dedupe: false,
            min_tokens: DEFAULT_MIN_TOKENS,
            plain: false,
            jobs: 1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MineError {
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("failed to start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Parses one dump line. Never fails hard: bad lines come back as a skip reason.
pub fn parse_comment_line(line: &[u8]) -> Result<CommentRecord, SkipReason> {
    let text = std::str::from_utf8(line).map_err(|_| SkipReason::NonUtf8)?;
    let value: Value = serde_json::from_str(text).map_err(|_| SkipReason::Malformed)?;
    let obj = value.as_object().ok_or(SkipReason::Malformed)?;

    let id = match obj.get("id") {
        Some(Value::String(s)) if !s.is_empty() && !s.contains(char::is_control) => s.clone(),
        Some(Value::String(_)) | None | Some(Value::Null) => return Err(SkipReason::MissingId),
        Some(_) => return Err(SkipReason::Malformed),
    };
    let body = match obj.get("body") {
        Some(Value::String(s)) => s,
        None | Some(Value::Null) => return Err(SkipReason::MissingBody),
        Some(_) => return Err(SkipReason::Malformed),
    };
    if body.trim().is_empty() {
        return Err(SkipReason::EmptyBody);
    }
    let created_utc = obj
        .get("created_utc")
        .and_then(Value::as_i64)
        .filter(|&t| t >= 0)
        .ok_or(SkipReason::BadTimestamp)?;
    let subreddit = match obj.get("subreddit") {
        Some(Value::String(s)) => Some(s.clone()),
        None | Some(Value::Null) => None,
        Some(_) => return Err(SkipReason::Malformed),
    };
    Ok(CommentRecord {
        id,
        body: body.clone(),
        created_utc,
        subreddit,
    })
}

/// Sentences of the body that contain an acronym token, in order.
pub fn extract_opinion_sentences(record: &CommentRecord, splitter: &SentenceSplitter) -> Vec<MatchedSentence> {
    splitter
        .split(&record.body)
        .into_iter()
        .enumerate()
        .filter_map(|(i, s)| {
            first_acronym(s).map(|acronym| MatchedSentence {
                text: s.to_string(),
                sentence_index: i,
                acronym,
            })
        })
        .collect()
}

fn first_acronym(sentence: &str) -> Option<Acronym> {
    tokenize(sentence).iter().find_map(|t| Acronym::from_token(t))
}

fn is_punct_only(s: &str) -> bool {
    !s.is_empty() && !is_word_token(s)
}

fn starts_terminal(s: &str) -> bool {
    s.starts_with(['.', '!', '?'])
}

/// Removes every acronym token and repairs the punctuation around it.
///
/// Returns `None` when fewer than `min_tokens` word tokens survive.
pub fn strip_acronym(sentence: &str, min_tokens: usize) -> Option<String> {
    let mut text = sentence.to_string();
    // Leftover fragments can in principle form a fresh acronym token.
    for _ in 0..4 {
        text = strip_once(&text);
        if first_acronym(&text).is_none() {
            let words = tokenize(&text).iter().filter(|t| is_word_token(t)).count();
            return (words >= min_tokens).then_some(text);
        }
    }
    None
}

fn strip_once(sentence: &str) -> String {
    let pieces: Vec<&str> = sentence.split_whitespace().collect();
    let mut out: Vec<String> = Vec::with_capacity(pieces.len());
    // Set while the sentence so far holds no words because an acronym opened it.
    let mut leading_acronym = false;
    let mut i = 0;
    while i < pieces.len() {
        let piece = pieces[i];
        i += 1;
        let mut toks = Vec::new();
        tokenize_piece(piece, &mut toks);
        let Some(first) = toks.iter().position(|t| Acronym::from_token(t).is_some()) else {
            if leading_acronym && is_punct_only(piece) {
                continue;
            }
            leading_acronym = false;
            out.push(piece.to_string());
            continue;
        };

        let mut prefix: String = toks[..first].concat();
        let mut rest: String = toks[first + 1..]
            .iter()
            .filter(|t| Acronym::from_token(t).is_none())
            .map(String::as_str)
            .collect();

        // "(imho)" leaves an empty bracket pair behind.
        for (open, close) in [('(', ')'), ('[', ']')] {
            if prefix.ends_with(open) && rest.starts_with(close) {
                prefix.pop();
                rest.remove(0);
            }
        }

        let at_start = out.is_empty() && !prefix.chars().any(char::is_alphanumeric);
        let mut following_comma = false;
        if rest.starts_with(',') {
            rest.remove(0);
            following_comma = true;
        } else if rest.is_empty() && pieces.get(i) == Some(&",") {
            i += 1;
            following_comma = true;
        }
        let prev_ends_comma = out.last().is_some_and(|p| p.ends_with(','));
        if following_comma && !at_start && !prev_ends_comma {
            // Neither sentence-initial nor comma-delimited on both sides: the
            // comma still separates the clauses.
            rest.insert(0, ',');
        }

        if starts_terminal(&rest) || (rest.is_empty() && i == pieces.len()) {
            if let Some(prev) = out.last_mut() {
                if prev.ends_with(',') {
                    prev.pop();
                }
            }
        }

        let leftover = format!("{prefix}{rest}");
        if leftover.is_empty() {
            leading_acronym |= at_start;
            continue;
        }
        if is_punct_only(&leftover) {
            if at_start {
                leading_acronym = true;
            } else if let Some(prev) = out.last_mut() {
                prev.push_str(&leftover);
            }
            continue;
        }
        leading_acronym = false;
        match out.last_mut() {
            Some(prev) if !leftover.starts_with(char::is_alphanumeric) && !at_start => prev.push_str(&leftover),
            _ => out.push(leftover),
        }
    }
    if let Some(last) = out.last_mut() {
        while last.ends_with([',', ';', ':']) {
            last.pop();
        }
    }
    out.retain(|p| !p.is_empty());
    out.join(" ")
}

enum LineOutcome {
    Skipped,
    Parsed {
        matched: bool,
        kept: Vec<OpinionSentence>,
        discarded_short: u64,
    },
}

fn process_line(line: &[u8], splitter: &SentenceSplitter, min_tokens: usize) -> LineOutcome {
    let Ok(record) = parse_comment_line(line) else {
        return LineOutcome::Skipped;
    };
    let matches = extract_opinion_sentences(&record, splitter);
    let mut kept = Vec::new();
    let mut discarded_short = 0;
    for m in &matches {
        match strip_acronym(&m.text, min_tokens) {
            Some(text) => kept.push(OpinionSentence {
                source_id: record.id.clone(),
                text,
                acronym: m.acronym,
                sentence_index: m.sentence_index,
            }),
            None => discarded_short += 1,
        }
    }
    LineOutcome::Parsed {
        matched: !matches.is_empty(),
        kept,
        discarded_short,
    }
}

fn open_input(path: &Path) -> io::Result<Box<dyn BufRead>> {
    let file = File::open(path)?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(flate2::read::MultiGzDecoder::new(file))
    } else {
        Box::new(file)
    };
    Ok(Box::new(BufReader::new(reader)))
}

/// Streaming miner. Output order is input order regardless of `jobs`.
pub struct Miner {
    options: MineOptions,
    splitter: SentenceSplitter,
    seen: HashSet<String>,
    stats: MiningStats,
}

impl Miner {
    pub fn new(options: MineOptions) -> Self {
        Self {
            options,
            splitter: SentenceSplitter::default(),
            seen: HashSet::new(),
            stats: MiningStats::default(),
        }
    }

    pub fn stats(&self) -> MiningStats {
        self.stats
    }

    /// Mines every line of `reader` into `out`.
    pub fn mine_reader<R: BufRead, W: Write>(&mut self, mut reader: R, out: &mut W) -> io::Result<()> {
        let pool = if self.options.jobs > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(self.options.jobs)
                    .build()
                    .map_err(io::Error::other)?,
            )
        } else {
            None
        };
        let mut chunk: Vec<Vec<u8>> = Vec::with_capacity(CHUNK_LINES);
        loop {
            let mut buf = Vec::new();
            let n = reader.read_until(b'\n', &mut buf)?;
            if n > 0 {
                while buf.last().is_some_and(|&b| b == b'\n' || b == b'\r') {
                    buf.pop();
                }
                chunk.push(buf);
            }
            if chunk.len() == CHUNK_LINES || (n == 0 && !chunk.is_empty()) {
                let outcomes = self.process_chunk(&chunk, pool.as_ref());
                self.merge(outcomes, out)?;
                chunk.clear();
            }
            if n == 0 {
                return Ok(());
            }
        }
    }

    fn process_chunk(&self, chunk: &[Vec<u8>], pool: Option<&rayon::ThreadPool>) -> Vec<LineOutcome> {
        let (splitter, min_tokens) = (&self.splitter, self.options.min_tokens);
        match pool {
            Some(pool) => pool.install(|| {
                chunk
                    .par_iter()
                    .map(|l| process_line(l, splitter, min_tokens))
                    .collect()
            }),
            None => chunk.iter().map(|l| process_line(l, splitter, min_tokens)).collect(),
        }
    }

    fn merge<W: Write>(&mut self, outcomes: Vec<LineOutcome>, out: &mut W) -> io::Result<()> {
        for outcome in outcomes {
            self.stats.lines_read += 1;
            match outcome {
                LineOutcome::Skipped => self.stats.parse_failures += 1,
                LineOutcome::Parsed {
                    matched,
                    kept,
                    discarded_short,
                } => {
                    self.stats.comments_matched += u64::from(matched);
                    self.stats.sentences_discarded_short += discarded_short;
                    for s in kept {
                        if self.options.dedupe && !self.seen.insert(s.text.clone()) {
                            self.stats.duplicates_dropped += 1;
                            continue;
                        }
                        self.stats.sentences_emitted += 1;
                        if self.options.plain {
                            writeln!(out, "{}", s.text)?;
                        } else {
                            writeln!(out, "{}", s.tsv_line())?;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Mines all inputs in order into `output`, written atomically.
pub fn mine_corpus(inputs: &[PathBuf], output: &Path, options: MineOptions) -> Result<MiningStats, MineError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| MineError::Io { path, source }
    };
    let tmp = tmp_path(output);
    let file = File::create(&tmp).map_err(io_err(&tmp))?;
    let mut writer = BufWriter::new(file);
    let mut miner = Miner::new(options);
    for input in inputs {
        let reader = open_input(input).map_err(io_err(input))?;
        miner.mine_reader(reader, &mut writer).map_err(io_err(input))?;
    }
    writer.flush().map_err(io_err(&tmp))?;
    drop(writer);
    std::fs::rename(&tmp, output).map_err(io_err(output))?;
    Ok(miner.stats())
}

pub fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Reads the text column of a mined corpus. Accepts both the TSV and the plain layout.
pub fn read_corpus_sentences<R: BufRead>(reader: R) -> io::Result<Vec<String>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let text = match line.splitn(3, '\t').collect::<Vec<_>>().as_slice() {
            [_, acr, text] if Acronym::from_token(acr).is_some() => text.to_string(),
            _ => line.clone(),
        };
        if !text.trim().is_empty() {
            out.push(text);
        }
    }
    Ok(out)
}
