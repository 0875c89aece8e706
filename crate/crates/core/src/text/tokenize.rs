//! Rule-based word tokenizer.
//!
//! Whitespace split, then punctuation detachment, then contraction split at
//! the apostrophe. The rules are deliberately small so the output is stable
//! across platforms and can be frozen in golden tests.

use super::DEFAULT_ABBREVIATIONS;

/// Contraction tails split off as their own token (`that's` -> `that`, `'s`).
const CONTRACTION_TAILS: &[&str] = &["s", "t", "re", "ve", "ll", "d", "m"];

/// Characters split out even when they sit between two word characters.
fn splits_internally(c: char) -> bool {
    matches!(
        c,
        ',' | ';' | ':' | '!' | '?' | '"' | '(' | ')' | '[' | ']' | '{' | '}' | '“' | '”'
    )
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '’'
}

/// Tokenize one sentence. Total and deterministic.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for piece in text.split_whitespace() {
        tokenize_piece(piece, &mut out);
    }
    out
}

/// Tokens of a single whitespace-delimited piece, appended to `out`.
pub(crate) fn tokenize_piece(piece: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = piece.chars().collect();
    let mut start = 0;
    for i in 0..chars.len() {
        let c = chars[i];
        if !splits_internally(c) {
            continue;
        }
        // "1,000" and "10:30" stay whole.
        let digit_glue = (c == ',' || c == ':')
            && i > 0
            && i + 1 < chars.len()
            && chars[i - 1].is_ascii_digit()
            && chars[i + 1].is_ascii_digit();
        if digit_glue {
            continue;
        }
        word_segment(&chars[start..i], out);
        out.push(c.to_string());
        start = i + 1;
    }
    word_segment(&chars[start..], out);
}

fn word_segment(chars: &[char], out: &mut Vec<String>) {
    if chars.is_empty() {
        return;
    }
    let Some(first) = chars.iter().position(|c| c.is_alphanumeric()) else {
        punct_run(chars, out);
        return;
    };
    let last = chars.iter().rposition(|c| c.is_alphanumeric()).unwrap_or(first);

    for &c in &chars[..first] {
        out.push(c.to_string());
    }

    let mut core_end = last + 1;
    let tail = &chars[core_end..];
    // Known abbreviations keep their final period.
    if tail.first() == Some(&'.') {
        let candidate: String = chars[first..=core_end].iter().collect::<String>().to_lowercase();
        if DEFAULT_ABBREVIATIONS.contains(&candidate.as_str()) {
            core_end += 1;
        }
    }
    split_contraction(&chars[first..core_end], out);
    punct_run(&chars[core_end..], out);
}

fn split_contraction(core: &[char], out: &mut Vec<String>) {
    if let Some(pos) = core.iter().rposition(|&c| is_apostrophe(c)) {
        if pos > 0 {
            let tail: String = core[pos + 1..].iter().collect();
            if CONTRACTION_TAILS.contains(&tail.to_lowercase().as_str()) {
                out.push(core[..pos].iter().collect());
                out.push(core[pos..].iter().collect());
                return;
            }
        }
    }
    out.push(core.iter().collect());
}

/// Trailing/leading punctuation: one token per character, except that runs
/// of periods (an ellipsis) stay together.
fn punct_run(chars: &[char], out: &mut Vec<String>) {
    let mut i = 0;
    while i < chars.len() {
        if chars[i] == '.' {
            let mut j = i;
            while j < chars.len() && chars[j] == '.' {
                j += 1;
            }
            out.push(chars[i..j].iter().collect());
            i = j;
        } else {
            out.push(chars[i].to_string());
            i += 1;
        }
    }
}

/// True when the token carries at least one letter or digit.
pub fn is_word_token(token: &str) -> bool {
    token.chars().any(char::is_alphanumeric)
}

/// Number of word tokens (tokens with at least one alphanumeric character).
pub fn word_count(text: &str) -> usize {
    tokenize(text).iter().filter(|t| is_word_token(t)).count()
}
