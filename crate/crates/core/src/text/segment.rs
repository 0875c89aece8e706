//! Rule-based sentence splitter.

use std::collections::HashSet;

use super::DEFAULT_ABBREVIATIONS;

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '”' | '’')
}

fn is_opening_quote(c: char) -> bool {
    matches!(c, '"' | '\'' | '“' | '‘' | '(' | '[')
}

/// Splits text at `.`, `!` or `?` followed by whitespace and an uppercase
/// letter, digit or opening quote. A blank line is always a boundary.
#[derive(Debug, Clone)]
pub struct SentenceSplitter {
    abbreviations: HashSet<String>,
}

impl Default for SentenceSplitter {
    fn default() -> Self {
        Self::with_abbreviations(DEFAULT_ABBREVIATIONS.iter().copied())
    }
}

impl SentenceSplitter {
    /// Abbreviations are matched case-insensitively and must include the final period.
    pub fn with_abbreviations<'a>(abbrevs: impl IntoIterator<Item = &'a str>) -> Self {
        Self {
            abbreviations: abbrevs.into_iter().map(str::to_lowercase).collect(),
        }
    }

    /// Sentence spans as trimmed slices of `text`, in order.
    pub fn split<'t>(&self, text: &'t str) -> Vec<&'t str> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut spans = Vec::new();
        let mut start = 0usize;
        let mut i = 0usize;
        while i < chars.len() {
            let (_, c) = chars[i];
            if c == '\n' {
                // paragraph break: newline, optional spaces, newline
                let mut j = i + 1;
                while j < chars.len() && chars[j].1.is_whitespace() && chars[j].1 != '\n' {
                    j += 1;
                }
                if j < chars.len() && chars[j].1 == '\n' {
                    push_span(text, start, chars[i].0, &mut spans);
                    start = chars[j].0;
                    i = j + 1;
                    continue;
                }
                i += 1;
                continue;
            }
            if !is_terminal(c) {
                i += 1;
                continue;
            }
            let run_start = i;
            let mut j = i;
            while j < chars.len() && is_terminal(chars[j].1) {
                j += 1;
            }
            let run_end = j;
            while j < chars.len() && is_closing(chars[j].1) {
                j += 1;
            }
            let end_byte = chars.get(j).map_or(text.len(), |&(b, _)| b);
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            let followed_by_space = k > j;
            let boundary = followed_by_space
                && k < chars.len()
                && {
                    let next = chars[k].1;
                    next.is_uppercase() || next.is_ascii_digit() || is_opening_quote(next)
                }
                && !self.is_abbreviation(text, &chars, run_start, run_end);
            if boundary {
                push_span(text, start, end_byte, &mut spans);
                start = chars[k].0;
                i = k;
            } else {
                i = j.max(i + 1);
            }
        }
        push_span(text, start, text.len(), &mut spans);
        spans
    }

    fn is_abbreviation(&self, text: &str, chars: &[(usize, char)], run_start: usize, run_end: usize) -> bool {
        // Only a single period can close an abbreviation.
        if run_end - run_start != 1 || chars[run_start].1 != '.' {
            return false;
        }
        let mut w = run_start;
        while w > 0 && !chars[w - 1].1.is_whitespace() {
            w -= 1;
        }
        let word_end = chars[run_start].0 + 1;
        let word = text[chars[w].0..word_end].trim_start_matches(|c: char| !c.is_alphanumeric());
        self.abbreviations.contains(&word.to_lowercase())
    }
}

fn push_span<'t>(text: &'t str, start: usize, end: usize, spans: &mut Vec<&'t str>) {
    let s = text[start..end].trim();
    if !s.is_empty() {
        spans.push(s);
    }
}

/// [`SentenceSplitter::split`] with the default abbreviation list.
pub fn split_sentences(text: &str) -> Vec<&str> {
    SentenceSplitter::default().split(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_sentences() {
        assert_eq!(split_sentences("I agree. IMO it works."), ["I agree.", "IMO it works."]);
    }

    #[test]
    fn abbreviation_suppresses_split() {
        assert_eq!(split_sentences("e.g. this stays together"), ["e.g. this stays together"]);
        assert_eq!(
            split_sentences("Ask Dr. Smith about it. He knows."),
            ["Ask Dr. Smith about it.", "He knows."]
        );
        assert_eq!(split_sentences("Cats vs. Dogs is old."), ["Cats vs. Dogs is old."]);
    }

    #[test]
    fn empty_input() {
        assert!(split_sentences("").is_empty());
        assert!(split_sentences("   ").is_empty());
    }

    #[test]
    fn lowercase_continuation_does_not_split() {
        assert_eq!(split_sentences("I went. imo it was bad."), ["I went. imo it was bad."]);
    }

    #[test]
    fn digits_quotes_and_closers() {
        assert_eq!(split_sentences("Wait! 3 more."), ["Wait!", "3 more."]);
        assert_eq!(
            split_sentences("He said \"no.\" Then left?! \"Why\" indeed."),
            ["He said \"no.\"", "Then left?!", "\"Why\" indeed."]
        );
    }

    #[test]
    fn paragraph_break() {
        assert_eq!(split_sentences("great game\n\nimo he is the best"), ["great game", "imo he is the best"]);
        assert_eq!(split_sentences("one line\nstill same"), ["one line\nstill same"]);
    }

    #[test]
    fn decimal_is_not_a_boundary() {
        assert_eq!(split_sentences("It costs 3.5 dollars."), ["It costs 3.5 dollars."]);
    }

    #[test]
    fn spans_cover_all_non_whitespace() {
        let text = "A b. C d!  E f? g h. I\n\nJ k";
        let joined: String = split_sentences(text).concat().split_whitespace().collect();
        let original: String = text.split_whitespace().collect();
        assert_eq!(joined, original);
    }
}
