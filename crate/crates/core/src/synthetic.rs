//! Seeded toy corpora over a small shared vocabulary.
//!
//! General sentences are factual reports; opinion sentences carry the claim
//! markers `should`, `must be` and `better than`. Labelled data draws claims
//! from the opinion templates and non-claims from the factual ones.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::pipeline::LabeledSentence;

pub const NOUNS: &[&str] = &[
    "school", "tax", "market", "team", "city", "law", "game", "movie", "phone", "car", "coach", "price", "policy",
    "player", "book", "road", "park", "bank", "film", "band",
];
pub const VERBS: &[&str] = &["opened", "closed", "moved", "lost", "won", "changed", "started", "ended", "raised", "sold"];
pub const OUTCOMES: &[&str] = &["banned", "fixed", "cheaper", "replaced", "funded", "removed", "taxed", "reformed"];
pub const TIMES: &[&str] = &["yesterday", "last week", "in march", "on monday", "this year", "at noon"];

fn pick<'a, R: Rng + ?Sized>(rng: &mut R, words: &[&'a str]) -> &'a str {
    words.choose(rng).expect("word lists are non-empty")
}

/// One factual sentence.
pub fn factual_sentence<R: Rng + ?Sized>(rng: &mut R) -> String {
    let (a, b) = (pick(rng, NOUNS), pick(rng, NOUNS));
    let (v, t) = (pick(rng, VERBS), pick(rng, TIMES));
    match rng.gen_range(0..4) {
        0 => format!("The {a} {v} {t}."),
        1 => format!("The {a} and the {b} {v} {t}."),
        2 => format!("A {a} {v} near the {b}."),
        _ => format!("The {a} {v} the {b} {t}."),
    }
}

/// One opinion sentence with a claim marker.
pub fn opinion_sentence<R: Rng + ?Sized>(rng: &mut R) -> String {
    let (a, b) = (pick(rng, NOUNS), pick(rng, NOUNS));
    let (o, t) = (pick(rng, OUTCOMES), pick(rng, TIMES));
    match rng.gen_range(0..4) {
        0 => format!("The {a} should be {o}."),
        1 => format!("The {a} must be {o} {t}."),
        2 => format!("The {a} is better than the {b}."),
        _ => format!("Every {a} should be {o} {t}."),
    }
}

/// General-domain corpus: factual sentences only.
pub fn general_corpus<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<String> {
    (0..n).map(|_| factual_sentence(rng)).collect()
}

/// Opinion corpus: mostly opinion sentences with a factual minority.
pub fn opinion_corpus<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<String> {
    (0..n)
        .map(|_| if rng.gen_bool(0.8) { opinion_sentence(rng) } else { factual_sentence(rng) })
        .collect()
}

/// Labelled sentences; each is a claim with probability `claim_frac`.
pub fn labeled_dataset<R: Rng + ?Sized>(n: usize, claim_frac: f64, rng: &mut R) -> Vec<LabeledSentence> {
    (0..n)
        .map(|_| {
            if rng.gen_bool(claim_frac) {
                LabeledSentence {
                    label: 1,
                    text: opinion_sentence(rng),
                }
            } else {
                LabeledSentence {
                    label: 0,
                    text: factual_sentence(rng),
                }
            }
        })
        .collect()
}
