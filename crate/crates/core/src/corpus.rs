//! Synthetic parliamentary-style sentences for desk-scale runs.
//!
//! Sentences are drawn from a small phrase grammar: a fixed skeleton of
//! function words around content slots (speaker, action, object, topic,
//! qualifier). The skeleton is predictable from context while each slot
//! carries information that has to cross the channel.

use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from, stream};

const SUBJECTS: &[&str] = &[
    "the commission",
    "the council",
    "parliament",
    "this house",
    "the committee",
    "our group",
    "the rapporteur",
    "the presidency",
    "member states",
    "the union",
    "the government",
    "national authorities",
];

const ACTIONS: &[&str] = &[
    "supports",
    "rejects",
    "welcomes",
    "must review",
    "has adopted",
    "will discuss",
    "cannot accept",
    "should strengthen",
    "has examined",
    "intends to amend",
    "will finance",
    "opposes",
];

const OBJECTS: &[&str] = &[
    "the proposal",
    "this report",
    "the directive",
    "the budget",
    "the agreement",
    "these measures",
    "the amendment",
    "the regulation",
    "the programme",
    "the strategy",
    "the resolution",
    "the framework",
];

const TOPICS: &[&str] = &[
    "on fisheries",
    "on energy",
    "on human rights",
    "for small businesses",
    "in the regions",
    "on climate change",
    "on public health",
    "on transport safety",
    "on agriculture",
    "on trade",
    "on migration",
    "on research",
    "for young people",
    "on water quality",
];

const QUALIFIERS: &[&str] = &[
    "today",
    "this year",
    "without delay",
    "in principle",
    "once again",
    "next week",
    "in full",
    "at last",
];

const OPENERS: &[&str] = &[
    "mr president ,",
    "we believe that",
    "in my view",
    "clearly",
    "madam president ,",
];

fn pick<'a, R: Rng>(rng: &mut R, list: &[&'a str]) -> &'a str {
    list.choose(rng).copied().unwrap_or_default()
}

fn sentence<R: Rng>(rng: &mut R) -> String {
    let mut parts = Vec::with_capacity(7);
    if rng.random_bool(0.35) {
        parts.push(pick(rng, OPENERS));
    }
    parts.push(pick(rng, SUBJECTS));
    parts.push(pick(rng, ACTIONS));
    parts.push(pick(rng, OBJECTS));
    if rng.random_bool(0.8) {
        parts.push(pick(rng, TOPICS));
    }
    if rng.random_bool(0.4) {
        parts.push(pick(rng, QUALIFIERS));
    }
    parts.push(".");
    parts.join(" ")
}

/// Token count of the shortest sentence the grammar produces.
pub const SHORTEST_SENTENCE: usize = 5;

/// `count` sentences of at most `max_words` tokens, deterministic in `seed`.
pub fn synthesize(count: usize, max_words: usize, seed: u64) -> Result<Vec<String>> {
    if max_words < SHORTEST_SENTENCE {
        return Err(Error::Contract(format!(
            "max_words {max_words} is below the shortest sentence ({SHORTEST_SENTENCE} tokens)"
        )));
    }
    let mut rng = rng_from(derive_seed(seed, &[stream::CORPUS]));
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let s = sentence(&mut rng);
        if crate::text::tokenize(&s).len() <= max_words {
            out.push(s);
        }
    }
    Ok(out)
}

/// Reads a UTF-8 corpus, one sentence per line; blank lines are skipped.
pub fn read_corpus(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if lines.is_empty() {
        return Err(Error::Ingest(format!("{} has no sentences", path.display())));
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{tokenize, MIN_WORDS};

    #[test]
    fn deterministic_and_bounded() {
        let a = synthesize(200, 14, 3).unwrap();
        assert_eq!(a, synthesize(200, 14, 3).unwrap());
        assert_ne!(a, synthesize(200, 14, 4).unwrap());
        for s in &a {
            let n = tokenize(s).len();
            assert!((MIN_WORDS..=14).contains(&n), "{s}");
        }
        assert_eq!(synthesize(3, SHORTEST_SENTENCE, 1).unwrap().len(), 3);
        assert!(synthesize(3, SHORTEST_SENTENCE - 1, 1).is_err());
    }
}
