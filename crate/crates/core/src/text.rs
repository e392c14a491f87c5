//! Tokenization, vocabulary and padded batches.
//!
//! Sentences are lowercased, split on whitespace, and every character that
//! is neither alphanumeric nor whitespace becomes a token of its own.
//! Encoded sentences are wrapped in `START … END` and right-padded with
//! `PAD` to a fixed length.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed::rng_from;

pub const PAD: usize = 0;
pub const START: usize = 1;
pub const END: usize = 2;
pub const UNK: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<start>", "<end>", "<unk>"];

/// Shortest and longest sentences (in tokens) kept for training.
pub const MIN_WORDS: usize = 4;
pub const MAX_WORDS: usize = 30;

pub fn is_special(id: usize) -> bool {
    matches!(id, PAD | START | END)
}

pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if c.is_alphanumeric() {
            current.push(c);
        } else {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(c.to_string());
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens(corpus_tokens: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, usize> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        for tok in corpus_tokens {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::Format(format!("invalid vocabulary token {tok:?}")));
            }
            if index.contains_key(&tok) {
                return Err(Error::Format(format!("duplicate vocabulary token {tok:?}")));
            }
            index.insert(tok.clone(), tokens.len());
            tokens.push(tok);
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Total size including the four reserved ids.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == RESERVED.len()
    }

    /// Id of `token`, or `UNK`.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn corpus_tokens(&self) -> &[String] {
        &self.tokens[RESERVED.len()..]
    }

    /// FNV-1a over the token list; identifies a vocabulary in checkpoints.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in &self.tokens {
            for b in t.bytes().chain(std::iter::once(b'\n')) {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    /// One token per line: the four reserved tokens, then corpus tokens in
    /// id order.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            let _ = writeln!(s, "{t}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        for (i, expected) in RESERVED.iter().enumerate() {
            match lines.next() {
                Some(l) if l == *expected => {}
                other => {
                    return Err(Error::Format(format!(
                        "vocabulary header line {}: expected {expected:?}, found {other:?}",
                        i + 1
                    )))
                }
            }
        }
        Self::from_tokens(lines.map(str::to_string))
    }
}

/// Keeps tokens seen at least `min_freq` times, most frequent first with
/// ties broken lexicographically, truncated to `max_size` corpus tokens.
pub fn build_vocab<'a>(
    corpus: impl IntoIterator<Item = &'a str>,
    min_freq: usize,
    max_size: usize,
) -> Result<Vocabulary> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut sentences = 0usize;
    for line in corpus {
        sentences += 1;
        for tok in tokenize(line) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    if sentences == 0 {
        return Err(Error::Ingest("empty corpus".into()));
    }
    let mut ranked: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_freq.max(1) && !RESERVED.contains(&t.as_str()))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size);
    Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t))
}

/// `START ids END PAD…` of exactly `max_len` ids.
///
/// Tokens beyond `max_len - 2` are a contract violation; callers filter by
/// length first.
pub fn encode_tokens(tokens: &[String], vocab: &Vocabulary, max_len: usize) -> Result<Vec<usize>> {
    if max_len < 3 {
        return Err(Error::Contract(format!("max_len {max_len} is below 3")));
    }
    if tokens.len() > max_len - 2 {
        return Err(Error::Contract(format!(
            "sentence of {} tokens does not fit max_len {max_len}",
            tokens.len()
        )));
    }
    let mut ids = Vec::with_capacity(max_len);
    ids.push(START);
    ids.extend(tokens.iter().map(|t| vocab.id(t)));
    ids.push(END);
    ids.resize(max_len, PAD);
    Ok(ids)
}

pub fn encode_sentence(text: &str, vocab: &Vocabulary, max_len: usize) -> Result<Vec<usize>> {
    encode_tokens(&tokenize(text), vocab, max_len)
}

/// Ids strictly between `START` and the first `END`, with other special ids
/// dropped.
pub fn content_ids(ids: &[usize]) -> Vec<usize> {
    ids.iter()
        .copied()
        .skip_while(|&i| i == START)
        .take_while(|&i| i != END)
        .filter(|&i| !is_special(i))
        .collect()
}

pub fn decode_ids(ids: &[usize], vocab: &Vocabulary) -> Vec<String> {
    content_ids(ids)
        .into_iter()
        .map(|i| vocab.token(i).unwrap_or(RESERVED[UNK]).to_string())
        .collect()
}

/// Longest sentence, in tokens, that fits `max_len` after wrapping.
pub fn max_words_for(max_len: usize) -> usize {
    MAX_WORDS.min(max_len.saturating_sub(2))
}

/// Tokenizes and length-filters every line, then encodes the survivors.
pub fn encode_corpus<'a>(
    lines: impl IntoIterator<Item = &'a str>,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Vec<Vec<usize>>> {
    let max_words = max_words_for(max_len);
    let mut out = Vec::new();
    for line in lines {
        let toks = tokenize(line);
        if (MIN_WORDS..=max_words).contains(&toks.len()) {
            out.push(encode_tokens(&toks, vocab, max_len)?);
        }
    }
    Ok(out)
}

/// Padded `B×L` id matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBatch {
    ids: Vec<usize>,
    rows: usize,
    len: usize,
}

impl TokenBatch {
    /// Checks that every row starts with `START`, has exactly one `END`, and
    /// is padded only after it.
    pub fn new(rows: Vec<Vec<usize>>) -> Result<Self> {
        let len = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || len < 2 {
            return Err(Error::Contract("batch needs at least one row of length 2".into()));
        }
        for r in &rows {
            if r.len() != len {
                return Err(Error::Contract("ragged batch".into()));
            }
            let end = r.iter().position(|&i| i == END);
            let ok = r[0] == START
                && end.is_some_and(|e| r[1..e].iter().all(|&i| !is_special(i)) && r[e + 1..].iter().all(|&i| i == PAD));
            if !ok {
                return Err(Error::Contract(format!("malformed row {r:?}")));
            }
        }
        let n = rows.len();
        Ok(TokenBatch {
            ids: rows.into_iter().flatten().collect(),
            rows: n,
            len,
        })
    }

    /// `rows × len` ids with only the dimensions checked. For degenerate
    /// inputs such as all-`PAD` rows.
    pub fn from_raw(ids: Vec<usize>, rows: usize, len: usize) -> Result<Self> {
        if rows == 0 || len == 0 || ids.len() != rows * len {
            return Err(Error::Contract(format!("{} ids for a {rows}×{len} batch", ids.len())));
        }
        Ok(TokenBatch { ids, rows, len })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn seq_len(&self) -> usize {
        self.len
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.ids[r * self.len..(r + 1) * self.len]
    }

    pub fn pad_mask(&self) -> Vec<bool> {
        self.ids.iter().map(|&i| i == PAD).collect()
    }

    /// Non-pad ids per row, `START` and `END` included.
    pub fn lengths(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|r| self.row(r).iter().filter(|&&i| i != PAD).count())
            .collect()
    }

    /// Row-selected copy, in the order given.
    pub fn select(&self, rows: &[usize]) -> TokenBatch {
        TokenBatch {
            ids: rows.iter().flat_map(|&r| self.row(r).iter().copied()).collect(),
            rows: rows.len(),
            len: self.len,
        }
    }
}

/// Shuffles with `seed` and cuts into batches of `batch_size`; the last
/// batch may be smaller.
pub fn make_batches(corpus: &[Vec<usize>], batch_size: usize, shuffle_seed: u64) -> Result<Vec<TokenBatch>> {
    if corpus.is_empty() || batch_size == 0 {
        return Err(Error::Contract("empty corpus or zero batch size".into()));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng_from(shuffle_seed));
    order
        .chunks(batch_size)
        .map(|chunk| TokenBatch::new(chunk.iter().map(|&i| corpus[i].clone()).collect()))
        .collect()
}

/// Batches in corpus order.
pub fn sequential_batches(corpus: &[Vec<usize>], batch_size: usize) -> Result<Vec<TokenBatch>> {
    if batch_size == 0 {
        return Err(Error::Contract("zero batch size".into()));
    }
    corpus.chunks(batch_size).map(|c| TokenBatch::new(c.to_vec())).collect()
}
