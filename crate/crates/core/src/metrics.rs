//! Training loss and BLEU.
//!
//! BLEU follows the log-domain definition
//!
//! ```text
//! log BLEU = min(1 − len(cand)/len(ref), 0) + Σ_i w_i · log p_i
//! p_i      = Σ_k min(C_k(cand), C_k(ref)) / Σ_k C_k(cand)
//! ```
//!
//! where `C_k` counts the `k`-th distinct `i`-gram. The length term
//! penalizes candidates that are *longer* than the reference. `p_i` is
//! floored before the log so a zero-match order gives a tiny score rather
//! than `-inf`. When neither side has any `i`-gram, `p_i = 1`.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

/// Probability clamp applied before the logs of the loss.
pub const PROB_FLOOR: f64 = 1e-12;

/// Per-position predicted probabilities `p`, targets `q ∈ {0, 1}` and a
/// mask of positions that count, for `batch` sentences.
#[derive(Debug, Clone)]
pub struct LossInputs {
    pub probs: Vec<f64>,
    pub targets: Vec<f64>,
    pub mask: Vec<bool>,
    pub batch: usize,
}

/// `-Σ_l [q·ln p + (1−q)·ln(1−p)]` over unmasked positions, averaged over
/// the batch, with `p` clamped to `[1e-12, 1 − 1e-12]`.
pub fn cross_entropy_loss(inputs: &LossInputs) -> Result<f64> {
    let n = inputs.probs.len();
    if inputs.targets.len() != n || inputs.mask.len() != n || inputs.batch == 0 {
        return Err(Error::Contract(format!(
            "loss inputs: {} probabilities, {} targets, {} mask entries, batch {}",
            n,
            inputs.targets.len(),
            inputs.mask.len(),
            inputs.batch
        )));
    }
    let mut total = 0.0;
    for i in 0..n {
        if inputs.mask[i] {
            let p = inputs.probs[i].clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            let q = inputs.targets[i];
            total += q * p.ln() + (1.0 - q) * (1.0 - p).ln();
        }
    }
    Ok(-total / inputs.batch as f64)
}

/// Counts of every contiguous `n`-gram; empty when `tokens` is shorter
/// than `n`. Callers strip special tokens first.
pub fn ngram_counts<T: Hash + Eq>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuConfig {
    /// `weights[i]` applies to `(i+1)`-grams.
    pub weights: Vec<f64>,
    pub floor: f64,
}

impl BleuConfig {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Contract(format!("BLEU weights {weights:?}")));
        }
        Ok(BleuConfig {
            weights,
            floor: PROB_FLOOR,
        })
    }

    /// Weight 1 on `order`-grams only.
    pub fn individual(order: usize) -> Self {
        assert!(order >= 1, "BLEU order starts at 1");
        let mut weights = vec![0.0; order];
        weights[order - 1] = 1.0;
        BleuConfig {
            weights,
            floor: PROB_FLOOR,
        }
    }

    pub fn max_order(&self) -> usize {
        self.weights.len()
    }
}

/// Clipped match and candidate totals per order, plus summed lengths.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BleuStats {
    pub matched: Vec<usize>,
    pub total: Vec<usize>,
    pub reference_total: Vec<usize>,
    pub candidate_len: usize,
    pub reference_len: usize,
}

impl BleuStats {
    pub fn new(max_order: usize) -> Self {
        BleuStats {
            matched: vec![0; max_order],
            total: vec![0; max_order],
            reference_total: vec![0; max_order],
            candidate_len: 0,
            reference_len: 0,
        }
    }

    pub fn add<T: Hash + Eq>(&mut self, reference: &[T], candidate: &[T]) {
        for i in 0..self.matched.len() {
            let r = ngram_counts(reference, i + 1);
            let c = ngram_counts(candidate, i + 1);
            self.matched[i] += c
                .iter()
                .map(|(g, &n)| n.min(r.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
            self.total[i] += c.values().sum::<usize>();
            self.reference_total[i] += r.values().sum::<usize>();
        }
        self.candidate_len += candidate.len();
        self.reference_len += reference.len();
    }

    pub fn score(&self, config: &BleuConfig) -> f64 {
        if self.candidate_len == 0 || self.reference_len == 0 {
            return 0.0;
        }
        let mut log_bleu = (1.0 - self.candidate_len as f64 / self.reference_len as f64).min(0.0);
        for (i, &w) in config.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let p = match (self.matched.get(i), self.total.get(i), self.reference_total.get(i)) {
                (Some(&m), Some(&t), _) if t > 0 => m as f64 / t as f64,
                (_, Some(0), Some(0)) => 1.0,
                _ => 0.0,
            };
            log_bleu += w * p.max(config.floor).ln();
        }
        log_bleu.exp()
    }
}

/// Sentence-level BLEU of `candidate` against `reference`.
pub fn bleu<T: Hash + Eq>(reference: &[T], candidate: &[T], config: &BleuConfig) -> f64 {
    let mut stats = BleuStats::new(config.max_order());
    stats.add(reference, candidate);
    stats.score(config)
}

/// Corpus-level BLEU: counts and lengths are summed over all pairs before
/// the ratios are taken.
pub fn corpus_bleu<'a, T, I>(pairs: I, config: &BleuConfig) -> f64
where
    T: Hash + Eq + 'a,
    I: IntoIterator<Item = (&'a [T], &'a [T])>,
{
    let mut stats = BleuStats::new(config.max_order());
    for (r, c) in pairs {
        stats.add(r, c);
    }
    stats.score(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn ngram_example_sentence() {
        let s = words("I have an apple");
        let one = ngram_counts(&s, 1);
        assert_eq!(one.len(), 4);
        assert!(one.values().all(|&c| c == 1));
        assert_eq!(one[&["I"][..]], 1);
        let two = ngram_counts(&s, 2);
        assert_eq!(two.len(), 3);
        for g in [["I", "have"], ["have", "an"], ["an", "apple"]] {
            assert_eq!(two[&g[..]], 1);
        }
        assert!(ngram_counts(&s, 5).is_empty());
    }

    #[test]
    fn hand_evaluated_scores() {
        let cfg = BleuConfig::individual(1);
        assert_eq!(bleu(&words("a b c d"), &words("a b c d"), &cfg), 1.0);
        assert!((bleu(&words("a b c d"), &words("a b x d"), &cfg) - 0.75).abs() < 1e-15);
        let long = bleu(&words("a b c d"), &words("a b c d e"), &cfg);
        assert!((long - (-0.25f64).exp() * 0.8).abs() < 1e-15);
        assert!((long - 0.6230).abs() < 1e-4);
        assert_eq!(bleu(&words("a b"), &[], &cfg), 0.0);
    }

    #[test]
    fn loss_examples() {
        let perfect = LossInputs {
            probs: vec![1.0 - 1e-12],
            targets: vec![1.0],
            mask: vec![true],
            batch: 1,
        };
        assert!(cross_entropy_loss(&perfect).unwrap() < 1e-11);
        let half = LossInputs {
            probs: vec![0.5, 0.3],
            targets: vec![1.0, 1.0],
            mask: vec![true, false],
            batch: 1,
        };
        assert!((cross_entropy_loss(&half).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        let bad = LossInputs {
            probs: vec![0.5],
            targets: vec![],
            mask: vec![true],
            batch: 1,
        };
        assert!(cross_entropy_loss(&bad).is_err());
    }

    #[test]
    fn clipping_caps_repeats() {
        let cfg = BleuConfig::individual(1);
        let r = words("the cat sat");
        let once = bleu(&r, &words("the dog sat"), &cfg);
        let repeated = bleu(&r, &words("the the sat"), &cfg);
        assert!(repeated <= once);
    }
}
