use std::collections::{BTreeMap, HashMap};

use proptest::prelude::*;
use semcom::corpus::synthesize;
use semcom::text::*;

#[test]
fn frequencies_match_independent_count() {
    let corpus = synthesize(1000, 30, 8).unwrap();
    let vocab = build_vocab(corpus.iter().map(String::as_str), 1, usize::MAX).unwrap();

    let mut counts: HashMap<String, usize> = HashMap::new();
    for line in &corpus {
        for word in line.to_lowercase().split_whitespace() {
            *counts.entry(word.to_string()).or_default() += 1;
        }
    }
    assert_eq!(vocab.corpus_tokens().len(), counts.len());
    let mut expected: Vec<(&String, &usize)> = counts.iter().collect();
    expected.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
    for (i, (tok, _)) in expected.iter().enumerate() {
        assert_eq!(vocab.id(tok), i + RESERVED.len(), "{tok}");
    }

    let frequent = build_vocab(corpus.iter().map(String::as_str), 100, usize::MAX).unwrap();
    let want = counts.values().filter(|&&c| c >= 100).count();
    assert_eq!(frequent.corpus_tokens().len(), want);
    let capped = build_vocab(corpus.iter().map(String::as_str), 1, 10).unwrap();
    assert_eq!(capped.corpus_tokens(), &vocab.corpus_tokens()[..10]);
}

#[test]
fn small_corpus_examples() {
    let v = build_vocab(["a b", "a"], 1, 10).unwrap();
    assert!(v.id("a") < v.id("b"));
    let v = build_vocab(["a b", "a"], 2, 10).unwrap();
    assert_eq!(v.corpus_tokens(), &["a"]);
}

#[test]
fn length_filter() {
    let v = build_vocab(["one two three four five six"], 1, 10).unwrap();
    let lines = ["one two three", "one two three four", "one two three four five six"];
    let enc = encode_corpus(lines, &v, 8).unwrap();
    assert_eq!(enc.len(), 2);
    assert_eq!(max_words_for(22), 20);
    assert_eq!(max_words_for(40), 30);
}

#[test]
fn all_pad_batch_needs_raw_constructor() {
    assert!(TokenBatch::new(vec![vec![PAD; 4]]).is_err());
    let b = TokenBatch::from_raw(vec![PAD; 8], 2, 4).unwrap();
    assert_eq!(b.lengths(), vec![0, 0]);
    assert!(TokenBatch::from_raw(vec![PAD; 7], 2, 4).is_err());
}

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "the", "house", "agrees", "budget", "we", "vote", "today", ",", ".",
    ])
    .prop_map(str::to_string)
}

proptest! {
    #[test]
    fn encode_decode_round_trip(words in prop::collection::vec(word(), 0..12), extra in 0usize..5) {
        let text = words.join(" ");
        let vocab = build_vocab(["the house agrees budget we vote today , ."], 1, 100).unwrap();
        let max_len = (words.len() + 2 + extra).max(3);
        let ids = encode_sentence(&text, &vocab, max_len).unwrap();
        prop_assert_eq!(ids.len(), max_len);
        prop_assert_eq!(ids[0], START);
        prop_assert_eq!(decode_ids(&ids, &vocab), tokenize(&text));
        let batch = TokenBatch::new(vec![ids]).unwrap();
        prop_assert_eq!(batch.lengths()[0], words.len() + 2);
    }

    #[test]
    fn corpus_tokens_never_take_reserved_ids(lines in prop::collection::vec("[a-z<>]{1,6}( [a-z<>]{1,6}){0,5}", 1..20)) {
        let vocab = build_vocab(lines.iter().map(String::as_str), 1, 1000).unwrap();
        for (i, tok) in RESERVED.iter().enumerate() {
            prop_assert_eq!(vocab.id(tok), i);
        }
        for line in &lines {
            for tok in tokenize(line) {
                prop_assert!(vocab.id(&tok) >= RESERVED.len(), "{tok}");
            }
        }
        let back = Vocabulary::parse(&vocab.to_file_string()).unwrap();
        prop_assert_eq!(back, vocab);
    }

    #[test]
    fn batches_partition_the_corpus(n in 1usize..60, bs in 1usize..17, seed in any::<u64>()) {
        let vocab = build_vocab(["w0 w1 w2 w3 w4 w5 w6 w7"], 1, 100).unwrap();
        let corpus: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let words: Vec<String> = (0..1 + i % 7).map(|k| format!("w{}", (i + k) % 8)).collect();
                encode_sentence(&words.join(" "), &vocab, 10).unwrap()
            })
            .collect();
        let batches = make_batches(&corpus, bs, seed).unwrap();
        prop_assert_eq!(batches.len(), n.div_ceil(bs));
        let mut seen: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for b in &batches {
            for (m, &id) in b.pad_mask().iter().zip(b.ids()) {
                prop_assert_eq!(*m, id == PAD);
            }
            for r in 0..b.rows() {
                *seen.entry(b.row(r).to_vec()).or_default() += 1;
            }
        }
        let mut want: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for s in &corpus {
            *want.entry(s.clone()).or_default() += 1;
        }
        prop_assert_eq!(seen, want);
        prop_assert_eq!(make_batches(&corpus, bs, seed).unwrap(), batches);
    }
}
