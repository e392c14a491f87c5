//! Scalar BLEU and loss: explicit loops over positions instead of hash maps.

fn count(seq: &[u32], gram: &[u32]) -> usize {
    let n = gram.len();
    if seq.len() < n {
        return 0;
    }
    (0..=seq.len() - n).filter(|&i| &seq[i..i + n] == gram).count()
}

/// Clipped matches and candidate total for order `n`.
pub fn order_counts(reference: &[u32], candidate: &[u32], n: usize) -> (usize, usize) {
    if candidate.len() < n {
        return (0, 0);
    }
    let mut matched = 0;
    let mut total = 0;
    for i in 0..=candidate.len() - n {
        let gram = &candidate[i..i + n];
        let first = (0..i).all(|j| &candidate[j..j + n] != gram);
        if first {
            let c = count(candidate, gram);
            matched += c.min(count(reference, gram));
            total += c;
        }
    }
    (matched, total)
}

pub fn score(
    matched: &[usize],
    total: &[usize],
    ref_total: &[usize],
    cand_len: usize,
    ref_len: usize,
    weights: &[f64],
) -> f64 {
    if cand_len == 0 || ref_len == 0 {
        return 0.0;
    }
    let ratio = cand_len as f64 / ref_len as f64;
    let mut log = if 1.0 - ratio < 0.0 { 1.0 - ratio } else { 0.0 };
    for i in 0..weights.len() {
        if weights[i] != 0.0 {
            let p = if total[i] > 0 {
                matched[i] as f64 / total[i] as f64
            } else if ref_total[i] == 0 {
                1.0
            } else {
                0.0
            };
            let p = if p < 1e-12 { 1e-12 } else { p };
            log += weights[i] * p.ln();
        }
    }
    log.exp()
}

fn grams(seq: &[u32], n: usize) -> usize {
    (seq.len() + 1).saturating_sub(n)
}

pub fn sentence(reference: &[u32], candidate: &[u32], weights: &[f64]) -> f64 {
    corpus(&[(reference.to_vec(), candidate.to_vec())], weights)
}

pub fn corpus(pairs: &[(Vec<u32>, Vec<u32>)], weights: &[f64]) -> f64 {
    let mut m = vec![0; weights.len()];
    let mut t = vec![0; weights.len()];
    let mut rt = vec![0; weights.len()];
    let (mut cl, mut rl) = (0, 0);
    for (r, c) in pairs {
        for n in 1..=weights.len() {
            let (a, b) = order_counts(r, c, n);
            m[n - 1] += a;
            t[n - 1] += b;
            rt[n - 1] += grams(r, n);
        }
        cl += c.len();
        rl += r.len();
    }
    score(&m, &t, &rt, cl, rl, weights)
}

pub fn loss(p: &[f64], q: &[f64], mask: &[bool], batch: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..p.len() {
        if !mask[i] {
            continue;
        }
        let mut pi = p[i];
        if pi < 1e-12 {
            pi = 1e-12;
        }
        if pi > 1.0 - 1e-12 {
            pi = 1.0 - 1e-12;
        }
        total -= q[i] * pi.ln() + (1.0 - q[i]) * (1.0 - pi).ln();
    }
    total / batch as f64
}
