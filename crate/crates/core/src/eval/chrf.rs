use std::collections::HashMap;

pub const DEFAULT_CHAR_ORDER: usize = 6;
pub const DEFAULT_BETA: f64 = 2.0;

/// Per-order n-gram counts: (hypothesis total, reference total, matches).
pub fn ngram_stats(hyp: &str, reference: &str, max_n: usize) -> Vec<(usize, usize, usize)> {
    let h: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
    let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    (1..=max_n)
        .map(|n| {
            let hc = counts(&h, n);
            let rc = counts(&r, n);
            let matches = hc
                .iter()
                .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
                .sum();
            (h.len().saturating_sub(n - 1), r.len().saturating_sub(n - 1), matches)
        })
        .collect()
}

fn counts(chars: &[char], n: usize) -> HashMap<&[char], usize> {
    let mut m = HashMap::new();
    if chars.len() >= n {
        for w in chars.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Character n-gram F-score on a 0–100 scale.
///
/// Whitespace is removed before extracting n-grams. Precision and recall
/// are averaged over the orders where both sides have n-grams, then
/// combined with F-beta.
pub fn chrf_with(hyp: &str, reference: &str, max_n: usize, beta: f64) -> f64 {
    let factor = beta * beta;
    let (mut p, mut r, mut effective) = (0.0, 0.0, 0usize);
    for (nh, nr, nm) in ngram_stats(hyp, reference, max_n) {
        if nh > 0 && nr > 0 {
            p += nm as f64 / nh as f64;
            r += nm as f64 / nr as f64;
            effective += 1;
        }
    }
    if effective == 0 {
        return 0.0;
    }
    p /= effective as f64;
    r /= effective as f64;
    if p + r == 0.0 {
        return 0.0;
    }
    100.0 * (1.0 + factor) * p * r / (factor * p + r)
}

pub fn chrf(hyp: &str, reference: &str) -> f64 {
    chrf_with(hyp, reference, DEFAULT_CHAR_ORDER, DEFAULT_BETA)
}
