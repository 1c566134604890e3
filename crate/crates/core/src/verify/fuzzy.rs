use std::collections::HashMap;

use crate::ingest::Span;

/// Upper bound on (start, length) window comparisons per needle when the
/// haystack is too long to enumerate exhaustively.
pub const MAX_COMPARISONS: usize = 20_000;

/// Case-folded, whitespace-collapsed characters plus, for each output
/// character, the index of the source character it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Normalized {
    pub chars: Vec<char>,
    pub origin: Vec<usize>,
}

pub fn normalize(text: &str) -> Normalized {
    let mut chars = Vec::new();
    let mut origin = Vec::new();
    let mut pending_space: Option<usize> = None;
    for (i, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            if !chars.is_empty() && pending_space.is_none() {
                pending_space = Some(i);
            }
            continue;
        }
        if let Some(at) = pending_space.take() {
            chars.push(' ');
            origin.push(at);
        }
        for l in c.to_lowercase() {
            chars.push(l);
            origin.push(i);
        }
    }
    Normalized { chars, origin }
}

/// Best window match of a needle inside a haystack, in normalized
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowMatch {
    pub ratio: u8,
    pub start: usize,
    pub len: usize,
}

impl WindowMatch {
    /// The matched window as a character span of the original haystack.
    pub fn source_span(&self, hay: &Normalized) -> Option<Span> {
        if self.len == 0 {
            return None;
        }
        let start = hay.origin[self.start];
        let end = hay.origin[self.start + self.len - 1] + 1;
        Some(Span::new(start, end))
    }
}

/// Ratio for one comparison. Capped at 99 unless the strings are equal, so
/// that 100 always means a verbatim match.
pub fn ratio_from_distance(distance: usize, needle_len: usize, window_len: usize) -> u8 {
    let longest = needle_len.max(window_len);
    if longest == 0 {
        return 0;
    }
    let r = (100.0 * (1.0 - distance as f64 / longest as f64)).round() as u8;
    if distance > 0 {
        r.min(99)
    } else {
        r
    }
}

/// Window lengths tried for a needle of `n` characters.
pub fn window_lengths(n: usize, hay_len: usize) -> (usize, usize) {
    let slack = n.div_ceil(4);
    let lo = n.saturating_sub(slack).max(1);
    let hi = (n + slack).min(hay_len);
    (lo.min(hi), hi)
}

/// Edit distances from `needle` to every prefix of `text` of length
/// `lo..=hi`, from a single dynamic-programming pass.
fn prefix_distances(needle: &[char], text: &[char], lo: usize, hi: usize, out: &mut Vec<usize>) {
    out.clear();
    // column-major: prev[i] = distance(needle[..i], text[..j])
    let n = needle.len();
    let mut prev: Vec<usize> = (0..=n).collect();
    let mut cur = vec![0; n + 1];
    if lo == 0 {
        out.push(prev[n]);
    }
    for j in 1..=hi {
        cur[0] = j;
        let tc = text[j - 1];
        for i in 1..=n {
            let sub = prev[i - 1] + usize::from(needle[i - 1] != tc);
            cur[i] = sub.min(prev[i] + 1).min(cur[i - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
        if j >= lo {
            out.push(prev[n]);
        }
    }
}

fn consider(best: &mut Option<WindowMatch>, cand: WindowMatch, n: usize) {
    let better = match best {
        None => true,
        Some(b) => {
            cand.ratio > b.ratio
                || (cand.ratio == b.ratio
                    && (cand.start, cand.len.abs_diff(n), cand.len) < (b.start, b.len.abs_diff(n), b.len))
        }
    };
    if better {
        *best = Some(cand);
    }
}

/// Evaluate every window length at each given start. Returns the number of
/// comparisons spent.
fn scan_starts(
    needle: &[char],
    hay: &[char],
    starts: impl IntoIterator<Item = usize>,
    budget: usize,
    best: &mut Option<WindowMatch>,
) -> usize {
    let n = needle.len();
    let (lo, hi) = window_lengths(n, hay.len());
    let mut spent = 0;
    let mut dists = Vec::new();
    for s in starts {
        if spent >= budget {
            break;
        }
        let room = hay.len() - s;
        if room < lo {
            continue;
        }
        let hi_s = hi.min(room);
        prefix_distances(needle, &hay[s..], lo, hi_s, &mut dists);
        for (k, &d) in dists.iter().enumerate() {
            let len = lo + k;
            consider(
                best,
                WindowMatch {
                    ratio: ratio_from_distance(d, n, len),
                    start: s,
                    len,
                },
                n,
            );
        }
        spent += dists.len();
        if best.is_some_and(|b| b.ratio == 100) {
            break;
        }
    }
    spent
}

/// Best partial ratio of `needle` over windows of `hay` (both already
/// normalized).
///
/// Exhaustive when the window count fits in `MAX_COMPARISONS`. Otherwise
/// starts are ranked by shared character trigrams (diagonal votes) and
/// scanned in that order, each with a neighbourhood absorbing indels, until
/// the budget runs out.
pub fn best_window(needle: &[char], hay: &[char]) -> Option<WindowMatch> {
    let n = needle.len();
    if n == 0 || hay.is_empty() {
        return None;
    }
    if let Some(pos) = find_subslice(hay, needle) {
        return Some(WindowMatch {
            ratio: 100,
            start: pos,
            len: n,
        });
    }
    let mut best = None;
    let (lo, hi) = window_lengths(n, hay.len());
    let last_start = hay.len() - lo;
    let total = (0..=last_start).map(|s| hi.min(hay.len() - s) + 1 - lo).sum::<usize>();
    if total <= MAX_COMPARISONS {
        scan_starts(needle, hay, 0..=last_start, usize::MAX, &mut best);
        return best;
    }

    let starts = candidate_starts(needle, hay, last_start);
    if starts.is_empty() {
        // no shared character at all: every window scores 0
        return Some(WindowMatch {
            ratio: 0,
            start: 0,
            len: lo,
        });
    }
    scan_starts(needle, hay, starts, MAX_COMPARISONS, &mut best);
    best
}

/// Window starts ordered by q-gram diagonal votes (descending, then
/// ascending position), each followed by its neighbourhood.
fn candidate_starts(needle: &[char], hay: &[char], last_start: usize) -> Vec<usize> {
    let n = needle.len();
    // trigrams first; shorter grams only when no trigram is shared
    let mut votes: HashMap<usize, usize> = HashMap::new();
    for q in (1..=n.min(3)).rev() {
        let mut grams: HashMap<&[char], Vec<usize>> = HashMap::new();
        for o in 0..=n - q {
            grams.entry(&needle[o..o + q]).or_default().push(o);
        }
        for p in 0..=hay.len() - q {
            if let Some(offsets) = grams.get(&hay[p..p + q]) {
                for &o in offsets {
                    let s = p.saturating_sub(o).min(last_start);
                    *votes.entry(s).or_default() += 1;
                }
            }
        }
        if !votes.is_empty() {
            break;
        }
    }
    let mut ranked: Vec<(usize, usize)> = votes.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let radius = n.div_ceil(4);
    let mut seen = vec![false; last_start + 1];
    let mut out = Vec::new();
    for (s, _) in ranked {
        let from = s.saturating_sub(radius);
        let to = (s + radius).min(last_start);
        for c in std::iter::once(s).chain(from..=to) {
            if !seen[c] {
                seen[c] = true;
                out.push(c);
            }
        }
    }
    out
}

fn find_subslice(hay: &[char], needle: &[char]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}
