use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::SamplerError;

/// Okapi BM25 free parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

/// Lowercases and splits on every non-alphanumeric character. No stemming.
#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultTokenizer;

impl Tokenizer for DefaultTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        tokenize(text)
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Immutable inverted index over a fixed corpus.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    doc_ids: Vec<String>,
    positions: HashMap<String, usize>,
    doc_len: Vec<usize>,
    avgdl: f64,
    df: HashMap<String, usize>,
    postings: HashMap<String, Vec<(usize, u32)>>,
}

impl Bm25Index {
    pub fn build<I: AsRef<str>, T: AsRef<str>>(
        corpus: &[(I, T)],
        tokenizer: &dyn Tokenizer,
        params: Bm25Params,
    ) -> Result<Self, SamplerError> {
        let docs: Vec<(String, Vec<String>)> = corpus
            .iter()
            .map(|(id, text)| (id.as_ref().to_string(), tokenizer.tokenize(text.as_ref())))
            .collect();
        Self::from_tokens(docs, params)
    }

    pub fn from_tokens(docs: Vec<(String, Vec<String>)>, params: Bm25Params) -> Result<Self, SamplerError> {
        if docs.is_empty() {
            return Err(SamplerError::EmptyCorpus);
        }
        let mut positions = HashMap::with_capacity(docs.len());
        let mut doc_ids = Vec::with_capacity(docs.len());
        let mut doc_len = Vec::with_capacity(docs.len());
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        for (pos, (id, tokens)) in docs.into_iter().enumerate() {
            if positions.insert(id.clone(), pos).is_some() {
                return Err(SamplerError::DuplicateDoc(id));
            }
            doc_ids.push(id);
            doc_len.push(tokens.len());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((pos, count));
            }
        }
        let df = postings.iter().map(|(t, p)| (t.clone(), p.len())).collect();
        let avgdl = doc_len.iter().sum::<usize>() as f64 / doc_len.len() as f64;
        Ok(Bm25Index {
            params,
            doc_ids,
            positions,
            doc_len,
            avgdl,
            df,
            postings,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn df(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    pub fn tf(&self, term: &str, doc_id: &str) -> u32 {
        let Some(&pos) = self.positions.get(doc_id) else {
            return 0;
        };
        self.term_frequency(term, pos)
    }

    pub fn doc_len(&self, doc_id: &str) -> Option<usize> {
        self.positions.get(doc_id).map(|&p| self.doc_len[p])
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    fn term_frequency(&self, term: &str, pos: usize) -> u32 {
        // postings are appended in doc order, so they are sorted by position
        self.postings
            .get(term)
            .and_then(|p| p.binary_search_by_key(&pos, |&(d, _)| d).ok().map(|i| p[i].1))
            .unwrap_or(0)
    }

    /// `ln((N - df + 0.5) / (df + 0.5) + 1)`; always positive.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let df = self.df(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// Sum over query tokens (repeats counted) of the per-term BM25 weight.
    pub fn score<S: AsRef<str>>(&self, query: &[S], doc_id: &str) -> Result<f64, SamplerError> {
        let &pos = self
            .positions
            .get(doc_id)
            .ok_or_else(|| SamplerError::UnknownDoc(doc_id.to_string()))?;
        Ok(self.score_at(query, pos))
    }

    fn score_at<S: AsRef<str>>(&self, query: &[S], pos: usize) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let len_ratio = if self.avgdl > 0.0 {
            self.doc_len[pos] as f64 / self.avgdl
        } else {
            1.0
        };
        query
            .iter()
            .map(|q| {
                let q = q.as_ref();
                let tf = self.term_frequency(q, pos) as f64;
                if tf == 0.0 {
                    return 0.0;
                }
                self.idf(q) * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len_ratio))
            })
            .sum()
    }

    /// Every document with its score, highest first; ties by ascending id.
    pub fn rank<S: AsRef<str>>(&self, query: &[S]) -> Vec<(&str, f64)> {
        let mut scored: Vec<(&str, f64)> = (0..self.doc_count())
            .map(|pos| (self.doc_ids[pos].as_str(), self.score_at(query, pos)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        scored
    }
}
