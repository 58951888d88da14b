//! Lexical sentence retrieval for the single-step RAG baseline.
//!
//! The context is split into sentences, each scored against the question with
//! BM25 (k1 = 1.2, b = 0.75 by default), and the top-k sentences are returned
//! in document order.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

/// Words dropped from queries before scoring.
pub const STOP_WORDS: &[&str] = &[
    "a", "an", "the", "is", "are", "was", "were", "be", "been", "am", "to", "of", "in", "on", "at",
    "by", "for", "with", "from", "and", "or", "but", "it", "its", "this", "that", "these", "those",
    "he", "she", "they", "them", "his", "her", "their", "i", "you", "we", "what", "where", "when",
    "who", "which", "why", "how", "do", "does", "did", "has", "have", "had", "there", "here", "as",
    "into", "then", "than", "so", "if", "many", "much",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RetrieverError {
    #[error("cannot index empty text")]
    EmptyText,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub text: String,
    /// Byte offset into the source text.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSentence {
    pub text: String,
    pub offset: usize,
    pub score: f64,
}

/// Splits on `.`, `!` or `?` (plus trailing closing quotes) followed by
/// whitespace or end of text. Nothing inside `<...>` markup is a boundary.
/// Sentences exclude surrounding whitespace; everything between them is
/// whitespace.
pub fn split_sentences(text: &str) -> Vec<Sentence> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut in_tag = false;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if start.is_none() {
            if c.is_whitespace() {
                continue;
            }
            start = Some(i);
        }
        match c {
            '<' => in_tag = true,
            '>' | '\n' => in_tag = false,
            '.' | '!' | '?' if !in_tag => {
                let mut end = i + c.len_utf8();
                while let Some(&(j, d)) = chars.peek() {
                    if matches!(d, '.' | '!' | '?' | '"' | '\'' | '”' | '’' | ')') {
                        end = j + d.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                let at_boundary = chars.peek().is_none_or(|&(_, d)| d.is_whitespace());
                if at_boundary {
                    let s = start.take().expect("sentence started");
                    out.push(Sentence {
                        text: text[s..end].to_string(),
                        offset: s,
                    });
                }
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        let rest = text[s..].trim_end();
        if !rest.is_empty() {
            out.push(Sentence {
                text: rest.to_string(),
                offset: s,
            });
        }
    }
    out
}

/// Lowercased alphanumeric terms.
pub fn terms(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

fn query_terms(query: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    terms(query)
        .filter(|t| !STOP_WORDS.contains(&t.as_str()))
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

#[derive(Debug, Clone)]
struct IndexedSentence {
    sentence: Sentence,
    term_freq: HashMap<String, u32>,
    len: usize,
}

/// Term statistics over the sentences of one context.
#[derive(Debug, Clone)]
pub struct SentenceIndex {
    sentences: Vec<IndexedSentence>,
    doc_freq: HashMap<String, usize>,
    avg_len: f64,
}

impl SentenceIndex {
    pub fn build(text: &str) -> Result<Self, RetrieverError> {
        let sentences: Vec<IndexedSentence> = split_sentences(text)
            .into_iter()
            .map(|sentence| {
                let mut term_freq = HashMap::new();
                let mut len = 0;
                for t in terms(&sentence.text) {
                    *term_freq.entry(t).or_insert(0) += 1;
                    len += 1;
                }
                IndexedSentence {
                    sentence,
                    term_freq,
                    len,
                }
            })
            .collect();
        if sentences.is_empty() {
            return Err(RetrieverError::EmptyText);
        }
        let mut doc_freq = HashMap::new();
        for s in &sentences {
            for t in s.term_freq.keys() {
                *doc_freq.entry(t.clone()).or_insert(0) += 1;
            }
        }
        let avg_len = sentences.iter().map(|s| s.len as f64).sum::<f64>() / sentences.len() as f64;
        Ok(Self {
            sentences,
            doc_freq,
            avg_len,
        })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.sentences.iter().map(|s| &s.sentence)
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    /// BM25 score of every sentence, in document order.
    pub fn score_all(&self, query: &str, params: Bm25) -> Vec<ScoredSentence> {
        let q = query_terms(query);
        let n = self.sentences.len() as f64;
        let idf: Vec<f64> = q
            .iter()
            .map(|t| {
                let df = self.doc_freq(t) as f64;
                (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
            })
            .collect();
        self.sentences
            .iter()
            .map(|s| {
                let norm = params.k1 * (1.0 - params.b + params.b * s.len as f64 / self.avg_len.max(f64::MIN_POSITIVE));
                let score = q
                    .iter()
                    .zip(&idf)
                    .map(|(t, idf)| {
                        let tf = s.term_freq.get(t).copied().unwrap_or(0) as f64;
                        idf * tf * (params.k1 + 1.0) / (tf + norm)
                    })
                    .sum();
                ScoredSentence {
                    text: s.sentence.text.clone(),
                    offset: s.sentence.offset,
                    score,
                }
            })
            .collect()
    }
}

/// Convenience wrapper for [`SentenceIndex::build`].
pub fn build_index(text: &str) -> Result<SentenceIndex, RetrieverError> {
    SentenceIndex::build(text)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25 {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25 {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

/// The `k` best sentences (higher score first, earlier offset on ties),
/// returned in document order.
pub fn retrieve_top_k(index: &SentenceIndex, query: &str, k: usize) -> Vec<ScoredSentence> {
    select_top_k(index.score_all(query, Bm25::default()), k)
}

fn select_top_k(mut scored: Vec<ScoredSentence>, k: usize) -> Vec<ScoredSentence> {
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.offset.cmp(&b.offset)));
    scored.truncate(k);
    scored.sort_by_key(|s| s.offset);
    scored
}

/// Something that can pick supporting sentences out of a long context.
pub trait Retriever: Send + Sync {
    fn retrieve(
        &self,
        context: &str,
        query: &str,
        k: usize,
    ) -> Result<Vec<ScoredSentence>, RetrieverError>;
}

impl Retriever for Bm25 {
    fn retrieve(
        &self,
        context: &str,
        query: &str,
        k: usize,
    ) -> Result<Vec<ScoredSentence>, RetrieverError> {
        let index = SentenceIndex::build(context)?;
        Ok(select_top_k(index.score_all(query, *self), k))
    }
}
