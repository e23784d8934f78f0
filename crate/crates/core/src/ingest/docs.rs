use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDocument {
    pub document: Document,
    pub score: f64,
}

/// Case-folded alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Relevance of one document to a tokenized query.
pub trait DocumentScorer {
    fn score(&self, doc: &Document, query_terms: &BTreeSet<String>) -> f64;
}

/// Sum over distinct query terms of their frequency in title and body.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalScorer;

impl DocumentScorer for LexicalScorer {
    fn score(&self, doc: &Document, query_terms: &BTreeSet<String>) -> f64 {
        let mut tf: HashMap<String, usize> = HashMap::new();
        for t in tokenize(&doc.title).into_iter().chain(tokenize(&doc.text)) {
            *tf.entry(t).or_default() += 1;
        }
        query_terms
            .iter()
            .map(|q| tf.get(q).copied().unwrap_or(0))
            .sum::<usize>() as f64
    }
}

/// Top `k` documents by score, ties broken by id.
pub fn retrieve_documents(corpus: &[Document], query: &str, k: usize) -> Vec<ScoredDocument> {
    retrieve_with(&LexicalScorer, corpus, query, k)
}

pub fn retrieve_with(
    scorer: &dyn DocumentScorer,
    corpus: &[Document],
    query: &str,
    k: usize,
) -> Vec<ScoredDocument> {
    let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
    let mut scored: Vec<ScoredDocument> = corpus
        .iter()
        .map(|d| ScoredDocument {
            score: scorer.score(d, &terms),
            document: d.clone(),
        })
        .collect();
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.document.id.cmp(&b.document.id))
    });
    scored.truncate(k);
    scored
}
