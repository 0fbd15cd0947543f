use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use sociograph_core::index::{DocKind, DocMetadata, IndexDocument, Token};

/// A document as a bare token list.
pub type RawDoc = (String, Vec<Token>);

/// Direct transcription of the Okapi BM25 sum, one pass per query term,
/// recounting every statistic from the raw documents. Documents with no
/// tokens are not part of the collection.
pub fn naive_scores(docs: &[RawDoc], query: &[Token], k1: f64, b: f64) -> Vec<(String, f64)> {
    let live: Vec<&RawDoc> = docs.iter().filter(|(_, t)| !t.is_empty()).collect();
    let n = live.len() as f64;
    if live.is_empty() {
        return Vec::new();
    }
    let avgdl = live.iter().map(|(_, t)| t.len() as f64).sum::<f64>() / n;
    let mut out = Vec::new();
    for (id, tokens) in &live {
        let dl = tokens.len() as f64;
        let mut score = 0.0;
        for q in query {
            let containing = live.iter().filter(|(_, t)| t.contains(q)).count() as f64;
            let idf = (1.0 + (n - containing + 0.5) / (containing + 0.5)).ln();
            let f = tokens.iter().filter(|t| *t == q).count() as f64;
            score += idf * (f * (k1 + 1.0)) / (f + k1 * (1.0 - b + b * dl / avgdl));
        }
        if score > 0.0 {
            out.push((id.clone(), score));
        }
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

const WORDS: [&str; 14] = [
    "mailbox", "sync", "engine", "imap", "transfer", "cache", "retry", "parser", "token", "index",
    "graph", "feed", "review", "build",
];

fn random_token(rng: &mut impl Rng) -> Token {
    let arity = if rng.gen_bool(0.75) {
        1
    } else {
        rng.gen_range(2..=3)
    };
    let words: Vec<&str> = (0..arity).map(|_| *WORDS.choose(rng).unwrap()).collect();
    Token::new(words.join(" ")).expect("generated token is valid")
}

/// A micro-corpus of at most `max_docs` documents over a small vocabulary,
/// with occasional empty documents, plus a query that may repeat terms or
/// contain terms absent from the corpus.
pub fn random_corpus(rng: &mut impl Rng, max_docs: usize) -> (Vec<RawDoc>, Vec<Token>) {
    let n = rng.gen_range(1..=max_docs);
    let docs: Vec<RawDoc> = (0..n)
        .map(|i| {
            let len = if rng.gen_bool(0.05) {
                0
            } else {
                rng.gen_range(1..=30)
            };
            (
                format!("pull_request:{i}"),
                (0..len).map(|_| random_token(rng)).collect(),
            )
        })
        .collect();
    let qlen = rng.gen_range(1..=5);
    let query = (0..qlen).map(|_| random_token(rng)).collect();
    (docs, query)
}

pub fn to_index_documents(docs: &[RawDoc]) -> Vec<IndexDocument> {
    docs.iter()
        .map(|(id, tokens)| IndexDocument {
            doc_id: id.clone(),
            doc_kind: DocKind::PullRequest,
            metadata: DocMetadata::default(),
            body_tokens: tokens.clone(),
        })
        .collect()
}

/// Raw documents with `removed` taken out.
pub fn without(docs: &[RawDoc], removed: &BTreeSet<String>) -> Vec<RawDoc> {
    docs.iter()
        .filter(|(id, _)| !removed.contains(id))
        .cloned()
        .collect()
}
