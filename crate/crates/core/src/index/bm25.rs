use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::tokenize::{Arity, Token};
use crate::codec::{decode, encode};
use crate::graph::tsv::write_atomic;
use crate::graph::NodeKind;
use crate::{Error, Result};

const HEADER_TAG: &str = "#bm25";

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

impl Bm25Params {
    pub fn validate(self) -> Result<Self> {
        if self.k1 > 0.0 && self.b > 0.0 && self.k1.is_finite() && self.b.is_finite() {
            Ok(self)
        } else {
            Err(Error::InvalidArgument(format!(
                "bm25 parameters must be positive, got k1={} b={}",
                self.k1, self.b
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocKind {
    PullRequest,
    WorkItem,
    Expert,
}

impl DocKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DocKind::PullRequest => "pull_request",
            DocKind::WorkItem => "work_item",
            DocKind::Expert => "expert",
        }
    }

    /// Documents are keyed by node id, so the kind follows from its prefix.
    pub fn of_doc_id(doc_id: &str) -> Option<DocKind> {
        let (kind, _) = doc_id.split_once(':')?;
        match kind.parse::<NodeKind>().ok()? {
            NodeKind::PullRequest => Some(DocKind::PullRequest),
            NodeKind::WorkItem => Some(DocKind::WorkItem),
            NodeKind::User => Some(DocKind::Expert),
            _ => None,
        }
    }
}

impl fmt::Display for DocKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocMetadata {
    pub organization: Option<String>,
    pub project: Option<String>,
    pub repository: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexDocument {
    pub doc_id: String,
    pub doc_kind: DocKind,
    pub metadata: DocMetadata,
    pub body_tokens: Vec<Token>,
}

impl IndexDocument {
    pub fn length(&self) -> usize {
        self.body_tokens.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub relevance: f64,
}

/// BM25 inverted index. Immutable once built; refresh builds a new value.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    postings: BTreeMap<Token, BTreeMap<String, u32>>,
    doc_lengths: BTreeMap<String, u64>,
    total_length: u64,
    params: Bm25Params,
}

impl Default for InvertedIndex {
    fn default() -> Self {
        InvertedIndex::empty(Bm25Params::default())
    }
}

impl InvertedIndex {
    pub fn empty(params: Bm25Params) -> Self {
        InvertedIndex {
            postings: BTreeMap::new(),
            doc_lengths: BTreeMap::new(),
            total_length: 0,
            params,
        }
    }

    /// Indexes `docs`. Documents without tokens carry no postings and are
    /// left out entirely so that the index round-trips through its file form.
    pub fn build<I>(docs: I, params: Bm25Params) -> Result<Self>
    where
        I: IntoIterator<Item = IndexDocument>,
    {
        let mut index = InvertedIndex::empty(params.validate()?);
        for doc in docs {
            if doc.body_tokens.is_empty() {
                continue;
            }
            if index.doc_lengths.contains_key(&doc.doc_id) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate doc_id {}",
                    doc.doc_id
                )));
            }
            let len = doc.body_tokens.len() as u64;
            for token in doc.body_tokens {
                *index
                    .postings
                    .entry(token)
                    .or_default()
                    .entry(doc.doc_id.clone())
                    .or_insert(0) += 1;
            }
            index.doc_lengths.insert(doc.doc_id, len);
            index.total_length += len;
        }
        Ok(index)
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avgdl(&self) -> f64 {
        if self.doc_lengths.is_empty() {
            0.0
        } else {
            self.total_length as f64 / self.doc_lengths.len() as f64
        }
    }

    pub fn contains_doc(&self, doc_id: &str) -> bool {
        self.doc_lengths.contains_key(doc_id)
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<u64> {
        self.doc_lengths.get(doc_id).copied()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.doc_lengths.keys().map(String::as_str)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    /// `(doc_id, tf)` pairs for a token, ordered by doc_id.
    pub fn postings(&self, token: &Token) -> impl Iterator<Item = (&str, u32)> {
        self.postings
            .get(token)
            .into_iter()
            .flat_map(|p| p.iter().map(|(d, tf)| (d.as_str(), *tf)))
    }

    pub fn doc_frequency(&self, token: &Token) -> usize {
        self.postings.get(token).map_or(0, BTreeMap::len)
    }

    pub fn idf(&self, token: &Token) -> f64 {
        let n = self.doc_frequency(token) as f64;
        let big_n = self.doc_count() as f64;
        (1.0 + (big_n - n + 0.5) / (n + 0.5)).ln()
    }

    /// Term frequencies of one document, in token order.
    pub fn doc_terms(&self, doc_id: &str) -> Vec<(Token, u32)> {
        if !self.contains_doc(doc_id) {
            return Vec::new();
        }
        self.postings
            .iter()
            .filter_map(|(t, p)| p.get(doc_id).map(|tf| (t.clone(), *tf)))
            .collect()
    }

    /// Ranked BM25 retrieval. Every occurrence of a query token contributes,
    /// documents scoring zero are omitted and ties go to the smaller doc_id.
    pub fn query(&self, q: &[Token], top_n: usize) -> Vec<ScoredDoc> {
        self.query_filtered(q, top_n, |_| true)
    }

    /// Like [`query`](Self::query), dropping documents rejected by `keep`
    /// before the result is truncated to `top_n`.
    pub fn query_filtered(
        &self,
        q: &[Token],
        top_n: usize,
        keep: impl Fn(&str) -> bool,
    ) -> Vec<ScoredDoc> {
        if q.is_empty() || top_n == 0 || self.doc_lengths.is_empty() {
            return Vec::new();
        }
        let Bm25Params { k1, b } = self.params;
        let avgdl = self.avgdl();
        let mut scores: HashMap<&str, f64> = HashMap::new();
        for token in q {
            let Some(posting) = self.postings.get(token) else {
                continue;
            };
            let idf = self.idf(token);
            for (doc, &tf) in posting {
                let tf = f64::from(tf);
                let len = self.doc_lengths[doc] as f64;
                let s = idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avgdl));
                *scores.entry(doc.as_str()).or_insert(0.0) += s;
            }
        }
        let mut out: Vec<ScoredDoc> = scores
            .into_iter()
            .filter(|(doc, s)| *s > 0.0 && keep(doc))
            .map(|(doc, s)| ScoredDoc {
                doc_id: doc.to_string(),
                relevance: s,
            })
            .collect();
        out.sort_by(|x, y| {
            y.relevance
                .total_cmp(&x.relevance)
                .then_with(|| x.doc_id.cmp(&y.doc_id))
        });
        out.truncate(top_n);
        out
    }

    /// The index as if `removed` had never been added: statistics, document
    /// frequencies and lengths all exclude them.
    pub fn without(&self, removed: &BTreeSet<String>) -> InvertedIndex {
        let mut out = self.clone();
        for doc in removed {
            if let Some(len) = out.doc_lengths.remove(doc) {
                out.total_length -= len;
            }
        }
        out.postings.retain(|_, p| {
            p.retain(|d, _| !removed.contains(d));
            !p.is_empty()
        });
        out
    }

    pub fn to_text(&self) -> String {
        let Bm25Params { k1, b } = self.params;
        let mut out = format!(
            "{HEADER_TAG}\t{}\t{}\t{k1}\t{b}\n",
            self.doc_count(),
            self.avgdl()
        );
        for (token, posting) in &self.postings {
            let pairs: Vec<String> = posting
                .iter()
                .map(|(d, tf)| format!("{}:{tf}", encode(d)))
                .collect();
            out.push_str(&format!(
                "{token}\t{}\t{}\n",
                token.arity(),
                pairs.join(",")
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::parse("index file", msg);
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad("missing header".into()))?
            .split('\t')
            .collect();
        let [HEADER_TAG, n, avgdl, k1, b] = header[..] else {
            return Err(bad(format!("bad header {header:?}")));
        };
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        let params = Bm25Params {
            k1: num(k1)?,
            b: num(b)?,
        }
        .validate()?;
        let mut index = InvertedIndex::empty(params);
        for line in lines {
            let [token, arity, pairs] = line.split('\t').collect::<Vec<_>>()[..] else {
                return Err(bad(format!("bad posting line {line:?}")));
            };
            let token = Token::new(token)?;
            if token.arity() != arity.parse::<Arity>()? {
                return Err(bad(format!("arity mismatch for {token:?}")));
            }
            let mut posting = BTreeMap::new();
            for pair in pairs.split(',') {
                let (doc, tf) = pair
                    .rsplit_once(':')
                    .ok_or_else(|| bad(format!("bad posting {pair:?}")))?;
                let tf: u32 = tf.parse().map_err(|e| bad(format!("{pair:?}: {e}")))?;
                if tf == 0 {
                    return Err(bad(format!("zero term frequency in {pair:?}")));
                }
                let doc = decode(doc)?;
                *index.doc_lengths.entry(doc.clone()).or_insert(0) += u64::from(tf);
                index.total_length += u64::from(tf);
                posting.insert(doc, tf);
            }
            if index.postings.insert(token, posting).is_some() {
                return Err(bad("duplicate token line".into()));
            }
        }
        let expected_n: usize = n.parse().map_err(|e| bad(format!("{n:?}: {e}")))?;
        if expected_n != index.doc_count() || num(avgdl)? != index.avgdl() {
            return Err(bad("header statistics disagree with postings".into()));
        }
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        write_atomic(path, &self.to_text())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

impl FromStr for InvertedIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_text(s)
    }
}
