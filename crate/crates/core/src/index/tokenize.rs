//! Identifier-aware tokenizer.
//!
//! Each whitespace-delimited word is split on non-alphanumeric characters and
//! then at camel/pascal-case and letter/digit boundaries, lowercased and
//! stripped of English stopwords. The surviving pieces are emitted as
//! unigrams, followed by the bigrams and trigrams formed from adjacent
//! survivors of the same word, so `MailboxSyncEngine` also yields
//! `mailbox sync`, `sync engine` and `mailbox sync engine`, while n-grams
//! never cross whitespace.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const STOPWORDS_TXT: &str = include_str!("stopwords.txt");

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_TXT
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

pub fn is_stopword(word: &str) -> bool {
    stopwords().contains(word)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arity {
    Unigram,
    Bigram,
    Trigram,
}

impl Arity {
    pub fn as_str(self) -> &'static str {
        match self {
            Arity::Unigram => "unigram",
            Arity::Bigram => "bigram",
            Arity::Trigram => "trigram",
        }
    }

    fn from_words(n: usize) -> Option<Arity> {
        match n {
            1 => Some(Arity::Unigram),
            2 => Some(Arity::Bigram),
            3 => Some(Arity::Trigram),
            _ => None,
        }
    }
}

impl fmt::Display for Arity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unigram" => Ok(Arity::Unigram),
            "bigram" => Ok(Arity::Bigram),
            "trigram" => Ok(Arity::Trigram),
            _ => Err(Error::parse("token arity", format!("unknown arity {s:?}"))),
        }
    }
}

/// A lowercase term of one to three words joined by single spaces.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Token(String);

impl Token {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        let words: Vec<&str> = text.split(' ').collect();
        let well_formed = Arity::from_words(words.len()).is_some()
            && words
                .iter()
                .all(|w| !w.is_empty() && w.chars().all(|c| c.is_alphanumeric()))
            && text.to_lowercase() == text;
        if !well_formed {
            return Err(Error::parse("token", format!("malformed token {text:?}")));
        }
        Ok(Token(text))
    }

    fn from_words(words: &[String]) -> Self {
        Token(words.join(" "))
    }

    pub fn text(&self) -> &str {
        &self.0
    }

    pub fn arity(&self) -> Arity {
        Arity::from_words(self.0.split(' ').count()).expect("validated on construction")
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for Token {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Token::new(s)
    }
}

impl From<Token> for String {
    fn from(t: Token) -> String {
        t.0
    }
}

/// Splits one alphanumeric run at case and letter/digit boundaries.
/// `HTTPServer2Go` becomes `HTTP`, `Server`, `2`, `Go`.
fn split_identifier(run: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = run.char_indices().collect();
    let mut parts = Vec::new();
    let mut start = 0;
    for i in 1..chars.len() {
        let (at, cur) = chars[i];
        let prev = chars[i - 1].1;
        let next_lower = chars.get(i + 1).is_some_and(|(_, c)| c.is_lowercase());
        let boundary = (prev.is_lowercase() && cur.is_uppercase())
            || (prev.is_uppercase() && cur.is_uppercase() && next_lower)
            || (prev.is_alphabetic() && cur.is_numeric())
            || (prev.is_numeric() && cur.is_alphabetic());
        if boundary {
            parts.push(&run[start..at]);
            start = at;
        }
    }
    if start < run.len() {
        parts.push(&run[start..]);
    }
    parts
}

/// Tokenizes `text` into a multiset of unigrams, bigrams and trigrams.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let pieces: Vec<String> = word
            .split(|c: char| !c.is_alphanumeric())
            .filter(|run| !run.is_empty())
            .flat_map(split_identifier)
            .map(|p| {
                // Some uppercase letters lowercase into combining marks; keep
                // only the alphanumeric part so every token stays well formed.
                p.to_lowercase()
                    .chars()
                    .filter(|c| c.is_alphanumeric())
                    .collect::<String>()
            })
            .filter(|p| !p.is_empty() && !is_stopword(p))
            .collect();
        for n in 1..=3 {
            out.extend(pieces.windows(n).map(Token::from_words));
        }
    }
    out
}
