//! Shared text encodings for the on-disk formats.
//!
//! Every TSV/CSV artifact uses the same percent-encoding for free-form
//! strings so that separators (tab, newline, `&`, `=`, `,`) never appear
//! unescaped. Encoding is canonical, which is what makes the file formats
//! round-trip bit-exactly.

use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};

use crate::{Error, Result};

const COMPONENT: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'-')
    .remove(b'_')
    .remove(b'.')
    .remove(b'~')
    .remove(b'/')
    .remove(b':');

pub type Attributes = BTreeMap<String, String>;

pub fn encode(s: &str) -> String {
    utf8_percent_encode(s, COMPONENT).to_string()
}

pub fn decode(s: &str) -> Result<String> {
    percent_decode_str(s)
        .decode_utf8()
        .map(|c| c.into_owned())
        .map_err(|e| Error::parse("percent-encoded field", e.to_string()))
}

/// Encodes a map as `k1=v1&k2=v2`, keys in sorted order.
pub fn encode_pairs(pairs: &Attributes) -> String {
    let mut out = String::new();
    for (i, (k, v)) in pairs.iter().enumerate() {
        if i > 0 {
            out.push('&');
        }
        out.push_str(&encode(k));
        out.push('=');
        out.push_str(&encode(v));
    }
    out
}

pub fn decode_pairs(s: &str) -> Result<Attributes> {
    let mut out = Attributes::new();
    if s.is_empty() {
        return Ok(out);
    }
    for pair in s.split('&') {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::parse("key=value pairs", format!("missing '=' in {pair:?}")))?;
        out.insert(decode(k)?, decode(v)?);
    }
    Ok(out)
}

/// Canonical timestamp rendering: RFC 3339, UTC, whole seconds, `Z` suffix.
pub fn format_ts(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Accepts RFC 3339 (any offset) or a naive `YYYY-MM-DDTHH:MM:SS` taken as UTC.
pub fn parse_ts(s: &str) -> Result<DateTime<Utc>> {
    if let Ok(ts) = DateTime::parse_from_rfc3339(s) {
        return Ok(ts.with_timezone(&Utc));
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .map(|n| n.and_utc())
        .map_err(|e| Error::parse("timestamp", format!("{s:?}: {e}")))
}
