//! Text search over the gallery by token overlap.
//!
//! An entry's tokens are the lowercased alphanumeric words of its concept,
//! context, tag and style name. The score is the number of distinct query
//! tokens the entry contains. Results are ordered by score (descending),
//! then creation time (newest first), then id.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use gencolor_core::evaluation::Category;
use gencolor_core::Style;

use crate::store::GalleryEntry;

pub const MAX_LIMIT: usize = 100;
pub const DEFAULT_LIMIT: usize = 20;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SearchError {
    #[error("limit must be between 1 and {MAX_LIMIT}, got {0}")]
    InvalidLimit(usize),
}

fn default_limit() -> usize {
    DEFAULT_LIMIT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchQuery {
    #[serde(default)]
    pub q: String,
    /// Style name, e.g. "realistic_photo" or "flat".
    #[serde(default)]
    pub style: Option<String>,
    #[serde(default)]
    pub category: Option<Category>,
    #[serde(default)]
    pub offset: usize,
    #[serde(default = "default_limit")]
    pub limit: usize,
}

impl SearchQuery {
    pub fn new(q: impl Into<String>) -> Self {
        Self {
            q: q.into(),
            style: None,
            category: None,
            offset: 0,
            limit: DEFAULT_LIMIT,
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if !(1..=MAX_LIMIT).contains(&self.limit) {
            return Err(SearchError::InvalidLimit(self.limit));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub score: usize,
    pub entry: GalleryEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResults {
    /// Matches before pagination.
    pub total: usize,
    pub hits: Vec<SearchHit>,
}

pub fn tokenize(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn entry_tokens(entry: &GalleryEntry) -> BTreeSet<String> {
    let mut tokens = tokenize(&entry.spec.concept);
    if let Some(ctx) = &entry.spec.context {
        tokens.extend(tokenize(ctx));
    }
    tokens.extend(tokenize(&entry.tag));
    tokens.extend(tokenize(entry.spec.style.name()));
    tokens
}

pub fn score(query_tokens: &BTreeSet<String>, entry: &GalleryEntry) -> usize {
    let tokens = entry_tokens(entry);
    query_tokens.iter().filter(|t| tokens.contains(*t)).count()
}

fn passes_filters(query: &SearchQuery, entry: &GalleryEntry) -> bool {
    if let Some(style) = &query.style {
        let style: Style = style.parse().unwrap_or_else(|e| match e {});
        if entry.spec.style != style {
            return false;
        }
    }
    match query.category {
        Some(c) => entry.category == Some(c),
        None => true,
    }
}

/// Ranks `entries` against `query`. An empty or token-free query matches
/// nothing.
pub fn search<'a>(
    entries: impl IntoIterator<Item = &'a GalleryEntry>,
    query: &SearchQuery,
) -> Result<SearchResults, SearchError> {
    query.validate()?;
    let wanted = tokenize(&query.q);
    if wanted.is_empty() {
        return Ok(SearchResults { total: 0, hits: Vec::new() });
    }
    let mut scored: Vec<(usize, &GalleryEntry)> = entries
        .into_iter()
        .filter(|e| passes_filters(query, e))
        .map(|e| (score(&wanted, e), e))
        .filter(|(s, _)| *s > 0)
        .collect();
    scored.sort_by(|(sa, a), (sb, b)| {
        sb.cmp(sa)
            .then(b.created_at.cmp(&a.created_at))
            .then_with(|| a.id.cmp(&b.id))
    });
    let total = scored.len();
    let hits = scored
        .into_iter()
        .skip(query.offset)
        .take(query.limit)
        .map(|(score, e)| SearchHit { score, entry: e.clone() })
        .collect();
    Ok(SearchResults { total, hits })
}
