//! Text cleaning, tokenization, truncation and chunking.
//!
//! Cleaning rules, applied in this order:
//!
//! 1. every non-ASCII character is dropped;
//! 2. URLs are removed: `http://`, `https://` or `www.` (case-insensitive)
//!    followed by the run of non-whitespace characters;
//! 3. whitespace runs collapse to one space and the ends are trimmed;
//! 4. the result is lowercased.
//!
//! Tokens are whitespace-separated words with leading and trailing ASCII
//! punctuation split off, one token per punctuation character.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

static URL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(?:https?://|www\.)\S*").expect("url pattern"));

pub fn clean_text(raw: &str) -> String {
    let ascii: String = raw.chars().filter(char::is_ascii).collect();
    let without_urls = URL.replace_all(&ascii, "");
    let mut out = String::with_capacity(without_urls.len());
    for word in without_urls.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out.make_ascii_lowercase();
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub source_id: String,
    pub tokens: Vec<String>,
}

impl TokenSequence {
    pub fn new(source_id: impl Into<String>, tokens: Vec<String>) -> Self {
        Self { source_id: source_id.into(), tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens joined by single spaces; what remote providers receive.
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

pub fn tokenize(source_id: &str, cleaned: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    for word in cleaned.split_whitespace() {
        let word = word.to_lowercase();
        let core_start = word.find(|c: char| !c.is_ascii_punctuation());
        let Some(core_start) = core_start else {
            tokens.extend(word.chars().map(String::from));
            continue;
        };
        let core_end = word
            .rfind(|c: char| !c.is_ascii_punctuation())
            .map(|i| i + word[i..].chars().next().map_or(1, char::len_utf8))
            .unwrap_or(word.len());
        tokens.extend(word[..core_start].chars().map(String::from));
        tokens.push(word[core_start..core_end].to_string());
        tokens.extend(word[core_end..].chars().map(String::from));
    }
    TokenSequence::new(source_id, tokens)
}

/// Keeps the first `min(len, budget)` tokens.
pub fn truncate(tokens: &TokenSequence, budget: usize) -> TokenSequence {
    let keep = tokens.len().min(budget);
    TokenSequence::new(tokens.source_id.clone(), tokens.tokens[..keep].to_vec())
}

/// Consecutive non-overlapping chunks of `window` tokens; the last may be shorter.
pub fn chunk(tokens: &TokenSequence, window: usize) -> Vec<TokenSequence> {
    assert!(window >= 1, "chunk window must be positive");
    tokens
        .tokens
        .chunks(window)
        .map(|c| TokenSequence::new(tokens.source_id.clone(), c.to_vec()))
        .collect()
}

/// Token budget and model window, in model tokens.
///
/// `tokens_per_word` maps model-token budgets onto this crate's word-level
/// tokens: a budget of 512 model tokens at 1.3 tokens per word keeps
/// `floor(512 / 1.3)` word tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChunkingConfig {
    pub window: usize,
    pub context_budget: usize,
    #[serde(default = "default_tokens_per_word")]
    pub tokens_per_word: f64,
}

fn default_tokens_per_word() -> f64 {
    1.0
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self { window: 512, context_budget: 512, tokens_per_word: 1.0 }
    }
}

impl ChunkingConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.window == 0 || self.context_budget == 0 {
            return Err("window and context_budget must be positive".into());
        }
        if !(self.tokens_per_word.is_finite() && self.tokens_per_word > 0.0) {
            return Err(format!("tokens_per_word must be positive, got {}", self.tokens_per_word));
        }
        Ok(())
    }

    fn to_words(&self, model_tokens: usize) -> usize {
        ((model_tokens as f64 / self.tokens_per_word).floor() as usize).max(1)
    }

    pub fn word_budget(&self) -> usize {
        self.to_words(self.context_budget)
    }

    pub fn word_window(&self) -> usize {
        self.to_words(self.window)
    }

    /// Clean, tokenize and truncate one document to the context budget.
    pub fn truncated(&self, source_id: &str, raw: &str) -> TokenSequence {
        truncate(&tokenize(source_id, &clean_text(raw)), self.word_budget())
    }

    /// [`Self::truncated`], then split into windows.
    pub fn prepare(&self, source_id: &str, raw: &str) -> Vec<TokenSequence> {
        chunk(&self.truncated(source_id, raw), self.word_window())
    }
}
