//! Item 1 ("Business") extraction from plain-text 10-K filings.

use std::sync::LazyLock;

use regex::{Match, Regex};
use thiserror::Error;

pub const DEFAULT_MIN_ITEM1_CHARS: usize = 200;

// "Item 1", "ITEM 1.", "Item 1:" followed by "Business". 1A/1B/10.. never match
// because the only thing allowed after the digit is a separator.
static ITEM1_HEADING: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bitem[\s\u{a0}]*1[\s\u{a0}]*[.:\-\u{2013}\u{2014}]?[\s\u{a0}.:\-\u{2013}\u{2014}]*business\b")
        .expect("item 1 pattern")
});

static NEXT_HEADING: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bitem[\s\u{a0}]*(?:1a|1b|2)\b").expect("next item pattern")
});

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Item1Error {
    #[error("Item 1 not found")]
    NotFound,
    #[error("Item 1 section too short: {len} characters (minimum {min})")]
    TooShort { len: usize, min: usize },
}

/// [`extract_item1_with`] using [`DEFAULT_MIN_ITEM1_CHARS`].
pub fn extract_item1(raw: &str) -> Result<&str, Item1Error> {
    extract_item1_with(raw, DEFAULT_MIN_ITEM1_CHARS)
}

/// Returns the trimmed text between the last Item 1 heading and the next
/// Item 1A/1B/2 heading (or end of input). Headings that open a line are
/// preferred over inline mentions such as "see Item 2 below".
pub fn extract_item1_with(raw: &str, min_chars: usize) -> Result<&str, Item1Error> {
    let starts: Vec<Match> = ITEM1_HEADING.find_iter(raw).collect();
    let start = last_preferring_line_start(raw, &starts).ok_or(Item1Error::NotFound)?;

    let body_from = start.end();
    let ends: Vec<Match> = NEXT_HEADING.find_iter(&raw[body_from..]).collect();
    let body_to = ends
        .iter()
        .find(|m| at_line_start(raw, body_from + m.start()))
        .or_else(|| ends.first())
        .map_or(raw.len(), |m| body_from + m.start());

    let span = raw[body_from..body_to].trim();
    let len = span.chars().count();
    if len == 0 || len < min_chars {
        return Err(Item1Error::TooShort { len, min: min_chars });
    }
    Ok(span)
}

fn last_preferring_line_start<'h>(raw: &str, matches: &[Match<'h>]) -> Option<Match<'h>> {
    matches
        .iter()
        .rev()
        .find(|m| at_line_start(raw, m.start()))
        .or_else(|| matches.last())
        .copied()
}

fn at_line_start(raw: &str, pos: usize) -> bool {
    raw[..pos]
        .chars()
        .rev()
        .take_while(|&c| c != '\n')
        .all(char::is_whitespace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn span_between_headings() {
        let raw = "ITEM 1. BUSINESS We sell widgets. ITEM 1A. RISK FACTORS we may fail";
        assert_eq!(extract_item1_with(raw, 1).unwrap(), "We sell widgets.");
    }

    #[test]
    fn heading_variants() {
        for heading in ["Item 1. Business", "ITEM 1: BUSINESS", "Item 1 - Business", "Item\u{a0}1.\u{a0}Business", "item 1business"] {
            let raw = format!("{heading}\nbody text\nItem 2. Properties\n");
            assert_eq!(extract_item1_with(&raw, 1).unwrap(), "body text", "{heading}");
        }
    }

    #[test]
    fn item_10_and_1a_are_not_item_1() {
        let raw = "Item 10. Business conduct\nItem 1A. Business risks\n";
        assert_eq!(extract_item1_with(raw, 1), Err(Item1Error::NotFound));
    }

    #[test]
    fn table_of_contents_uses_last_occurrence() {
        let raw = "TABLE OF CONTENTS\nItem 1. Business 3\nItem 1A. Risk Factors 9\nItem 2. Properties 20\n\
                   PART I\nItem 1. Business\nReal section.\nItem 1A. Risk Factors\nrisk\n";
        assert_eq!(extract_item1_with(raw, 1).unwrap(), "Real section.");
    }

    #[test]
    fn missing_heading_and_short_span() {
        assert_eq!(extract_item1("no headings here"), Err(Item1Error::NotFound));
        let raw = "Item 1. Business\nshort\nItem 2. Properties";
        assert_eq!(extract_item1(raw), Err(Item1Error::TooShort { len: 5, min: 200 }));
        let empty = "Item 1. Business\n\nItem 1A. Risk";
        assert_eq!(extract_item1_with(empty, 0), Err(Item1Error::TooShort { len: 0, min: 0 }));
    }

    #[test]
    fn output_is_substring() {
        let raw = "intro\n  Item 1. Business\n  We make things.  \n Item 1B. Unresolved";
        let out = extract_item1_with(raw, 1).unwrap();
        assert!(raw.contains(out));
        assert_eq!(out, "We make things.");
    }
}
