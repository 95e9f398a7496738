//! Small string utilities shared by labeling, filtering and IT construction.

use alloc::string::String;
use alloc::vec::Vec;

const TERMINAL_PUNCTUATION: &[char] = &['.', ',', '!', '?', ';'];
const QUOTE_PAIRS: &[(char, char)] = &[('"', '"'), ('\'', '\''), ('`', '`'), ('“', '”'), ('‘', '’')];

/// Joins whitespace-separated tokens with single spaces.
pub fn collapse_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for (i, token) in text.split_whitespace().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(token);
    }
    out
}

/// Cleans a raw dataset sentence: control characters are dropped, every
/// whitespace run (line breaks included) becomes one space, ends are trimmed.
/// Casing is preserved.
pub fn clean_text(raw: &str) -> String {
    let spaced: String = raw
        .chars()
        .filter_map(|c| {
            if c.is_whitespace() {
                Some(' ')
            } else if c.is_control() {
                None
            } else {
                Some(c)
            }
        })
        .collect();
    collapse_whitespace(&spaced)
}

/// Strips surrounding whitespace, paired quotes and terminal punctuation
/// until nothing more can be removed. Interior punctuation is kept.
pub fn strip_format(raw: &str) -> &str {
    let mut s = raw.trim();
    loop {
        let before = s.len();
        s = s.trim_end_matches(TERMINAL_PUNCTUATION).trim();
        for &(open, close) in QUOTE_PAIRS {
            if s.len() >= open.len_utf8() + close.len_utf8() && s.starts_with(open) && s.ends_with(close) {
                s = s[open.len_utf8()..s.len() - close.len_utf8()].trim();
                break;
            }
        }
        if s.len() == before {
            return s;
        }
    }
}

/// Case- and format-normalizes one label-like string.
pub fn normalize_token(raw: &str) -> String {
    collapse_whitespace(&strip_format(raw).to_lowercase())
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Last line of a chat response that is not blank, trimmed.
pub fn last_non_empty_line(response: &str) -> &str {
    response
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("")
}

pub fn first_tokens(text: &str, n: usize) -> Vec<&str> {
    text.split_whitespace().take(n).collect()
}
