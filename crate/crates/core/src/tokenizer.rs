//! Text segmentation shared by every BM25 index and both encoders.
//!
//! CJK ideographs are emitted one codepoint per token. Any other maximal run
//! of alphanumeric codepoints becomes a single lowercased token. Everything
//! else is a separator.

use serde::{Deserialize, Serialize};

/// An ordered list of non-empty tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenStream(Vec<String>);

impl TokenStream {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    /// Keeps only the first `n` tokens.
    pub fn truncated(mut self, n: usize) -> Self {
        self.0.truncate(n);
        self
    }

    /// Builds a stream from pre-split tokens, dropping empty strings.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TokenStream(
            tokens
                .into_iter()
                .map(Into::into)
                .filter(|t: &String| !t.is_empty())
                .collect(),
        )
    }
}

impl<'a> IntoIterator for &'a TokenStream {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// CJK Unified Ideographs, Extension A, and Compatibility Ideographs.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x4E00..=0x9FFF | 0x3400..=0x4DBF | 0xF900..=0xFAFF)
}

pub fn tokenize(text: &str) -> TokenStream {
    let mut tokens = Vec::new();
    let mut run = String::new();
    for c in text.chars() {
        if is_cjk(c) {
            flush(&mut run, &mut tokens);
            tokens.push(c.to_string());
        } else if c.is_alphanumeric() {
            run.extend(c.to_lowercase());
        } else {
            flush(&mut run, &mut tokens);
        }
    }
    flush(&mut run, &mut tokens);
    TokenStream(tokens)
}

fn flush(run: &mut String, tokens: &mut Vec<String>) {
    if !run.is_empty() {
        tokens.push(std::mem::take(run));
    }
}
