use serde::{Deserialize, Serialize};

use crate::corpus::Language;

/// Tokens produced by a named segmenter. Never contains empty tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub segmenter_name: String,
}

impl TokenSequence {
    pub fn new(tokens: Vec<String>, segmenter_name: impl Into<String>) -> Self {
        let tokens = tokens.into_iter().filter(|t| !t.is_empty()).collect();
        Self { tokens, segmenter_name: segmenter_name.into() }
    }

    /// Convenience for tests and fixtures.
    pub fn from_strs(tokens: &[&str]) -> Self {
        Self::new(tokens.iter().map(|t| t.to_string()).collect(), "given")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Pluggable word segmentation. Implementations must be deterministic.
pub trait Segmenter: Send + Sync {
    fn name(&self) -> &str;
    fn tokens(&self, text: &str) -> Vec<String>;

    fn segment(&self, text: &str) -> TokenSequence {
        TokenSequence::new(self.tokens(text), self.name())
    }
}

/// Lowercases, splits on whitespace and strips surrounding punctuation.
#[derive(Debug, Default, Clone, Copy)]
pub struct WhitespaceSegmenter;

impl Segmenter for WhitespaceSegmenter {
    fn name(&self) -> &str {
        "whitespace"
    }

    fn tokens(&self, text: &str) -> Vec<String> {
        text.split_whitespace()
            .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
            .filter(|w| !w.is_empty())
            .collect()
    }
}

/// Fallback for Chinese: one token per CJK character, contiguous ASCII letters/digits kept together.
#[derive(Debug, Default, Clone, Copy)]
pub struct CharSegmenter;

impl Segmenter for CharSegmenter {
    fn name(&self) -> &str {
        "char"
    }

    fn tokens(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut run = String::new();
        for c in text.chars() {
            if c.is_ascii_alphanumeric() {
                run.push(c.to_ascii_lowercase());
                continue;
            }
            if !run.is_empty() {
                out.push(std::mem::take(&mut run));
            }
            if c.is_alphanumeric() {
                out.push(c.to_string());
            }
        }
        if !run.is_empty() {
            out.push(run);
        }
        out
    }
}

/// Segments with the built-in default for the language.
pub fn segment(text: &str, language: Language) -> TokenSequence {
    match language {
        Language::En => WhitespaceSegmenter.segment(text),
        Language::Zh => CharSegmenter.segment(text),
    }
}
