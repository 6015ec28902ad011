//! Paragraph / sentence / word segmentation.
//!
//! Paragraphs are separated by one or more blank lines. Inside a paragraph,
//! whitespace runs collapse to single spaces and a sentence ends at a token
//! whose tail is a run of terminal marks (`. ! ? …` and the full-width
//! `。！？`), optionally followed by closing quotes or brackets. There is no
//! abbreviation lexicon: `"Dr. Smith"` splits after `"Dr."`.
//!
//! Full-width terminal marks also split inside a whitespace-free token so
//! that CJK text without spaces still yields sentences.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SegmentError {
    #[error("input text is empty or whitespace only")]
    EmptyInput,
}

const TERMINALS: &[char] = &['.', '!', '?', '…', '。', '！', '？'];
const FULL_WIDTH_TERMINALS: &[char] = &['。', '！', '？'];
const CLOSERS: &[char] = &[
    '"', '\'', '”', '’', ')', ']', '}', '»', '」', '』', '）', '】',
];

fn is_terminal(c: char) -> bool {
    TERMINALS.contains(&c)
}

fn is_closer(c: char) -> bool {
    CLOSERS.contains(&c)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    words: Vec<String>,
    terminal: String,
}

impl Sentence {
    /// Builds a sentence from non-empty word tokens and a (possibly empty)
    /// terminal punctuation string.
    ///
    /// Returns `None` when `words` is empty or contains an empty or
    /// whitespace-bearing token.
    pub fn new(words: Vec<String>, terminal: impl Into<String>) -> Option<Self> {
        let ok = !words.is_empty()
            && words
                .iter()
                .all(|w| !w.is_empty() && !w.chars().any(char::is_whitespace));
        ok.then(|| Sentence {
            words,
            terminal: terminal.into(),
        })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn terminal(&self) -> &str {
        &self.terminal
    }

    pub(crate) fn words_mut(&mut self) -> &mut [String] {
        &mut self.words
    }

    pub fn render(&self) -> String {
        let mut out = self.words.join(" ");
        out.push_str(&self.terminal);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    sentences: Vec<Sentence>,
}

impl Paragraph {
    pub fn new(sentences: Vec<Sentence>) -> Option<Self> {
        (!sentences.is_empty()).then_some(Paragraph { sentences })
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub(crate) fn sentences_mut(&mut self) -> &mut [Sentence] {
        &mut self.sentences
    }

    pub fn render(&self) -> String {
        self.sentences
            .iter()
            .map(Sentence::render)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// A segmented text. `source_hash` is the SHA-256 of the canonical rendering,
/// so two documents compare equal exactly when their structure does.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    paragraphs: Vec<Paragraph>,
    source_hash: String,
}

impl Document {
    pub fn new(paragraphs: Vec<Paragraph>) -> Option<Self> {
        if paragraphs.is_empty() {
            return None;
        }
        let mut doc = Document {
            paragraphs,
            source_hash: String::new(),
        };
        doc.rehash();
        Some(doc)
    }

    pub fn paragraphs(&self) -> &[Paragraph] {
        &self.paragraphs
    }

    pub(crate) fn paragraphs_mut(&mut self) -> &mut [Paragraph] {
        &mut self.paragraphs
    }

    pub fn source_hash(&self) -> &str {
        &self.source_hash
    }

    pub(crate) fn rehash(&mut self) {
        self.source_hash = hex::encode(Sha256::digest(render(self).as_bytes()));
    }

    pub fn sentence_count(&self) -> usize {
        self.paragraphs.iter().map(|p| p.sentences.len()).sum()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.paragraphs
            .iter()
            .flat_map(|p| p.sentences.iter())
            .flat_map(|s| s.words.iter().map(String::as_str))
    }
}

/// Splits a token into `(word, terminal)` if the token closes a sentence.
///
/// The terminal is the trailing run of terminal marks plus any closers after
/// it. Tokens made only of punctuation return an empty word.
fn split_terminal(token: &str) -> Option<(&str, &str)> {
    let without_closers = token.trim_end_matches(is_closer);
    let word = without_closers.trim_end_matches(is_terminal);
    if word.len() == without_closers.len() {
        return None;
    }
    Some((word, &token[word.len()..]))
}

/// Breaks a whitespace token at interior full-width terminal marks.
fn split_full_width(token: &str) -> Vec<&str> {
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut chars = token.char_indices().peekable();
    while let Some((_, c)) = chars.next() {
        if !FULL_WIDTH_TERMINALS.contains(&c) {
            continue;
        }
        // extend over the rest of the terminal run and any closers
        while let Some(&(_, n)) = chars.peek() {
            if is_terminal(n) {
                chars.next();
            } else {
                break;
            }
        }
        while let Some(&(_, n)) = chars.peek() {
            if is_closer(n) {
                chars.next();
            } else {
                break;
            }
        }
        let end = chars.peek().map_or(token.len(), |&(i, _)| i);
        if end < token.len() {
            pieces.push(&token[start..end]);
            start = end;
        }
    }
    pieces.push(&token[start..]);
    pieces
}

/// Detached punctuation may close the open sentence only if gluing it onto
/// the last word re-splits to the same pair, which keeps rendering stable.
fn closes_cleanly(last: Option<&String>, terminal: &str) -> bool {
    let Some(last) = last else {
        return false;
    };
    let glued = format!("{last}{terminal}");
    split_terminal(&glued) == Some((last.as_str(), terminal))
}

fn segment_paragraph(body: &str) -> Option<Paragraph> {
    let mut sentences = Vec::new();
    let mut words: Vec<String> = Vec::new();
    for token in body.split_whitespace().flat_map(split_full_width) {
        match split_terminal(token) {
            Some((word, terminal)) if !word.is_empty() => {
                words.push(word.to_owned());
                sentences.push(Sentence {
                    words: std::mem::take(&mut words),
                    terminal: terminal.to_owned(),
                });
            }
            Some((_, terminal)) if closes_cleanly(words.last(), terminal) => {
                // detached punctuation closes the open sentence
                sentences.push(Sentence {
                    words: std::mem::take(&mut words),
                    terminal: terminal.to_owned(),
                });
            }
            // punctuation-only token at a sentence start is kept as a word
            Some(_) | None => words.push(token.to_owned()),
        }
    }
    if !words.is_empty() {
        sentences.push(Sentence {
            words,
            terminal: String::new(),
        });
    }
    Paragraph::new(sentences)
}

fn paragraph_bodies(text: &str) -> Vec<String> {
    let mut bodies = Vec::new();
    let mut current = String::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.trim().is_empty() {
                bodies.push(std::mem::take(&mut current));
            }
            current.clear();
        } else {
            current.push_str(line);
            current.push('\n');
        }
    }
    if !current.trim().is_empty() {
        bodies.push(current);
    }
    bodies
}

/// Parses raw text into a [`Document`].
pub fn segment(text: &str) -> Result<Document, SegmentError> {
    let paragraphs: Vec<Paragraph> = paragraph_bodies(text)
        .iter()
        .filter_map(|body| segment_paragraph(body))
        .collect();
    Document::new(paragraphs).ok_or(SegmentError::EmptyInput)
}

/// Renders a document: single spaces between sentences, one blank line
/// between paragraphs.
pub fn render(doc: &Document) -> String {
    doc.paragraphs
        .iter()
        .map(Paragraph::render)
        .collect::<Vec<_>>()
        .join("\n\n")
}
