//! Lossless aggressive tokenization.
//!
//! Text is cut into maximal runs of letters (words), maximal runs of decimal
//! digits (numbers), one token per newline, maximal runs of other whitespace,
//! and one token for every remaining character. Concatenating the token texts
//! always reproduces the input, and every token carries its character
//! (Unicode scalar value) offsets.

use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Word,
    Number,
    Whitespace,
    Newline,
    Other,
}

impl TokenKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TokenKind::Word => "word",
            TokenKind::Number => "number",
            TokenKind::Whitespace => "whitespace",
            TokenKind::Newline => "newline",
            TokenKind::Other => "other",
        }
    }

    /// Whitespace and newline tokens.
    pub fn is_space(self) -> bool {
        matches!(self, TokenKind::Whitespace | TokenKind::Newline)
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    /// Inclusive character offset.
    pub start: usize,
    /// Exclusive character offset.
    pub end: usize,
    pub kind: TokenKind,
}

impl Token {
    pub fn char_len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_space(&self) -> bool {
        self.kind.is_space()
    }

    /// Whether the token's character range intersects `[start, end)`.
    pub fn intersects(&self, start: usize, end: usize) -> bool {
        self.start < end && start < self.end
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenSequence {
    pub doc_id: String,
    pub tokens: Vec<Token>,
}

impl TokenSequence {
    pub fn with_doc_id(mut self, doc_id: impl Into<String>) -> Self {
        self.doc_id = doc_id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Length of the covered text in characters.
    pub fn char_len(&self) -> usize {
        self.tokens.last().map_or(0, |t| t.end)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Token> {
        self.tokens.iter()
    }

    pub fn detokenize(&self) -> String {
        detokenize(self)
    }

    /// Indices of the tokens intersecting `[start, end)`, as a half-open range.
    pub fn intersecting(&self, start: usize, end: usize) -> std::ops::Range<usize> {
        let first = self.tokens.partition_point(|t| t.end <= start);
        let last = self.tokens.partition_point(|t| t.start < end);
        first..last.max(first)
    }
}

impl std::ops::Index<usize> for TokenSequence {
    type Output = Token;

    fn index(&self, index: usize) -> &Token {
        &self.tokens[index]
    }
}

impl<'a> IntoIterator for &'a TokenSequence {
    type Item = &'a Token;
    type IntoIter = std::slice::Iter<'a, Token>;

    fn into_iter(self) -> Self::IntoIter {
        self.tokens.iter()
    }
}

pub trait Tokenizer {
    fn tokenize(&self, text: &str) -> TokenSequence;
}

/// The regex-style aggressive tokenizer used throughout the toolkit.
#[derive(Debug, Clone, Copy, Default)]
pub struct AggressiveTokenizer;

impl Tokenizer for AggressiveTokenizer {
    fn tokenize(&self, text: &str) -> TokenSequence {
        tokenize(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Letter,
    Mark,
    Digit,
    Newline,
    Space,
    Other,
}

fn classify(c: char) -> CharClass {
    if c == '\n' || c == '\r' {
        return CharClass::Newline;
    }
    if c.is_whitespace() {
        return CharClass::Space;
    }
    match get_general_category(c) {
        GeneralCategory::UppercaseLetter
        | GeneralCategory::LowercaseLetter
        | GeneralCategory::TitlecaseLetter
        | GeneralCategory::ModifierLetter
        | GeneralCategory::OtherLetter => CharClass::Letter,
        GeneralCategory::NonspacingMark => CharClass::Mark,
        GeneralCategory::DecimalNumber => CharClass::Digit,
        _ => CharClass::Other,
    }
}

/// Whether `c` belongs to a letter run (letters, plus combining marks that follow one).
pub fn is_letter(c: char) -> bool {
    classify(c) == CharClass::Letter
}

pub fn is_decimal_digit(c: char) -> bool {
    classify(c) == CharClass::Digit
}

pub fn tokenize(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    let mut pos = 0;

    while let Some(c) = chars.next() {
        let start = pos;
        let mut buf = String::new();
        buf.push(c);
        pos += 1;
        let kind = match classify(c) {
            CharClass::Letter => {
                while let Some(&n) = chars.peek() {
                    match classify(n) {
                        CharClass::Letter | CharClass::Mark => {
                            buf.push(n);
                            chars.next();
                            pos += 1;
                        }
                        _ => break,
                    }
                }
                TokenKind::Word
            }
            CharClass::Digit => {
                while let Some(&n) = chars.peek() {
                    if classify(n) != CharClass::Digit {
                        break;
                    }
                    buf.push(n);
                    chars.next();
                    pos += 1;
                }
                TokenKind::Number
            }
            CharClass::Space => {
                while let Some(&n) = chars.peek() {
                    if classify(n) != CharClass::Space {
                        break;
                    }
                    buf.push(n);
                    chars.next();
                    pos += 1;
                }
                TokenKind::Whitespace
            }
            CharClass::Newline => TokenKind::Newline,
            // A mark with no letter before it stands alone.
            CharClass::Mark | CharClass::Other => TokenKind::Other,
        };
        tokens.push(Token {
            text: buf,
            start,
            end: pos,
            kind,
        });
    }

    TokenSequence {
        doc_id: String::new(),
        tokens,
    }
}

pub fn detokenize(seq: &TokenSequence) -> String {
    seq.tokens.iter().map(|t| t.text.as_str()).collect()
}
