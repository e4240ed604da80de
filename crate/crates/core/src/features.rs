//! Windowed sparse token features for the CRF.
//!
//! Every position gets a `bias` entry, ten `0:`-prefixed center features and,
//! for each neighbor within reach, offset-prefixed copies (`-3:lowercase`,
//! `+1:EOS`, ...). Each neighbor feature has its own window:
//!
//! | feature                 | window |
//! |-------------------------|--------|
//! | special, BOS/EOS        | ±10    |
//! | lowercase, length       | ±7     |
//! | sign                    | ±5     |
//! | lower, upper, number, space | ±3 |
//!
//! The center digit flag is keyed `numeric` while neighbors use `number`, and
//! `space` exists only for neighbors.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::tokenizer::{Token, TokenKind, TokenSequence};

pub const SPECIAL_WINDOW: usize = 10;
pub const LOWERCASE_WINDOW: usize = 7;
pub const LENGTH_WINDOW: usize = 7;
pub const SIGN_WINDOW: usize = 5;
pub const SHAPE_WINDOW: usize = 3;

/// The widest window: positions further away never influence a feature vector.
pub const MAX_WINDOW: usize = SPECIAL_WINDOW;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpecialCategory {
    End,
    Open,
    Close,
    Newline,
    Abbr,
    /// Non-newline whitespace, rendered `S`.
    Space,
    No,
}

impl SpecialCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            SpecialCategory::End => "End",
            SpecialCategory::Open => "Open",
            SpecialCategory::Close => "Close",
            SpecialCategory::Newline => "Newline",
            SpecialCategory::Abbr => "Abbr",
            SpecialCategory::Space => "S",
            SpecialCategory::No => "No",
        }
    }
}

impl fmt::Display for SpecialCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureConfig {
    pub end_chars: Vec<char>,
    pub open_chars: Vec<char>,
    pub close_chars: Vec<char>,
    pub abbr_chars: Vec<char>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            end_chars: vec!['.', '!', '?'],
            open_chars: vec!['(', '[', '{'],
            close_chars: vec![')', ']', '}'],
            abbr_chars: vec!['\'', '\u{2019}'],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureValue {
    Bool(bool),
    Text(String),
    Int(i64),
    Real(f64),
}

impl FeatureValue {
    /// Numeric value for real-valued features, `None` for indicators.
    pub fn as_number(&self) -> Option<f64> {
        match *self {
            FeatureValue::Int(i) => Some(i as f64),
            FeatureValue::Real(r) => Some(r),
            _ => None,
        }
    }
}

impl From<bool> for FeatureValue {
    fn from(b: bool) -> Self {
        FeatureValue::Bool(b)
    }
}

impl From<&str> for FeatureValue {
    fn from(s: &str) -> Self {
        FeatureValue::Text(s.to_string())
    }
}

impl From<String> for FeatureValue {
    fn from(s: String) -> Self {
        FeatureValue::Text(s)
    }
}

impl From<i64> for FeatureValue {
    fn from(i: i64) -> Self {
        FeatureValue::Int(i)
    }
}

impl From<f64> for FeatureValue {
    fn from(r: f64) -> Self {
        FeatureValue::Real(r)
    }
}

fn write_py_str(out: &mut String, s: &str) {
    let quote = if s.contains('\'') && !s.contains('"') {
        '"'
    } else {
        '\''
    };
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureValue::Bool(true) => f.write_str("True"),
            FeatureValue::Bool(false) => f.write_str("False"),
            FeatureValue::Int(i) => write!(f, "{i}"),
            FeatureValue::Real(r) => write!(f, "{r:?}"),
            FeatureValue::Text(s) => {
                let mut out = String::new();
                write_py_str(&mut out, s);
                f.write_str(&out)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureVector(pub BTreeMap<String, FeatureValue>);

impl FeatureVector {
    pub fn get(&self, key: &str) -> Option<&FeatureValue> {
        self.0.get(key)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &FeatureValue)> {
        self.0.iter()
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<FeatureValue>) {
        self.0.insert(key.into(), value.into());
    }

    /// Key-sorted rendering in Python dict literal syntax, e.g.
    /// `{'+1:EOS': False, 'bias': 1.0}`.
    pub fn to_python_repr(&self) -> String {
        let mut out = String::from("{");
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            write_py_str(&mut out, k);
            let _ = write!(out, ": {v}");
        }
        out.push('}');
        out
    }
}

pub fn special_category(token: &Token) -> SpecialCategory {
    special_category_with(token, &FeatureConfig::default())
}

pub fn special_category_with(token: &Token, config: &FeatureConfig) -> SpecialCategory {
    match token.kind {
        TokenKind::Newline => return SpecialCategory::Newline,
        TokenKind::Whitespace => return SpecialCategory::Space,
        _ => {}
    }
    let mut chars = token.text.chars();
    let (Some(c), None) = (chars.next(), chars.next()) else {
        return SpecialCategory::No;
    };
    if config.end_chars.contains(&c) {
        SpecialCategory::End
    } else if config.open_chars.contains(&c) {
        SpecialCategory::Open
    } else if config.close_chars.contains(&c) {
        SpecialCategory::Close
    } else if config.abbr_chars.contains(&c) {
        SpecialCategory::Abbr
    } else {
        SpecialCategory::No
    }
}

pub fn signature(token: &Token) -> String {
    signature_of(&token.text)
}

pub fn signature_of(text: &str) -> String {
    text.chars()
        .map(|c| {
            if c.is_lowercase() {
                'c'
            } else if c.is_uppercase() {
                'C'
            } else if crate::tokenizer::is_decimal_digit(c) {
                'N'
            } else {
                'S'
            }
        })
        .collect()
}

/// Per-token attributes, computed once per position and shared by all
/// windows that reach it.
#[derive(Debug, Clone)]
struct TokenAttrs {
    special: &'static str,
    lowercase: String,
    length: i64,
    sign: String,
    lower: bool,
    upper: bool,
    number: bool,
    space: bool,
}

impl TokenAttrs {
    fn new(token: &Token, config: &FeatureConfig) -> Self {
        let first = token.text.chars().next();
        TokenAttrs {
            special: special_category_with(token, config).as_str(),
            lowercase: token.text.to_lowercase(),
            length: token.char_len() as i64,
            sign: signature(token),
            lower: first.is_some_and(char::is_lowercase),
            upper: first.is_some_and(char::is_uppercase),
            number: token.kind == TokenKind::Number,
            space: token.is_space(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FeatureExtractor {
    pub config: FeatureConfig,
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig) -> Self {
        FeatureExtractor { config }
    }

    pub fn extract(&self, seq: &TokenSequence, i: usize) -> Result<FeatureVector> {
        if i >= seq.len() {
            return Err(Error::IndexOutOfBounds {
                index: i,
                len: seq.len(),
            });
        }
        let lo = i.saturating_sub(MAX_WINDOW);
        let hi = (i + MAX_WINDOW + 1).min(seq.len());
        let attrs: Vec<TokenAttrs> = seq.tokens[lo..hi]
            .iter()
            .map(|t| TokenAttrs::new(t, &self.config))
            .collect();
        Ok(window_features(&attrs, i - lo, lo, seq.len()))
    }

    /// Feature vectors for every position of the sequence.
    pub fn extract_all(&self, seq: &TokenSequence) -> Vec<FeatureVector> {
        let attrs: Vec<TokenAttrs> = seq
            .iter()
            .map(|t| TokenAttrs::new(t, &self.config))
            .collect();
        (0..seq.len())
            .map(|i| window_features(&attrs, i, 0, seq.len()))
            .collect()
    }
}

/// `attrs[center]` is absolute position `base + center` in a sequence of `len` tokens.
fn window_features(attrs: &[TokenAttrs], center: usize, base: usize, len: usize) -> FeatureVector {
    let mut f = FeatureVector::default();
    let abs = base + center;
    let c = &attrs[center];
    f.insert("bias", 1.0);
    f.insert("0:lowercase", c.lowercase.as_str());
    f.insert("0:lower", c.lower);
    f.insert("0:upper", c.upper);
    f.insert("0:numeric", c.number);
    f.insert("0:special", c.special);
    f.insert("0:sign", c.sign.as_str());
    f.insert("0:length", c.length);
    f.insert("0:BOS", abs == 0);
    f.insert("0:EOS", abs + 1 == len);

    for d in 1..=MAX_WINDOW {
        for sign in [-1i64, 1] {
            let pos = abs as i64 + sign * d as i64;
            if pos < 0 || pos >= len as i64 {
                continue;
            }
            let a = &attrs[pos as usize - base];
            let prefix = if sign < 0 {
                format!("-{d}:")
            } else {
                format!("+{d}:")
            };
            let key = |name: &str| format!("{prefix}{name}");
            f.insert(key("special"), a.special);
            if sign < 0 {
                f.insert(key("BOS"), pos == 0);
            } else {
                f.insert(key("EOS"), pos as usize + 1 == len);
            }
            if d <= LOWERCASE_WINDOW {
                f.insert(key("lowercase"), a.lowercase.as_str());
            }
            if d <= LENGTH_WINDOW {
                f.insert(key("length"), a.length);
            }
            if d <= SIGN_WINDOW {
                f.insert(key("sign"), a.sign.as_str());
            }
            if d <= SHAPE_WINDOW {
                f.insert(key("lower"), a.lower);
                f.insert(key("upper"), a.upper);
                f.insert(key("number"), a.number);
                f.insert(key("space"), a.space);
            }
        }
    }
    f
}

pub fn extract(seq: &TokenSequence, i: usize) -> Result<FeatureVector> {
    FeatureExtractor::default().extract(seq, i)
}

pub fn extract_all(seq: &TokenSequence) -> Vec<FeatureVector> {
    FeatureExtractor::default().extract_all(seq)
}
