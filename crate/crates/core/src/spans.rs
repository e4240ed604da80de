//! BILOU encoding of sentence spans over token sequences, and lenient decoding
//! of (possibly ill-formed) predicted label sequences back to spans.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::SentenceSpan;
use crate::error::{Error, Result};
use crate::tokenizer::TokenSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    B,
    I,
    L,
    O,
    U,
}

impl Label {
    pub const ALL: [Label; 5] = [Label::B, Label::I, Label::L, Label::O, Label::U];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::B => "B",
            Label::I => "I",
            Label::L => "L",
            Label::O => "O",
            Label::U => "U",
        }
    }

    fn opens(self) -> bool {
        matches!(self, Label::B | Label::U)
    }

    fn closes(self) -> bool {
        matches!(self, Label::L | Label::U)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "B" => Ok(Label::B),
            "I" => Ok(Label::I),
            "L" => Ok(Label::L),
            "O" => Ok(Label::O),
            "U" => Ok(Label::U),
            _ => Err(format!("unknown label {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct LabelSequence(pub Vec<Label>);

impl LabelSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Label] {
        &self.0
    }

    /// Whether the labels match `(O | U | B I* L)*`.
    pub fn is_well_formed(&self) -> bool {
        let mut inside = false;
        for &l in &self.0 {
            match (inside, l) {
                (false, Label::O | Label::U) => {}
                (false, Label::B) => inside = true,
                (true, Label::I) => {}
                (true, Label::L) => inside = false,
                _ => return false,
            }
        }
        !inside
    }
}

impl From<Vec<Label>> for LabelSequence {
    fn from(v: Vec<Label>) -> Self {
        LabelSequence(v)
    }
}

impl std::ops::Deref for LabelSequence {
    type Target = [Label];

    fn deref(&self) -> &[Label] {
        &self.0
    }
}

/// Labels every token intersecting a span: `U` for a one-token span,
/// otherwise `B`, `I`..., `L`. Tokens outside all spans get `O`.
///
/// A token straddling two spans stays with the earlier one.
pub fn encode_bilou(seq: &TokenSequence, spans: &[SentenceSpan]) -> Result<LabelSequence> {
    let mut labels = vec![Label::O; seq.len()];
    let mut claimed = 0;
    for span in spans {
        if span.is_empty() {
            return Err(Error::Config(format!(
                "span ({}, {}) intersects no token",
                span.start, span.end
            )));
        }
        let range = seq.intersecting(span.start, span.end);
        let first = range.start.max(claimed);
        let last = range.end;
        if first >= last {
            if range.is_empty() {
                return Err(Error::SpanOutsideText {
                    start: span.start,
                    end: span.end,
                    len: seq.char_len(),
                });
            }
            continue;
        }
        if last - first == 1 {
            labels[first] = Label::U;
        } else {
            labels[first] = Label::B;
            for l in &mut labels[first + 1..last - 1] {
                *l = Label::I;
            }
            labels[last - 1] = Label::L;
        }
        claimed = last;
    }
    Ok(LabelSequence(labels))
}

/// Turns a label sequence into spans.
///
/// Runs of non-`O` labels become spans; a run is also cut where a closing
/// label (`L`, `U`) is directly followed by an opening one (`B`, `U`), so
/// adjacent well-formed spans survive. Ill-formed runs such as `[I, I]` or
/// `[B, B]` yield one span each. Spans are trimmed to start and end on
/// non-whitespace tokens; runs of whitespace only are dropped.
pub fn decode_bilou(seq: &TokenSequence, labels: &LabelSequence) -> Result<Vec<SentenceSpan>> {
    if seq.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: seq.len(),
            right: labels.len(),
        });
    }
    let mut runs = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &l) in labels.iter().enumerate() {
        if l == Label::O {
            if let Some(s) = open.take() {
                runs.push(s..i);
            }
            continue;
        }
        match open {
            Some(s) if l.opens() && labels[i - 1].closes() => {
                runs.push(s..i);
                open = Some(i);
            }
            Some(_) => {}
            None => open = Some(i),
        }
    }
    if let Some(s) = open {
        runs.push(s..labels.len());
    }

    Ok(runs
        .into_iter()
        .filter_map(|run| {
            let toks = &seq.tokens[run];
            let first = toks.iter().position(|t| !t.is_space())?;
            let last = toks.iter().rposition(|t| !t.is_space())?;
            Some(SentenceSpan::new(toks[first].start, toks[last].end))
        })
        .collect())
}
