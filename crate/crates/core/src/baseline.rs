//! Rule-based sentence splitter.
//!
//! A sentence ends after a terminator (`.`, `!`, `?` by default) that is
//! followed by whitespace and then an uppercase letter, a digit, an opening
//! quote or the end of the text; after a colon directly followed by a
//! newline; and before any blank line. Abbreviations are not recognized, so
//! `art. 12` or `Dr. Müller` produce false boundaries.

use crate::corpus::SentenceSpan;
use crate::tokenizer::{tokenize, Token, TokenKind};

const OPENING_QUOTES: &[char] = &['"', '\'', '«', '‹', '“', '‘', '„', '‚'];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleConfig {
    pub terminators: Vec<char>,
    pub colon_newline_rule: bool,
    /// Sentences with fewer non-whitespace characters are not closed yet.
    pub min_sentence_chars: usize,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            terminators: vec!['.', '!', '?'],
            colon_newline_rule: true,
            min_sentence_chars: 1,
        }
    }
}

fn single_char(token: &Token) -> Option<char> {
    let mut chars = token.text.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => Some(c),
        _ => None,
    }
}

fn starts_sentence(token: &Token) -> bool {
    match token.kind {
        TokenKind::Number => true,
        TokenKind::Word => token.text.chars().next().is_some_and(char::is_uppercase),
        TokenKind::Other => single_char(token).is_some_and(|c| OPENING_QUOTES.contains(&c)),
        _ => false,
    }
}

pub fn rule_split(text: &str, config: &RuleConfig) -> Vec<SentenceSpan> {
    let tokens = tokenize(text).tokens;
    let mut spans = Vec::new();
    // first and last content token of the open sentence, and its size
    let mut open: Option<(usize, usize)> = None;
    let mut open_chars = 0;
    let mut last_newline: Option<usize> = None;

    let close = |open: &mut Option<(usize, usize)>, spans: &mut Vec<SentenceSpan>| {
        if let Some((first, last)) = open.take() {
            spans.push(SentenceSpan::new(tokens[first].start, tokens[last].end));
        }
    };

    for (i, tok) in tokens.iter().enumerate() {
        if tok.is_space() {
            if tok.kind == TokenKind::Newline {
                let blank =
                    last_newline.is_some_and(|j| tokens[j + 1..i].iter().all(Token::is_space));
                if blank {
                    close(&mut open, &mut spans);
                }
                last_newline = Some(i);
            }
            continue;
        }
        open = Some(match open {
            Some((first, _)) => (first, i),
            None => {
                open_chars = 0;
                (i, i)
            }
        });
        open_chars += tok.text.chars().filter(|c| !c.is_whitespace()).count();

        let next = tokens.get(i + 1);
        let c = single_char(tok);
        let mut ends = false;
        if c.is_some_and(|c| config.terminators.contains(&c)) {
            ends = match next {
                None => true,
                Some(n) if n.is_space() => tokens[i + 1..]
                    .iter()
                    .find(|t| !t.is_space())
                    .is_none_or(starts_sentence),
                Some(_) => false,
            };
        }
        if config.colon_newline_rule
            && c == Some(':')
            && next.is_some_and(|n| n.kind == TokenKind::Newline)
        {
            ends = true;
        }
        if ends && open_chars >= config.min_sentence_chars {
            close(&mut open, &mut spans);
        }
    }
    close(&mut open, &mut spans);
    spans
}
