//! Generated corpora with known sentence structure, for tests and demos.
//!
//! Every sentence starts with an uppercase word and ends with `.`, `!` or
//! `?`, followed by a space or newline. Optionally sentences carry legal
//! abbreviations (`art. 12`, `Sr(a). Gómez`) whose periods are not sentence
//! ends.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{DocType, Document, SentenceSpan};

const OPENERS: &[&str] = &[
    "El",
    "La",
    "Los",
    "Las",
    "Este",
    "Dicho",
    "Por",
    "Conforme",
    "Según",
    "Cuando",
    "Sin",
    "Además",
    "Finalmente",
    "En",
    "Considerando",
];
const WORDS: &[&str] = &[
    "tribunal",
    "recurso",
    "demanda",
    "parte",
    "actora",
    "sentencia",
    "ley",
    "norma",
    "plazo",
    "derecho",
    "obligación",
    "contrato",
    "juez",
    "prueba",
    "hechos",
    "resolución",
    "que",
    "de",
    "la",
    "el",
    "en",
    "con",
    "para",
    "por",
    "se",
    "fue",
    "ha",
    "sido",
    "presentado",
    "interpuesto",
    "dispone",
    "establece",
    "conforme",
    "dentro",
    "del",
    "los",
    "las",
    "una",
    "un",
    "mediante",
    "cual",
    "también",
    "procede",
    "rechaza",
    "admite",
    "término",
];
const NAMES: &[&str] = &[
    "Gómez", "Pérez", "Müller", "Rossi", "Dupont", "Silva", "García", "López",
];
const ABBREVIATIONS: &[&str] = &["art.", "Sr(a).", "Dr.", "núm.", "p.", "inc."];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub documents: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    /// Probability that a sentence contains an abbreviation.
    pub abbreviation_rate: f64,
    pub language: String,
    pub id_prefix: String,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            documents: 50,
            min_sentences: 4,
            max_sentences: 12,
            abbreviation_rate: 0.0,
            language: "es".into(),
            id_prefix: "syn".into(),
            seed: 0,
        }
    }
}

fn sentence(rng: &mut ChaCha8Rng, abbreviation_rate: f64) -> String {
    let mut words: Vec<String> = vec![OPENERS.choose(rng).unwrap().to_string()];
    let n = rng.gen_range(3..14);
    for _ in 0..n {
        if rng.gen_bool(0.08) {
            words.push(rng.gen_range(1..2000).to_string());
        } else {
            words.push(WORDS.choose(rng).unwrap().to_string());
        }
        if rng.gen_bool(0.06) {
            words.last_mut().unwrap().push(',');
        }
    }
    if rng.gen_bool(abbreviation_rate) {
        let abbr = *ABBREVIATIONS.choose(rng).unwrap();
        let follower = if abbr.starts_with(char::is_uppercase) || rng.gen_bool(0.3) {
            NAMES.choose(rng).unwrap().to_string()
        } else {
            rng.gen_range(1..300).to_string()
        };
        let at = rng.gen_range(1..=words.len() - 1);
        words.insert(at, follower);
        words.insert(at, abbr.to_string());
    }
    let end = *[".", ".", ".", ".", "!", "?"].choose(rng).unwrap();
    let mut s = words.join(" ");
    if s.ends_with(',') {
        s.pop();
    }
    s.push_str(end);
    s
}

pub fn generate(config: &SyntheticConfig) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.documents)
        .map(|d| {
            let n = rng
                .gen_range(config.min_sentences..=config.max_sentences.max(config.min_sentences));
            let mut text = String::new();
            let mut spans = Vec::with_capacity(n);
            let mut pos = 0;
            for k in 0..n {
                if k > 0 {
                    let sep = if rng.gen_bool(0.2) { "\n" } else { " " };
                    text.push_str(sep);
                    pos += 1;
                }
                let s = sentence(&mut rng, config.abbreviation_rate);
                let len = s.chars().count();
                text.push_str(&s);
                spans.push(SentenceSpan::new(pos, pos + len));
                pos += len;
            }
            Document {
                id: format!("{}-{d:03}", config.id_prefix),
                language: config.language.clone(),
                doc_type: if d % 2 == 0 {
                    DocType::Judgment
                } else {
                    DocType::Law
                },
                text,
                spans,
            }
        })
        .collect()
}
