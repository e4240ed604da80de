//! Document-level glue: selecting training documents, turning documents into
//! labeled CRF sequences, training, prediction and timing.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{corpus_fingerprint, DocType, Document, SentenceSpan};
use crate::crf::optim::IterationReport;
use crate::crf::{
    self, chunk_ranges, CrfModel, Dataset, DatasetBuilder, LabeledSequence, TrainingConfig,
    TrainingReport,
};
use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::spans::{decode_bilou, encode_bilou, LabelSequence};
use crate::tokenizer::{tokenize, TokenSequence};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Judgments,
    Laws,
    #[default]
    Both,
}

impl Subset {
    pub fn admits(self, doc_type: DocType) -> bool {
        match self {
            Subset::Both => true,
            Subset::Judgments => doc_type == DocType::Judgment,
            Subset::Laws => doc_type == DocType::Law,
        }
    }
}

impl FromStr for Subset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "judgments" => Ok(Subset::Judgments),
            "laws" => Ok(Subset::Laws),
            "both" => Ok(Subset::Both),
            _ => Err(format!(
                "unknown subset {s:?} (expected judgments, laws or both)"
            )),
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subset::Judgments => "judgments",
            Subset::Laws => "laws",
            Subset::Both => "both",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum LanguageFilter {
    #[default]
    All,
    Only(BTreeSet<String>),
}

impl LanguageFilter {
    pub fn admits(&self, language: &str) -> bool {
        match self {
            LanguageFilter::All => true,
            LanguageFilter::Only(set) => set.contains(language),
        }
    }
}

impl FromStr for LanguageFilter {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.trim() == "all" {
            return Ok(LanguageFilter::All);
        }
        let set: BTreeSet<String> = s
            .split(',')
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect();
        if set.is_empty() {
            return Err("empty language list".into());
        }
        Ok(LanguageFilter::Only(set))
    }
}

impl fmt::Display for LanguageFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LanguageFilter::All => f.write_str("all"),
            LanguageFilter::Only(set) => {
                let v: Vec<&str> = set.iter().map(String::as_str).collect();
                f.write_str(&v.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DocumentFilter {
    pub subset: Subset,
    pub languages: LanguageFilter,
}

impl DocumentFilter {
    pub fn admits(&self, doc: &Document) -> bool {
        self.subset.admits(doc.doc_type) && self.languages.admits(&doc.language)
    }

    /// Documents whose id is in `ids` and that pass the filter, in corpus order.
    pub fn select<'a>(&self, docs: &'a [Document], ids: &[String]) -> Vec<&'a Document> {
        let ids: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
        docs.iter()
            .filter(|d| ids.contains(d.id.as_str()) && self.admits(d))
            .collect()
    }
}

pub fn labeled_sequence(
    doc: &Document,
    extractor: &FeatureExtractor,
) -> Result<(TokenSequence, LabeledSequence)> {
    let seq = tokenize(&doc.text).with_doc_id(&doc.id);
    let labels = encode_bilou(&seq, &doc.spans)?;
    let features = extractor.extract_all(&seq);
    let labeled = LabeledSequence::new(doc.id.clone(), features, labels)?;
    Ok((seq, labeled))
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub config: TrainingConfig,
    /// Cut documents longer than this many tokens at outside whitespace.
    pub max_sequence_length: Option<usize>,
    pub extractor: FeatureExtractor,
}

/// Docs compiled per batch; bounds the number of feature maps alive at once.
const BATCH: usize = 64;

pub fn build_dataset(
    docs: &[&Document],
    extractor: &FeatureExtractor,
    max_sequence_length: Option<usize>,
) -> Result<Dataset> {
    let mut builder = DatasetBuilder::new();
    for batch in docs.chunks(BATCH) {
        let labeled: Vec<(TokenSequence, LabeledSequence)> = batch
            .par_iter()
            .filter(|d| !d.text.is_empty())
            .map(|d| labeled_sequence(d, extractor))
            .collect::<Result<_>>()?;
        for (tokens, seq) in &labeled {
            match max_sequence_length {
                Some(max) if seq.labels.len() > max => {
                    let space: Vec<bool> = tokens.iter().map(|t| t.is_space()).collect();
                    for (k, r) in chunk_ranges(&seq.labels, &space, max)
                        .into_iter()
                        .enumerate()
                    {
                        let labels = LabelSequence(seq.labels[r.clone()].to_vec());
                        builder.push_parts(
                            &format!("{}#{k}", seq.id),
                            &seq.features[r],
                            &labels,
                        )?;
                    }
                }
                _ => builder.push(seq)?,
            }
        }
    }
    Ok(builder.finish())
}

pub fn train_documents<C>(
    docs: &[&Document],
    options: &TrainOptions,
    on_iteration: C,
) -> Result<(CrfModel, TrainingReport)>
where
    C: FnMut(&IterationReport),
{
    if docs.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let dataset = build_dataset(docs, &options.extractor, options.max_sequence_length)?;
    log::info!(
        "training on {} sequences, {} tokens, {} attributes",
        dataset.len(),
        dataset.num_tokens(),
        dataset.attributes.len()
    );
    let (mut model, report) = crf::train_dataset(&dataset, &options.config, on_iteration)?;
    let owned: Vec<Document> = docs.iter().map(|d| (*d).clone()).collect();
    model.metadata.corpus_fingerprint = corpus_fingerprint(&owned);
    if let Some(max) = options.max_sequence_length {
        model
            .metadata
            .extra
            .insert("max_sequence_length".into(), max.to_string());
    }
    Ok((model, report))
}

/// A trained model plus the feature extractor it was trained with.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub model: CrfModel,
    pub extractor: FeatureExtractor,
}

impl Predictor {
    pub fn new(model: CrfModel) -> Self {
        Predictor {
            model,
            extractor: FeatureExtractor::default(),
        }
    }

    pub fn labels(&self, seq: &TokenSequence) -> LabelSequence {
        if seq.is_empty() {
            return LabelSequence::default();
        }
        let features = self.extractor.extract_all(seq);
        self.model
            .viterbi_emissions(&self.model.emissions(&features))
    }

    /// Tokens, predicted labels and decoded spans.
    pub fn analyze(&self, text: &str) -> (TokenSequence, LabelSequence, Vec<SentenceSpan>) {
        let seq = tokenize(text);
        let labels = self.labels(&seq);
        let spans = decode_bilou(&seq, &labels).expect("labels align with tokens");
        (seq, labels, spans)
    }

    pub fn predict_text(&self, text: &str) -> Vec<SentenceSpan> {
        self.analyze(text).2
    }

    /// Copy of `doc` with predicted spans.
    pub fn predict_document(&self, doc: &Document) -> Document {
        Document {
            spans: self.predict_text(&doc.text),
            ..doc.clone()
        }
    }

    pub fn predict_all(&self, docs: &[Document]) -> Vec<Document> {
        docs.par_iter().map(|d| self.predict_document(d)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchTiming {
    pub runs: Vec<f64>,
    pub median_seconds: f64,
    pub sentences_per_second: f64,
    pub ms_per_sentence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub documents: usize,
    pub sentences: usize,
    pub tokens: usize,
    pub single_thread: BenchTiming,
    pub multi_thread: BenchTiming,
    pub threads: usize,
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

fn timing(runs: Vec<Duration>, sentences: usize) -> BenchTiming {
    let runs: Vec<f64> = runs.iter().map(Duration::as_secs_f64).collect();
    let median_seconds = median(&runs);
    let (rate, ms) = if sentences == 0 || median_seconds == 0.0 {
        (0.0, 0.0)
    } else {
        (
            sentences as f64 / median_seconds,
            median_seconds * 1000.0 / sentences as f64,
        )
    };
    BenchTiming {
        runs,
        median_seconds,
        sentences_per_second: rate,
        ms_per_sentence: ms,
    }
}

/// Times prediction over `docs`. Sentences are counted from the documents'
/// gold spans, falling back to predicted spans when a corpus has none.
pub fn bench(predictor: &Predictor, docs: &[Document], repeat: usize) -> BenchReport {
    let repeat = repeat.max(1);
    let mut predicted = 0;
    let mut single = Vec::with_capacity(repeat);
    for _ in 0..repeat {
        let t = Instant::now();
        predicted = docs
            .iter()
            .map(|d| predictor.predict_text(&d.text).len())
            .sum();
        single.push(t.elapsed());
    }
    let mut multi = Vec::with_capacity(repeat);
    for _ in 0..repeat {
        let t = Instant::now();
        let n: usize = docs
            .par_iter()
            .map(|d| predictor.predict_text(&d.text).len())
            .sum();
        debug_assert_eq!(n, predicted);
        multi.push(t.elapsed());
    }
    let gold: usize = docs.iter().map(|d| d.spans.len()).sum();
    let sentences = if gold > 0 { gold } else { predicted };
    BenchReport {
        documents: docs.len(),
        sentences,
        tokens: docs.iter().map(|d| tokenize(&d.text).len()).sum(),
        single_thread: timing(single, sentences),
        multi_thread: timing(multi, sentences),
        threads: rayon::current_num_threads(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filters_parse() {
        assert_eq!("laws".parse::<Subset>().unwrap(), Subset::Laws);
        assert!("all".parse::<Subset>().is_err());
        let f: LanguageFilter = "fr, es".parse().unwrap();
        assert!(f.admits("fr") && f.admits("es") && !f.admits("pt"));
        assert_eq!(f.to_string(), "es,fr");
        assert_eq!(
            "all".parse::<LanguageFilter>().unwrap(),
            LanguageFilter::All
        );
    }

    #[test]
    fn empty_bench() {
        let p = Predictor::new(CrfModel::new(vec![]));
        let r = bench(&p, &[], 3);
        assert_eq!(r.sentences, 0);
        assert_eq!(r.single_thread.runs.len(), 3);
        assert_eq!(r.single_thread.sentences_per_second, 0.0);
    }

    #[test]
    fn median_of_runs() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
