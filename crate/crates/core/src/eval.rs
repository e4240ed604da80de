//! Token-binary evaluation, decoupled from the predicting system's tokenizer.
//!
//! Predicted and gold character spans are both projected onto one reference
//! tokenization. A reference token is a boundary when it is the first or the
//! last token intersecting some span; precision, recall and F1 are computed
//! on that positive class and aggregated per (language, document type).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{crlf_offset_map, DocType, Document, SentenceSpan};
use crate::error::{Error, Result};
use crate::tokenizer::{TokenSequence, Tokenizer};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    /// First and last token of every span.
    #[default]
    Both,
    Start,
    End,
}

impl FromStr for BoundaryMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "both" => Ok(BoundaryMode::Both),
            "start" => Ok(BoundaryMode::Start),
            "end" => Ok(BoundaryMode::End),
            _ => Err(format!(
                "unknown boundary mode {s:?} (expected both, start or end)"
            )),
        }
    }
}

impl fmt::Display for BoundaryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryMode::Both => "both",
            BoundaryMode::Start => "start",
            BoundaryMode::End => "end",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryVector(pub Vec<bool>);

impl BoundaryVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }
}

pub fn boundary_vector(
    reference: &TokenSequence,
    spans: &[SentenceSpan],
) -> Result<BoundaryVector> {
    boundary_vector_with(reference, spans, BoundaryMode::Both)
}

pub fn boundary_vector_with(
    reference: &TokenSequence,
    spans: &[SentenceSpan],
    mode: BoundaryMode,
) -> Result<BoundaryVector> {
    let len = reference.char_len();
    let mut bits = vec![false; reference.len()];
    for span in spans {
        if span.end > len || span.start > span.end {
            return Err(Error::SpanOutsideText {
                start: span.start,
                end: span.end,
                len,
            });
        }
        let range = reference.intersecting(span.start, span.end);
        if range.is_empty() {
            continue;
        }
        if mode != BoundaryMode::End {
            bits[range.start] = true;
        }
        if mode != BoundaryMode::Start {
            bits[range.end - 1] = true;
        }
    }
    Ok(BoundaryVector(bits))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn between(gold: &BoundaryVector, pred: &BoundaryVector) -> Result<Self> {
        if gold.len() != pred.len() {
            return Err(Error::LengthMismatch {
                left: gold.len(),
                right: pred.len(),
            });
        }
        let mut c = Counts::default();
        for (&g, &p) in gold.0.iter().zip(&pred.0) {
            match (g, p) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => {}
            }
        }
        Ok(c)
    }

    pub fn prf(&self) -> Prf {
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn prf(gold: &BoundaryVector, pred: &BoundaryVector) -> Result<Prf> {
    Ok(Counts::between(gold, pred)?.prf())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocumentScore {
    pub doc_id: String,
    pub language: String,
    pub doc_type: DocType,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold boundary tokens.
    pub support: usize,
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetScore {
    pub language: String,
    pub doc_type: DocType,
    pub macro_p: f64,
    pub macro_r: f64,
    pub macro_f1: f64,
    pub micro_p: f64,
    pub micro_r: f64,
    pub micro_f1: f64,
    pub n_docs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub boundary: BoundaryMode,
    /// Sorted by document id.
    pub per_document: Vec<DocumentScore>,
    /// Sorted by (language, document type).
    pub per_subset: Vec<SubsetScore>,
}

impl EvalReport {
    pub fn subset(&self, language: &str, doc_type: DocType) -> Option<&SubsetScore> {
        self.per_subset
            .iter()
            .find(|s| s.language == language && s.doc_type == doc_type)
    }

    pub fn micro(&self) -> Prf {
        let mut c = Counts::default();
        for d in &self.per_document {
            c += d.counts;
        }
        c.prf()
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(|e| Error::io("<report>", e.into()))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<report>", e);
        writeln!(
            w,
            "scope,language,type,doc_id,precision,recall,f1,micro_precision,micro_recall,micro_f1,support,n_docs"
        )
        .map_err(io)?;
        for d in &self.per_document {
            writeln!(
                w,
                "document,{},{},{},{},{},{},,,,{},1",
                d.language,
                d.doc_type,
                csv_field(&d.doc_id),
                d.precision,
                d.recall,
                d.f1,
                d.support
            )
            .map_err(io)?;
        }
        for s in &self.per_subset {
            writeln!(
                w,
                "subset,{},{},,{},{},{},{},{},{},,{}",
                s.language,
                s.doc_type,
                s.macro_p,
                s.macro_r,
                s.macro_f1,
                s.micro_p,
                s.micro_r,
                s.micro_f1,
                s.n_docs
            )
            .map_err(io)?;
        }
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    pub boundary: BoundaryMode,
    /// Score gold documents without a prediction against an empty span list.
    pub allow_missing: bool,
}

pub type Predictions = HashMap<String, Vec<SentenceSpan>>;

pub fn evaluate<T: Tokenizer + Sync + ?Sized>(
    gold_docs: &[Document],
    predictions: &Predictions,
    tokenizer: &T,
    options: EvalOptions,
) -> Result<EvalReport> {
    let known: std::collections::HashSet<&str> = gold_docs.iter().map(|d| d.id.as_str()).collect();
    let mut unknown: Vec<&String> = predictions
        .keys()
        .filter(|k| !known.contains(k.as_str()))
        .collect();
    unknown.sort();
    if let Some(id) = unknown.first() {
        return Err(Error::UnknownDocument(id.to_string()));
    }

    let mut docs: Vec<&Document> = gold_docs.iter().collect();
    docs.sort_by(|a, b| a.id.cmp(&b.id));
    let empty = Vec::new();

    let per_document = docs
        .par_iter()
        .map(|doc| {
            let pred = match predictions.get(&doc.id) {
                Some(p) => p,
                None if options.allow_missing => &empty,
                None => return Err(Error::MissingPrediction(doc.id.clone())),
            };
            let reference = tokenizer.tokenize(&doc.text);
            let g = boundary_vector_with(&reference, &doc.spans, options.boundary)?;
            let p = boundary_vector_with(&reference, pred, options.boundary)
                .map_err(|e| Error::invalid(&doc.id, format!("prediction: {e}")))?;
            let counts = Counts::between(&g, &p)?;
            let s = counts.prf();
            Ok(DocumentScore {
                doc_id: doc.id.clone(),
                language: doc.language.clone(),
                doc_type: doc.doc_type,
                precision: s.precision,
                recall: s.recall,
                f1: s.f1,
                support: g.positives(),
                counts,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut groups: BTreeMap<(String, DocType), Vec<&DocumentScore>> = BTreeMap::new();
    for d in &per_document {
        groups
            .entry((d.language.clone(), d.doc_type))
            .or_default()
            .push(d);
    }
    let per_subset = groups
        .into_iter()
        .map(|((language, doc_type), ds)| {
            let n = ds.len() as f64;
            let mut counts = Counts::default();
            for d in &ds {
                counts += d.counts;
            }
            let micro = counts.prf();
            SubsetScore {
                language,
                doc_type,
                macro_p: ds.iter().map(|d| d.precision).sum::<f64>() / n,
                macro_r: ds.iter().map(|d| d.recall).sum::<f64>() / n,
                macro_f1: ds.iter().map(|d| d.f1).sum::<f64>() / n,
                micro_p: micro.precision,
                micro_r: micro.recall,
                micro_f1: micro.f1,
                n_docs: ds.len(),
            }
        })
        .collect();

    Ok(EvalReport {
        boundary: options.boundary,
        per_document,
        per_subset,
    })
}

#[derive(Deserialize)]
struct PredictionRecord {
    id: String,
    #[serde(default)]
    text: Option<String>,
    spans: Vec<PredictedSpan>,
}

#[derive(Deserialize)]
struct PredictedSpan {
    start: usize,
    end: usize,
}

/// Clips each span's start to the previous span's end (in file order) and
/// drops spans that become empty.
pub fn clip_overlaps(spans: &[SentenceSpan]) -> Vec<SentenceSpan> {
    let mut out = Vec::with_capacity(spans.len());
    let mut prev_end = 0;
    for s in spans {
        let start = s.start.max(prev_end);
        if start < s.end {
            out.push(SentenceSpan::new(start, s.end));
        }
        prev_end = prev_end.max(s.end);
    }
    out
}

pub fn read_foreign_predictions<R: BufRead>(reader: R) -> Result<Predictions> {
    let mut out = Predictions::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                line: line_no,
                message: e.to_string(),
            })?;
        let map = rec.text.as_deref().and_then(crlf_offset_map);
        let spans: Vec<SentenceSpan> = rec
            .spans
            .iter()
            .map(|s| match &map {
                Some(m) if s.start <= s.end && s.end < m.len() => {
                    SentenceSpan::new(m[s.start], m[s.end])
                }
                _ => SentenceSpan::new(s.start, s.end),
            })
            .collect();
        if out.insert(rec.id.clone(), clip_overlaps(&spans)).is_some() {
            return Err(Error::invalid(&rec.id, "duplicate prediction"));
        }
    }
    Ok(out)
}

pub fn import_foreign_predictions(path: impl AsRef<Path>) -> Result<Predictions> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_foreign_predictions(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{tokenize, AggressiveTokenizer};

    fn bv(bits: &[u8]) -> BoundaryVector {
        BoundaryVector(bits.iter().map(|&b| b == 1).collect())
    }

    fn spans(v: &[(usize, usize)]) -> Vec<SentenceSpan> {
        v.iter().map(|&p| p.into()).collect()
    }

    #[test]
    fn gold_vector_of_two_short_sentences() {
        let seq = tokenize("A. B.");
        let v = boundary_vector(&seq, &spans(&[(0, 2), (3, 5)])).unwrap();
        assert_eq!(v, bv(&[1, 1, 0, 1, 1]));
        assert_eq!(boundary_vector(&seq, &[]).unwrap(), bv(&[0; 5]));
    }

    #[test]
    fn foreign_tokenization_is_decoupled() {
        let seq = tokenize("C'est en outre.");
        // a foreign tokenizer reading "C'" as one token starts the span at 0,
        // exactly like ours; edges inside a reference token land on that token
        let a = boundary_vector(&seq, &spans(&[(0, 15)])).unwrap();
        let b = boundary_vector(&seq, &spans(&[(0, 2)])).unwrap();
        assert!(a.0[0] && b.0[0]);
        let c = boundary_vector(&seq, &spans(&[(0, 12)])).unwrap();
        let d = boundary_vector(&seq, &spans(&[(0, 10)])).unwrap();
        assert_eq!(c, d);
        assert!(c.0[6]);
    }

    #[test]
    fn boundary_modes() {
        let seq = tokenize("A. B.");
        let s = spans(&[(0, 2), (3, 5)]);
        assert_eq!(
            boundary_vector_with(&seq, &s, BoundaryMode::Start).unwrap(),
            bv(&[1, 0, 0, 1, 0])
        );
        assert_eq!(
            boundary_vector_with(&seq, &s, BoundaryMode::End).unwrap(),
            bv(&[0, 1, 0, 0, 1])
        );
    }

    #[test]
    fn span_outside_text() {
        let seq = tokenize("A.");
        assert!(matches!(
            boundary_vector(&seq, &spans(&[(0, 3)])),
            Err(Error::SpanOutsideText { .. })
        ));
    }

    #[test]
    fn prf_cases() {
        let p = prf(&bv(&[1, 0, 1, 0]), &bv(&[1, 0, 1, 0])).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        let p = prf(&bv(&[1, 0, 1, 0]), &bv(&[1, 1, 0, 0])).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (0.5, 0.5, 0.5));
        let p = prf(&bv(&[1, 0, 1, 0]), &bv(&[0, 0, 0, 0])).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
        assert!(prf(&bv(&[1]), &bv(&[1, 0])).is_err());
    }

    fn doc(id: &str, text: &str, s: &[(usize, usize)]) -> Document {
        Document {
            id: id.into(),
            language: "fr".into(),
            doc_type: DocType::Judgment,
            text: text.into(),
            spans: spans(s),
        }
    }

    #[test]
    fn macro_is_mean_of_documents() {
        let d1 = doc("a", "A. B.", &[(0, 2), (3, 5)]);
        let d2 = doc("b", "A. B.", &[(0, 2), (3, 5)]);
        let mut preds = Predictions::new();
        preds.insert("a".into(), spans(&[(0, 2), (3, 5)]));
        // misses the second sentence: tp=2 fp=0 fn=2 -> f1 = 2/3
        preds.insert("b".into(), spans(&[(0, 2)]));
        let r = evaluate(
            &[d1, d2],
            &preds,
            &AggressiveTokenizer,
            EvalOptions::default(),
        )
        .unwrap();
        let s = r.subset("fr", DocType::Judgment).unwrap();
        assert!((s.macro_f1 - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        // micro: tp=6 fp=0 fn=2
        assert!((s.micro_f1 - 2.0 * 0.75 / 1.75).abs() < 1e-12);
        assert_eq!(s.n_docs, 2);
    }

    #[test]
    fn missing_and_unknown_predictions() {
        let d = doc("a", "A. B.", &[(0, 2), (3, 5)]);
        let preds = Predictions::new();
        assert!(matches!(
            evaluate(
                std::slice::from_ref(&d),
                &preds,
                &AggressiveTokenizer,
                EvalOptions::default()
            ),
            Err(Error::MissingPrediction(_))
        ));
        let opts = EvalOptions {
            allow_missing: true,
            ..Default::default()
        };
        let r = evaluate(std::slice::from_ref(&d), &preds, &AggressiveTokenizer, opts).unwrap();
        assert_eq!(r.per_document[0].f1, 0.0);
        let mut preds = Predictions::new();
        preds.insert("zzz".into(), vec![]);
        preds.insert("a".into(), vec![]);
        assert!(matches!(
            evaluate(&[d], &preds, &AggressiveTokenizer, EvalOptions::default()),
            Err(Error::UnknownDocument(_))
        ));
    }

    #[test]
    fn clipping() {
        assert_eq!(
            clip_overlaps(&spans(&[(0, 5), (3, 8), (4, 6), (8, 9)])),
            spans(&[(0, 5), (5, 8), (8, 9)])
        );
    }

    #[test]
    fn leading_newline_variants() {
        // the newline is its own token, so a span starting on it marks it
        let text = "A.\nB.";
        let seq = tokenize(text);
        let with_nl = boundary_vector(&seq, &spans(&[(0, 2), (2, 5)])).unwrap();
        let without = boundary_vector(&seq, &spans(&[(0, 2), (3, 5)])).unwrap();
        assert_eq!(with_nl, bv(&[1, 1, 1, 0, 1]));
        assert_eq!(without, bv(&[1, 1, 0, 1, 1]));
    }

    #[test]
    fn read_predictions() {
        let input = r#"{"id":"x","language":"fr","type":"law","text":"A.\r\nB.","spans":[{"start":0,"end":2},{"start":1,"end":6,"label":"whatever"}]}"#;
        let p = read_foreign_predictions(input.as_bytes()).unwrap();
        assert_eq!(p["x"], spans(&[(0, 2), (2, 5)]));
        assert!(read_foreign_predictions("{".as_bytes()).is_err());
    }
}
