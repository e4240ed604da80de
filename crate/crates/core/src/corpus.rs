//! Annotated corpora: JSONL ingestion and validation, document-level splits,
//! corpus statistics and sentence-length histograms.
//!
//! Offsets everywhere count Unicode scalar values. `"\r\n"` is folded to
//! `"\n"` at load time and span offsets are remapped accordingly.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tokenizer::Tokenizer;

pub const SENTENCE_LABEL: &str = "Sentence";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocType {
    Judgment,
    Law,
}

impl DocType {
    pub fn as_str(self) -> &'static str {
        match self {
            DocType::Judgment => "judgment",
            DocType::Law => "law",
        }
    }
}

impl fmt::Display for DocType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DocType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "judgment" => Ok(DocType::Judgment),
            "law" => Ok(DocType::Law),
            other => Err(format!("unknown document type {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SentenceSpan {
    pub start: usize,
    pub end: usize,
}

impl SentenceSpan {
    pub fn new(start: usize, end: usize) -> Self {
        SentenceSpan { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

impl From<(usize, usize)> for SentenceSpan {
    fn from((start, end): (usize, usize)) -> Self {
        SentenceSpan { start, end }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub language: String,
    pub doc_type: DocType,
    pub text: String,
    pub spans: Vec<SentenceSpan>,
}

impl Document {
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    /// Checks the span and text invariants.
    pub fn validate(&self) -> Result<()> {
        if self.text.is_empty() {
            return Err(Error::invalid(&self.id, "empty text"));
        }
        let chars: Vec<char> = self.text.chars().collect();
        let mut prev_end = 0;
        for (i, span) in self.spans.iter().enumerate() {
            if span.start >= span.end || span.end > chars.len() {
                return Err(Error::invalid(
                    &self.id,
                    format!(
                        "span out of range: ({}, {}) over text of length {}",
                        span.start,
                        span.end,
                        chars.len()
                    ),
                ));
            }
            if i > 0 && span.start < prev_end {
                return Err(Error::invalid(
                    &self.id,
                    format!(
                        "overlapping spans: ({}, {}) starts before previous end {}",
                        span.start, span.end, prev_end
                    ),
                ));
            }
            if chars[span.start..span.end]
                .iter()
                .all(|c| c.is_whitespace())
            {
                return Err(Error::invalid(
                    &self.id,
                    format!(
                        "span ({}, {}) contains only whitespace",
                        span.start, span.end
                    ),
                ));
            }
            prev_end = span.end;
        }
        Ok(())
    }

    /// Text of a character range.
    pub fn slice(&self, start: usize, end: usize) -> String {
        self.text
            .chars()
            .skip(start)
            .take(end.saturating_sub(start))
            .collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SpanRecord {
    start: usize,
    end: usize,
    #[serde(default = "default_label")]
    label: String,
}

fn default_label() -> String {
    SENTENCE_LABEL.to_string()
}

#[derive(Debug, Serialize, Deserialize)]
struct DocumentRecord {
    id: String,
    language: String,
    #[serde(rename = "type")]
    doc_type: String,
    text: String,
    spans: Vec<SpanRecord>,
}

/// Maps character offsets (0..=len) to offsets after folding `"\r\n"` into
/// `"\n"`; `None` when the text has no `"\r\n"`.
pub(crate) fn crlf_offset_map(text: &str) -> Option<Vec<usize>> {
    if !text.contains("\r\n") {
        return None;
    }
    let chars: Vec<char> = text.chars().collect();
    let mut map = Vec::with_capacity(chars.len() + 1);
    let mut kept = 0;
    for (i, &c) in chars.iter().enumerate() {
        map.push(kept);
        if !(c == '\r' && chars.get(i + 1) == Some(&'\n')) {
            kept += 1;
        }
    }
    map.push(kept);
    Some(map)
}

fn record_to_document(record: DocumentRecord) -> Result<Document> {
    let doc_type = record
        .doc_type
        .parse::<DocType>()
        .map_err(|e| Error::invalid(&record.id, e))?;
    if record.id.is_empty() {
        return Err(Error::invalid("<empty>", "empty document id"));
    }
    let map = crlf_offset_map(&record.text);
    let text = match map {
        Some(_) => record.text.replace("\r\n", "\n"),
        None => record.text.clone(),
    };
    let orig_len = record.text.chars().count();
    let mut spans = Vec::with_capacity(record.spans.len());
    for s in &record.spans {
        if s.label != SENTENCE_LABEL {
            return Err(Error::invalid(
                &record.id,
                format!("unexpected span label {:?}", s.label),
            ));
        }
        let span = match &map {
            Some(m) if s.end <= orig_len && s.start <= s.end => {
                SentenceSpan::new(m[s.start], m[s.end])
            }
            _ => SentenceSpan::new(s.start, s.end),
        };
        spans.push(span);
    }
    Ok(Document {
        id: record.id,
        language: record.language,
        doc_type,
        text,
        spans,
    })
}

fn document_to_record(doc: &Document) -> DocumentRecord {
    DocumentRecord {
        id: doc.id.clone(),
        language: doc.language.clone(),
        doc_type: doc.doc_type.as_str().to_string(),
        text: doc.text.clone(),
        spans: doc
            .spans
            .iter()
            .map(|s| SpanRecord {
                start: s.start,
                end: s.end,
                label: SENTENCE_LABEL.to_string(),
            })
            .collect(),
    }
}

fn read_records<R: BufRead>(reader: R) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DocumentRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                line: line_no,
                message: e.to_string(),
            })?;
        let doc = record_to_document(record)?;
        doc.validate()?;
        docs.push(doc);
    }
    Ok(docs)
}

/// Reads and validates a JSONL corpus from any reader.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<Document>> {
    let docs = read_records(reader)?;
    let mut seen = std::collections::HashSet::new();
    for d in &docs {
        if !seen.insert(d.id.as_str()) {
            return Err(Error::invalid(&d.id, "duplicate document id"));
        }
    }
    Ok(docs)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file))
}

pub fn write_corpus<W: Write>(mut writer: W, docs: &[Document]) -> Result<()> {
    for doc in docs {
        let line = serde_json::to_string(&document_to_record(doc))
            .expect("document records always serialize");
        writeln!(writer, "{line}").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn save_corpus(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_corpus(&mut w, docs)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Stable hash over ids, texts and spans, in input order.
pub fn corpus_fingerprint(docs: &[Document]) -> String {
    let mut h = Sha256::new();
    for d in docs {
        h.update(d.id.as_bytes());
        h.update([0]);
        h.update(d.language.as_bytes());
        h.update([0]);
        h.update(d.doc_type.as_str().as_bytes());
        h.update([0]);
        h.update(d.text.as_bytes());
        h.update([0]);
        for s in &d.spans {
            h.update((s.start as u64).to_le_bytes());
            h.update((s.end as u64).to_le_bytes());
        }
        h.update([0xff]);
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub seed: u64,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl CorpusSplit {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::MalformedLine {
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).expect("split always serializes");
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}

/// `round(fraction_tenths / 10 * n)` with halves rounded up, in integers.
fn round_half_up_tenths(n: usize, tenths: usize) -> usize {
    (2 * n * tenths + 10) / 20
}

/// Splits documents 60/20/20 by document count, sampling within each
/// language so every language contributes proportionally to validation and
/// test. Per-language quotas are apportioned by largest remainder so the
/// global counts are exactly `round(0.2 * N)`.
pub fn split_corpus(docs: &[Document], seed: u64) -> Result<CorpusSplit> {
    let n = docs.len();
    if n < 5 {
        return Err(Error::CorpusTooSmall(n));
    }
    let n_test = round_half_up_tenths(n, 2);
    let n_val = round_half_up_tenths(n, 2);

    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for d in docs {
        groups
            .entry(d.language.as_str())
            .or_default()
            .push(d.id.as_str());
    }
    for ids in groups.values_mut() {
        ids.sort_unstable();
    }
    let sizes: Vec<usize> = groups.values().map(Vec::len).collect();

    let test_quota = apportion(&sizes, n, n_test, &vec![0; sizes.len()]);
    let val_quota = apportion(&sizes, n, n_val, &test_quota);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = CorpusSplit {
        seed,
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (g, ids) in groups.values().enumerate() {
        let mut ids = ids.clone();
        ids.shuffle(&mut rng);
        let (t, rest) = ids.split_at(test_quota[g]);
        let (v, tr) = rest.split_at(val_quota[g]);
        split.test.extend(t.iter().map(|s| s.to_string()));
        split.validation.extend(v.iter().map(|s| s.to_string()));
        split.train.extend(tr.iter().map(|s| s.to_string()));
    }
    split.train.sort();
    split.validation.sort();
    split.test.sort();
    Ok(split)
}

/// Largest-remainder apportionment of `target` items over groups, respecting
/// `taken` items already assigned per group.
fn apportion(sizes: &[usize], total: usize, target: usize, taken: &[usize]) -> Vec<usize> {
    let mut quota: Vec<usize> = sizes.iter().map(|&s| s * target / total).collect();
    for (q, (&s, &t)) in quota.iter_mut().zip(sizes.iter().zip(taken)) {
        *q = (*q).min(s - t);
    }
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    // larger fractional part first; ties by group order
    order.sort_by_key(|&g| std::cmp::Reverse((sizes[g] * target) % total));
    let mut assigned: usize = quota.iter().sum();
    while assigned < target {
        let before = assigned;
        for &g in &order {
            if assigned == target {
                break;
            }
            if quota[g] + taken[g] < sizes[g] {
                quota[g] += 1;
                assigned += 1;
            }
        }
        if assigned == before {
            break;
        }
    }
    quota
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SubsetStats {
    pub documents: usize,
    pub sentences: usize,
    /// Non-whitespace tokens intersecting a sentence span.
    pub tokens: usize,
    /// All tokens intersecting a sentence span, whitespace included.
    pub tokens_with_whitespace: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub rows: BTreeMap<(String, DocType), SubsetStats>,
}

impl CorpusStats {
    pub fn total(&self) -> SubsetStats {
        self.rows
            .values()
            .fold(SubsetStats::default(), |mut acc, s| {
                acc.documents += s.documents;
                acc.sentences += s.sentences;
                acc.tokens += s.tokens;
                acc.tokens_with_whitespace += s.tokens_with_whitespace;
                acc
            })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::io("<csv>", e.into());
        w.write_record([
            "language",
            "type",
            "documents",
            "sentences",
            "tokens",
            "tokens_with_whitespace",
        ])
        .map_err(io)?;
        for ((lang, ty), s) in &self.rows {
            w.write_record([
                lang.clone(),
                ty.to_string(),
                s.documents.to_string(),
                s.sentences.to_string(),
                s.tokens.to_string(),
                s.tokens_with_whitespace.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}

/// Per-sentence token counts: (non-whitespace, all) tokens intersecting each span.
fn sentence_token_counts<T: Tokenizer + ?Sized>(
    doc: &Document,
    tokenizer: &T,
) -> Vec<(usize, usize)> {
    let seq = tokenizer.tokenize(&doc.text);
    doc.spans
        .iter()
        .map(|s| {
            let range = seq.intersecting(s.start, s.end);
            let all = range.len();
            let non_ws = seq.tokens[range].iter().filter(|t| !t.is_space()).count();
            (non_ws, all)
        })
        .collect()
}

pub fn corpus_stats<T: Tokenizer + ?Sized>(docs: &[Document], tokenizer: &T) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for doc in docs {
        let row = stats
            .rows
            .entry((doc.language.clone(), doc.doc_type))
            .or_default();
        row.documents += 1;
        row.sentences += doc.spans.len();
        for (non_ws, all) in sentence_token_counts(doc, tokenizer) {
            row.tokens += non_ws;
            row.tokens_with_whitespace += all;
        }
    }
    stats
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub doc_type: DocType,
    /// Inclusive lower bound in tokens.
    pub low: usize,
    /// Inclusive upper bound in tokens.
    pub high: usize,
    pub count: usize,
    pub frequency: f64,
}

impl HistogramBin {
    pub fn label(&self) -> String {
        format!("{}-{}", self.low, self.high)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LengthHistogram {
    pub bin_size: usize,
    pub cutoff: usize,
    pub bins: Vec<HistogramBin>,
    /// Sentences longer than the cutoff, per document type.
    pub excluded: BTreeMap<DocType, usize>,
}

impl LengthHistogram {
    pub fn total_excluded(&self) -> usize {
        self.excluded.values().sum()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::io("<csv>", e.into());
        w.write_record(["type", "bin", "low", "high", "count", "frequency"])
            .map_err(io)?;
        for b in &self.bins {
            w.write_record([
                b.doc_type.to_string(),
                b.label(),
                b.low.to_string(),
                b.high.to_string(),
                b.count.to_string(),
                b.frequency.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}

/// Sentence-length distribution in non-whitespace tokens, binned and
/// normalized per document type. Sentences longer than `cutoff` are left out
/// of the bins and counted in [`LengthHistogram::excluded`].
pub fn length_histogram<T: Tokenizer + ?Sized>(
    docs: &[Document],
    tokenizer: &T,
    bin_size: usize,
    cutoff: usize,
) -> Result<LengthHistogram> {
    if bin_size == 0 {
        return Err(Error::Config("bin size must be at least 1".into()));
    }
    let mut counts: BTreeMap<DocType, BTreeMap<usize, usize>> = BTreeMap::new();
    let mut excluded: BTreeMap<DocType, usize> = BTreeMap::new();
    for doc in docs {
        for (len, _) in sentence_token_counts(doc, tokenizer) {
            if len > cutoff {
                *excluded.entry(doc.doc_type).or_default() += 1;
                continue;
            }
            let bin = len.saturating_sub(1) / bin_size;
            *counts
                .entry(doc.doc_type)
                .or_default()
                .entry(bin)
                .or_default() += 1;
        }
    }
    let mut bins = Vec::new();
    for (doc_type, per_bin) in counts {
        let total: usize = per_bin.values().sum();
        for (bin, count) in per_bin {
            bins.push(HistogramBin {
                doc_type,
                low: bin * bin_size + 1,
                high: (bin + 1) * bin_size,
                count,
                frequency: count as f64 / total as f64,
            });
        }
    }
    Ok(LengthHistogram {
        bin_size,
        cutoff,
        bins,
        excluded,
    })
}
