use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use legal_sbd::baseline::{rule_split, RuleConfig};
use legal_sbd::corpus::{
    corpus_stats, length_histogram, load_corpus, read_corpus, split_corpus, write_corpus,
    CorpusSplit, DocType, Document,
};
use legal_sbd::crf::optim::IterationReport;
use legal_sbd::crf::{load_model, save_model, TrainingConfig};
use legal_sbd::eval::{evaluate, import_foreign_predictions, EvalOptions, EvalReport};
use legal_sbd::features::extract;
use legal_sbd::pipeline::{bench, train_documents, DocumentFilter, Predictor, TrainOptions};
use legal_sbd::synthetic::{generate, SyntheticConfig};
use legal_sbd::tokenizer::{tokenize, AggressiveTokenizer, Token};
use rayon::prelude::*;

use crate::{
    Command, Input, InputFormat, Partition, ReportFormat, Selection, TrainArgs, UsageError,
};

pub fn run(command: Command, seed: u64) -> Result<()> {
    match command {
        Command::Tokenize { input, out } => tokenize_cmd(&input, out.as_deref()),
        Command::Split { corpus, out } => {
            let docs = load_corpus(&corpus)?;
            let split = split_corpus(&docs, seed)?;
            log::info!(
                "train {}, validation {}, test {}",
                split.train.len(),
                split.validation.len(),
                split.test.len()
            );
            split.save(&out)?;
            Ok(())
        }
        Command::Stats { corpus, out } => {
            let docs = load_corpus(&corpus)?;
            corpus_stats(&docs, &AggressiveTokenizer).write_csv(output(out.as_deref())?)?;
            Ok(())
        }
        Command::Histogram {
            corpus,
            bin_size,
            cutoff,
            out,
        } => {
            if bin_size == 0 {
                return Err(UsageError("--bin-size must be at least 1".into()).into());
            }
            let docs = load_corpus(&corpus)?;
            let hist = length_histogram(&docs, &AggressiveTokenizer, bin_size, cutoff)?;
            log::info!(
                "{} sentences longer than {cutoff} tokens left out",
                hist.total_excluded()
            );
            hist.write_csv(output(out.as_deref())?)?;
            Ok(())
        }
        Command::Train(args) => train_cmd(&args, seed),
        Command::Predict {
            model,
            input,
            selection,
            out,
            dump_labels,
        } => predict_cmd(
            &model,
            &input,
            &selection,
            out.as_deref(),
            dump_labels.as_deref(),
        ),
        Command::Baseline {
            input,
            selection,
            out,
            colon_rule,
            min_sentence_chars,
        } => {
            let docs = select(read_documents(&input)?, &selection)?;
            let config = RuleConfig {
                colon_newline_rule: colon_rule,
                min_sentence_chars,
                ..RuleConfig::default()
            };
            let predicted: Vec<Document> = docs
                .par_iter()
                .map(|d| Document {
                    spans: rule_split(&d.text, &config),
                    ..d.clone()
                })
                .collect();
            write_documents(out.as_deref(), &predicted)
        }
        Command::Eval {
            gold,
            pred,
            selection,
            boundary,
            report,
            report_format,
            allow_missing,
        } => {
            let gold = select(load_corpus(&gold)?, &selection)?;
            let mut preds = import_foreign_predictions(&pred)?;
            if selection.split.is_some() {
                let keep: HashSet<&str> = gold.iter().map(|d| d.id.as_str()).collect();
                preds.retain(|id, _| keep.contains(id.as_str()));
            }
            let options = EvalOptions {
                boundary,
                allow_missing,
            };
            let result = evaluate(&gold, &preds, &AggressiveTokenizer, options)?;
            print_summary(&result)?;
            if let Some(path) = report {
                write_report(&result, &path, report_format)?;
            }
            Ok(())
        }
        Command::Features {
            input,
            text,
            doc,
            position,
        } => features_cmd(&input, text, doc, position),
        Command::Bench {
            model,
            corpus,
            repeat,
        } => {
            let predictor = Predictor::new(load_model(&model)?);
            let docs = load_corpus(&corpus)?;
            let report = bench(&predictor, &docs, repeat);
            log::info!(
                "{:.1} sentences/s single-thread, {:.1} on {} threads",
                report.single_thread.sentences_per_second,
                report.multi_thread.sentences_per_second,
                report.threads
            );
            let mut out = io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, &report)?;
            writeln!(out)?;
            Ok(())
        }
        Command::Generate {
            documents,
            abbreviation_rate,
            id_prefix,
            out,
        } => {
            if !(0.0..=1.0).contains(&abbreviation_rate) {
                return Err(UsageError("--abbreviation-rate must be within [0, 1]".into()).into());
            }
            let docs = generate(&SyntheticConfig {
                documents,
                abbreviation_rate,
                id_prefix,
                seed,
                ..SyntheticConfig::default()
            });
            write_documents(out.as_deref(), &docs)
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_documents(path: Option<&Path>, docs: &[Document]) -> Result<()> {
    let mut w = output(path)?;
    write_corpus(&mut w, docs)?;
    w.flush()?;
    Ok(())
}

fn is_jsonl_path(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl" | "json")
    )
}

/// Documents from a corpus file, or one document wrapping raw text.
fn read_documents(input: &Input) -> Result<Vec<Document>> {
    let mut raw = String::new();
    match &input.input {
        Some(p) => {
            File::open(p)
                .and_then(|mut f| f.read_to_string(&mut raw))
                .with_context(|| format!("cannot read {}", p.display()))?;
        }
        None => {
            io::stdin()
                .read_to_string(&mut raw)
                .context("cannot read standard input")?;
        }
    }
    let jsonl = match input.format {
        InputFormat::Jsonl => true,
        InputFormat::Text => false,
        InputFormat::Auto => match &input.input {
            Some(p) => is_jsonl_path(p),
            None => raw.trim_start().starts_with('{'),
        },
    };
    if jsonl {
        return Ok(read_corpus(raw.as_bytes())?);
    }
    let id = input
        .input
        .as_ref()
        .and_then(|p| p.file_stem())
        .map_or_else(|| "stdin".to_string(), |s| s.to_string_lossy().into_owned());
    Ok(vec![Document {
        id,
        language: "und".into(),
        doc_type: DocType::Judgment,
        text: raw,
        spans: Vec::new(),
    }])
}

fn partition_ids(split: &CorpusSplit, partition: Partition) -> &[String] {
    match partition {
        Partition::Train => &split.train,
        Partition::Validation => &split.validation,
        Partition::Test => &split.test,
    }
}

fn select(docs: Vec<Document>, selection: &Selection) -> Result<Vec<Document>> {
    let Some(path) = &selection.split else {
        return Ok(docs);
    };
    let split = CorpusSplit::load(path)?;
    let ids: HashSet<&str> = partition_ids(&split, selection.partition)
        .iter()
        .map(String::as_str)
        .collect();
    Ok(docs
        .into_iter()
        .filter(|d| ids.contains(d.id.as_str()))
        .collect())
}

fn escape(text: &str) -> String {
    let mut s = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => s.push_str("\\\\"),
            '\n' => s.push_str("\\n"),
            '\r' => s.push_str("\\r"),
            '\t' => s.push_str("\\t"),
            _ => s.push(c),
        }
    }
    s
}

fn token_row(doc_id: &str, i: usize, t: &Token) -> String {
    format!(
        "{doc_id}\t{i}\t{}\t{}\t{}\t{}",
        t.start,
        t.end,
        t.kind.as_str(),
        escape(&t.text)
    )
}

fn tokenize_cmd(input: &Input, out: Option<&Path>) -> Result<()> {
    let docs = read_documents(input)?;
    let mut w = output(out)?;
    writeln!(w, "doc_id\tindex\tstart\tend\tkind\ttext")?;
    for d in &docs {
        for (i, t) in tokenize(&d.text).iter().enumerate() {
            writeln!(w, "{}", token_row(&d.id, i, t))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn train_cmd(args: &TrainArgs, seed: u64) -> Result<()> {
    let config = TrainingConfig {
        c1: args.c1,
        c2: args.c2,
        max_iterations: args.max_iterations,
        lbfgs_memory: args.lbfgs_memory,
        convergence_tol: args.convergence_tol,
        seed,
    };
    config.validate().map_err(|e| UsageError(e.to_string()))?;
    if args.max_sequence_length == Some(0) {
        return Err(UsageError("--max-sequence-length must be at least 1".into()).into());
    }
    let docs = load_corpus(&args.corpus)?;
    let (ids, partition) = match &args.split {
        Some(p) => (CorpusSplit::load(p)?.train, "train"),
        None => (docs.iter().map(|d| d.id.clone()).collect(), "all"),
    };
    let filter = DocumentFilter {
        subset: args.subset,
        languages: args.languages.clone(),
    };
    let selected = filter.select(&docs, &ids);
    log::info!(
        "{} training documents (subset {}, languages {}, partition {partition})",
        selected.len(),
        args.subset,
        args.languages
    );
    let options = TrainOptions {
        config,
        max_sequence_length: args.max_sequence_length,
        ..TrainOptions::default()
    };
    let mut history: Vec<IterationReport> = Vec::new();
    let (mut model, report) = train_documents(&selected, &options, |it| {
        log::info!(
            "iteration {:>3}  objective {:.6}  step {:.3e}  active {}",
            it.iteration,
            it.objective,
            it.step,
            it.active
        );
        history.push(*it);
    })?;
    log::info!(
        "stopped: {:?} after {} iterations",
        report.reason,
        report.iterations.len()
    );
    let extra = &mut model.metadata.extra;
    extra.insert("subset".into(), args.subset.to_string());
    extra.insert("languages".into(), args.languages.to_string());
    extra.insert("partition".into(), partition.into());
    save_model(&model, &args.out)?;
    if let Some(path) = &args.train_log {
        write_train_log(path, &history)?;
    }
    Ok(())
}

fn write_train_log(path: &Path, history: &[IterationReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "objective", "step", "evaluations", "active"])?;
    for it in history {
        w.write_record([
            it.iteration.to_string(),
            format!("{:.17e}", it.objective),
            it.step.to_string(),
            it.evaluations.to_string(),
            it.active.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn predict_cmd(
    model: &Path,
    input: &Input,
    selection: &Selection,
    out: Option<&Path>,
    dump_labels: Option<&Path>,
) -> Result<()> {
    let predictor = Predictor::new(load_model(model)?);
    let docs = select(read_documents(input)?, selection)?;
    let analyzed: Vec<_> = docs
        .par_iter()
        .map(|d| predictor.analyze(&d.text))
        .collect();
    let predicted: Vec<Document> = docs
        .iter()
        .zip(&analyzed)
        .map(|(d, (_, _, spans))| Document {
            spans: spans.clone(),
            ..d.clone()
        })
        .collect();
    write_documents(out, &predicted)?;
    if let Some(path) = dump_labels {
        let mut w = output(Some(path))?;
        writeln!(w, "doc_id\tindex\tstart\tend\tkind\ttext\tlabel")?;
        for (d, (tokens, labels, _)) in docs.iter().zip(&analyzed) {
            for (i, (t, l)) in tokens.iter().zip(labels.iter()).enumerate() {
                writeln!(w, "{}\t{l}", token_row(&d.id, i, t))?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

fn print_summary(report: &EvalReport) -> Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "language\ttype\tdocs\tmacro_f1\tmicro_f1")?;
    for s in &report.per_subset {
        writeln!(
            out,
            "{}\t{}\t{}\t{:.4}\t{:.4}",
            s.language, s.doc_type, s.n_docs, s.macro_f1, s.micro_f1
        )?;
    }
    let all = report.micro();
    writeln!(
        out,
        "all\tall\t{}\tP {:.4}\tR {:.4}\tF1 {:.4}",
        report.per_document.len(),
        all.precision,
        all.recall,
        all.f1
    )?;
    Ok(())
}

fn write_report(report: &EvalReport, path: &PathBuf, format: ReportFormat) -> Result<()> {
    let json = match format {
        ReportFormat::Json => true,
        ReportFormat::Csv => false,
        ReportFormat::Auto => path.extension().and_then(|e| e.to_str()) == Some("json"),
    };
    let file = BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    );
    if json {
        report.write_json(file)?;
    } else {
        report.write_csv(file)?;
    }
    Ok(())
}

fn features_cmd(
    input: &Input,
    text: Option<String>,
    doc: Option<String>,
    position: Option<usize>,
) -> Result<()> {
    let text = match text {
        Some(t) => t,
        None => {
            let docs = read_documents(input)?;
            let found = match &doc {
                Some(id) => docs.into_iter().find(|d| &d.id == id),
                None => docs.into_iter().next(),
            };
            match (found, doc) {
                (Some(d), _) => d.text,
                (None, Some(id)) => return Err(legal_sbd::Error::UnknownDocument(id).into()),
                (None, None) => String::new(),
            }
        }
    };
    let seq = tokenize(&text);
    let mut out = BufWriter::new(io::stdout().lock());
    match position {
        Some(i) => writeln!(out, "{}", extract(&seq, i)?.to_python_repr())?,
        None => {
            for f in legal_sbd::features::extract_all(&seq) {
                writeln!(out, "{}", f.to_python_repr())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
