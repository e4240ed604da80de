use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_legal-sbd"));
    c.env_remove("LEGAL_SBD_CONFIG")
        .arg("--log-level")
        .arg("warn");
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().unwrap()
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = run(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str], dir: &Path) -> i32 {
    run(args, dir).status.code().unwrap()
}

/// A synthetic corpus and a model trained on all of it, shared by the tests.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        ok(
            &[
                "--seed",
                "5",
                "generate",
                "--documents",
                "20",
                "--out",
                "corpus.jsonl",
            ],
            p,
        );
        ok(
            &["train", "--corpus", "corpus.jsonl", "--out", "model.json"],
            p,
        );
        Fixture { dir }
    })
}

#[test]
fn predict_then_eval_is_perfect_on_separable_data() {
    let f = fixture();
    let p = f.dir.path();
    ok(
        &[
            "predict",
            "--model",
            "model.json",
            "--in",
            "corpus.jsonl",
            "--out",
            "pred.jsonl",
        ],
        p,
    );
    let summary = ok(
        &[
            "eval",
            "--gold",
            "corpus.jsonl",
            "--pred",
            "pred.jsonl",
            "--report",
            "report.json",
        ],
        p,
    );
    assert!(
        summary.lines().last().unwrap().ends_with("F1 1.0000"),
        "{summary}"
    );
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(f.path("report.json")).unwrap()).unwrap();
    for d in report["per_document"].as_array().unwrap() {
        assert_eq!(d["f1"], 1.0);
    }
    ok(
        &[
            "eval",
            "--gold",
            "corpus.jsonl",
            "--pred",
            "pred.jsonl",
            "--report",
            "report.csv",
            "--boundary",
            "start",
        ],
        p,
    );
    let csv = std::fs::read_to_string(f.path("report.csv")).unwrap();
    assert!(csv.lines().count() > 20);
}

#[test]
fn raw_text_gets_two_sentences() {
    let f = fixture();
    let out = bin()
        .args(["predict", "--model"])
        .arg(f.path("model.json"))
        .args(["--format", "text"])
        .stdin(std::fs::File::open(write(&f.path("ab.txt"), "A. B.")).unwrap())
        .output()
        .unwrap();
    assert!(out.status.success());
    let line: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let spans = line["spans"].as_array().unwrap();
    assert_eq!(spans.len(), 2, "{line}");
    assert_eq!(
        (spans[0]["start"].as_u64(), spans[0]["end"].as_u64()),
        (Some(0), Some(2))
    );
    assert_eq!(
        (spans[1]["start"].as_u64(), spans[1]["end"].as_u64()),
        (Some(3), Some(5))
    );
}

fn write(path: &Path, text: &str) -> PathBuf {
    std::fs::write(path, text).unwrap();
    path.to_path_buf()
}

#[test]
fn empty_corpus_gives_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write(&p.join("empty.jsonl"), "");
    let model = fixture().path("model.json");
    let model = model.to_str().unwrap();
    assert_eq!(
        ok(&["predict", "--model", model, "--in", "empty.jsonl"], p),
        ""
    );
    let bench: serde_json::Value = serde_json::from_str(&ok(
        &[
            "bench",
            "--model",
            model,
            "--corpus",
            "empty.jsonl",
            "--repeat",
            "3",
        ],
        p,
    ))
    .unwrap();
    assert_eq!(bench["sentences"], 0);
    assert_eq!(bench["single_thread"]["runs"].as_array().unwrap().len(), 3);
    assert_eq!(bench["single_thread"]["sentences_per_second"], 0.0);
}

#[test]
fn dump_labels_lists_every_token() {
    let f = fixture();
    let p = f.dir.path();
    ok(
        &[
            "predict",
            "--model",
            "model.json",
            "--in",
            "corpus.jsonl",
            "--out",
            "p2.jsonl",
            "--dump-labels",
            "labels.tsv",
        ],
        p,
    );
    let tsv = std::fs::read_to_string(f.path("labels.tsv")).unwrap();
    let tokens = ok(&["tokenize", "--in", "corpus.jsonl"], p);
    assert_eq!(tsv.lines().count(), tokens.lines().count());
    for (with_label, plain) in tsv.lines().zip(tokens.lines()).skip(1) {
        let (prefix, label) = with_label.rsplit_once('\t').unwrap();
        assert_eq!(prefix, plain);
        assert!(["B", "I", "L", "O", "U"].contains(&label));
    }
}

#[test]
fn model_training_is_reproducible() {
    let f = fixture();
    let p = f.dir.path();
    ok(
        &[
            "--threads",
            "3",
            "train",
            "--corpus",
            "corpus.jsonl",
            "--out",
            "again.json",
        ],
        p,
    );
    assert_eq!(
        std::fs::read(f.path("model.json")).unwrap(),
        std::fs::read(f.path("again.json")).unwrap()
    );
}

#[test]
fn split_is_reproducible_and_seeded() {
    let f = fixture();
    let p = f.dir.path();
    ok(
        &[
            "--seed",
            "9",
            "split",
            "--corpus",
            "corpus.jsonl",
            "--out",
            "s1.json",
        ],
        p,
    );
    ok(
        &[
            "split",
            "--corpus",
            "corpus.jsonl",
            "--out",
            "s2.json",
            "--seed",
            "9",
        ],
        p,
    );
    ok(
        &[
            "split",
            "--corpus",
            "corpus.jsonl",
            "--out",
            "s3.json",
            "--seed",
            "10",
        ],
        p,
    );
    let read = |n: &str| std::fs::read_to_string(f.path(n)).unwrap();
    assert_eq!(read("s1.json"), read("s2.json"));
    assert_ne!(read("s1.json"), read("s3.json"));
    let split: serde_json::Value = serde_json::from_str(&read("s1.json")).unwrap();
    assert_eq!(split["test"].as_array().unwrap().len(), 4);
    assert_eq!(split["validation"].as_array().unwrap().len(), 4);
    assert_eq!(split["train"].as_array().unwrap().len(), 12);
}

#[test]
fn train_on_split_records_the_filter() {
    let f = fixture();
    let p = f.dir.path();
    ok(
        &["split", "--corpus", "corpus.jsonl", "--out", "split.json"],
        p,
    );
    ok(
        &[
            "train",
            "--corpus",
            "corpus.jsonl",
            "--split",
            "split.json",
            "--languages",
            "es",
            "--subset",
            "laws",
            "--max-iterations",
            "5",
            "--out",
            "laws.json",
            "--train-log",
            "log.csv",
        ],
        p,
    );
    let model: serde_json::Value =
        serde_json::from_slice(&std::fs::read(f.path("laws.json")).unwrap()).unwrap();
    let extra = &model["metadata"]["extra"];
    assert_eq!(extra["subset"], "laws");
    assert_eq!(extra["languages"], "es");
    assert_eq!(extra["partition"], "train");
    let log = std::fs::read_to_string(f.path("log.csv")).unwrap();
    assert!(log.starts_with("iteration,objective"));
    assert!((2..=6).contains(&log.lines().count()), "{log}");
}

#[test]
fn empty_training_set_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let line = r#"{"id":"a","language":"fr","type":"law","text":"Un. Deux.","spans":[{"start":0,"end":3},{"start":4,"end":9}]}"#;
    write(&p.join("laws.jsonl"), line);
    let out = run(
        &[
            "train",
            "--corpus",
            "laws.jsonl",
            "--subset",
            "judgments",
            "--out",
            "m.json",
        ],
        p,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty training set"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&["--help"], p), 0);
    assert_eq!(code(&["no-such-command"], p), 1);
    assert_eq!(code(&["stats"], p), 1);
    assert_eq!(
        code(
            &[
                "eval",
                "--gold",
                "a.jsonl",
                "--pred",
                "b.jsonl",
                "--boundary",
                "middle"
            ],
            p
        ),
        1
    );
    assert_eq!(
        code(
            &["train", "--corpus", "c.jsonl", "--out", "m.json", "--c1", "-1"],
            p
        ),
        1
    );
    assert_eq!(code(&["stats", "--corpus", "missing.jsonl"], p), 2);
    write(&p.join("bad.jsonl"), "{not json\n");
    assert_eq!(code(&["stats", "--corpus", "bad.jsonl"], p), 2);
    write(&p.join("v9.json"), r#"{"version": 9}"#);
    assert_eq!(
        code(&["predict", "--model", "v9.json", "--in", "bad.jsonl"], p),
        2
    );
}

#[test]
fn eval_needs_every_prediction_unless_allowed() {
    let f = fixture();
    let p = f.dir.path();
    write(&f.path("none.jsonl"), "");
    assert_eq!(
        code(
            &["eval", "--gold", "corpus.jsonl", "--pred", "none.jsonl"],
            p
        ),
        2
    );
    let summary = ok(
        &[
            "eval",
            "--gold",
            "corpus.jsonl",
            "--pred",
            "none.jsonl",
            "--allow-missing",
        ],
        p,
    );
    assert!(summary.lines().last().unwrap().ends_with("F1 0.0000"));
}

#[test]
fn config_file_sits_under_flags() {
    let f = fixture();
    let p = f.dir.path();
    write(
        &f.path("h.cfg"),
        "# histogram defaults\nbin_size = 10\ncutoff=20\nc1 = 0.5\n",
    );
    let from_config = ok(
        &["--config", "h.cfg", "histogram", "--corpus", "corpus.jsonl"],
        p,
    );
    assert!(from_config.contains(",1-10,"), "{from_config}");
    assert!(!from_config.contains(",21-30,"));
    let overridden = ok(
        &[
            "--config",
            "h.cfg",
            "histogram",
            "--corpus",
            "corpus.jsonl",
            "--bin-size",
            "5",
        ],
        p,
    );
    assert!(overridden.contains(",1-5,"));
    let via_env = bin()
        .env("LEGAL_SBD_CONFIG", f.path("h.cfg"))
        .args(["histogram", "--corpus", "corpus.jsonl"])
        .current_dir(p)
        .output()
        .unwrap();
    assert_eq!(String::from_utf8(via_env.stdout).unwrap(), from_config);

    write(&f.path("bad.cfg"), "bin_size = 10\nno_such_flag = 1\n");
    assert_eq!(
        code(
            &[
                "--config",
                "bad.cfg",
                "histogram",
                "--corpus",
                "corpus.jsonl"
            ],
            p
        ),
        1
    );
    write(&f.path("broken.cfg"), "bin_size 10\n");
    assert_eq!(
        code(
            &[
                "--config",
                "broken.cfg",
                "histogram",
                "--corpus",
                "corpus.jsonl"
            ],
            p
        ),
        1
    );
}

#[test]
fn features_golden_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(
        &["features", "--text", "C'est en outre", "--position", "4"],
        dir.path(),
    );
    assert!(out.starts_with("{'+1:EOS': False, '+1:length': 1, "));
    assert!(out.trim_end().ends_with("'0:upper': False, 'bias': 1.0}"));
    let all = ok(&["features", "--text", "C'est en outre"], dir.path());
    assert_eq!(all.lines().count(), 7);
    assert_eq!(all.lines().nth(4).unwrap(), out.trim_end());
}

#[test]
fn tokenize_escapes_whitespace() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("t.txt"), "a\tb\n");
    let out = ok(&["tokenize", "--in", "t.txt"], dir.path());
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "doc_id\tindex\tstart\tend\tkind\ttext");
    assert_eq!(rows[2], "t\t1\t1\t2\twhitespace\t\\t");
    assert_eq!(rows[4], "t\t3\t3\t4\tnewline\t\\n");
}

#[test]
fn baseline_writes_corpus_records() {
    let f = fixture();
    let p = f.dir.path();
    ok(
        &["baseline", "--in", "corpus.jsonl", "--out", "base.jsonl"],
        p,
    );
    let summary = ok(
        &["eval", "--gold", "corpus.jsonl", "--pred", "base.jsonl"],
        p,
    );
    assert!(
        summary.lines().last().unwrap().ends_with("F1 1.0000"),
        "{summary}"
    );
    ok(
        &[
            "baseline",
            "--in",
            "corpus.jsonl",
            "--colon-rule",
            "false",
            "--out",
            "base2.jsonl",
        ],
        p,
    );
}
