use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use fame::data::load_jsonl;
use fame::decoding::{load_predictions, save_predictions, Prediction};
use fame::fame::PEAKINESS_WINDOW;

const EXPERIMENT: &str = "num_layers = 2\nhidden = 16\nfilter = 32\nnum_heads = 2\nvocab_size = 50\n\
max_input_len = 8\nmax_output_len = 6\nfreq_set_size = 2\nlr = 0.003\nwarmup_steps = 50\n\
total_steps = 120\ncheckpoint_every = 60\nnum_examples = 12\n";

fn fame(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fame"))
        .args(args)
        .output()
        .expect("spawn fame")
}

fn ok(args: &[&str]) -> Output {
    let out = fame(args);
    assert!(
        out.status.success(),
        "`fame {}` failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    fame(args).status.code().expect("exit code")
}

struct Fixture {
    dir: PathBuf,
}

impl Fixture {
    fn path(&self, name: &str) -> String {
        self.dir.join(name).display().to_string()
    }
}

/// A synthetic corpus and a short training run, shared by every test.
fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli-fixture");
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        let f = Fixture { dir };
        std::fs::write(f.path("exp.cfg"), EXPERIMENT).unwrap();
        ok(&["synth", "--config", &f.path("exp.cfg"), "--output", &f.path("corpus.jsonl")]);
        ok(&["train", "--config", &f.path("exp.cfg"), "--corpus", &f.path("corpus.jsonl"), "--run-dir", &f.path("run")]);
        f
    })
}

fn decode_to(out: &str, extra: &[&str]) -> Vec<Prediction> {
    let f = fixture();
    let (run, input, output) = (f.path("run"), f.path("corpus.jsonl"), f.path(out));
    let mut args = vec!["decode", "--run-dir", &run, "--input", &input, "--output", &output];
    args.extend_from_slice(extra);
    ok(&args);
    load_predictions(Path::new(&output)).unwrap()
}

#[test]
fn train_writes_a_complete_run_directory() {
    let f = fixture();
    for name in ["resolved.cfg", "vocab.tsv", "train.log", "best", "ckpt-000060", "ckpt-000120"] {
        assert!(f.dir.join("run").join(name).exists(), "missing {name}");
    }
    let log = std::fs::read_to_string(f.dir.join("run/train.log")).unwrap();
    assert_eq!(log.lines().filter(|l| l.starts_with("step=")).count(), 120);
    assert_eq!(log.lines().filter(|l| l.starts_with("checkpoint=")).count(), 2);
}

#[test]
fn sampling_writes_one_record_per_sample() {
    let preds = decode_to("topk.jsonl", &["--strategy", "topk", "--k", "5", "--samples", "10"]);
    let corpus = load_jsonl(&fixture().dir.join("corpus.jsonl")).unwrap();
    assert_eq!(preds.len(), 10 * corpus.len());
    for id in 0..corpus.len() {
        let idx: Vec<usize> = preds.iter().filter(|p| p.id == id).map(|p| p.sample_index).collect();
        assert_eq!(idx, (0..10).collect::<Vec<_>>());
    }
    assert!(preds.iter().all(|p| p.strategy == "topk"));
}

#[test]
fn beam_of_one_writes_the_greedy_output() {
    let greedy = decode_to("greedy.jsonl", &["--strategy", "greedy"]);
    let beam = decode_to("beam1.jsonl", &["--strategy", "beam", "--beam", "1"]);
    assert_eq!(greedy.len(), beam.len());
    for (g, b) in greedy.iter().zip(&beam) {
        assert_eq!((g.id, &g.tokens, &g.text), (b.id, &b.tokens, &b.text));
    }
}

#[test]
fn eval_of_the_references_scores_100() {
    let f = fixture();
    let corpus = load_jsonl(&f.dir.join("corpus.jsonl")).unwrap();
    let preds: Vec<Prediction> = corpus
        .iter()
        .enumerate()
        .map(|(id, r)| Prediction {
            id,
            strategy: "reference".into(),
            sample_index: 0,
            tokens: Vec::new(),
            text: r.summary.clone(),
            logprob: 0.0,
        })
        .collect();
    let path = f.path("refs.jsonl");
    save_predictions(Path::new(&path), &preds).unwrap();
    let out = f.path("refs-metrics.json");
    let run = f.path("run");
    ok(&["eval", "--run-dir", &run, "--corpus", &f.path("corpus.jsonl"), "--predictions", &path, "--output", &out]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    for key in ["rouge1_f1", "rouge2_f1", "rougeL_f1"] {
        assert_eq!(report[key].as_f64(), Some(100.0), "{key}");
    }
    assert_eq!(report["unique"].as_f64(), Some(1.0));
    // The two template words are absent from documents but form the
    // frequent set, so every content token is supported.
    assert_eq!(report["r1_precision_vs_doc"].as_f64(), Some(60.0));
    assert_eq!(report["keyword_precision"].as_f64(), Some(100.0));
}

#[test]
fn eval_rejects_empty_and_misaligned_predictions() {
    let f = fixture();
    let empty = f.path("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(code(&["eval", "--corpus", &f.path("corpus.jsonl"), "--predictions", &empty]), 2);
    let partial = f.path("partial.jsonl");
    let first = Prediction {
        id: 0,
        strategy: "x".into(),
        sample_index: 0,
        tokens: Vec::new(),
        text: "a".into(),
        logprob: 0.0,
    };
    save_predictions(Path::new(&partial), &[first]).unwrap();
    assert_eq!(code(&["eval", "--corpus", &f.path("corpus.jsonl"), "--predictions", &partial]), 2);
}

#[test]
fn inspect_topic_lists_tokens_in_nonincreasing_order() {
    let f = fixture();
    let out = f.path("topics.jsonl");
    ok(&["inspect-topic", "--run-dir", &f.path("run"), "--input", &f.path("corpus.jsonl"), "--output", &out, "--top-n", "60"]);
    let text = std::fs::read_to_string(&out).unwrap();
    let corpus = load_jsonl(&f.dir.join("corpus.jsonl")).unwrap();
    assert_eq!(text.lines().count(), corpus.len());
    for line in text.lines() {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        let scores: Vec<f64> = rec["top"].as_array().unwrap().iter().map(|e| e[1].as_f64().unwrap()).collect();
        // The corpus vocabulary is smaller than the requested 60 entries.
        let v = scores.len();
        assert!(v < 60);
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
        // Below the window the slope spans the whole vocabulary.
        assert!(PEAKINESS_WINDOW > v);
        let expected = (scores[0] - scores[v - 1]) / (v - 1) as f64;
        assert!((rec["peakiness"].as_f64().unwrap() - expected).abs() < 1e-9);
    }
}

#[test]
fn errors_map_to_exit_codes() {
    let f = fixture();
    let run = f.path("run");
    let corpus = f.path("corpus.jsonl");
    let out = f.path("unused.jsonl");
    assert_eq!(code(&["train", "--corpus", &f.path("missing.jsonl"), "--run-dir", &f.path("r2")]), 2);
    assert_eq!(code(&["decode", "--run-dir", &run, "--input", &corpus, "--output", &out, "--strategy", "bogus"]), 2);
    assert_eq!(code(&["decode", "--run-dir", &run, "--input", &corpus, "--output", &out, "--set", "no_such_key=1"]), 2);
    assert_eq!(code(&["decode", "--run-dir", &run, "--input", &corpus, "--output", &out, "--strategy", "oracle_focus", "--samples", "0"]), 2);
    assert_eq!(code(&["no-such-command"]), 2);
    assert_eq!(code(&["verify", "--inject-fault", "gelu:1.5", "--output", &f.path("verify-fault.txt")]), 1);
}

#[test]
fn verify_passes_on_a_fresh_model() {
    let f = fixture();
    let out = f.path("verify.txt");
    ok(&["verify", "--output", &out]);
    let report = std::fs::read_to_string(&out).unwrap();
    for check in ["grad_check_combined_loss", "zero_focus_reduces_to_plain_mle", "uniform_logits_loss_is_ln_v", "beam_one_equals_greedy"] {
        assert!(report.contains(check), "{check} missing from report");
    }
}
