//! The `fame` command-line interface: train, decode, eval, synth,
//! inspect-topic and verify.
//!
//! Every command resolves its configuration as defaults < `--config` file
//! < command flags < `--set KEY=VALUE`, and records the keys it used next
//! to its output so the run can be repeated from that file alone. Exit
//! codes: 0 success, 2 usage or configuration error, 1 internal failure.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{verify_suite, VerifyCheck};
pub use config::{Command, RunConfig};

use crate::error::Error;

#[derive(Parser, Debug)]
#[command(name = "fame", version, about = "Focus-attention summarization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Train a model on a JSONL corpus.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        valid_corpus: Option<PathBuf>,
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Generate summaries with a trained model.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run_dir: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<String>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        focus_k: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        combine: Option<String>,
    },
    /// Score predictions against a corpus.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run_dir: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Also report topic peakiness (loads the model from --run-dir).
        #[arg(long)]
        peakiness: bool,
    },
    /// Write a synthetic topical summarization corpus.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Show the highest-scoring topic tokens of each input.
    InspectTopic {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run_dir: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<String>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        top_n: Option<usize>,
    },
    /// Run gradient checks and model invariants on a fresh model.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Scale the backward rule of a primitive (`name` or `name:factor`).
        #[arg(long)]
        inject_fault: Option<String>,
    },
}

fn flag<T: ToString>(out: &mut Vec<(String, String)>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        out.push((key.to_string(), v.to_string()));
    }
}

fn path_flag(out: &mut Vec<(String, String)>, key: &str, v: Option<PathBuf>) {
    flag(out, key, v.map(|p| p.display().to_string()));
}

fn resolve(command: Command, common: Common, mut flags: Vec<(String, String)>) -> crate::Result<RunConfig> {
    let mut cfg = RunConfig::new(command);
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    flag(&mut flags, "seed", common.seed);
    path_flag(&mut flags, "output", common.output);
    cfg.apply(&flags)?;
    for o in &common.overrides {
        let (k, v) = config::parse_override(o)?;
        cfg.set(&k, &v)?;
    }
    cfg.finish();
    Ok(cfg)
}

fn dispatch(sub: Sub) -> crate::Result<()> {
    let mut f = Vec::new();
    match sub {
        Sub::Train {
            common,
            corpus,
            valid_corpus,
            run_dir,
        } => {
            path_flag(&mut f, "corpus", corpus);
            path_flag(&mut f, "valid_corpus", valid_corpus);
            path_flag(&mut f, "run_dir", run_dir);
            commands::train(&resolve(Command::Train, common, f)?)
        }
        Sub::Decode {
            common,
            run_dir,
            checkpoint,
            input,
            strategy,
            beam,
            k,
            p,
            focus_k,
            samples,
            combine,
        } => {
            path_flag(&mut f, "run_dir", run_dir);
            flag(&mut f, "checkpoint", checkpoint);
            path_flag(&mut f, "input", input);
            flag(&mut f, "strategy", strategy);
            flag(&mut f, "beam_size", beam);
            flag(&mut f, "sample_k", k);
            flag(&mut f, "nucleus_p", p);
            flag(&mut f, "focus_k", focus_k);
            flag(&mut f, "num_samples", samples);
            flag(&mut f, "combine", combine);
            commands::decode(&resolve(Command::Decode, common, f)?)
        }
        Sub::Eval {
            common,
            run_dir,
            corpus,
            predictions,
            peakiness,
        } => {
            path_flag(&mut f, "run_dir", run_dir);
            path_flag(&mut f, "corpus", corpus);
            path_flag(&mut f, "predictions", predictions);
            flag(&mut f, "peakiness", peakiness.then_some(true));
            commands::eval(&resolve(Command::Eval, common, f)?)
        }
        Sub::Synth { common } => commands::synth(&resolve(Command::Synth, common, f)?),
        Sub::InspectTopic {
            common,
            run_dir,
            checkpoint,
            input,
            top_n,
        } => {
            path_flag(&mut f, "run_dir", run_dir);
            flag(&mut f, "checkpoint", checkpoint);
            path_flag(&mut f, "input", input);
            flag(&mut f, "top_n", top_n);
            commands::inspect_topic(&resolve(Command::InspectTopic, common, f)?)
        }
        Sub::Verify { common, inject_fault } => {
            flag(&mut f, "inject_fault", inject_fault);
            commands::verify(&resolve(Command::Verify, common, f)?)
        }
    }
}

/// Exit code for an error: 2 for usage, configuration and input problems,
/// 1 for everything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Parse { .. } | Error::Input(_) => 2,
        _ => 1,
    }
}

/// Parses `args` (including the program name) and runs the command;
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("fame: {e}");
            exit_code(&e)
        }
    }
}
