//! Flat `key = value` run configuration shared by all subcommands.

use std::path::{Path, PathBuf};

use crate::data::SyntheticTaskConfig;
use crate::decoding::DecodeConfig;
use crate::error::{Error, Result};
use crate::kv;
use crate::training::TrainConfig;
use crate::transformer::ModelConfig;

/// Default number of topic tokens shown by `inspect-topic`.
pub const DEFAULT_TOP_N: usize = 40;
pub const DEFAULT_FREQ_SET_SIZE: usize = 32;

/// Which subset of keys a command reads and records.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Train,
    Decode,
    Eval,
    Synth,
    InspectTopic,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Decode => "decode",
            Command::Eval => "eval",
            Command::Synth => "synth",
            Command::InspectTopic => "inspect-topic",
            Command::Verify => "verify",
        }
    }
}

/// Everything a command can be configured with. Keys belonging to other
/// commands are accepted (so one file can serve a whole experiment);
/// unknown keys are rejected.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub synth: SyntheticTaskConfig,
    pub freq_set_size: usize,
    pub corpus: Option<PathBuf>,
    pub valid_corpus: Option<PathBuf>,
    pub run_dir: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Checkpoint directory name inside the run, or `best`.
    pub checkpoint: String,
    pub top_n: usize,
    /// Include topic peakiness in evaluation (needs the model).
    pub peakiness: bool,
    /// `verify`: primitive whose backward rule is deliberately scaled.
    pub inject_fault: Option<String>,
}

impl RunConfig {
    /// Defaults for `command`; `verify` starts from the tiny model.
    pub fn new(command: Command) -> Self {
        RunConfig {
            seed: 0,
            model: if command == Command::Verify {
                ModelConfig::tiny()
            } else {
                ModelConfig::default()
            },
            train: TrainConfig::default(),
            decode: DecodeConfig::default(),
            synth: SyntheticTaskConfig::default(),
            freq_set_size: DEFAULT_FREQ_SET_SIZE,
            corpus: None,
            valid_corpus: None,
            run_dir: None,
            input: None,
            predictions: None,
            output: None,
            checkpoint: "best".into(),
            top_n: DEFAULT_TOP_N,
            peakiness: false,
            inject_fault: None,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            // Written into resolved configs for the reader's benefit.
            "command" => {}
            "seed" => self.seed = kv::parse_value(key, value)?,
            "freq_set_size" => self.freq_set_size = kv::parse_value(key, value)?,
            "corpus" => self.corpus = path(value),
            "valid_corpus" => self.valid_corpus = path(value),
            "run_dir" => self.run_dir = path(value),
            "input" => self.input = path(value),
            "predictions" => self.predictions = path(value),
            "output" => self.output = path(value),
            "checkpoint" => self.checkpoint = value.to_string(),
            "top_n" => self.top_n = kv::parse_value(key, value)?,
            "peakiness" => self.peakiness = kv::parse_bool(key, value)?,
            "inject_fault" => self.inject_fault = (!value.is_empty()).then(|| value.to_string()),
            _ => {
                let owned = self.model.set(key, value)?
                    || self.train.set(key, value)?
                    || self.decode.set(key, value)?
                    || self.synth.set(key, value)?;
                if !owned {
                    return Err(Error::Config(format!("unknown config key {key:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, entries: &[(String, String)]) -> Result<()> {
        entries.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply(&kv::parse(&text)?)
    }

    /// Propagates the shared seed into the sections that carry one.
    pub fn finish(&mut self) {
        self.train.seed = self.seed;
        self.decode.seed = self.seed;
        self.synth.seed = self.seed;
    }

    /// The keys `command` depends on, with their resolved values.
    pub fn resolved(&self, command: Command) -> Vec<(String, String)> {
        let mut out = vec![("command".to_string(), command.name().to_string())];
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        push("seed", self.seed.to_string());
        match command {
            Command::Train => {
                for (k, v) in self.model.to_kv().into_iter().chain(self.train.to_kv()) {
                    push(&k, v);
                }
                push("freq_set_size", self.freq_set_size.to_string());
                push("corpus", path(&self.corpus));
                push("valid_corpus", path(&self.valid_corpus));
                push("run_dir", path(&self.run_dir));
            }
            Command::Decode => {
                for (k, v) in self.decode.to_kv() {
                    push(&k, v);
                }
                push("run_dir", path(&self.run_dir));
                push("checkpoint", self.checkpoint.clone());
                push("input", path(&self.input));
                push("output", path(&self.output));
            }
            Command::Eval => {
                push("run_dir", path(&self.run_dir));
                push("checkpoint", self.checkpoint.clone());
                push("corpus", path(&self.corpus));
                push("predictions", path(&self.predictions));
                push("output", path(&self.output));
                push("peakiness", self.peakiness.to_string());
            }
            Command::Synth => {
                for (k, v) in self.synth.to_kv().into_iter().filter(|(k, _)| k != "seed") {
                    push(&k, v);
                }
                push("output", path(&self.output));
            }
            Command::InspectTopic => {
                push("run_dir", path(&self.run_dir));
                push("checkpoint", self.checkpoint.clone());
                push("input", path(&self.input));
                push("output", path(&self.output));
                push("top_n", self.top_n.to_string());
            }
            Command::Verify => {
                for (k, v) in self.model.to_kv() {
                    push(&k, v);
                }
                push("inject_fault", self.inject_fault.clone().unwrap_or_default());
                push("output", path(&self.output));
            }
        }
        out
    }
}

/// `<path>.cfg`, where a command records the configuration that produced
/// `path`.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".cfg");
    PathBuf::from(s)
}

/// Parses a `KEY=VALUE` override.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {s:?} is not KEY=VALUE")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let mut cfg = RunConfig::new(Command::Train);
        match cfg.set("hiden", "8") {
            Err(Error::Config(msg)) => assert!(msg.contains("hiden")),
            other => panic!("unexpected {other:?}"),
        }
        cfg.set("hidden", "8").unwrap();
        cfg.set("beam_size", "2").unwrap();
        cfg.set("num_topics", "3").unwrap();
        assert_eq!((cfg.model.hidden, cfg.decode.beam_size, cfg.synth.num_topics), (8, 2, 3));
    }

    #[test]
    fn resolved_config_reparses_to_same_values() {
        let mut cfg = RunConfig::new(Command::Decode);
        cfg.apply(&[("strategy".into(), "focus".into()), ("seed".into(), "7".into())])
            .unwrap();
        cfg.finish();
        let text = kv::render(&cfg.resolved(Command::Decode));
        let mut again = RunConfig::new(Command::Decode);
        again.apply(&kv::parse(&text).unwrap()).unwrap();
        again.finish();
        assert_eq!(again, cfg);
    }
}
