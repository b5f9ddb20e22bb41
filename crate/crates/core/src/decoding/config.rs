use std::fmt;

use crate::error::{Error, Result};
use crate::kv;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Greedy,
    Beam,
    TopK,
    Nucleus,
    Focus,
    FocusControlled,
    OracleFocus,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Greedy,
        Strategy::Beam,
        Strategy::TopK,
        Strategy::Nucleus,
        Strategy::Focus,
        Strategy::FocusControlled,
        Strategy::OracleFocus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Greedy => "greedy",
            Strategy::Beam => "beam",
            Strategy::TopK => "topk",
            Strategy::Nucleus => "nucleus",
            Strategy::Focus => "focus",
            Strategy::FocusControlled => "focus_controlled",
            Strategy::OracleFocus => "oracle_focus",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }

    /// Whether the strategy draws `num_samples` sequences.
    pub fn is_sampling(self) -> bool {
        matches!(self, Strategy::TopK | Strategy::Nucleus | Strategy::Focus)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-step sampler run over a once-per-summary focus vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Combine {
    FocusTopK,
    FocusNucleus,
}

impl Combine {
    pub fn parse(s: &str) -> Result<Option<Self>> {
        match s {
            "none" | "" => Ok(None),
            "focus+topk" => Ok(Some(Combine::FocusTopK)),
            "focus+nucleus" => Ok(Some(Combine::FocusNucleus)),
            _ => Err(Error::Config(format!("unknown combine mode {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Combine::FocusTopK => "focus+topk",
            Combine::FocusNucleus => "focus+nucleus",
        }
    }
}

/// How disallowed vocabulary items are removed from the focused distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskMode {
    /// Mask logits to −∞ before the softmax; the result is a distribution.
    Renormalize,
    /// Softmax over the full vocabulary, then zero the disallowed entries.
    Literal,
}

impl MaskMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "renormalize" => Ok(MaskMode::Renormalize),
            "literal" => Ok(MaskMode::Literal),
            _ => Err(Error::Config(format!("unknown mask_mode {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MaskMode::Renormalize => "renormalize",
            MaskMode::Literal => "literal",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeConfig {
    pub strategy: Strategy,
    pub beam_size: usize,
    pub sample_k: usize,
    pub nucleus_p: f64,
    /// Size of the sampled or top-k focus vocabulary; clamped to `|V|`.
    pub focus_k: usize,
    pub num_samples: usize,
    pub seed: u64,
    pub max_len: usize,
    pub combine: Option<Combine>,
    /// Beam scores are divided by `len^length_penalty`; 0 disables it.
    pub length_penalty: f64,
    pub mask_mode: MaskMode,
    /// Add the focus bias to the output logits for the unmasked strategies.
    pub focus_bias: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            strategy: Strategy::Beam,
            beam_size: 4,
            sample_k: 640,
            nucleus_p: 0.95,
            focus_k: 10_000,
            num_samples: 10,
            seed: 0,
            max_len: 24,
            combine: None,
            length_penalty: 0.0,
            mask_mode: MaskMode::Renormalize,
            focus_bias: true,
        }
    }
}

impl DecodeConfig {
    pub fn with_strategy(strategy: Strategy) -> Self {
        DecodeConfig {
            strategy,
            ..DecodeConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("beam_size", self.beam_size),
            ("sample_k", self.sample_k),
            ("focus_k", self.focus_k),
            ("num_samples", self.num_samples),
            ("max_len", self.max_len),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{k} must be at least 1")));
        }
        if !(self.nucleus_p > 0.0 && self.nucleus_p <= 1.0) {
            return Err(Error::Config(format!("nucleus_p {} outside (0, 1]", self.nucleus_p)));
        }
        if self.length_penalty < 0.0 {
            return Err(Error::Config("length_penalty must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        [
            ("strategy", self.strategy.name().to_string()),
            ("beam_size", self.beam_size.to_string()),
            ("sample_k", self.sample_k.to_string()),
            ("nucleus_p", self.nucleus_p.to_string()),
            ("focus_k", self.focus_k.to_string()),
            ("num_samples", self.num_samples.to_string()),
            ("max_len", self.max_len.to_string()),
            ("combine", self.combine.map_or("none", Combine::name).to_string()),
            ("length_penalty", self.length_penalty.to_string()),
            ("mask_mode", self.mask_mode.name().to_string()),
            ("focus_bias", self.focus_bias.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Applies one entry; returns `false` for keys it does not own. The
    /// seed is shared with other sections and set by the caller.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "strategy" => self.strategy = Strategy::parse(value)?,
            "beam_size" => self.beam_size = kv::parse_value(key, value)?,
            "sample_k" => self.sample_k = kv::parse_value(key, value)?,
            "nucleus_p" => self.nucleus_p = kv::parse_value(key, value)?,
            "focus_k" => self.focus_k = kv::parse_value(key, value)?,
            "num_samples" => self.num_samples = kv::parse_value(key, value)?,
            "max_len" => self.max_len = kv::parse_value(key, value)?,
            "combine" => self.combine = Combine::parse(value)?,
            "length_penalty" => self.length_penalty = kv::parse_value(key, value)?,
            "mask_mode" => self.mask_mode = MaskMode::parse(value)?,
            "focus_bias" => self.focus_bias = kv::parse_bool(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}
