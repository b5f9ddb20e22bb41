use crate::error::{Error, Result};
use crate::kv;

/// Number of reserved vocabulary entries (pad, bos, eos, unk).
pub const RESERVED_TOKENS: usize = 4;

/// Which final-layer cross-attention heads form the focus attention.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadSelection {
    Mean,
    Single(usize),
}

impl HeadSelection {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "mean" {
            return Ok(HeadSelection::Mean);
        }
        s.strip_prefix("head:")
            .and_then(|i| i.parse().ok())
            .map(HeadSelection::Single)
            .ok_or_else(|| Error::Config(format!("invalid focus_heads {s:?} (mean | head:<i>)")))
    }
}

impl std::fmt::Display for HeadSelection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HeadSelection::Mean => write!(f, "mean"),
            HeadSelection::Single(i) => write!(f, "head:{i}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden: usize,
    pub filter: usize,
    pub num_heads: usize,
    pub vocab_size: usize,
    pub max_input_len: usize,
    pub max_output_len: usize,
    pub share_encoder_decoder: bool,
    pub dropout: f64,
    pub init_std: f64,
    pub focus_heads: HeadSelection,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            num_layers: 2,
            hidden: 64,
            filter: 128,
            num_heads: 4,
            vocab_size: 512,
            max_input_len: 64,
            max_output_len: 24,
            share_encoder_decoder: true,
            dropout: 0.0,
            init_std: 0.02,
            focus_heads: HeadSelection::Mean,
        }
    }
}

impl ModelConfig {
    /// The small configuration used by gradient checks and overfit runs.
    pub fn tiny() -> Self {
        ModelConfig {
            num_layers: 2,
            hidden: 16,
            filter: 32,
            num_heads: 2,
            vocab_size: 50,
            max_input_len: 8,
            max_output_len: 6,
            ..ModelConfig::default()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_layers", self.num_layers),
            ("hidden", self.hidden),
            ("filter", self.filter),
            ("num_heads", self.num_heads),
            ("vocab_size", self.vocab_size),
            ("max_input_len", self.max_input_len),
            ("max_output_len", self.max_output_len),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{k} must be positive")));
        }
        if self.hidden % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "hidden {} not divisible by num_heads {}",
                self.hidden, self.num_heads
            )));
        }
        if self.hidden < 2 {
            return Err(Error::Config("hidden must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if let HeadSelection::Single(h) = self.focus_heads {
            if h >= self.num_heads {
                return Err(Error::Config(format!("focus head {h} >= num_heads")));
            }
        }
        Ok(())
    }

    /// Checks that the vocabulary fits the reserved tokens and the frequent set.
    pub fn validate_frequent_set(&self, freq_set_size: usize) -> Result<()> {
        if self.vocab_size < freq_set_size + RESERVED_TOKENS {
            return Err(Error::Config(format!(
                "vocab_size {} smaller than |F| {} + {RESERVED_TOKENS} reserved",
                self.vocab_size, freq_set_size
            )));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        [
            ("num_layers", self.num_layers.to_string()),
            ("hidden", self.hidden.to_string()),
            ("filter", self.filter.to_string()),
            ("num_heads", self.num_heads.to_string()),
            ("vocab_size", self.vocab_size.to_string()),
            ("max_input_len", self.max_input_len.to_string()),
            ("max_output_len", self.max_output_len.to_string()),
            ("share_encoder_decoder", self.share_encoder_decoder.to_string()),
            ("dropout", self.dropout.to_string()),
            ("init_std", self.init_std.to_string()),
            ("focus_heads", self.focus_heads.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Applies one entry; returns `false` when the key is not a model key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "num_layers" => self.num_layers = kv::parse_value(key, value)?,
            "hidden" => self.hidden = kv::parse_value(key, value)?,
            "filter" => self.filter = kv::parse_value(key, value)?,
            "num_heads" => self.num_heads = kv::parse_value(key, value)?,
            "vocab_size" => self.vocab_size = kv::parse_value(key, value)?,
            "max_input_len" => self.max_input_len = kv::parse_value(key, value)?,
            "max_output_len" => self.max_output_len = kv::parse_value(key, value)?,
            "share_encoder_decoder" => self.share_encoder_decoder = kv::parse_bool(key, value)?,
            "dropout" => self.dropout = kv::parse_value(key, value)?,
            "init_std" => self.init_std = kv::parse_value(key, value)?,
            "focus_heads" => self.focus_heads = HeadSelection::parse(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_kv(entries: &[(String, String)]) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for (k, v) in entries {
            if !cfg.set(k, v)? {
                return Err(Error::Config(format!("unknown model key {k:?}")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heads_must_divide_hidden() {
        let cfg = ModelConfig {
            hidden: 10,
            num_heads: 4,
            ..ModelConfig::tiny()
        };
        assert!(cfg.validate().is_err());
        assert!(ModelConfig::tiny().validate().is_ok());
    }

    #[test]
    fn frequent_set_must_fit() {
        let cfg = ModelConfig::tiny();
        assert!(cfg.validate_frequent_set(46).is_ok());
        assert!(cfg.validate_frequent_set(47).is_err());
    }

    #[test]
    fn kv_round_trip() {
        let mut cfg = ModelConfig::tiny();
        cfg.focus_heads = HeadSelection::Single(1);
        assert_eq!(ModelConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    }
}
