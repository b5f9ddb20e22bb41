//! Checkpoint files: a text manifest followed by a little-endian `f32` blob.
//!
//! ```text
//! FAME-CHECKPOINT 1
//! embedding 50x16 0
//! encoder.0.attn_norm_gain 16 3200
//! ...
//! end
//! <raw bytes>
//! ```
//!
//! Offsets are byte offsets into the blob. The model configuration is
//! stored next to the weights as `model.cfg`.

use std::fs;
use std::path::Path;

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::kv;
use crate::numerics::Tensor;

const MAGIC: &str = "FAME-CHECKPOINT 1";
pub const WEIGHTS_FILE: &str = "weights.bin";
pub const CONFIG_FILE: &str = "model.cfg";

pub fn encode_weights(params: &ModelParams) -> Vec<u8> {
    let named = params.weights.named();
    let mut manifest = format!("{MAGIC}\n");
    let mut blob = Vec::new();
    for (name, t) in &named {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        manifest.push_str(&format!("{name} {} {}\n", dims.join("x"), blob.len()));
        for &v in t.values() {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    manifest.push_str("end\n");
    let mut out = manifest.into_bytes();
    out.extend(blob);
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

/// Decodes weights for `config`; names and shapes must match exactly.
pub fn decode_weights(config: &ModelConfig, bytes: &[u8]) -> Result<ModelParams> {
    let mut params = ModelParams::init(config, 0);
    let names = params.weights.names();
    let mut pos = 0;
    let mut next_line = || -> Result<&str> {
        let rest = &bytes[pos..];
        let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated manifest"))?;
        pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| bad("manifest is not UTF-8"))
    };
    if next_line()? != MAGIC {
        return Err(bad("missing checkpoint header"));
    }
    let mut entries = Vec::new();
    loop {
        let line = next_line()?;
        if line == "end" {
            break;
        }
        let fields: Vec<&str> = line.split(' ').collect();
        let [name, shape, offset] = fields[..] else {
            return Err(bad(format!("malformed manifest line {line:?}")));
        };
        let shape: Vec<usize> = shape
            .split('x')
            .map(|d| d.parse().map_err(|_| bad(format!("bad shape in {line:?}"))))
            .collect::<Result<_>>()?;
        let offset: usize = offset.parse().map_err(|_| bad(format!("bad offset in {line:?}")))?;
        entries.push((name.to_string(), shape, offset));
    }
    let blob = &bytes[pos..];
    if entries.len() != names.len() {
        return Err(bad(format!(
            "checkpoint holds {} tensors, model expects {}",
            entries.len(),
            names.len()
        )));
    }
    for ((name, shape, offset), (expected, slot)) in
        entries.into_iter().zip(names.iter().zip(params.weights.slots_mut()))
    {
        if &name != expected || shape != slot.shape() {
            return Err(bad(format!(
                "tensor {name} {shape:?} does not match expected {expected} {:?}",
                slot.shape()
            )));
        }
        let n: usize = shape.iter().product();
        let raw = blob
            .get(offset..offset + 4 * n)
            .ok_or_else(|| bad(format!("blob too short for {name}")))?;
        let vals = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        *slot = Tensor::new(shape, vals)?;
    }
    Ok(params)
}

/// Writes `model.cfg` and `weights.bin` into `dir`.
pub fn save(params: &ModelParams, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CONFIG_FILE), kv::render(&params.config.to_kv()))?;
    fs::write(dir.join(WEIGHTS_FILE), encode_weights(params))?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<ModelParams> {
    let cfg_text = fs::read_to_string(dir.join(CONFIG_FILE))
        .map_err(|e| bad(format!("{}: {e}", dir.join(CONFIG_FILE).display())))?;
    let config = ModelConfig::from_kv(&kv::parse(&cfg_text)?)?;
    let bytes = fs::read(dir.join(WEIGHTS_FILE))
        .map_err(|e| bad(format!("{}: {e}", dir.join(WEIGHTS_FILE).display())))?;
    decode_weights(&config, &bytes)
}

/// Rounds every weight to `f32` resolution, as a save/load cycle would.
pub fn round_to_f32(params: &ModelParams) -> ModelParams {
    let mut out = params.clone();
    for t in out.weights.slots_mut() {
        t.values_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
    }
    out
}
