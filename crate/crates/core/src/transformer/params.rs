//! Parameter containers, generic over what each slot holds (a [`Tensor`]
//! at rest, a tape [`Var`](crate::numerics::Var) during a forward pass).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::fame::FocusLayer;
use crate::numerics::Tensor;

/// Pre-norm self-attention + feed-forward block.
#[derive(Clone, Debug, PartialEq)]
pub struct Block<T> {
    pub attn_norm_gain: T,
    pub attn_norm_bias: T,
    pub wq: T,
    pub wk: T,
    pub wv: T,
    pub wo: T,
    pub ffn_norm_gain: T,
    pub ffn_norm_bias: T,
    pub ffn_in: T,
    pub ffn_in_bias: T,
    pub ffn_out: T,
    pub ffn_out_bias: T,
}

impl<T> Block<T> {
    fn map<U>(&self, prefix: &str, f: &mut impl FnMut(&str, &T) -> U) -> Block<U> {
        let mut g = |name: &str, t: &T| f(&format!("{prefix}.{name}"), t);
        Block {
            attn_norm_gain: g("attn_norm_gain", &self.attn_norm_gain),
            attn_norm_bias: g("attn_norm_bias", &self.attn_norm_bias),
            wq: g("wq", &self.wq),
            wk: g("wk", &self.wk),
            wv: g("wv", &self.wv),
            wo: g("wo", &self.wo),
            ffn_norm_gain: g("ffn_norm_gain", &self.ffn_norm_gain),
            ffn_norm_bias: g("ffn_norm_bias", &self.ffn_norm_bias),
            ffn_in: g("ffn_in", &self.ffn_in),
            ffn_in_bias: g("ffn_in_bias", &self.ffn_in_bias),
            ffn_out: g("ffn_out", &self.ffn_out),
            ffn_out_bias: g("ffn_out_bias", &self.ffn_out_bias),
        }
    }

    fn slots(&self) -> [&T; 12] {
        [
            &self.attn_norm_gain,
            &self.attn_norm_bias,
            &self.wq,
            &self.wk,
            &self.wv,
            &self.wo,
            &self.ffn_norm_gain,
            &self.ffn_norm_bias,
            &self.ffn_in,
            &self.ffn_in_bias,
            &self.ffn_out,
            &self.ffn_out_bias,
        ]
    }

    fn slots_mut(&mut self) -> [&mut T; 12] {
        [
            &mut self.attn_norm_gain,
            &mut self.attn_norm_bias,
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.ffn_norm_gain,
            &mut self.ffn_norm_bias,
            &mut self.ffn_in,
            &mut self.ffn_in_bias,
            &mut self.ffn_out,
            &mut self.ffn_out_bias,
        ]
    }
}

/// Pre-norm encoder-decoder attention sublayer of a decoder layer.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossBlock<T> {
    pub norm_gain: T,
    pub norm_bias: T,
    pub wq: T,
    pub wk: T,
    pub wv: T,
    pub wo: T,
}

impl<T> CrossBlock<T> {
    fn map<U>(&self, prefix: &str, f: &mut impl FnMut(&str, &T) -> U) -> CrossBlock<U> {
        let mut g = |name: &str, t: &T| f(&format!("{prefix}.{name}"), t);
        CrossBlock {
            norm_gain: g("norm_gain", &self.norm_gain),
            norm_bias: g("norm_bias", &self.norm_bias),
            wq: g("wq", &self.wq),
            wk: g("wk", &self.wk),
            wv: g("wv", &self.wv),
            wo: g("wo", &self.wo),
        }
    }

    fn slots(&self) -> [&T; 6] {
        [
            &self.norm_gain,
            &self.norm_bias,
            &self.wq,
            &self.wk,
            &self.wv,
            &self.wo,
        ]
    }

    fn slots_mut(&mut self) -> [&mut T; 6] {
        [
            &mut self.norm_gain,
            &mut self.norm_bias,
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
        ]
    }
}

/// All learned weights of the model.
///
/// `embedding` doubles as the output projection and as the vocabulary
/// side of the focus layer. With a shared encoder/decoder, `decoder` is
/// `None` and the decoder runs the encoder blocks; cross-attention is
/// never shared.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights<T> {
    pub embedding: T,
    pub encoder: Vec<Block<T>>,
    pub decoder: Option<Vec<Block<T>>>,
    pub cross: Vec<CrossBlock<T>>,
    pub encoder_norm_gain: T,
    pub encoder_norm_bias: T,
    pub decoder_norm_gain: T,
    pub decoder_norm_bias: T,
    pub focus: FocusLayer<T>,
}

impl<T> Weights<T> {
    /// Maps every slot, visiting them in canonical order with dotted names.
    pub fn map<U>(&self, mut f: impl FnMut(&str, &T) -> U) -> Weights<U> {
        let embedding = f("embedding", &self.embedding);
        let encoder = (self.encoder.iter().enumerate())
            .map(|(i, b)| b.map(&format!("encoder.{i}"), &mut f))
            .collect();
        let decoder = self.decoder.as_ref().map(|blocks| {
            (blocks.iter().enumerate())
                .map(|(i, b)| b.map(&format!("decoder.{i}"), &mut f))
                .collect()
        });
        let cross = (self.cross.iter().enumerate())
            .map(|(i, b)| b.map(&format!("cross.{i}"), &mut f))
            .collect();
        Weights {
            embedding,
            encoder,
            decoder,
            cross,
            encoder_norm_gain: f("encoder_norm_gain", &self.encoder_norm_gain),
            encoder_norm_bias: f("encoder_norm_bias", &self.encoder_norm_bias),
            decoder_norm_gain: f("decoder_norm_gain", &self.decoder_norm_gain),
            decoder_norm_bias: f("decoder_norm_bias", &self.decoder_norm_bias),
            focus: FocusLayer {
                w1: f("focus.w1", &self.focus.w1),
                w2: f("focus.w2", &self.focus.w2),
            },
        }
    }

    /// Slots in the same canonical order as [`Weights::map`].
    pub fn slots_mut(&mut self) -> Vec<&mut T> {
        let mut out: Vec<&mut T> = vec![&mut self.embedding];
        for b in &mut self.encoder {
            out.extend(b.slots_mut());
        }
        if let Some(dec) = &mut self.decoder {
            for b in dec {
                out.extend(b.slots_mut());
            }
        }
        for b in &mut self.cross {
            out.extend(b.slots_mut());
        }
        out.extend([
            &mut self.encoder_norm_gain,
            &mut self.encoder_norm_bias,
            &mut self.decoder_norm_gain,
            &mut self.decoder_norm_bias,
            &mut self.focus.w1,
            &mut self.focus.w2,
        ]);
        out
    }

    pub fn slots(&self) -> Vec<&T> {
        let mut out: Vec<&T> = vec![&self.embedding];
        let blocks = self.encoder.iter().chain(self.decoder.iter().flatten());
        for b in blocks {
            out.extend(b.slots());
        }
        for b in &self.cross {
            out.extend(b.slots());
        }
        out.extend([
            &self.encoder_norm_gain,
            &self.encoder_norm_bias,
            &self.decoder_norm_gain,
            &self.decoder_norm_bias,
            &self.focus.w1,
            &self.focus.w2,
        ]);
        out
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.map(|name, _| names.push(name.to_string()));
        names
    }

    pub fn named(&self) -> Vec<(String, &T)> {
        self.names().into_iter().zip(self.slots()).collect()
    }

    /// The decoder's self-attention/feed-forward block for layer `i`.
    pub fn decoder_block(&self, i: usize) -> &Block<T> {
        match &self.decoder {
            Some(dec) => &dec[i],
            None => &self.encoder[i],
        }
    }
}

/// Parameters of a model together with the configuration that shapes them.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub weights: Weights<Tensor>,
}

impl ModelParams {
    /// Gaussian initialization with the configured std; norm gains start at
    /// one and all biases at zero.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, config.init_std).expect("finite std");
        let mut gauss = |shape: &[usize]| {
            let n = shape.iter().product();
            let vals = (0..n).map(|_| normal.sample(&mut rng)).collect();
            Tensor::new(shape.to_vec(), vals).expect("shape")
        };
        let (h, f, v) = (config.hidden, config.filter, config.vocab_size);
        let ones = || Tensor::full(&[h], 1.0);
        let zeros = |n: usize| Tensor::zeros(&[n]);
        let block = |gauss: &mut dyn FnMut(&[usize]) -> Tensor| Block {
            attn_norm_gain: ones(),
            attn_norm_bias: zeros(h),
            wq: gauss(&[h, h]),
            wk: gauss(&[h, h]),
            wv: gauss(&[h, h]),
            wo: gauss(&[h, h]),
            ffn_norm_gain: ones(),
            ffn_norm_bias: zeros(h),
            ffn_in: gauss(&[h, f]),
            ffn_in_bias: zeros(f),
            ffn_out: gauss(&[f, h]),
            ffn_out_bias: zeros(h),
        };
        let embedding = gauss(&[v, h]);
        let encoder = (0..config.num_layers).map(|_| block(&mut gauss)).collect();
        let decoder = (!config.share_encoder_decoder)
            .then(|| (0..config.num_layers).map(|_| block(&mut gauss)).collect());
        let cross = (0..config.num_layers)
            .map(|_| CrossBlock {
                norm_gain: ones(),
                norm_bias: zeros(h),
                wq: gauss(&[h, h]),
                wk: gauss(&[h, h]),
                wv: gauss(&[h, h]),
                wo: gauss(&[h, h]),
            })
            .collect();
        let focus = FocusLayer {
            w1: gauss(&[h, f]),
            w2: gauss(&[f, h]),
        };
        ModelParams {
            config: config.clone(),
            weights: Weights {
                embedding,
                encoder,
                decoder,
                cross,
                encoder_norm_gain: ones(),
                encoder_norm_bias: zeros(h),
                decoder_norm_gain: ones(),
                decoder_norm_bias: zeros(h),
                focus,
            },
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.weights.named().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.named().iter().all(|(_, t)| t.is_finite())
    }
}
