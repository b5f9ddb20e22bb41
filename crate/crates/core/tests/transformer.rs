use std::rc::Rc;

use fame::data::vocab::{BOS, EOS, PAD};
use fame::numerics::{grad_check_with, GradCheckOptions, Tape, Tensor, Var};
use fame::transformer::{
    bind, checkpoint, decode_step, encode, mle_loss, mle_loss_on, output_logits, source_mask,
    Graph, ModelConfig, ModelParams, Weights,
};
use proptest::prelude::*;

fn micro(share: bool) -> ModelConfig {
    ModelConfig {
        num_layers: 1,
        hidden: 4,
        filter: 8,
        num_heads: 2,
        vocab_size: 10,
        max_input_len: 5,
        max_output_len: 4,
        share_encoder_decoder: share,
        init_std: 0.5,
        ..ModelConfig::default()
    }
}

/// Tiny model with weights large enough that attention is far from uniform.
fn tiny(seed: u64) -> ModelParams {
    let cfg = ModelConfig {
        init_std: 0.3,
        ..ModelConfig::tiny()
    };
    ModelParams::init(&cfg, seed)
}

/// Hidden states of the whole teacher-forced prefix, `[m×h]` row-major.
fn decoder_hidden(params: &ModelParams, doc: &[usize], prefix: &[usize]) -> Vec<Vec<f64>> {
    let mut tape = Tape::new();
    let w = bind(&mut tape, &params.weights);
    let mask = source_mask(&params.config, doc).unwrap();
    let mut g = Graph::new(&mut tape, &params.config, &w);
    let x = g.encode(doc, &mask).unwrap();
    let out = g.decode(x, &mask, prefix).unwrap();
    let h = tape.value(out.hidden);
    (0..prefix.len()).map(|i| h.row(i).to_vec()).collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn forward_shapes() {
    let p = tiny(1);
    let doc = [5, 6, 7, PAD];
    let enc = encode(&p, &doc).unwrap();
    assert_eq!(enc.x.shape(), &[4, 16]);
    assert_eq!(enc.token_mask, vec![true, true, true, false]);
    let step = decode_step(&p, &enc, &[BOS, 9]).unwrap();
    assert_eq!(step.y.numel(), 16);
    assert_eq!(step.attention.shape(), &[2, 4]);
    assert_eq!(output_logits(&p, &step.y).unwrap().numel(), 50);
}

#[test]
fn pad_tail_does_not_change_real_positions() {
    let p = tiny(2);
    let short = encode(&p, &[5, 6, 7]).unwrap();
    let padded = encode(&p, &[5, 6, 7, PAD, PAD]).unwrap();
    for i in 0..3 {
        assert!(close(short.x.row(i), padded.x.row(i), 1e-12), "row {i}");
    }
    let a = decode_step(&p, &short, &[BOS, 8]).unwrap();
    let b = decode_step(&p, &padded, &[BOS, 8]).unwrap();
    assert!(close(a.y.values(), b.y.values(), 1e-12));
    for h in 0..2 {
        assert!(close(a.attention.row(h), &b.attention.row(h)[..3], 1e-12));
        assert_eq!(&b.attention.row(h)[3..], &[0.0, 0.0]);
    }
}

#[test]
fn decoder_is_causal_under_prefix_extension() {
    let p = tiny(3);
    let doc = [5, 6, 7, 8];
    let long = decoder_hidden(&p, &doc, &[BOS, 10, 11, 12, 13]);
    let other = decoder_hidden(&p, &doc, &[BOS, 10, 11, 40, 41]);
    for i in 0..3 {
        assert!(close(&long[i], &other[i], 1e-12), "position {i} saw the future");
    }
    assert!(!close(&long[3], &other[3], 1e-6));
    let enc = encode(&p, &doc).unwrap();
    for len in 1..=5 {
        let prefix = &[BOS, 10, 11, 12, 13][..len];
        let step = decode_step(&p, &enc, prefix).unwrap();
        assert!(close(step.y.values(), &long[len - 1], 1e-12));
    }
}

#[test]
fn earlier_positions_have_zero_gradient_wrt_later_inputs() {
    let p = tiny(4);
    let doc = [5, 6, 7];
    let mut tape = Tape::new();
    let w = bind(&mut tape, &p.weights);
    let mask = source_mask(&p.config, &doc).unwrap();
    let mut g = Graph::new(&mut tape, &p.config, &w);
    let x = g.encode(&doc, &mask).unwrap();
    let emb = tape.leaf(Tensor::matrix(4, 16, (0..64).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap());
    let out = Graph::new(&mut tape, &p.config, &w).decode_embedded(x, &mask, emb).unwrap();
    // Probe row 1 of the hidden states.
    let select: Rc<[f64]> = (0..64).map(|i| if i / 16 == 1 { 1.0 } else { 0.0 }).collect();
    let probe = tape.mul_const(out.hidden, select).unwrap();
    let root = tape.sum(probe);
    tape.backward(root).unwrap();
    let grad = tape.grad(emb).unwrap();
    assert!(grad[..32].iter().any(|&g| g != 0.0));
    assert!(grad[32..].iter().all(|&g| g == 0.0), "future rows received gradient");
}

#[test]
fn cross_attention_rows_are_distributions() {
    let p = tiny(5);
    let enc = encode(&p, &[5, 6, 7, 8, PAD, PAD]).unwrap();
    let step = decode_step(&p, &enc, &[BOS, 9, 10]).unwrap();
    for h in 0..2 {
        let row = step.attention.row(h);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row.iter().all(|&a| a >= 0.0));
    }
}

#[test]
fn mle_ignores_everything_after_eos() {
    let p = tiny(6);
    let doc = [5, 6, 7, 8];
    let base = mle_loss(&p, &doc, &[9, 10, EOS]).unwrap();
    for tail in [&[PAD, PAD][..], &[11, 12], &[EOS]] {
        let mut r = vec![9, 10, EOS];
        r.extend_from_slice(tail);
        assert_eq!(mle_loss(&p, &doc, &r).unwrap(), base);
    }
    assert_ne!(mle_loss(&p, &doc, &[9, 11, EOS]).unwrap(), base);
}

#[test]
fn checkpoint_round_trip_matches_f32_rounding() {
    let p = tiny(7);
    let dir = tempfile::tempdir().unwrap();
    checkpoint::save(&p, dir.path()).unwrap();
    let loaded = checkpoint::load(dir.path()).unwrap();
    assert_eq!(loaded, checkpoint::round_to_f32(&p));
    let doc = [5, 6, 7];
    let a = mle_loss(&p, &doc, &[8, EOS]).unwrap();
    let b = mle_loss(&loaded, &doc, &[8, EOS]).unwrap();
    assert!((a - b).abs() < 1e-5);
}

fn rebind(weights: &Weights<Tensor>, vars: &[Var]) -> Weights<Var> {
    let mut it = vars.iter();
    weights.map(|_, _| *it.next().expect("one var per slot"))
}

#[test]
fn mle_gradient_matches_finite_differences_in_both_trunk_modes() {
    for share in [true, false] {
        let p = ModelParams::init(&micro(share), 11);
        assert_eq!(p.weights.decoder.is_none(), share);
        let params: Vec<Tensor> = p.weights.slots().into_iter().cloned().collect();
        let report = grad_check_with(
            |t, vars| {
                let w = rebind(&p.weights, vars);
                mle_loss_on(t, &p.config, &w, &[4, 5, 6, PAD], &[7, 8, EOS])
            },
            &params,
            &GradCheckOptions::new(1e-5, 1e-4),
        )
        .unwrap();
        assert!(report.passed, "share={share}: {report:?}");
    }
}

#[test]
fn shared_trunk_blocks_receive_gradient() {
    let p = ModelParams::init(&micro(true), 12);
    let mut tape = Tape::new();
    let w = bind(&mut tape, &p.weights);
    let loss = mle_loss_on(&mut tape, &p.config, &w, &[4, 5, 6], &[7, EOS]).unwrap();
    tape.backward(loss).unwrap();
    let shared = &w.encoder[0];
    let norm = |v: Var| tape.grad(v).map_or(0.0, |g| g.iter().map(|x| x * x).sum::<f64>());
    // With a shared trunk the decoder reuses the encoder blocks.
    assert!(norm(shared.wq) > 0.0);
    assert!(norm(shared.ffn_in) > 0.0);
    assert!(norm(w.cross[0].wk) > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn output_logits_are_linear(
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        seed in 0u64..1000,
    ) {
        let p = tiny(seed);
        let y1: Vec<f64> = (0..16).map(|i| ((i as f64 + seed as f64) * 0.7).sin()).collect();
        let y2: Vec<f64> = (0..16).map(|i| ((i as f64) * 1.3 - seed as f64).cos()).collect();
        let mix: Vec<f64> = y1.iter().zip(&y2).map(|(u, v)| a * u + b * v).collect();
        let l1 = output_logits(&p, &Tensor::vector(y1).unwrap()).unwrap();
        let l2 = output_logits(&p, &Tensor::vector(y2).unwrap()).unwrap();
        let lm = output_logits(&p, &Tensor::vector(mix).unwrap()).unwrap();
        for i in 0..50 {
            let expected = a * l1.values()[i] + b * l2.values()[i];
            prop_assert!((lm.values()[i] - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn output_logits_equal_embedding_dot_products(seed in 0u64..1000) {
        let p = tiny(seed);
        let y: Vec<f64> = (0..16).map(|i| (i as f64 * 0.3 + seed as f64).sin()).collect();
        let logits = output_logits(&p, &Tensor::vector(y.clone()).unwrap()).unwrap();
        for v in 0..50 {
            let e = p.weights.embedding.row(v);
            let dot: f64 = e.iter().zip(&y).map(|(a, b)| a * b).sum();
            prop_assert!((logits.values()[v] - dot).abs() < 1e-12);
        }
    }
}
