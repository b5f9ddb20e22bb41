use std::collections::HashSet;

use fame::data::vocab::{EOS, PAD};
use fame::decoding::focus_vocab::oracle_vocab;
use fame::decoding::sampling::draw;
use fame::decoding::{
    beam_search, decode, greedy, masked_distribution, sample_focus_vocab, topk_focus_vocab,
    truncate_nucleus, truncate_top_k, AllowedVocab, Combine, DecodeConfig, DecodeInput,
    FnScorer, Hypothesis, MaskMode, ModelScorer, Strategy,
};
use fame::fame::{oracle_topic, topic_distribution, FrequentSet};
use fame::numerics::Tensor;
use fame::transformer::{encode, ModelConfig, ModelParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DOC: [usize; 6] = [7, 8, 9, 10, 11, PAD];

fn model() -> ModelParams {
    let cfg = ModelConfig {
        init_std: 0.3,
        ..ModelConfig::tiny()
    };
    ModelParams::init(&cfg, 17)
}

fn frequent() -> FrequentSet {
    FrequentSet::from_ids(50, [4, 5])
}

fn config(strategy: Strategy) -> DecodeConfig {
    DecodeConfig {
        strategy,
        focus_k: 5,
        sample_k: 8,
        num_samples: 4,
        seed: 3,
        ..DecodeConfig::default()
    }
}

fn run(p: &ModelParams, cfg: &DecodeConfig, reference: Option<&[usize]>) -> Vec<Hypothesis> {
    let input = DecodeInput { doc: &DOC, reference };
    decode(p, &frequent(), &input, cfg).unwrap()
}

fn within(h: &Hypothesis, allowed: &AllowedVocab) -> bool {
    h.tokens.iter().all(|&t| allowed.allows(t))
}

#[test]
fn focus_samples_stay_inside_their_sampled_vocabulary() {
    let p = model();
    let cfg = config(Strategy::Focus);
    let topic = topic_distribution(&p, &encode(&p, &DOC).unwrap()).unwrap();
    let hyps = run(&p, &cfg, None);
    assert_eq!(hyps.len(), 4);
    for (i, h) in hyps.iter().enumerate() {
        let allowed = sample_focus_vocab(&topic.logits, 5, &frequent(), cfg.seed + i as u64).unwrap();
        assert!(within(h, &allowed), "sample {i}: {:?}", h.tokens);
    }
}

#[test]
fn controlled_generation_stays_inside_the_top_k_vocabulary() {
    let p = model();
    let topic = topic_distribution(&p, &encode(&p, &DOC).unwrap()).unwrap();
    let allowed = topk_focus_vocab(&topic.logits, 5, &frequent()).unwrap();
    let hyps = run(&p, &config(Strategy::FocusControlled), None);
    assert_eq!(hyps.len(), 1);
    assert!(within(&hyps[0], &allowed));
}

#[test]
fn oracle_support_is_reference_types_plus_frequent_and_eos() {
    let p = model();
    let reference = [30, 31, 30, 40, EOS];
    let hyps = run(&p, &config(Strategy::OracleFocus), Some(&reference));
    let mut permitted: HashSet<usize> = reference.iter().copied().collect();
    permitted.extend(frequent().ids());
    permitted.insert(EOS);
    assert!(hyps[0].tokens.iter().all(|t| permitted.contains(t)), "{:?}", hyps[0].tokens);

    let topic = oracle_topic(&reference, 50, &[true; 6]).unwrap();
    let allowed = oracle_vocab(&topic.logits, 4, &frequent()).unwrap();
    let ids: HashSet<usize> = (0..50).filter(|&i| allowed.allows(i)).collect();
    assert_eq!(ids, permitted);
}

#[test]
fn oracle_requires_a_reference() {
    let p = model();
    let input = DecodeInput { doc: &DOC, reference: None };
    assert!(decode(&p, &frequent(), &input, &config(Strategy::OracleFocus)).is_err());
}

#[test]
fn every_strategy_is_deterministic() {
    let p = model();
    let reference = [30, 31, EOS];
    for strategy in Strategy::ALL {
        let cfg = config(strategy);
        let a = run(&p, &cfg, Some(&reference));
        let b = run(&p, &cfg, Some(&reference));
        assert_eq!(a, b, "{strategy}");
        let expected = if strategy.is_sampling() { 4 } else { 1 };
        assert_eq!(a.len(), expected, "{strategy}");
        for h in &a {
            assert!(h.tokens.len() <= p.config.max_output_len);
            assert!(h.logprob <= 0.0 && h.logprob.is_finite());
        }
    }
}

#[test]
fn sample_i_uses_seed_plus_i() {
    let p = model();
    for strategy in [Strategy::TopK, Strategy::Nucleus, Strategy::Focus] {
        let all = run(&p, &config(strategy), None);
        for i in 0..4 {
            let single = DecodeConfig {
                num_samples: 1,
                seed: 3 + i as u64,
                ..config(strategy)
            };
            assert_eq!(run(&p, &single, None)[0], all[i], "{strategy} sample {i}");
        }
    }
}

#[test]
fn beam_of_one_equals_greedy() {
    let p = model();
    let g = run(&p, &config(Strategy::Greedy), None);
    let b = run(
        &p,
        &DecodeConfig {
            beam_size: 1,
            ..config(Strategy::Beam)
        },
        None,
    );
    assert_eq!(g[0].tokens, b[0].tokens);
    assert!((g[0].logprob - b[0].logprob).abs() < 1e-12);
}

#[test]
fn top_one_sampling_equals_greedy() {
    let p = model();
    let g = run(&p, &config(Strategy::Greedy), None);
    let s = run(
        &p,
        &DecodeConfig {
            sample_k: 1,
            ..config(Strategy::TopK)
        },
        None,
    );
    for h in &s {
        assert_eq!(h.tokens, g[0].tokens);
        assert_eq!(h.logprob, 0.0);
    }
}

#[test]
fn combine_with_full_focus_vocabulary_reduces_to_plain_sampling() {
    let p = model();
    for (combine, strategy) in [
        (Combine::FocusTopK, Strategy::TopK),
        (Combine::FocusNucleus, Strategy::Nucleus),
    ] {
        let plain = run(&p, &config(strategy), None);
        let combined = run(
            &p,
            &DecodeConfig {
                combine: Some(combine),
                focus_k: 10_000,
                ..config(Strategy::Focus)
            },
            None,
        );
        assert_eq!(plain.len(), combined.len());
        for (a, b) in plain.iter().zip(&combined) {
            assert_eq!(a.tokens, b.tokens);
            assert!((a.logprob - b.logprob).abs() < 1e-9);
        }
    }
}

#[test]
fn focus_over_the_full_vocabulary_yields_one_unique_summary() {
    let p = model();
    let hyps = run(
        &p,
        &DecodeConfig {
            focus_k: 50,
            num_samples: 6,
            ..config(Strategy::Focus)
        },
        None,
    );
    let unique: HashSet<&Vec<usize>> = hyps.iter().map(|h| &h.tokens).collect();
    assert_eq!(unique.len(), 1);
    let beam = run(&p, &config(Strategy::Beam), None);
    assert_eq!(hyps[0], beam[0]);
}

#[test]
fn beam_score_equals_recomputed_sequence_log_probability() {
    let p = model();
    let enc = encode(&p, &DOC).unwrap();
    let topic = topic_distribution(&p, &enc).unwrap();
    let hyp = &run(&p, &config(Strategy::Beam), None)[0];
    let scorer = ModelScorer::new(&p, &enc, Some(&topic), None, MaskMode::Renormalize);
    let mut total = 0.0;
    for i in 0..hyp.tokens.len() {
        let dist = scorer.distribution(&hyp.tokens[..i]).unwrap();
        total += dist.values()[hyp.tokens[i]].ln();
    }
    assert!((total - hyp.logprob).abs() < 1e-9, "{total} vs {}", hyp.logprob);
}

#[test]
fn combine_is_rejected_for_deterministic_strategies() {
    let p = model();
    let cfg = DecodeConfig {
        combine: Some(Combine::FocusTopK),
        ..config(Strategy::Beam)
    };
    let input = DecodeInput { doc: &DOC, reference: None };
    assert!(matches!(decode(&p, &frequent(), &input, &cfg), Err(fame::Error::Config(_))));
}

/// Deterministic pseudo-random next-token table keyed by the prefix.
fn table_scorer(v: usize, seed: u64) -> impl FnMut(&[usize]) -> fame::Result<Vec<f64>> {
    move |emitted: &[usize]| {
        let key = emitted.iter().fold(emitted.len() as u64, |acc, &t| acc * 31 + t as u64 + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let logits: Vec<f64> = (0..v).map(|_| rng.random_range(-3.0..3.0)).collect();
        let lse = logits.iter().map(|l| l.exp()).sum::<f64>().ln();
        Ok(logits.iter().map(|l| l - lse).collect())
    }
}

/// Exhaustive search over sequences that end in eos within `max_len`.
fn best_finished(v: usize, seed: u64, max_len: usize) -> (Vec<usize>, f64) {
    let mut f = table_scorer(v, seed);
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    let mut stack = vec![(Vec::<usize>::new(), 0.0)];
    while let Some((prefix, score)) = stack.pop() {
        if prefix.len() == max_len {
            continue;
        }
        let lp = f(&prefix).unwrap();
        for t in 0..v {
            let mut next = prefix.clone();
            next.push(t);
            let s = score + lp[t];
            if t == EOS {
                if s > best.1 {
                    best = (next, s);
                }
            } else {
                stack.push((next, s));
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn wide_beam_finds_the_exhaustive_optimum(seed in any::<u64>()) {
        let (v, max_len) = (4, 3);
        let (tokens, score) = best_finished(v, seed, max_len);
        let mut scorer = FnScorer::new(v, table_scorer(v, seed));
        let hyp = beam_search(&mut scorer, 64, max_len, 0.0).unwrap();
        prop_assert_eq!(hyp.tokens, tokens);
        prop_assert!((hyp.logprob - score).abs() < 1e-12);
    }

    #[test]
    fn beam_one_matches_greedy_on_random_tables(seed in any::<u64>()) {
        let mut a = FnScorer::new(6, table_scorer(6, seed));
        let mut b = FnScorer::new(6, table_scorer(6, seed));
        prop_assert_eq!(greedy(&mut a, 5).unwrap(), beam_search(&mut b, 1, 5, 0.0).unwrap());
    }

    #[test]
    fn renormalized_mask_is_a_distribution_on_the_allowed_set(
        logits in prop::collection::vec(-8.0f64..8.0, 3..16),
        bits in prop::collection::vec(any::<bool>(), 16),
    ) {
        let n = logits.len();
        let mut mask = bits[..n].to_vec();
        mask[n / 2] = true;
        let allowed = AllowedVocab { mask: mask.clone(), provenance: fame::decoding::Provenance::SampledVk };
        let l = Tensor::vector(logits.clone()).unwrap();
        let zero = Tensor::zeros(&[n]);
        let renorm = masked_distribution(&l, &zero, &allowed, MaskMode::Renormalize).unwrap();
        let literal = masked_distribution(&l, &zero, &allowed, MaskMode::Literal).unwrap();
        let full = masked_distribution(&l, &zero, &AllowedVocab::full(n), MaskMode::Literal).unwrap();
        prop_assert!((renorm.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let kept: f64 = (0..n).filter(|&i| mask[i]).map(|i| full.values()[i]).sum();
        for i in 0..n {
            if mask[i] {
                prop_assert!((literal.values()[i] - full.values()[i]).abs() < 1e-15);
                prop_assert!((renorm.values()[i] - full.values()[i] / kept).abs() < 1e-12);
            } else {
                prop_assert_eq!(renorm.values()[i], 0.0);
                prop_assert_eq!(literal.values()[i], 0.0);
            }
        }
    }

    #[test]
    fn sampled_focus_vocabulary_has_k_draws_plus_frequent_and_eos(
        logits in prop::collection::vec(-4.0f64..4.0, 10..40),
        k in 1usize..10,
        seed in any::<u64>(),
    ) {
        let v = logits.len();
        let f = FrequentSet::from_ids(v, [4, 5]);
        let t = Tensor::vector(logits).unwrap();
        let a = sample_focus_vocab(&t, k, &f, seed).unwrap();
        prop_assert_eq!(&a, &sample_focus_vocab(&t, k, &f, seed).unwrap());
        prop_assert!(a.allows(EOS) && a.allows(4) && a.allows(5));
        prop_assert!(a.count() >= k.max(3) && a.count() <= k + 3);
        let top = topk_focus_vocab(&t, k, &f).unwrap();
        prop_assert!(top.count() >= k.max(3) && top.count() <= k + 3);
    }

    #[test]
    fn top_k_keeps_the_k_largest_and_renormalizes(
        raw in prop::collection::vec(0.001f64..1.0, 2..20),
        k in 1usize..25,
    ) {
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let out = truncate_top_k(&probs, k);
        let kept: Vec<usize> = (0..probs.len()).filter(|&i| out[i] > 0.0).collect();
        prop_assert_eq!(kept.len(), k.min(probs.len()));
        prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let min_kept = kept.iter().map(|&i| probs[i]).fold(f64::INFINITY, f64::min);
        for i in (0..probs.len()).filter(|i| !kept.contains(i)) {
            prop_assert!(probs[i] <= min_kept);
        }
    }

    #[test]
    fn nucleus_keeps_the_smallest_prefix_reaching_p(
        raw in prop::collection::vec(0.001f64..1.0, 2..20),
        p in 0.05f64..1.0,
    ) {
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let out = truncate_nucleus(&probs, p);
        let kept: Vec<usize> = (0..probs.len()).filter(|&i| out[i] > 0.0).collect();
        let mass: f64 = kept.iter().map(|&i| probs[i]).sum();
        prop_assert!(mass >= p - 1e-12 || kept.len() == probs.len());
        let smallest = kept.iter().map(|&i| probs[i]).fold(f64::INFINITY, f64::min);
        prop_assert!(mass - smallest < p, "a smaller prefix would do");
    }

    #[test]
    fn draws_never_hit_zero_mass(
        raw in prop::collection::vec(0.0f64..1.0, 2..12),
        seed in any::<u64>(),
    ) {
        let mut dist = raw.clone();
        dist[0] += 0.01;
        dist.iter_mut().skip(1).step_by(2).for_each(|p| *p = 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            prop_assert!(dist[draw(&dist, &mut rng)] > 0.0);
        }
    }
}
