//! Truncation of next-token distributions and seeded categorical draws.

use rand::Rng;

/// Token ids ordered by decreasing probability, ties to the lower id.
fn ranked(probs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    order
}

fn renormalized(probs: &[f64], keep: &[usize]) -> Vec<f64> {
    let mass: f64 = keep.iter().map(|&i| probs[i]).sum();
    let mut out = vec![0.0; probs.len()];
    if mass > 0.0 {
        for &i in keep {
            out[i] = probs[i] / mass;
        }
    }
    out
}

/// Keeps the `k` most probable tokens and renormalizes.
pub fn truncate_top_k(probs: &[f64], k: usize) -> Vec<f64> {
    let order = ranked(probs);
    renormalized(probs, &order[..k.min(order.len())])
}

/// Keeps the smallest probability-sorted prefix with mass at least `p` and
/// renormalizes.
pub fn truncate_nucleus(probs: &[f64], p: f64) -> Vec<f64> {
    let order = ranked(probs);
    let mut mass = 0.0;
    let mut cut = order.len();
    for (rank, &i) in order.iter().enumerate() {
        mass += probs[i];
        if mass >= p {
            cut = rank + 1;
            break;
        }
    }
    renormalized(probs, &order[..cut])
}

/// Inverse-CDF draw over `dist` (need not be normalized). Zero-mass
/// entries are never returned.
pub fn draw<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
    let total: f64 = dist.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Index of the largest entry, ties to the lower index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nucleus_example() {
        let d = truncate_nucleus(&[0.5, 0.3, 0.2], 0.7);
        assert!((d[0] - 0.625).abs() < 1e-12 && (d[1] - 0.375).abs() < 1e-12);
        assert_eq!(d[2], 0.0);
    }

    #[test]
    fn nucleus_limits() {
        let probs = [0.1, 0.6, 0.3];
        assert_eq!(truncate_nucleus(&probs, 0.05), vec![0.0, 1.0, 0.0]);
        let full = truncate_nucleus(&probs, 1.0);
        for (a, b) in full.iter().zip(probs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn top_k_ties_prefer_lower_id() {
        assert_eq!(truncate_top_k(&[0.25, 0.25, 0.5], 2), vec![0.5 / 0.75 * 0.5, 0.0, 0.5 / 0.75]);
        assert_eq!(truncate_top_k(&[0.3, 0.3, 0.4], 1), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn draw_skips_zero_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_ne!(draw(&[0.5, 0.0, 0.5], &mut rng), 1);
        }
    }

    #[test]
    fn argmax_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[f64::NEG_INFINITY, -2.0]), 1);
    }
}
