//! Brute-force CTC oracles over a small alphabet (3 labels + blank).

use std::collections::BTreeSet;

use deepsc_core::ctc::{brute_force_posterior, collapse, ctc_log_posterior};
use deepsc_core::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const MINI_WIDTH: usize = 4;

/// Row-stochastic `steps × width` matrix from softmaxed random logits.
pub fn random_stochastic(steps: usize, width: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let mut data = Vec::with_capacity(steps * width);
    for _ in 0..steps {
        let logits: Vec<f64> = (0..width).map(|_| rng.random_range(-2.0..2.0)).collect();
        let max = logits.iter().copied().fold(f64::MIN, f64::max);
        let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        data.extend(exps.iter().map(|e| e / total));
    }
    Tensor::new(vec![steps, width], data).unwrap()
}

/// All label sequences of length ≤ `max_len` over `labels` symbols.
pub fn all_targets(labels: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for t in &frontier {
            for k in 0..labels {
                let mut e: Vec<usize> = t.clone();
                e.push(k);
                next.push(e);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Largest relative gap between the forward recursion and the alignment
/// sum for every target of length ≤ 3 and every `L` in 1..=8. Returns
/// (max relative error, number of (target, L) pairs checked).
pub fn oracle_equivalence(rng: &mut ChaCha8Rng) -> (f64, usize) {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for steps in 1..=8 {
        let probs = random_stochastic(steps, MINI_WIDTH, rng);
        for target in all_targets(MINI_WIDTH - 1, 3) {
            let brute = brute_force_posterior(&probs, &target);
            let fast = ctc_log_posterior(&probs, &target).exp();
            let err = if brute == 0.0 {
                if fast == 0.0 { 0.0 } else { f64::INFINITY }
            } else {
                (fast - brute).abs() / brute
            };
            worst = worst.max(err);
            cases += 1;
        }
    }
    (worst, cases)
}

/// |Σ_t p(t | P̂) − 1| summed over every collapse class of length-`steps` paths.
pub fn partition_deviation(probs: &Tensor) -> f64 {
    let (steps, width) = (probs.shape()[0], probs.shape()[1]);
    let mut classes = BTreeSet::new();
    let mut path = vec![0usize; steps];
    for code in 0..width.pow(steps as u32) {
        let mut c = code;
        for slot in path.iter_mut().rev() {
            *slot = c % width;
            c /= width;
        }
        classes.insert(collapse(&path, width - 1));
    }
    let total: f64 = classes
        .iter()
        .map(|t| ctc_log_posterior(probs, t).exp())
        .sum();
    (total - 1.0).abs()
}
