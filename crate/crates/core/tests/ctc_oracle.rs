mod common;

use common::ctc_checks::{oracle_equivalence, partition_deviation, random_stochastic, MINI_WIDTH};
use common::rng;
use deepsc_core::ctc::{
    collapse, ctc_loss, ctc_loss_log, greedy_decode, tokenize, Transcript, ALPHABET_SIZE, BLANK,
};
use deepsc_core::tensor::Tensor;
use proptest::prelude::*;

#[test]
fn forward_recursion_matches_alignment_sum() {
    let (err, cases) = oracle_equivalence(&mut rng(5));
    assert_eq!(cases, 8 * 40);
    assert!(err <= 1e-10, "max relative error {err:.3e}");
}

#[test]
fn posteriors_partition_unity() {
    let mut r = rng(6);
    for steps in 1..=6 {
        let probs = random_stochastic(steps, MINI_WIDTH, &mut r);
        let dev = partition_deviation(&probs);
        assert!(dev <= 1e-9, "L={steps}: deviation {dev:.3e}");
    }
    // Full alphabet, short sequences.
    let probs = random_stochastic(2, ALPHABET_SIZE, &mut r);
    assert!(partition_deviation(&probs) <= 1e-9);
}

fn loss_at(probs: &Tensor, target: &[usize]) -> f64 {
    ctc_loss(probs, target).loss
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let mut r = rng(7);
    let probs = random_stochastic(5, ALPHABET_SIZE, &mut r);
    let target = tokenize("cab").unwrap();
    let analytic = ctc_loss(&probs, target.tokens()).grad;
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..probs.len() {
        let mut up = probs.clone();
        up.data_mut()[i] += h;
        let mut down = probs.clone();
        down.data_mut()[i] -= h;
        let fd = (loss_at(&up, target.tokens()) - loss_at(&down, target.tokens())) / (2.0 * h);
        let a = analytic.data()[i];
        let e = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
        worst = worst.max(e);
    }
    assert!(worst <= 1e-5, "max relative error {worst:.3e}");
}

#[test]
fn softmax_composed_gradient_rows_sum_to_zero() {
    let mut r = rng(8);
    let probs = random_stochastic(6, ALPHABET_SIZE, &mut r);
    let target = tokenize("ab").unwrap();
    let g = ctc_loss(&probs, target.tokens()).grad;
    for l in 0..6 {
        let y = probs.row(l);
        let gr = g.row(l);
        let dot: f64 = gr.iter().zip(y).map(|(g, y)| g * y).sum();
        let row_sum: f64 = gr.iter().zip(y).map(|(g, y)| y * (g - dot)).sum();
        assert!(row_sum.abs() <= 1e-9, "step {l}: {row_sum:e}");
        // Occupancies -g ⊙ y form a distribution over tokens at every step.
        assert!((dot + 1.0).abs() <= 1e-9, "step {l}: occupancy mass {}", -dot);
    }
}

#[test]
fn log_domain_loss_agrees_with_probability_domain() {
    let mut r = rng(10);
    let probs = random_stochastic(7, ALPHABET_SIZE, &mut r);
    let logs = Tensor::new(probs.shape().to_vec(), probs.data().iter().map(|p| p.ln()).collect()).unwrap();
    let target = tokenize("abba").unwrap();
    let a = ctc_loss(&probs, target.tokens());
    let b = ctc_loss_log(&logs, target.tokens());
    assert!((a.loss - b.loss).abs() <= 1e-12 * a.loss);
    // d/d ln p = p · d/dp
    for ((ga, gb), p) in a.grad.data().iter().zip(b.grad.data()).zip(probs.data()) {
        assert!((ga * p - gb).abs() <= 1e-12, "{} vs {gb}", ga * p);
    }
}

#[test]
fn log_domain_loss_survives_underflow() {
    // Row 0 puts e^-800 on the only token that can start the target.
    let mut logs = vec![-(ALPHABET_SIZE as f64).ln(); 3 * ALPHABET_SIZE];
    let a = tokenize("a").unwrap().tokens()[0];
    logs[a] = -800.0;
    logs[BLANK] = -800.0;
    let logs = Tensor::new(vec![3, ALPHABET_SIZE], logs).unwrap();
    let probs = Tensor::new(logs.shape().to_vec(), logs.data().iter().map(|v| v.exp()).collect()).unwrap();
    assert!(!ctc_loss(&probs, &[a, a]).alignable);
    let got = ctc_loss_log(&logs, &[a, a]);
    assert!(got.alignable && got.loss.is_finite() && got.loss > 800.0);
    assert!(got.grad.is_finite());
    for l in 0..3 {
        let mass: f64 = got.grad.row(l).iter().sum();
        assert!((mass + 1.0).abs() <= 1e-9, "step {l}: {mass}");
    }
}

#[test]
fn loss_ignores_permutations_of_absent_tokens() {
    let mut r = rng(9);
    let probs = random_stochastic(5, ALPHABET_SIZE, &mut r);
    let target = tokenize("ba").unwrap();
    let base = ctc_loss(&probs, target.tokens()).loss;
    // Swap the columns of two tokens that are not in the target.
    let (x, y) = (5, 17);
    let mut swapped = probs.clone();
    for l in 0..5 {
        swapped.data_mut().swap(l * ALPHABET_SIZE + x, l * ALPHABET_SIZE + y);
    }
    let moved = ctc_loss(&swapped, target.tokens()).loss;
    assert!((base - moved).abs() < 1e-12);
    let brute = -deepsc_core::ctc::brute_force_posterior(&swapped, target.tokens()).ln();
    assert!((brute - moved).abs() < 1e-10);
}

proptest! {
    #[test]
    fn greedy_output_is_blank_free_and_collapse_idempotent(path in prop::collection::vec(0usize..ALPHABET_SIZE, 0..40)) {
        let mut data = vec![0.0; path.len() * ALPHABET_SIZE];
        for (l, &k) in path.iter().enumerate() {
            data[l * ALPHABET_SIZE + k] = 1.0;
        }
        let probs = Tensor::new(vec![path.len(), ALPHABET_SIZE], data).unwrap();
        let decoded = greedy_decode(&probs);
        prop_assert!(!decoded.tokens().contains(&BLANK));
        prop_assert_eq!(decoded.tokens().to_vec(), collapse(&path, BLANK));
    }

    #[test]
    fn tokenize_round_trips(text in "[a-z' ]{0,30}") {
        let t = tokenize(&text).unwrap();
        prop_assert_eq!(t.text(), text.clone());
        prop_assert_eq!(Transcript::from_tokens(t.tokens().iter().copied()), t);
    }
}
