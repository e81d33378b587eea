//! Test-only oracles shared by the integration suites.

#![allow(dead_code)]

pub mod ctc_checks;
pub mod e2e;
pub mod gradcheck;
pub mod polar_checks;

use deepsc_core::tensor::{Gradients, ParameterSet, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Central finite differences of `loss` for every scalar of every parameter.
pub fn finite_difference<F>(params: &ParameterSet, step: f64, mut loss: F) -> Vec<(String, Vec<f64>)>
where
    F: FnMut(&ParameterSet) -> f64,
{
    let mut out = Vec::new();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let n = params.get(&name).unwrap().len();
        let mut g = Vec::with_capacity(n);
        for i in 0..n {
            g.push(central(params, &name, i, step, &mut loss));
        }
        out.push((name, g));
    }
    out
}

pub fn central<F>(params: &ParameterSet, name: &str, i: usize, step: f64, loss: &mut F) -> f64
where
    F: FnMut(&ParameterSet) -> f64,
{
    let mut p = params.clone();
    let base = p.get(name).unwrap().data()[i];
    p.get_mut(name).unwrap().data_mut()[i] = base + step;
    let up = loss(&p);
    p.get_mut(name).unwrap().data_mut()[i] = base - step;
    let down = loss(&p);
    (up - down) / (2.0 * step)
}

/// Relative error with a small absolute floor in the denominator.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Largest relative error between analytic gradients and a finite-difference table.
pub fn max_rel_err(analytic: &Gradients, numeric: &[(String, Vec<f64>)]) -> f64 {
    let mut worst: f64 = 0.0;
    for (name, fd) in numeric {
        let a = analytic.get(name).unwrap().data();
        for (x, y) in a.iter().zip(fd) {
            worst = worst.max(rel_err(*x, *y));
        }
    }
    worst
}

/// Plain two-row Levenshtein distance, independent of the library's backtrace.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Random text over a few letters and spaces (small alphabet forces collisions).
pub fn random_text(rng: &mut ChaCha8Rng, max_len: usize) -> String {
    const CHARS: &[u8] = b"abc' d";
    let len = rng.random_range(0..=max_len);
    (0..len)
        .map(|_| CHARS[rng.random_range(0..CHARS.len())] as char)
        .collect()
}

const WORDS: &[&str] = &[
    "the", "a", "signal", "noise", "channel", "we", "can't", "speech", "text", "over", "wireless",
    "link", "model", "is", "robust", "low", "high", "power", "it's", "semantic", "and", "of",
    "quick", "brown", "fox", "jumps", "lazy", "dog", "zero", "view",
];

/// A sentence of 3 to 10 words from a fixed vocabulary.
pub fn random_sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(3..=10);
    (0..n)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}
