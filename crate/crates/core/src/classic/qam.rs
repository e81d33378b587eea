//! Gray-mapped square 64-QAM with max-log soft demodulation.

use num_complex::Complex64;

pub const BITS_PER_SYMBOL: usize = 6;
/// Floor on the noise variance so noiseless LLRs stay finite.
const MIN_NOISE_VARIANCE: f64 = 1e-12;

fn scale() -> f64 {
    1.0 / 42f64.sqrt()
}

/// Amplitude for a 3-bit Gray label: level index `i` has label `i ^ (i >> 1)`.
fn level(label: usize) -> f64 {
    let mut i = label;
    let mut shift = label >> 1;
    while shift > 0 {
        i ^= shift;
        shift >>= 1;
    }
    (2 * i) as f64 - 7.0
}

fn label(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | usize::from(b & 1))
}

/// Every constellation point, indexed by its 6-bit label.
pub fn constellation() -> Vec<Complex64> {
    (0..64)
        .map(|l| Complex64::new(level(l >> 3), level(l & 7)) * scale())
        .collect()
}

/// Maps bits (zero-padded to a multiple of 6) to symbols; the first three
/// bits of each group pick the in-phase level.
pub fn qam64_modulate(bits: &[u8]) -> Vec<Complex64> {
    bits.chunks(BITS_PER_SYMBOL)
        .map(|chunk| {
            let mut group = [0u8; BITS_PER_SYMBOL];
            group[..chunk.len()].copy_from_slice(chunk);
            Complex64::new(level(label(&group[..3])), level(label(&group[3..]))) * scale()
        })
        .collect()
}

/// LLRs `ln P(0)/P(1)` for 3 bits of one axis; `noise_var` is the complex variance.
fn axis_llrs(y: f64, noise_var: f64, out: &mut Vec<f64>) {
    let mut best = [[f64::INFINITY; 2]; 3];
    for l in 0..8 {
        let d = (y - level(l) * scale()).powi(2);
        for (b, slot) in best.iter_mut().enumerate() {
            let bit = (l >> (2 - b)) & 1;
            slot[bit] = slot[bit].min(d);
        }
    }
    for slot in best {
        out.push((slot[1] - slot[0]) / noise_var);
    }
}

/// Max-log per-bit LLRs, six per symbol, given the complex noise variance.
pub fn qam64_demodulate(symbols: &[Complex64], noise_var: f64) -> Vec<f64> {
    let var = noise_var.max(MIN_NOISE_VARIANCE);
    let mut out = Vec::with_capacity(symbols.len() * BITS_PER_SYMBOL);
    for y in symbols {
        axis_llrs(y.re, var, &mut out);
        axis_llrs(y.im, var, &mut out);
    }
    out
}
