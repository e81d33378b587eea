//! Monte-Carlo helpers for the polar decoders.

use deepsc_core::channel::rng_stream;
use deepsc_core::classic::PolarCode;
use rand::Rng;
use rand_distr::StandardNormal;

/// Random message, its codeword, and per-bit LLRs as seen through unit-energy
/// QPSK at `snr_db` (Es/N0).
pub fn noisy_block<R: Rng>(code: &PolarCode, snr_db: f64, rng: &mut R) -> (Vec<u8>, Vec<f64>) {
    let info: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2u8)).collect();
    let x = code.encode(&info).unwrap();
    let sigma2 = 10f64.powf(-snr_db / 10.0);
    let amp = std::f64::consts::FRAC_1_SQRT_2;
    let sd = (sigma2 / 2.0).sqrt();
    let llrs = x
        .iter()
        .map(|&b| {
            let n: f64 = rng.sample(StandardNormal);
            let y = amp * (1.0 - 2.0 * f64::from(b)) + sd * n;
            2.0 * amp * y / (sigma2 / 2.0)
        })
        .collect();
    (info, llrs)
}

/// Number of blocks where list-1 SCL and SC disagree.
pub fn sc_mismatches(blocks: usize, snr_db: f64, seed: u64) -> usize {
    let sc = PolarCode::standard().with_list(1).unwrap();
    let mut rng = rng_stream(seed, 0);
    (0..blocks)
        .filter(|_| {
            let (_, llrs) = noisy_block(&sc, snr_db, &mut rng);
            sc.sc_decode(&llrs).unwrap() != sc.scl_decode(&llrs).unwrap()
        })
        .count()
}

/// Block errors of SC and of list-`list` SCL on the same noisy blocks.
pub fn block_errors(blocks: usize, list: usize, snr_db: f64, seed: u64) -> (usize, usize) {
    let code = PolarCode::standard().with_list(list).unwrap();
    let mut rng = rng_stream(seed, 0);
    let (mut sc, mut scl) = (0, 0);
    for _ in 0..blocks {
        let (info, llrs) = noisy_block(&code, snr_db, &mut rng);
        sc += usize::from(code.sc_decode(&llrs).unwrap() != info);
        scl += usize::from(code.scl_decode(&llrs).unwrap() != info);
    }
    (sc, scl)
}
