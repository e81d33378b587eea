//! Deterministic synthetic speech: every character is a fixed two-tone
//! burst, words are separated by silence.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use super::manifest::{Manifest, Record};
use super::{io_error, Result};
use crate::channel::rng_stream;
use crate::ctc::{TokenAlphabet, APOSTROPHE, SPACE};
use crate::dsp::{write_wav, SAMPLE_RATE_HZ};

const TONE_MS: usize = 60;
const GAP_MS: usize = 20;
const LEAD_MS: usize = 40;
const NOISE_SD: f64 = 0.003;

pub const MANIFEST_NAME: &str = "manifest.tsv";

fn samples(ms: usize) -> usize {
    SAMPLE_RATE_HZ as usize * ms / 1000
}

/// Low and high tone of a token: 7 low × 4 high frequencies cover the
/// 26 letters and the apostrophe.
pub fn tone_pair(token: usize) -> (f64, f64) {
    let low = 400.0 + 150.0 * (token % 7) as f64;
    let high = 1800.0 + 500.0 * (token / 7) as f64;
    (low, high)
}

/// Renders text (already validated) to samples.
pub fn render<R: Rng + ?Sized>(tokens: &[usize], rng: &mut R) -> Vec<f64> {
    let (tone, gap, lead) = (samples(TONE_MS), samples(GAP_MS), samples(LEAD_MS));
    let mut out = vec![0.0; lead];
    let sr = f64::from(SAMPLE_RATE_HZ);
    for &t in tokens {
        if t == SPACE {
            out.extend(std::iter::repeat_n(0.0, tone + gap));
            continue;
        }
        let (f1, f2) = tone_pair(t);
        let gain = rng.random_range(0.8..1.2);
        for n in 0..tone {
            // Short raised-cosine ramps keep the bursts from clicking.
            let edge = (n.min(tone - 1 - n) as f64 / 40.0).min(1.0);
            let env = 0.5 - 0.5 * (PI * edge).cos();
            let x = n as f64 / sr;
            out.push(gain * env * 0.25 * ((2.0 * PI * f1 * x).sin() + (2.0 * PI * f2 * x).sin()));
        }
        out.extend(std::iter::repeat_n(0.0, gap));
    }
    out.extend(std::iter::repeat_n(0.0, lead));
    for v in &mut out {
        let n: f64 = rng.sample(StandardNormal);
        *v += NOISE_SD * n;
    }
    out
}

/// Two or three short words of random letters, with an occasional apostrophe.
pub fn random_text<R: Rng + ?Sized>(rng: &mut R) -> String {
    let alphabet = TokenAlphabet;
    let words = rng.random_range(2..=3);
    let mut tokens = Vec::new();
    for w in 0..words {
        if w > 0 {
            tokens.push(SPACE);
        }
        let len = rng.random_range(2..=4);
        for i in 0..len {
            if i == len - 1 && len > 2 && rng.random_bool(0.1) {
                tokens.push(APOSTROPHE);
            } else {
                tokens.push(rng.random_range(0..26));
            }
        }
    }
    tokens.iter().map(|&t| alphabet.symbol(t).expect("in range")).collect()
}

/// Writes `count` WAVs and a manifest into `dir`. Same seed, same bytes.
pub fn synth_corpus(seed: u64, count: usize, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut text_rng = rng_stream(seed, 0);
    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let text = random_text(&mut text_rng);
        let tokens = crate::ctc::tokenize(&text).expect("generated from the alphabet");
        let audio = render(tokens.tokens(), &mut rng_stream(seed, 1 + i as u64));
        let path = dir.join(format!("utt{i:04}.wav"));
        write_wav(&path, &audio)?;
        records.push(Record {
            wav_path: path,
            transcript: text,
        });
    }
    let manifest = Manifest { records };
    let mpath = dir.join(MANIFEST_NAME);
    fs::write(&mpath, manifest.to_tsv(dir)).map_err(|e| io_error(&mpath, e))?;
    Ok(manifest)
}
