//! AWGN and flat Rayleigh fading channels, `y = h·x + w`.
//!
//! SNR is measured against unit transmit power. An SNR of `+inf` switches
//! the noise off. All randomness comes from the generator passed in.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Fades with `|h|` below this are redrawn.
pub const DEEP_FADE_FLOOR: f64 = 1e-6;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ChannelError {
    #[error("unknown channel kind `{0}` (expected awgn or rayleigh)")]
    UnknownKind(String),
    #[error("channel gain |h| = {0:e} is below the equalization floor")]
    DeepFade(f64),
    #[error("SNR must be finite or +inf, got {0}")]
    InvalidSnr(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Awgn,
    Rayleigh,
}

impl ChannelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Rayleigh => "rayleigh",
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChannelKind {
    type Err = ChannelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "awgn" => Ok(ChannelKind::Awgn),
            "rayleigh" => Ok(ChannelKind::Rayleigh),
            other => Err(ChannelError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    /// `f64::INFINITY` disables noise.
    pub snr_db: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ChannelSpec {
    pub fn new(kind: ChannelKind, snr_db: f64, seed: u64) -> Result<Self, ChannelError> {
        if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
            return Err(ChannelError::InvalidSnr(snr_db));
        }
        Ok(ChannelSpec { kind, snr_db, seed })
    }

    pub fn noiseless(kind: ChannelKind) -> Self {
        ChannelSpec {
            kind,
            snr_db: f64::INFINITY,
            seed: 0,
        }
    }
}

/// Generator for an independent stream under a shared seed.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `σ² = P · 10^(−SNR/10)`; zero for `+inf`.
pub fn snr_to_noise_variance(snr_db: f64, signal_power: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        signal_power * 10f64.powf(-snr_db / 10.0)
    }
}

/// Circular complex Gaussian with total variance `variance` (half per component).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let sd = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(sd * re, sd * im)
}

/// One draw of the channel for an utterance: the gain and the noise.
#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    pub gain: Complex64,
    pub noise: Vec<Complex64>,
    pub noise_variance: f64,
}

impl Realization {
    /// Draws `h` (Rayleigh only, once per call) and then `symbols` noise samples.
    pub fn draw<R: Rng + ?Sized>(
        kind: ChannelKind,
        snr_db: f64,
        symbols: usize,
        rng: &mut R,
    ) -> Self {
        let gain = match kind {
            ChannelKind::Awgn => Complex64::new(1.0, 0.0),
            ChannelKind::Rayleigh => draw_fade(rng),
        };
        let noise_variance = snr_to_noise_variance(snr_db, 1.0);
        let noise = if noise_variance == 0.0 {
            vec![Complex64::new(0.0, 0.0); symbols]
        } else {
            (0..symbols)
                .map(|_| complex_gaussian(rng, noise_variance))
                .collect()
        };
        Realization {
            gain,
            noise,
            noise_variance,
        }
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.noise.len(), "noise drawn for a different length");
        x.iter()
            .zip(&self.noise)
            .map(|(x, w)| self.gain * x + w)
            .collect()
    }
}

/// `h ~ CN(0, 1)`, redrawn while `|h|` is below [`DEEP_FADE_FLOOR`].
pub fn draw_fade<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    loop {
        let h = complex_gaussian(rng, 1.0);
        if h.norm() >= DEEP_FADE_FLOOR {
            return h;
        }
    }
}

pub fn awgn_transmit<R: Rng + ?Sized>(x: &[Complex64], snr_db: f64, rng: &mut R) -> Vec<Complex64> {
    if snr_db == f64::INFINITY {
        return x.to_vec();
    }
    Realization::draw(ChannelKind::Awgn, snr_db, x.len(), rng).apply(x)
}

/// Flat fading: one gain for the whole sequence. Returns `(y, h)`.
pub fn rayleigh_transmit<R: Rng + ?Sized>(
    x: &[Complex64],
    snr_db: f64,
    rng: &mut R,
) -> (Vec<Complex64>, Complex64) {
    let r = Realization::draw(ChannelKind::Rayleigh, snr_db, x.len(), rng);
    (r.apply(x), r.gain)
}

/// Zero-forcing with perfect CSI: `x̂ = y / h`.
pub fn equalize(y: &[Complex64], h: Complex64) -> Result<Vec<Complex64>, ChannelError> {
    if h.norm() < DEEP_FADE_FLOOR {
        return Err(ChannelError::DeepFade(h.norm()));
    }
    Ok(y.iter().map(|y| y / h).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symbols() -> Vec<Complex64> {
        vec![
            Complex64::new(0.3, -1.1),
            Complex64::new(-0.7, 0.2),
            Complex64::new(1.0, 0.0),
        ]
    }

    #[test]
    fn noise_variance_from_snr() {
        assert_eq!(snr_to_noise_variance(0.0, 1.0), 1.0);
        assert!((snr_to_noise_variance(10.0, 1.0) - 0.1).abs() < 1e-15);
        assert_eq!(snr_to_noise_variance(f64::INFINITY, 1.0), 0.0);
    }

    #[test]
    fn noise_off_is_identity() {
        let x = symbols();
        let mut rng = rng_stream(1, 0);
        assert_eq!(awgn_transmit(&x, f64::INFINITY, &mut rng), x);
        let (y, h) = rayleigh_transmit(&x, f64::INFINITY, &mut rng);
        for (a, b) in equalize(&y, h).unwrap().iter().zip(&x) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_output() {
        let x = symbols();
        let a = awgn_transmit(&x, 3.0, &mut rng_stream(9, 4));
        let b = awgn_transmit(&x, 3.0, &mut rng_stream(9, 4));
        let c = awgn_transmit(&x, 3.0, &mut rng_stream(9, 5));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn equalize_examples() {
        let x = symbols();
        assert_eq!(equalize(&x, Complex64::new(1.0, 0.0)).unwrap(), x);
        let h = Complex64::new(0.0, 2.0);
        let y: Vec<_> = x.iter().map(|x| h * x).collect();
        for (a, b) in equalize(&y, h).unwrap().iter().zip(&x) {
            assert!((a - b).norm() < 1e-15);
        }
        assert!(matches!(
            equalize(&x, Complex64::new(1e-9, 0.0)),
            Err(ChannelError::DeepFade(_))
        ));
    }

    #[test]
    fn fades_are_never_below_floor() {
        let mut rng = rng_stream(2, 0);
        assert!((0..10_000).all(|_| draw_fade(&mut rng).norm() >= DEEP_FADE_FLOOR));
    }

    #[test]
    fn kinds_parse() {
        assert_eq!("AWGN".parse::<ChannelKind>().unwrap(), ChannelKind::Awgn);
        assert_eq!(" rayleigh".parse::<ChannelKind>().unwrap(), ChannelKind::Rayleigh);
        assert!("rician".parse::<ChannelKind>().is_err());
        assert!(ChannelSpec::new(ChannelKind::Awgn, f64::NAN, 0).is_err());
    }
}
