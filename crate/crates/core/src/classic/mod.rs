//! Classical text transceiver: Huffman source code, polar channel code with
//! list decoding, and 64-QAM. Transcripts are assumed to be recognized
//! perfectly before transmission.

pub mod huffman;
pub mod polar;
pub mod qam;

use rand::Rng;

use crate::channel::{equalize, ChannelKind, Realization};
pub use huffman::{huffman_build, huffman_decode, huffman_encode, HuffmanCodebook, HuffmanError};
pub use polar::{frozen_set_construct, polar_transform, PolarCode, PolarError};
pub use qam::{qam64_demodulate, qam64_modulate, BITS_PER_SYMBOL};

#[derive(Debug, thiserror::Error)]
pub enum ClassicError {
    #[error(transparent)]
    Huffman(#[from] HuffmanError),
    #[error(transparent)]
    Polar(#[from] PolarError),
}

/// Outcome of one transmission. `truncated` marks a lost end-of-text marker;
/// `text` is then the best-effort prefix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Received {
    pub text: String,
    pub truncated: bool,
}

/// Source and channel codes shared by every transmission.
#[derive(Clone, Debug)]
pub struct TextTransceiver {
    pub codebook: HuffmanCodebook,
    pub code: PolarCode,
}

impl TextTransceiver {
    pub fn new(codebook: HuffmanCodebook, code: PolarCode) -> Self {
        TextTransceiver { codebook, code }
    }

    /// Codebook from `corpus` with the standard polar code.
    pub fn from_corpus<S: AsRef<str>>(corpus: &[S]) -> Result<Self, ClassicError> {
        Ok(TextTransceiver::new(huffman_build(corpus)?, PolarCode::standard()))
    }

    /// Huffman → K-bit blocks → polar → 64-QAM → channel (+ equalization) →
    /// soft demodulation → list decoding → Huffman.
    pub fn run<R: Rng + ?Sized>(
        &self,
        text: &str,
        kind: ChannelKind,
        snr_db: f64,
        rng: &mut R,
    ) -> Result<Received, ClassicError> {
        let (k, n) = (self.code.k(), self.code.n());
        let mut source = huffman_encode(text, &self.codebook)?;
        let blocks = source.len().div_ceil(k);
        source.resize(blocks * k, 0);

        let mut coded = Vec::with_capacity(blocks * n);
        for block in source.chunks(k) {
            coded.extend(self.code.encode(block)?);
        }
        let symbols = qam64_modulate(&coded);
        let channel = Realization::draw(kind, snr_db, symbols.len(), rng);
        let received = channel.apply(&symbols);
        let equalized = equalize(&received, channel.gain).expect("fades are redrawn above the floor");
        let effective_var = channel.noise_variance / channel.gain.norm_sqr();
        let llrs = qam64_demodulate(&equalized, effective_var);

        let mut bits = Vec::with_capacity(blocks * k);
        for block in llrs[..coded.len()].chunks(n) {
            bits.extend(self.code.scl_decode(block)?);
        }
        Ok(match huffman_decode(&bits, &self.codebook) {
            Ok(text) => Received {
                text,
                truncated: false,
            },
            Err(HuffmanError::Truncated { prefix }) => Received {
                text: prefix,
                truncated: true,
            },
            Err(e) => return Err(e.into()),
        })
    }
}

/// One-shot convenience over [`TextTransceiver::run`].
pub fn text_transceiver_run<R: Rng + ?Sized>(
    transceiver: &TextTransceiver,
    text: &str,
    kind: ChannelKind,
    snr_db: f64,
    rng: &mut R,
) -> Result<Received, ClassicError> {
    transceiver.run(text, kind, snr_db, rng)
}
