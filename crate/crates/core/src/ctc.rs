//! Token alphabet, CTC posterior and loss, and greedy decoding.
//!
//! Token indices are zero-based: `a..z` are 0–25, apostrophe 26, space 27
//! and blank 28 (the 29th token). The numeric routines accept any row width
//! `W` and treat index `W - 1` as blank, which lets tests run them on small
//! alphabets.

use std::fmt;

use crate::tensor::Tensor;

pub const ALPHABET_SIZE: usize = 29;
pub const APOSTROPHE: usize = 26;
pub const SPACE: usize = 27;
pub const BLANK: usize = 28;

/// Loss reported for a target that no alignment of the available length can produce.
pub const UNALIGNABLE_LOSS: f64 = 1e4;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CtcError {
    #[error("unsupported character {ch:?} at position {position}")]
    Unsupported { ch: char, position: usize },
}

/// The 29-token character alphabet.
#[derive(Clone, Copy, Debug, Default)]
pub struct TokenAlphabet;

impl TokenAlphabet {
    pub const fn size(&self) -> usize {
        ALPHABET_SIZE
    }

    pub const fn blank(&self) -> usize {
        BLANK
    }

    /// Index of a (case-folded) character, or `None` if unsupported.
    pub fn index(&self, ch: char) -> Option<usize> {
        match ch.to_ascii_lowercase() {
            c @ 'a'..='z' => Some(c as usize - 'a' as usize),
            '\'' => Some(APOSTROPHE),
            ' ' => Some(SPACE),
            _ => None,
        }
    }

    /// Character of a non-blank index.
    pub fn symbol(&self, index: usize) -> Option<char> {
        match index {
            0..=25 => Some((b'a' + index as u8) as char),
            APOSTROPHE => Some('\''),
            SPACE => Some(' '),
            _ => None,
        }
    }
}

/// A blank-free token sequence.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Transcript(Vec<usize>);

impl Transcript {
    /// Builds a transcript from raw indices; blanks and out-of-range indices are dropped.
    pub fn from_tokens(tokens: impl IntoIterator<Item = usize>) -> Self {
        Transcript(tokens.into_iter().filter(|&t| t < BLANK).collect())
    }

    pub fn tokens(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn text(&self) -> String {
        detokenize(self)
    }
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

pub fn tokenize(text: &str) -> Result<Transcript, CtcError> {
    let alphabet = TokenAlphabet;
    text.chars()
        .enumerate()
        .map(|(position, ch)| {
            alphabet
                .index(ch)
                .ok_or(CtcError::Unsupported { ch, position })
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Transcript)
}

pub fn detokenize(t: &Transcript) -> String {
    let alphabet = TokenAlphabet;
    t.0.iter().filter_map(|&i| alphabet.symbol(i)).collect()
}

/// Merges consecutive repeats, then removes blanks.
pub fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &tok in path {
        if Some(tok) != prev && tok != blank {
            out.push(tok);
        }
        prev = Some(tok);
    }
    out
}

/// Shortest alignment length for `target`: one step per token plus a blank
/// between each pair of equal neighbours.
pub fn min_alignment_len(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Every length-`len` path over `target`'s tokens and `blank` that collapses
/// to `target`. Exponential in `len`; intended as a test oracle.
pub fn enumerate_alignments(target: &[usize], len: usize, blank: usize) -> Vec<Vec<usize>> {
    let mut symbols: Vec<usize> = target.to_vec();
    symbols.push(blank);
    symbols.sort_unstable();
    symbols.dedup();
    let base = symbols.len();
    let total = base.checked_pow(len as u32).expect("enumeration too large");
    let mut out = Vec::new();
    let mut path = vec![0usize; len];
    for code in 0..total {
        let mut c = code;
        for slot in path.iter_mut().rev() {
            *slot = symbols[c % base];
            c /= base;
        }
        if collapse(&path, blank) == target {
            out.push(path.clone());
        }
    }
    out
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

struct Lattice {
    /// Blank-interleaved target, length `2K + 1`.
    ext: Vec<usize>,
    /// log Σ over prefixes ending in state `s` at step `l`, before emitting at `l`.
    incoming: Vec<f64>,
    log_p: f64,
}

fn extend(target: &[usize], blank: usize) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(blank);
    for &t in target {
        ext.push(t);
        ext.push(blank);
    }
    ext
}

fn can_skip(ext: &[usize], s: usize, blank: usize) -> bool {
    s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]
}

fn forward(log_probs: &[f64], steps: usize, width: usize, target: &[usize]) -> Lattice {
    let blank = width - 1;
    let ext = extend(target, blank);
    let states = ext.len();
    let mut incoming = vec![f64::NEG_INFINITY; steps * states];
    let mut alpha = vec![f64::NEG_INFINITY; steps * states];
    if steps == 0 {
        let log_p = if target.is_empty() { 0.0 } else { f64::NEG_INFINITY };
        return Lattice {
            ext,
            incoming,
            log_p,
        };
    }
    incoming[0] = 0.0;
    if states > 1 {
        incoming[1] = 0.0;
    }
    for s in 0..states.min(2) {
        alpha[s] = log_probs[ext[s]];
    }
    for l in 1..steps {
        let cur = l * states;
        let (done, rest) = alpha.split_at_mut(cur);
        let prev = &done[cur - states..];
        for s in 0..states {
            let mut acc = prev[s];
            if s >= 1 {
                acc = log_sum_exp(acc, prev[s - 1]);
            }
            if can_skip(&ext, s, blank) {
                acc = log_sum_exp(acc, prev[s - 2]);
            }
            incoming[cur + s] = acc;
            rest[s] = acc + log_probs[l * width + ext[s]];
        }
    }
    let last = &alpha[(steps - 1) * states..];
    let mut log_p = last[states - 1];
    if states >= 2 {
        log_p = log_sum_exp(log_p, last[states - 2]);
    }
    Lattice {
        ext,
        incoming,
        log_p,
    }
}

fn log_matrix(probs: &Tensor) -> (Vec<f64>, usize, usize) {
    assert_eq!(probs.rank(), 2, "probability matrix must be 2-D");
    let (steps, width) = (probs.shape()[0], probs.shape()[1]);
    assert!(width >= 2, "alphabet needs at least one label and a blank");
    (probs.data().iter().map(|p| p.ln()).collect(), steps, width)
}

/// `ln p(target | P̂)` by the forward recursion; `-inf` if no alignment fits.
///
/// Rows of `probs` are per-step token probabilities with the blank in the
/// last column.
pub fn ctc_log_posterior(probs: &Tensor, target: &[usize]) -> f64 {
    let (log_probs, steps, width) = log_matrix(probs);
    forward(&log_probs, steps, width, target).log_p
}

/// Brute-force `p(target | P̂)`: sum of path products over [`enumerate_alignments`].
pub fn brute_force_posterior(probs: &Tensor, target: &[usize]) -> f64 {
    let blank = probs.shape()[1] - 1;
    enumerate_alignments(target, probs.shape()[0], blank)
        .iter()
        .map(|path| {
            path.iter()
                .enumerate()
                .map(|(l, &k)| probs.row(l)[k])
                .product::<f64>()
        })
        .sum()
}

/// CTC loss `-ln p(target | P̂)` with its gradient w.r.t. every entry of `P̂`.
#[derive(Clone, Debug)]
pub struct CtcLoss {
    pub loss: f64,
    pub grad: Tensor,
    /// False when the target cannot be aligned in `L` steps; the loss is then
    /// [`UNALIGNABLE_LOSS`] and the gradient is zero.
    pub alignable: bool,
}

pub fn ctc_loss(probs: &Tensor, target: &[usize]) -> CtcLoss {
    let (log_probs, steps, width) = log_matrix(probs);
    // ∂p/∂P̂_l(k) = Σ_{s: ext[s]=k} exp(incoming_l(s) + outgoing_l(s)); divide by p for -ln p.
    loss_with(&log_probs, steps, width, target, probs.shape(), |_, _| 0.0)
}

/// CTC loss from log-probabilities, with the gradient w.r.t. `ln P̂`.
///
/// That gradient is minus the state occupancy, which stays finite when the
/// probabilities themselves underflow.
pub fn ctc_loss_log(log_probs: &Tensor, target: &[usize]) -> CtcLoss {
    assert_eq!(log_probs.rank(), 2, "probability matrix must be 2-D");
    let (steps, width) = (log_probs.shape()[0], log_probs.shape()[1]);
    assert!(width >= 2, "alphabet needs at least one label and a blank");
    let lp = log_probs.data();
    loss_with(lp, steps, width, target, log_probs.shape(), |l, k| lp[l * width + k])
}

fn loss_with(
    log_probs: &[f64],
    steps: usize,
    width: usize,
    target: &[usize],
    shape: &[usize],
    emission: impl Fn(usize, usize) -> f64,
) -> CtcLoss {
    let lattice = forward(log_probs, steps, width, target);
    if lattice.log_p == f64::NEG_INFINITY {
        return CtcLoss {
            loss: UNALIGNABLE_LOSS,
            grad: Tensor::zeros(shape),
            alignable: false,
        };
    }
    let blank = width - 1;
    let ext = &lattice.ext;
    let states = ext.len();

    // `outgoing` sums suffixes after step l; `beta = outgoing + emission`.
    let mut outgoing = vec![f64::NEG_INFINITY; steps * states];
    let mut beta = vec![f64::NEG_INFINITY; steps * states];
    let last = (steps - 1) * states;
    for s in states.saturating_sub(2)..states {
        outgoing[last + s] = 0.0;
        beta[last + s] = log_probs[(steps - 1) * width + ext[s]];
    }
    for l in (0..steps - 1).rev() {
        let (cur, next) = (l * states, (l + 1) * states);
        for s in 0..states {
            let mut acc = beta[next + s];
            if s + 1 < states {
                acc = log_sum_exp(acc, beta[next + s + 1]);
            }
            if s + 2 < states && can_skip(ext, s + 2, blank) {
                acc = log_sum_exp(acc, beta[next + s + 2]);
            }
            outgoing[cur + s] = acc;
            beta[cur + s] = acc + log_probs[l * width + ext[s]];
        }
    }

    let mut grad = vec![0.0; steps * width];
    for l in 0..steps {
        for s in 0..states {
            let idx = l * states + s;
            let term = lattice.incoming[idx] + outgoing[idx] + emission(l, ext[s]) - lattice.log_p;
            if term > f64::NEG_INFINITY {
                grad[l * width + ext[s]] -= term.exp();
            }
        }
    }
    CtcLoss {
        loss: -lattice.log_p,
        grad: Tensor::new(shape.to_vec(), grad).expect("shape preserved"),
        alignable: true,
    }
}

/// Per-step argmax (ties to the lowest index) followed by CTC collapse.
pub fn greedy_decode(probs: &Tensor) -> Transcript {
    let blank = probs.shape()[1] - 1;
    let path: Vec<usize> = probs.rows().map(argmax).collect();
    Transcript(collapse(&path, blank))
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}
