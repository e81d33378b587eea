//! Canonical Huffman code over the 28 text tokens plus an end-of-text sentinel.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::ctc::{tokenize, CtcError, Transcript, BLANK};

/// Symbol index of the end-of-text marker (shares the blank's slot).
pub const SENTINEL: usize = BLANK;
/// Text tokens plus the sentinel.
pub const SYMBOLS: usize = BLANK + 1;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum HuffmanError {
    #[error("cannot build a code from an empty corpus")]
    EmptyCorpus,
    #[error("need at least two symbols with nonzero weight")]
    Degenerate,
    #[error(transparent)]
    Token(#[from] CtcError),
    #[error("bit stream ended before the end-of-text marker (decoded prefix {prefix:?})")]
    Truncated { prefix: String },
}

/// Code lengths plus the canonical codes derived from them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HuffmanCodebook {
    lengths: Vec<u8>,
    codes: Vec<u64>,
    /// Symbols sorted by (length, index): the canonical order.
    order: Vec<usize>,
}

impl HuffmanCodebook {
    /// Optimal code for `weights`. Ties are broken by weight, then by the
    /// smallest symbol index in each subtree.
    pub fn from_weights(weights: &[u64]) -> Result<Self, HuffmanError> {
        let live = weights.iter().filter(|&&w| w > 0).count();
        if live < 2 {
            return Err(HuffmanError::Degenerate);
        }
        // Nodes: leaves first, then merges. parent[i] filled as merged.
        let mut parent: Vec<Option<usize>> = vec![None; weights.len()];
        let mut heap = BinaryHeap::new();
        for (i, &w) in weights.iter().enumerate() {
            if w > 0 {
                heap.push(Reverse((w, i, i)));
            }
        }
        while heap.len() > 1 {
            let Reverse((wa, ma, a)) = heap.pop().unwrap();
            let Reverse((wb, mb, b)) = heap.pop().unwrap();
            let node = parent.len();
            parent.push(None);
            parent[a] = Some(node);
            parent[b] = Some(node);
            heap.push(Reverse((wa + wb, ma.min(mb), node)));
        }
        let lengths = (0..weights.len())
            .map(|i| {
                if weights[i] == 0 {
                    return 0;
                }
                let (mut depth, mut at) = (0u8, i);
                while let Some(p) = parent[at] {
                    depth += 1;
                    at = p;
                }
                depth
            })
            .collect();
        Ok(HuffmanCodebook::from_lengths(lengths))
    }

    /// Canonical codes for the given lengths (0 marks an unused symbol).
    pub fn from_lengths(lengths: Vec<u8>) -> Self {
        let mut order: Vec<usize> = (0..lengths.len()).filter(|&i| lengths[i] > 0).collect();
        order.sort_by_key(|&i| (lengths[i], i));
        let mut codes = vec![0u64; lengths.len()];
        let (mut code, mut prev_len) = (0u64, 0u8);
        for (n, &sym) in order.iter().enumerate() {
            let len = lengths[sym];
            if n > 0 {
                code += 1;
            }
            code <<= len - prev_len;
            prev_len = len;
            codes[sym] = code;
        }
        HuffmanCodebook {
            lengths,
            codes,
            order,
        }
    }

    pub fn lengths(&self) -> &[u8] {
        &self.lengths
    }

    /// Code of `symbol` as a 0/1 vector, most significant bit first.
    pub fn code(&self, symbol: usize) -> Vec<u8> {
        let len = self.lengths[symbol];
        (0..len)
            .rev()
            .map(|b| ((self.codes[symbol] >> b) & 1) as u8)
            .collect()
    }

    /// `(symbol, length)` pairs in canonical order.
    pub fn canonical_pairs(&self) -> Vec<(usize, u8)> {
        self.order.iter().map(|&s| (s, self.lengths[s])).collect()
    }

    /// Weighted mean code length.
    pub fn average_length(&self, weights: &[u64]) -> f64 {
        let total: u64 = weights.iter().sum();
        weights
            .iter()
            .zip(&self.lengths)
            .map(|(&w, &l)| w as f64 * f64::from(l))
            .sum::<f64>()
            / total as f64
    }

    /// Decodes symbols up to and including `stop`. Returns the symbols before
    /// it and whether it was found.
    fn decode_until(&self, bits: &[u8], stop: usize) -> (Vec<usize>, bool) {
        let mut out = Vec::new();
        let (mut code, mut len, mut first, mut idx) = (0u64, 0u8, 0u64, 0usize);
        let max_len = self.lengths.iter().copied().max().unwrap_or(0);
        // Canonical decoding: track the first code and first order index at each length.
        for &bit in bits {
            code = (code << 1) | u64::from(bit & 1);
            len += 1;
            first <<= 1;
            let count = self.order[idx..]
                .iter()
                .take_while(|&&s| self.lengths[s] == len)
                .count();
            if code >= first && code - first < count as u64 {
                let sym = self.order[idx + (code - first) as usize];
                if sym == stop {
                    return (out, true);
                }
                out.push(sym);
                code = 0;
                len = 0;
                first = 0;
                idx = 0;
                continue;
            }
            first += count as u64;
            idx += count;
            if len >= max_len {
                // Unreachable for complete codes; resynchronize defensively.
                code = 0;
                len = 0;
                first = 0;
                idx = 0;
            }
        }
        (out, false)
    }
}

/// Code for the 28 text tokens and the sentinel with add-one smoothing.
/// Each text contributes one sentinel occurrence.
pub fn huffman_build<S: AsRef<str>>(corpus: &[S]) -> Result<HuffmanCodebook, HuffmanError> {
    if corpus.is_empty() {
        return Err(HuffmanError::EmptyCorpus);
    }
    let mut weights = vec![1u64; SYMBOLS];
    for text in corpus {
        for &t in tokenize(text.as_ref())?.tokens() {
            weights[t] += 1;
        }
        weights[SENTINEL] += 1;
    }
    HuffmanCodebook::from_weights(&weights)
}

pub fn huffman_encode(text: &str, book: &HuffmanCodebook) -> Result<Vec<u8>, HuffmanError> {
    let t = tokenize(text)?;
    let mut bits = Vec::new();
    for &sym in t.tokens().iter().chain(std::iter::once(&SENTINEL)) {
        bits.extend(book.code(sym));
    }
    Ok(bits)
}

/// Decodes up to the sentinel; bits after it are ignored.
pub fn huffman_decode(bits: &[u8], book: &HuffmanCodebook) -> Result<String, HuffmanError> {
    let (symbols, terminated) = book.decode_until(bits, SENTINEL);
    let text = Transcript::from_tokens(symbols).text();
    if terminated {
        Ok(text)
    } else {
        Err(HuffmanError::Truncated { prefix: text })
    }
}
