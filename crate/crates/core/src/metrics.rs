//! Character and word error rates from a minimum-edit-distance alignment.

use crate::ctc::{tokenize, CtcError};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("reference is empty; error rate is undefined")]
    EmptyReference,
    #[error(transparent)]
    Token(#[from] CtcError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_len: usize,
}

impl EditCounts {
    pub fn distance(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// `(S + D + I) / N`; `None` for an empty reference.
    pub fn rate(&self) -> Option<f64> {
        (self.reference_len > 0).then(|| self.distance() as f64 / self.reference_len as f64)
    }
}

/// Unit-cost edit counts turning `hyp` back into `reference`.
///
/// The backtrace prefers the diagonal (match or substitution), then
/// insertion, then deletion, so counts are reproducible when several
/// minimal alignments exist.
pub fn edit_counts<T: PartialEq>(reference: &[T], hyp: &[T]) -> EditCounts {
    let (n, m) = (reference.len(), hyp.len());
    let cols = m + 1;
    let mut dp = vec![0usize; (n + 1) * cols];
    for i in 0..=n {
        dp[i * cols] = i;
    }
    for j in 0..=m {
        dp[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = dp[(i - 1) * cols + j - 1] + usize::from(reference[i - 1] != hyp[j - 1]);
            let ins = dp[i * cols + j - 1] + 1;
            let del = dp[(i - 1) * cols + j] + 1;
            dp[i * cols + j] = diag.min(ins).min(del);
        }
    }

    let mut counts = EditCounts {
        reference_len: n,
        ..EditCounts::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * cols + j];
        if i > 0 && j > 0 {
            let mismatch = reference[i - 1] != hyp[j - 1];
            if here == dp[(i - 1) * cols + j - 1] + usize::from(mismatch) {
                counts.substitutions += usize::from(mismatch);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && here == dp[i * cols + j - 1] + 1 {
            counts.insertions += 1;
            j -= 1;
        } else {
            counts.deletions += 1;
            i -= 1;
        }
    }
    counts
}

/// Character-level counts over the tokenized texts (spaces and apostrophes included).
pub fn char_counts(reference: &str, hyp: &str) -> Result<EditCounts, MetricsError> {
    let r = tokenize(reference)?;
    let h = tokenize(hyp)?;
    Ok(edit_counts(r.tokens(), h.tokens()))
}

/// Word-level counts; words are split on the space character.
pub fn word_counts(reference: &str, hyp: &str) -> EditCounts {
    let words = |s: &str| -> Vec<String> {
        s.split(' ')
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect()
    };
    edit_counts(&words(reference), &words(hyp))
}

pub fn cer(reference: &str, hyp: &str) -> Result<f64, MetricsError> {
    char_counts(reference, hyp)?
        .rate()
        .ok_or(MetricsError::EmptyReference)
}

pub fn wer(reference: &str, hyp: &str) -> Result<f64, MetricsError> {
    word_counts(reference, hyp)
        .rate()
        .ok_or(MetricsError::EmptyReference)
}
