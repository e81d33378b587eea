//! SNR sweeps for the learned system and the classical baseline.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use super::manifest::Dataset;
use super::{io_error, Result};
use crate::channel::{rng_stream, ChannelKind};
use crate::classic::TextTransceiver;
use crate::ctc::greedy_decode;
use crate::metrics::{cer, wer};
use crate::model::Model;

pub const CSV_HEADER: &str = "system,channel,snr_db,cer,wer,count,seed";
pub const SYSTEM_LEARNED: &str = "deepsc";
pub const SYSTEM_CLASSIC: &str = "classic";

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub system: &'static str,
    pub channel: ChannelKind,
    pub snr_db: f64,
    pub cer: f64,
    pub wer: f64,
    pub count: usize,
    pub seed: u64,
}

fn cells(channels: &[ChannelKind], snrs: &[f64]) -> Vec<(u64, ChannelKind, f64)> {
    channels
        .iter()
        .flat_map(|&c| snrs.iter().map(move |&s| (c, s)))
        .enumerate()
        .map(|(i, (c, s))| (i as u64, c, s))
        .collect()
}

/// Independent generator for utterance `utt` of sweep cell `cell`.
pub fn utterance_rng(seed: u64, cell: u64, utt: usize) -> rand_chacha::ChaCha8Rng {
    rng_stream(seed, (cell << 32) | utt as u64)
}

fn mean_rates(pairs: impl Iterator<Item = (String, String)>) -> (f64, f64, usize) {
    let (mut c, mut w, mut n) = (0.0, 0.0, 0);
    for (reference, hyp) in pairs {
        c += cer(&reference, &hyp).expect("manifest transcripts are non-empty and valid");
        w += wer(&reference, &hyp).expect("manifest transcripts are non-empty and valid");
        n += 1;
    }
    (c / n as f64, w / n as f64, n)
}

/// Greedy transcriptions of every utterance through one channel cell.
pub fn transcribe(
    model: &Model,
    data: &Dataset,
    kind: ChannelKind,
    snr_db: f64,
    seed: u64,
    cell: u64,
) -> Result<Vec<String>> {
    data.utterances
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let p_hat = model.forward_e2e(&u.spectrum, kind, snr_db, &mut utterance_rng(seed, cell, i))?;
            Ok(greedy_decode(&p_hat).text())
        })
        .collect()
}

/// One row per (channel, SNR), in grid order.
pub fn evaluate(
    model: &Model,
    data: &Dataset,
    channels: &[ChannelKind],
    snrs: &[f64],
    seed: u64,
) -> Result<Vec<ResultRow>> {
    cells(channels, snrs)
        .into_par_iter()
        .map(|(cell, channel, snr_db)| {
            let hyps = transcribe(model, data, channel, snr_db, seed, cell)?;
            let refs = data.utterances.iter().map(|u| u.transcript.clone());
            let (cer, wer, count) = mean_rates(refs.zip(hyps));
            Ok(ResultRow {
                system: SYSTEM_LEARNED,
                channel,
                snr_db,
                cer,
                wer,
                count,
                seed,
            })
        })
        .collect()
}

/// Same sweep for the classical transceiver fed the reference transcripts.
pub fn evaluate_baseline(
    transceiver: &TextTransceiver,
    texts: &[String],
    channels: &[ChannelKind],
    snrs: &[f64],
    seed: u64,
) -> Result<Vec<ResultRow>> {
    cells(channels, snrs)
        .into_par_iter()
        .map(|(cell, channel, snr_db)| {
            let mut pairs = Vec::with_capacity(texts.len());
            for (i, text) in texts.iter().enumerate() {
                let got = transceiver.run(text, channel, snr_db, &mut utterance_rng(seed, cell, i))?;
                pairs.push((text.clone(), got.text));
            }
            let (cer, wer, count) = mean_rates(pairs.into_iter());
            Ok(ResultRow {
                system: SYSTEM_CLASSIC,
                channel,
                snr_db,
                cer,
                wer,
                count,
                seed,
            })
        })
        .collect()
}

pub fn csv_string(rows: &[ResultRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(
            s,
            "{},{},{},{:.6},{:.6},{},{}",
            r.system, r.channel, r.snr_db, r.cer, r.wer, r.count, r.seed
        )
        .expect("writing to a String");
    }
    s
}

pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(rows)).map_err(|e| io_error(path, e))
}

/// Description of the baseline's assumptions, written next to its CSV.
pub fn baseline_metadata(transceiver: &TextTransceiver) -> serde_json::Value {
    let code = &transceiver.code;
    json!({
        "system": SYSTEM_CLASSIC,
        "asr": "perfect: reference transcripts are transmitted directly",
        "source_code": {
            "kind": "huffman",
            "canonical_lengths": transceiver.codebook.canonical_pairs(),
        },
        "channel_code": {
            "kind": "polar",
            "block_length": code.n(),
            "info_bits": code.k(),
            "list_size": code.list_size(),
            "construction": "bhattacharyya",
            "design_snr_db": crate::classic::polar::DESIGN_SNR_DB,
            "frozen": code.frozen_indices(),
        },
        "modulation": "64-QAM, Gray, unit energy, max-log LLR",
        "fading": "one flat Rayleigh gain per sentence, perfect CSI",
    })
}
