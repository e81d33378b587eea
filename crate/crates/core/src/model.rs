//! The learned transceiver: semantic encoder (CNN + bidirectional GRU stack),
//! channel encoder, power normalization, channel, and channel decoder.
//!
//! Every forward pass is recorded on a [`Tape`]; inference simply never calls
//! `backward`. Parameter names are stable and double as checkpoint keys.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelKind, Realization};
use crate::ctc::{self, ALPHABET_SIZE};
use crate::dsp::Spectrum;
use crate::tensor::{
    bidirectional_gru, glorot_uniform, read_checkpoint, write_checkpoint, CheckpointError,
    Gradients, GruWeights, Padding, ParameterSet, Partition, Tape, Tensor, TensorError, Var,
};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("spectrum has {found} bins, model expects {expected}")]
    Bins { expected: usize, found: usize },
    #[error("symbol count {count} is not a multiple of Z = {z}")]
    SymbolCount { count: usize, z: usize },
    #[error("all-zero symbol block; power normalization undefined")]
    ZeroPower,
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {detail}")]
    Io { path: String, detail: String },
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Layer sizes. Kernel and stride apply to every CNN module; stride along
/// frequency is always 1 and padding is "same".
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub cnn_modules: usize,
    pub cnn_filters: usize,
    pub cnn_kernel: [usize; 2],
    pub cnn_stride_time: usize,
    pub brnn_modules: usize,
    pub gru_units: usize,
    pub channel_enc_units: [usize; 2],
    pub channel_dec_units: [usize; 3],
    pub alphabet_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::desk()
    }
}

impl ModelConfig {
    /// Small enough to train in minutes on one core.
    pub fn desk() -> Self {
        ModelConfig {
            frame_len: crate::dsp::DEFAULT_FRAME_LEN,
            hop: crate::dsp::DEFAULT_HOP,
            cnn_modules: 2,
            cnn_filters: 8,
            cnn_kernel: [3, 3],
            cnn_stride_time: 2,
            brnn_modules: 2,
            gru_units: 32,
            channel_enc_units: [40, 40],
            channel_dec_units: [40, 40, ALPHABET_SIZE],
            alphabet_size: ALPHABET_SIZE,
        }
    }

    /// Full-size layer inventory.
    pub fn full_size() -> Self {
        ModelConfig {
            cnn_filters: 32,
            brnn_modules: 6,
            gru_units: 800,
            ..ModelConfig::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.alphabet_size != ALPHABET_SIZE {
            return bad("alphabet_size must be 29");
        }
        if self.channel_dec_units[2] != self.alphabet_size {
            return bad("last channel decoder width must equal the alphabet size");
        }
        if !self.channel_enc_units[1].is_multiple_of(2) || self.channel_enc_units[1] == 0 {
            return bad("channel encoder final width must be even (2Z)");
        }
        if self.frame_len < 2 || self.hop == 0 || self.hop > self.frame_len {
            return bad("need frame_len >= 2 and 1 <= hop <= frame_len");
        }
        if self.cnn_filters == 0 || self.cnn_kernel.contains(&0) || self.cnn_stride_time == 0 {
            return bad("CNN filters, kernel and stride must be positive");
        }
        if self.brnn_modules == 0 || self.gru_units == 0 {
            return bad("need at least one BRNN module with positive width");
        }
        if self.channel_enc_units[0] == 0 || self.channel_dec_units[..2].contains(&0) {
            return bad("dense widths must be positive");
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// Complex symbols per time step.
    pub fn z(&self) -> usize {
        self.channel_enc_units[1] / 2
    }

    /// Encoder output length for `n` input frames.
    pub fn steps_for(&self, n: usize) -> usize {
        (0..self.cnn_modules).fold(n, |l, _| l.div_ceil(self.cnn_stride_time))
    }

    fn conv_channels(&self, module: usize) -> usize {
        if module == 0 {
            1
        } else {
            self.cnn_filters
        }
    }

    fn gru_input(&self, layer: usize) -> usize {
        if layer == 0 {
            if self.cnn_modules == 0 {
                self.n_bins()
            } else {
                self.cnn_filters * self.n_bins()
            }
        } else {
            2 * self.gru_units
        }
    }
}

fn dense_params<R: Rng + ?Sized>(
    params: &mut ParameterSet,
    prefix: &str,
    input: usize,
    output: usize,
    partition: Partition,
    rng: &mut R,
) -> Result<()> {
    params.insert(
        &format!("{prefix}.w"),
        partition,
        glorot_uniform(&[input, output], input, output, rng),
    )?;
    params.insert(&format!("{prefix}.b"), partition, Tensor::zeros(&[output]))?;
    Ok(())
}

/// Glorot-uniform weights and zero biases, drawn in a fixed order.
pub fn init_params<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<ParameterSet> {
    config.validate()?;
    let mut p = ParameterSet::new();
    let [kh, kw] = config.cnn_kernel;
    let alpha = Partition::SemanticEncoder;
    for m in 0..config.cnn_modules {
        let cin = config.conv_channels(m);
        let cout = config.cnn_filters;
        p.insert(
            &format!("sem.conv{m}.k"),
            alpha,
            glorot_uniform(&[cout, cin, kh, kw], cin * kh * kw, cout * kh * kw, rng),
        )?;
        p.insert(&format!("sem.conv{m}.b"), alpha, Tensor::zeros(&[cout]))?;
    }
    for layer in 0..config.brnn_modules {
        for dir in ["fw", "bw"] {
            GruWeights::init_params(
                &mut p,
                &format!("sem.gru{layer}.{dir}"),
                config.gru_input(layer),
                config.gru_units,
                alpha,
                rng,
            )?;
        }
    }
    dense_params(&mut p, "sem.out", 2 * config.gru_units, config.alphabet_size, alpha, rng)?;

    let mut width = config.alphabet_size;
    for (i, &units) in config.channel_enc_units.iter().enumerate() {
        dense_params(&mut p, &format!("enc.dense{i}"), width, units, Partition::ChannelEncoder, rng)?;
        width = units;
    }
    for (i, &units) in config.channel_dec_units.iter().enumerate() {
        dense_params(&mut p, &format!("dec.dense{i}"), width, units, Partition::ChannelDecoder, rng)?;
        width = units;
    }
    Ok(p)
}

fn dense(tape: &mut Tape, params: &ParameterSet, prefix: &str, x: Var) -> Result<Var> {
    let w = tape.param(params, &format!("{prefix}.w"))?;
    let b = tape.param(params, &format!("{prefix}.b"))?;
    let xw = tape.matmul(x, w)?;
    Ok(tape.add_bias(xw, b)?)
}

/// Records the semantic encoder on `tape`. `spectrum` is `[N, F]`; returns `P: [L, 29]`.
pub fn record_semantic_encoder(
    tape: &mut Tape,
    params: &ParameterSet,
    config: &ModelConfig,
    spectrum: Var,
) -> Result<Var> {
    let shape = tape.shape(spectrum).to_vec();
    if shape.len() != 2 || shape[1] != config.n_bins() {
        return Err(ModelError::Bins {
            expected: config.n_bins(),
            found: shape.get(1).copied().unwrap_or(0),
        });
    }
    let bins = shape[1];
    let mut x = tape.reshape(spectrum, &[1, shape[0], bins])?;
    for m in 0..config.cnn_modules {
        let k = tape.param(params, &format!("sem.conv{m}.k"))?;
        let b = tape.param(params, &format!("sem.conv{m}.b"))?;
        let conv = tape.conv2d(x, k, b, (config.cnn_stride_time, 1), Padding::Same)?;
        x = tape.relu(conv)?;
    }
    // [C, L, F] -> [L, C·F]: channel-major blocks side by side per step.
    let (channels, steps) = (tape.shape(x)[0], tape.shape(x)[1]);
    let mut seq = if channels == 1 {
        tape.reshape(x, &[steps, bins])?
    } else {
        let mut parts = Vec::with_capacity(channels);
        for c in 0..channels {
            let plane = tape.slice(x, 0, c, 1)?;
            parts.push(tape.reshape(plane, &[steps, bins])?);
        }
        tape.concat(&parts, 1)?
    };
    for layer in 0..config.brnn_modules {
        let fw = GruWeights::record(tape, params, &format!("sem.gru{layer}.fw"))?;
        let bw = GruWeights::record(tape, params, &format!("sem.gru{layer}.bw"))?;
        seq = bidirectional_gru(tape, seq, &fw, &bw)?;
    }
    let logits = dense(tape, params, "sem.out", seq)?;
    Ok(tape.softmax(logits)?)
}

/// `P: [L, 29]` to power-normalized interleaved symbols `[L, 2Z]`.
pub fn record_channel_encoder(tape: &mut Tape, params: &ParameterSet, p: Var) -> Result<Var> {
    let h = dense(tape, params, "enc.dense0", p)?;
    let h = tape.relu(h)?;
    let u = dense(tape, params, "enc.dense1", h)?;
    tape.power_normalize(u).map_err(|e| match e {
        TensorError::Degenerate { .. } => ModelError::ZeroPower,
        other => other.into(),
    })
}

/// Equalized symbols `[L, 2Z]` to pre-softmax scores `[L, 29]`.
pub fn record_channel_decoder_logits(tape: &mut Tape, params: &ParameterSet, y: Var) -> Result<Var> {
    let h = dense(tape, params, "dec.dense0", y)?;
    let h = tape.relu(h)?;
    let h = dense(tape, params, "dec.dense1", h)?;
    let h = tape.relu(h)?;
    dense(tape, params, "dec.dense2", h)
}

/// Equalized symbols `[L, 2Z]` to `P̂: [L, 29]`.
pub fn record_channel_decoder(tape: &mut Tape, params: &ParameterSet, y: Var) -> Result<Var> {
    let logits = record_channel_decoder_logits(tape, params, y)?;
    Ok(tape.softmax(logits)?)
}

fn interleaved(noise: &[Complex64], shape: &[usize]) -> Tensor {
    let data = noise.iter().flat_map(|w| [w.re, w.im]).collect();
    Tensor::new(shape.to_vec(), data).expect("noise sized to the symbol block")
}

/// Records `y = h·x + w` followed by perfect-CSI equalization.
pub fn record_channel(tape: &mut Tape, x: Var, channel: &Realization) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    let faded = channel.gain != Complex64::new(1.0, 0.0);
    let mut y = x;
    if faded {
        y = tape.complex_scale(y, channel.gain.re, channel.gain.im)?;
    }
    if channel.noise_variance > 0.0 {
        y = tape.add_const(y, &interleaved(&channel.noise, &shape))?;
    }
    if faded {
        let inv = channel.gain.inv();
        y = tape.complex_scale(y, inv.re, inv.im)?;
    }
    Ok(y)
}

/// Handles to the interesting nodes of one end-to-end pass.
#[derive(Clone, Copy, Debug)]
pub struct E2eVars {
    pub p: Var,
    pub x: Var,
    pub y: Var,
    pub p_hat: Var,
    /// `ln P̂`, computed from the logits directly.
    pub log_p_hat: Var,
}

/// Records the full pipeline for `spectrum: [N, F]`. The channel is drawn
/// from `rng` once the symbol count is known.
pub fn record_e2e<R: Rng + ?Sized>(
    tape: &mut Tape,
    params: &ParameterSet,
    config: &ModelConfig,
    spectrum: &Tensor,
    kind: ChannelKind,
    snr_db: f64,
    rng: &mut R,
) -> Result<E2eVars> {
    let s = tape.constant(spectrum.clone())?;
    let p = record_semantic_encoder(tape, params, config, s)?;
    let x = record_channel_encoder(tape, params, p)?;
    let symbols = tape.value(x).len() / 2;
    let channel = Realization::draw(kind, snr_db, symbols, rng);
    let y = record_channel(tape, x, &channel)?;
    let logits = record_channel_decoder_logits(tape, params, y)?;
    let p_hat = tape.softmax(logits)?;
    let log_p_hat = tape.log_softmax(logits)?;
    Ok(E2eVars {
        p,
        x,
        y,
        p_hat,
        log_p_hat,
    })
}

/// Mean `|x_i|²` over interleaved (re, im) pairs.
pub fn mean_symbol_power(interleaved: &[f64]) -> f64 {
    interleaved.iter().map(|v| v * v).sum::<f64>() / (interleaved.len() / 2) as f64
}

/// `x / sqrt(mean |x_i|²)`.
pub fn power_normalize(x: &[Complex64]) -> Result<Vec<Complex64>> {
    let p = x.iter().map(|c| c.norm_sqr()).sum::<f64>() / x.len().max(1) as f64;
    if !(p > 0.0) {
        return Err(ModelError::ZeroPower);
    }
    let scale = 1.0 / p.sqrt();
    Ok(x.iter().map(|c| c * scale).collect())
}

/// One utterance's CTC loss and parameter gradients.
#[derive(Clone, Debug)]
pub struct Step {
    pub loss: f64,
    pub grads: Gradients,
    pub alignable: bool,
    pub tx_power: f64,
    pub p_hat: Tensor,
}

/// A configuration together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParameterSet,
}

impl Model {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let params = init_params(&config, rng)?;
        Ok(Model { config, params })
    }

    fn check_bins(&self, s: &Spectrum) -> Result<()> {
        if s.n_bins() != self.config.n_bins() {
            return Err(ModelError::Bins {
                expected: self.config.n_bins(),
                found: s.n_bins(),
            });
        }
        Ok(())
    }

    pub fn semantic_encode(&self, s: &Spectrum) -> Result<Tensor> {
        self.check_bins(s)?;
        let mut tape = Tape::new();
        let v = tape.constant(s.frames.clone())?;
        let p = record_semantic_encoder(&mut tape, &self.params, &self.config, v)?;
        Ok(tape.value(p).clone())
    }

    /// `[L, 29]` probabilities to `L·Z` unit-power symbols.
    pub fn channel_encode(&self, p: &Tensor) -> Result<Vec<Complex64>> {
        let mut tape = Tape::new();
        let v = tape.constant(p.clone())?;
        let x = record_channel_encoder(&mut tape, &self.params, v)?;
        Ok(tape
            .value(x)
            .data()
            .chunks(2)
            .map(|c| Complex64::new(c[0], c[1]))
            .collect())
    }

    pub fn channel_decode(&self, y: &[Complex64]) -> Result<Tensor> {
        let z = self.config.z();
        if y.is_empty() || !y.len().is_multiple_of(z) {
            return Err(ModelError::SymbolCount { count: y.len(), z });
        }
        let mut tape = Tape::new();
        let data = y.iter().flat_map(|c| [c.re, c.im]).collect();
        let v = tape.constant(Tensor::new(vec![y.len() / z, 2 * z], data)?)?;
        let p_hat = record_channel_decoder(&mut tape, &self.params, v)?;
        Ok(tape.value(p_hat).clone())
    }

    /// `P̂` for one utterance through a freshly drawn channel.
    pub fn forward_e2e<R: Rng + ?Sized>(
        &self,
        s: &Spectrum,
        kind: ChannelKind,
        snr_db: f64,
        rng: &mut R,
    ) -> Result<Tensor> {
        self.check_bins(s)?;
        let mut tape = Tape::new();
        let v = record_e2e(&mut tape, &self.params, &self.config, &s.frames, kind, snr_db, rng)?;
        Ok(tape.value(v.p_hat).clone())
    }

    /// Forward pass, CTC loss and backward pass for one utterance.
    pub fn step<R: Rng + ?Sized>(
        &self,
        s: &Spectrum,
        target: &[usize],
        kind: ChannelKind,
        snr_db: f64,
        rng: &mut R,
    ) -> Result<Step> {
        self.check_bins(s)?;
        let mut tape = Tape::new();
        let v = record_e2e(&mut tape, &self.params, &self.config, &s.frames, kind, snr_db, rng)?;
        let tx_power = mean_symbol_power(tape.value(v.x).data());
        let p_hat = tape.value(v.p_hat).clone();
        let ctc = ctc::ctc_loss_log(tape.value(v.log_p_hat), target);
        let grads = if ctc.alignable {
            let loss = tape.external_loss(v.log_p_hat, ctc.loss, ctc.grad)?;
            tape.backward(loss, &self.params)?
        } else {
            Gradients::zeros_like(&self.params)
        };
        Ok(Step {
            loss: ctc.loss,
            grads,
            alignable: ctc.alignable,
            tx_power,
            p_hat,
        })
    }

    /// Writes the parameters to `path` and the config to [`config_path`]`(path)`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |e: std::io::Error, p: &Path| ModelError::Io {
            path: p.display().to_string(),
            detail: e.to_string(),
        };
        let text = toml::to_string(&self.config).map_err(|e| ModelError::Config(e.to_string()))?;
        let sidecar = config_path(path);
        fs::write(&sidecar, text).map_err(|e| io(e, &sidecar))?;
        let file = fs::File::create(path).map_err(|e| io(e, path))?;
        write_checkpoint(&self.params, BufWriter::new(file)).map_err(|e| io(e, path))
    }

    /// Loads a checkpoint; names and shapes must match the sidecar config.
    pub fn load(path: &Path) -> Result<Self> {
        let sidecar = config_path(path);
        let text = fs::read_to_string(&sidecar).map_err(|e| ModelError::Io {
            path: sidecar.display().to_string(),
            detail: e.to_string(),
        })?;
        let config: ModelConfig = toml::from_str(&text).map_err(|e| ModelError::Io {
            path: sidecar.display().to_string(),
            detail: e.to_string(),
        })?;
        Model::load_with(path, config)
    }

    /// Loads a checkpoint against an explicit architecture.
    pub fn load_with(path: &Path, config: ModelConfig) -> Result<Self> {
        let template = init_params(&config, &mut crate::channel::rng_stream(0, 0))?;
        let file = fs::File::open(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        let params = read_checkpoint(&template, BufReader::new(file))?;
        Ok(Model { config, params })
    }
}

/// Location of the config written next to a checkpoint.
pub fn config_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".config.toml");
    PathBuf::from(s)
}
