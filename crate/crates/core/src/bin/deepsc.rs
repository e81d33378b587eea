//! Command-line entry point. Exit status: 0 success, 1 bad input, 2 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use deepsc_core::classic::TextTransceiver;
use deepsc_core::harness::eval::baseline_metadata;
use deepsc_core::harness::{
    self, evaluate, evaluate_baseline, load_dataset, load_manifest, parse_channels,
    parse_snr_grid, synth_corpus, write_csv, ExperimentConfig, HarnessError,
};
use deepsc_core::model::{Model, ModelConfig};

#[derive(Parser)]
#[command(name = "deepsc", version, about = "Semantic speech-recognition link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the transceiver and write a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use the full-size layer inventory instead of the config's model table.
        #[arg(long)]
        paper_arch: bool,
    },
    /// Sweep a checkpoint over channels and SNRs.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "awgn,rayleigh")]
        channels: String,
        #[arg(long, default_value = "-6:18:3", allow_hyphen_values = true)]
        snrs: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep the classical text transceiver (reference transcripts as input).
    BaselineEval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "awgn,rayleigh")]
        channels: String,
        #[arg(long, default_value = "-6:18:3", allow_hyphen_values = true)]
        snrs: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic tone corpus and its manifest.
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write(path: &Path, text: &str) -> harness::Result<()> {
    std::fs::write(path, text).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

fn run(cli: Cli) -> harness::Result<()> {
    match cli.command {
        Command::Train {
            config,
            manifest,
            out,
            paper_arch,
        } => {
            let mut config = ExperimentConfig::load(&config)?;
            if paper_arch {
                config.model = ModelConfig::full_size();
            }
            let data = load_dataset(&load_manifest(&manifest)?, &config.model)?;
            let outcome = harness::train(&config, &data, |e| {
                eprintln!("epoch {:>4}  loss {:.6}", e.epoch, e.mean_loss)
            })?;
            outcome.model.save(&out)?;
            write(&sidecar(&out, ".loss.csv"), &outcome.loss_csv())?;
            info!(
                "trained {} epochs ({} skipped utterances), converged: {}",
                outcome.epochs.len(),
                outcome.skipped,
                outcome.converged
            );
        }
        Command::Eval {
            ckpt,
            manifest,
            channels,
            snrs,
            seed,
            out,
        } => {
            let model = Model::load(&ckpt)?;
            let data = load_dataset(&load_manifest(&manifest)?, &model.config)?;
            let (_, too_short) = data.alignable(&model.config);
            if too_short > 0 {
                log::warn!("{too_short} utterance(s) are shorter than their transcripts allow; evaluated anyway");
            }
            let rows = evaluate(&model, &data, &parse_channels(&channels)?, &parse_snr_grid(&snrs)?, seed)?;
            write_csv(&rows, &out)?;
        }
        Command::BaselineEval {
            manifest,
            channels,
            snrs,
            seed,
            out,
        } => {
            let manifest = load_manifest(&manifest)?;
            let texts: Vec<String> = manifest.texts().iter().map(|s| s.to_string()).collect();
            let transceiver = TextTransceiver::from_corpus(&texts)?;
            let rows = evaluate_baseline(
                &transceiver,
                &texts,
                &parse_channels(&channels)?,
                &parse_snr_grid(&snrs)?,
                seed,
            )?;
            write_csv(&rows, &out)?;
            let meta = serde_json::to_string_pretty(&baseline_metadata(&transceiver))
                .expect("metadata serializes");
            write(&sidecar(&out, ".meta.json"), &(meta + "\n"))?;
        }
        Command::Synth { seed, count, out } => {
            if count == 0 {
                return Err(HarnessError::Config("--count must be at least 1".into()));
            }
            synth_corpus(seed, count, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
