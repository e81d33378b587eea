//! Mini-batch SGD on the CTC loss through the full transceiver.

use log::{error, info, warn};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::manifest::{Dataset, Utterance};
use super::{HarnessError, Result};
use crate::channel::rng_stream;
use crate::model::{Model, Step};
use crate::tensor::{sgd_step, Gradients};

/// Largest tolerated deviation of the mean transmitted symbol power from 1.
pub const POWER_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub utterances: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub epochs: Vec<EpochStats>,
    pub skipped: usize,
    pub converged: bool,
}

impl TrainOutcome {
    /// CSV text of the per-epoch loss curve.
    pub fn loss_csv(&self) -> String {
        let mut s = String::from("epoch,mean_loss,utterances\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{:.9},{}\n", e.epoch, e.mean_loss, e.utterances));
        }
        s
    }
}

fn converged(losses: &[f64], window: usize, tol: f64) -> bool {
    if tol <= 0.0 || losses.len() <= window {
        return false;
    }
    let now = losses[losses.len() - 1];
    let then = losses[losses.len() - 1 - window];
    ((now - then) / then).abs() < tol
}

/// Trains from a fresh initialization; `on_epoch` sees every epoch as it ends.
pub fn train(
    config: &ExperimentConfig,
    data: &Dataset,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    config.validate()?;
    let t = &config.train;
    let mut model = Model::new(config.model.clone(), &mut rng_stream(t.seed, 0))?;
    let (usable, skipped) = data.alignable(&config.model);
    if skipped > 0 {
        warn!("skipping {skipped} utterance(s) too short for their transcripts");
    }
    if usable.is_empty() {
        return Err(HarnessError::EmptyDataset { skipped });
    }

    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut shuffle_rng = rng_stream(t.seed, 1);
    let mut epochs = Vec::new();
    let mut losses = Vec::new();
    let mut is_converged = false;
    for epoch in 1..=t.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in order.chunks(t.batch_size) {
            let steps: Vec<(usize, std::result::Result<Step, _>)> = batch
                .par_iter()
                .map(|&i| {
                    let stream = 2 + (epoch * usable.len() + i) as u64;
                    let u: &Utterance = usable[i];
                    let step = model.step(
                        &u.spectrum,
                        u.target.tokens(),
                        t.channel,
                        t.snr_db,
                        &mut rng_stream(t.seed, stream),
                    );
                    (i, step)
                })
                .collect();
            let mut grads = Gradients::zeros_like(&model.params);
            for (i, step) in steps {
                let step = step.map_err(HarnessError::from)?;
                if (step.tx_power - 1.0).abs() > POWER_TOLERANCE {
                    return Err(HarnessError::Numerical(format!(
                        "transmit power {} violates the unit-power constraint",
                        step.tx_power
                    )));
                }
                if !step.loss.is_finite() || !step.grads.is_finite() {
                    error!(
                        "non-finite loss {} at epoch {epoch} on {:?} ({} frames)",
                        step.loss,
                        usable[i].transcript,
                        usable[i].spectrum.n_frames()
                    );
                    return Err(HarnessError::Numerical(format!(
                        "non-finite loss at epoch {epoch} on utterance {:?}",
                        usable[i].transcript
                    )));
                }
                total += step.loss;
                grads.add(&step.grads).map_err(|e| HarnessError::Numerical(e.to_string()))?;
            }
            grads.scale(1.0 / batch.len() as f64);
            if t.grad_clip > 0.0 {
                grads.clip_norm(t.grad_clip);
            }
            sgd_step(&mut model.params, &grads, t.learning_rate)
                .map_err(|e| HarnessError::Numerical(e.to_string()))?;
        }
        let stats = EpochStats {
            epoch,
            mean_loss: total / usable.len() as f64,
            utterances: usable.len(),
        };
        info!("epoch {epoch}: mean CTC loss {:.6}", stats.mean_loss);
        on_epoch(&stats);
        losses.push(stats.mean_loss);
        epochs.push(stats);
        if converged(&losses, t.convergence_window, t.convergence_tol) {
            info!("converged after {epoch} epochs");
            is_converged = true;
            break;
        }
    }
    Ok(TrainOutcome {
        model,
        epochs,
        skipped,
        converged: is_converged,
    })
}
