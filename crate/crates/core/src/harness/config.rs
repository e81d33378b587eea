//! TOML experiment configuration. Every table rejects unknown keys.
//!
//! ```toml
//! [model]            # optional; desk-scale defaults
//! gru_units = 32
//!
//! [train]
//! channel = "awgn"
//! snr_db = 8.0       # `inf` disables noise
//! epochs = 200
//! batch_size = 16
//! learning_rate = 0.0005
//! seed = 1
//! convergence_tol = 0.001   # 0 disables early stopping
//! convergence_window = 3
//! grad_clip = 1.0           # global gradient-norm cap; 0 disables
//!
//! [eval]
//! channels = ["awgn", "rayleigh"]
//! snr_db = [-6.0, -3.0, 0.0]
//! seed = 1
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_error, HarnessError, Result};
use crate::channel::ChannelKind;
use crate::model::ModelConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub channel: ChannelKind,
    pub snr_db: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Stop when the mean loss moved by less than this fraction over
    /// `convergence_window` epochs.
    pub convergence_tol: f64,
    pub convergence_window: usize,
    /// Cap on the global norm of each averaged batch gradient; 0 disables.
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            channel: ChannelKind::Awgn,
            snr_db: 8.0,
            epochs: 50,
            batch_size: 16,
            learning_rate: 0.0005,
            seed: 1,
            convergence_tol: 0.001,
            convergence_window: 3,
            grad_clip: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub channels: Vec<ChannelKind>,
    pub snr_db: Vec<f64>,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            channels: vec![ChannelKind::Awgn, ChannelKind::Rayleigh],
            snr_db: (0..9).map(|i| -6.0 + 3.0 * f64::from(i)).collect(),
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        ExperimentConfig::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.model
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let t = &self.train;
        if t.batch_size == 0 {
            return Err(HarnessError::Config("batch_size must be at least 1".into()));
        }
        if !(t.learning_rate > 0.0) || !t.learning_rate.is_finite() {
            return Err(HarnessError::Config("learning_rate must be positive".into()));
        }
        if !(t.grad_clip >= 0.0) || !t.grad_clip.is_finite() {
            return Err(HarnessError::Config("grad_clip must be finite and non-negative".into()));
        }
        if t.epochs == 0 {
            return Err(HarnessError::Config("epochs must be at least 1".into()));
        }
        if t.snr_db.is_nan() || t.snr_db == f64::NEG_INFINITY {
            return Err(HarnessError::Config("train snr_db must be finite or inf".into()));
        }
        if !(t.convergence_tol >= 0.0) || t.convergence_window == 0 {
            return Err(HarnessError::Config(
                "convergence_tol must be >= 0 and convergence_window >= 1".into(),
            ));
        }
        if self.eval.snr_db.is_empty() || self.eval.channels.is_empty() {
            return Err(HarnessError::Config("eval grid must be non-empty".into()));
        }
        Ok(())
    }
}

/// `awgn,rayleigh` into channel kinds.
pub fn parse_channels(s: &str) -> Result<Vec<ChannelKind>> {
    let kinds = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.parse().map_err(|e: crate::channel::ChannelError| HarnessError::Config(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    if kinds.is_empty() {
        return Err(HarnessError::Config("no channels given".into()));
    }
    Ok(kinds)
}

fn parse_snr(s: &str) -> Result<f64> {
    let s = s.trim();
    let v = match s {
        "inf" | "+inf" => f64::INFINITY,
        _ => s
            .parse::<f64>()
            .map_err(|_| HarnessError::Config(format!("bad SNR `{s}`")))?,
    };
    if v.is_nan() || v == f64::NEG_INFINITY {
        return Err(HarnessError::Config(format!("bad SNR `{s}`")));
    }
    Ok(v)
}

/// `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_snr_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let grid = match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (parse_snr(start)?, parse_snr(stop)?, parse_snr(step)?);
            if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
                return Err(HarnessError::Config(format!("bad SNR range `{s}`")));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| start + step * i as f64).collect()
        }
        [list] => list
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(parse_snr)
            .collect::<Result<Vec<_>>>()?,
        _ => return Err(HarnessError::Config(format!("bad SNR grid `{s}`"))),
    };
    if grid.is_empty() {
        return Err(HarnessError::Config("empty SNR grid".into()));
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn partial_config_and_infinite_snr() {
        let c = ExperimentConfig::from_toml("[train]\nsnr_db = inf\nepochs = 3\n").unwrap();
        assert_eq!(c.train.snr_db, f64::INFINITY);
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.model, ModelConfig::desk());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("[train]\nmomentum = 0.9\n").is_err());
        assert!(ExperimentConfig::from_toml("[optimizer]\n").is_err());
        assert!(ExperimentConfig::from_toml("[train]\nbatch_size = 0\n").is_err());
    }

    #[test]
    fn snr_grids() {
        assert_eq!(parse_snr_grid("-6:18:3").unwrap().len(), 9);
        assert_eq!(parse_snr_grid("-6:18:6").unwrap(), vec![-6.0, 0.0, 6.0, 12.0, 18.0]);
        assert_eq!(parse_snr_grid("0,inf").unwrap(), vec![0.0, f64::INFINITY]);
        assert!(parse_snr_grid("3:1:1").is_err());
        assert!(parse_snr_grid("x").is_err());
        assert!(parse_channels("awgn,rician").is_err());
    }
}
