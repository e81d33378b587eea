//! End-to-end gradient check on a down-scaled model with the channel noise frozen.

use deepsc_core::channel::{rng_stream, ChannelKind};
use deepsc_core::ctc::{tokenize, ALPHABET_SIZE};
use deepsc_core::dsp::Spectrum;
use deepsc_core::model::{Model, ModelConfig};
use deepsc_core::tensor::{Partition, Tensor};
use rand::Rng;

use super::{central, rel_err};

const STEP: f64 = 1e-5;

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        frame_len: 8,
        hop: 4,
        cnn_modules: 2,
        cnn_filters: 2,
        cnn_kernel: [3, 3],
        cnn_stride_time: 2,
        brnn_modules: 1,
        gru_units: 3,
        channel_enc_units: [6, 4],
        channel_dec_units: [5, 5, ALPHABET_SIZE],
        alphabet_size: ALPHABET_SIZE,
    }
}

/// Max relative error over 20 scalars sampled across the three partitions.
/// Returns `(error, sampled partitions)`.
pub fn e2e_gradient_error(kind: ChannelKind, seed: u64) -> (f64, Vec<Partition>) {
    let mut model = Model::new(tiny_config(), &mut rng_stream(seed, 0)).unwrap();
    let mut r = rng_stream(seed, 1);
    // Zero biases put dead-ReLU rows exactly on the kink; check at a generic point instead.
    let biases: Vec<String> = model.params.names().filter(|n| n.ends_with(".b")).map(str::to_string).collect();
    for name in biases {
        for v in model.params.get_mut(&name).unwrap().data_mut() {
            *v = r.random_range(-0.1..0.1);
        }
    }
    let n = 24;
    let bins = model.config.n_bins();
    let data = (0..n * bins).map(|_| r.random_range(-1.0..1.0)).collect();
    let s = Spectrum {
        frames: Tensor::new(vec![n, bins], data).unwrap(),
        frame_len_samples: 8,
        hop_samples: 4,
    };
    let target = tokenize("ab").unwrap();
    let loss = |m: &Model| {
        m.step(&s, target.tokens(), kind, 6.0, &mut rng_stream(seed, 2))
            .unwrap()
            .loss
    };
    let step = model
        .step(&s, target.tokens(), kind, 6.0, &mut rng_stream(seed, 2))
        .unwrap();
    assert!(step.alignable);

    let names: Vec<(String, Partition)> = model
        .params
        .iter()
        .map(|(n, p, _)| (n.to_string(), p))
        .collect();
    let mut worst: f64 = 0.0;
    let mut seen = Vec::new();
    let per_partition = [
        (Partition::SemanticEncoder, 7),
        (Partition::ChannelEncoder, 7),
        (Partition::ChannelDecoder, 6),
    ];
    for (partition, count) in per_partition {
        let pool: Vec<&String> = names.iter().filter(|(_, p)| *p == partition).map(|(n, _)| n).collect();
        for _ in 0..count {
            let name = pool[r.random_range(0..pool.len())];
            let len = model.params.get(name).unwrap().len();
            let i = r.random_range(0..len);
            let analytic = step.grads.get(name).unwrap().data()[i];
            let numeric = central(&model.params, name, i, STEP, &mut |p| {
                let m = Model {
                    config: model.config.clone(),
                    params: p.clone(),
                };
                loss(&m)
            });
            worst = worst.max(rel_err(analytic, numeric));
            seen.push(partition);
        }
    }
    (worst, seen)
}
