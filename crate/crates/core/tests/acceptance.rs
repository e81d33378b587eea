//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::ctc_checks::{oracle_equivalence, partition_deviation, random_stochastic, MINI_WIDTH};
use common::e2e::e2e_gradient_error;
use common::gradcheck::primitive_report;
use common::polar_checks::{block_errors, sc_mismatches};
use common::{levenshtein, random_sentence, random_text, rng};
use deepsc_core::channel::{rng_stream, snr_to_noise_variance, ChannelKind, Realization};
use deepsc_core::classic::TextTransceiver;
use deepsc_core::harness::stats::spearman;
use deepsc_core::harness::{
    evaluate, evaluate_baseline, load_dataset, synth_corpus, train, Dataset, ExperimentConfig,
    TrainOutcome,
};
use deepsc_core::metrics::{cer, char_counts, edit_counts, wer, word_counts};
use deepsc_core::model::{mean_symbol_power, Model, ModelConfig};
use deepsc_core::tensor::Partition;

const BIN: &str = env!("CARGO_BIN_EXE_deepsc");
const CORPUS_SEED: u64 = 7;
const EVAL_SNRS: [f64; 5] = [-6.0, 0.0, 6.0, 12.0, 18.0];

type Check = Result<String, String>;

fn verdict(pass: bool, detail: String) -> Check {
    if pass {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn desk_recipe(channel: &str, snr: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        "[train]\nchannel = \"{channel}\"\nsnr_db = {snr}\nepochs = 300\nbatch_size = 1\n\
         learning_rate = 0.05\ngrad_clip = 1.0\nseed = 1\nconvergence_tol = 0.0\n"
    ))
    .expect("recipe parses")
}

fn ctc_oracle() -> Check {
    let (err, cases) = oracle_equivalence(&mut rng(5));
    verdict(err <= 1e-10, format!("{cases} cases, max rel err {err:.2e}"))
}

fn ctc_partition() -> Check {
    let mut r = rng(6);
    let mut worst: f64 = 0.0;
    for steps in 1..=6 {
        for _ in 0..5 {
            worst = worst.max(partition_deviation(&random_stochastic(steps, MINI_WIDTH, &mut r)));
        }
    }
    verdict(worst <= 1e-9, format!("max |sum - 1| {worst:.2e}"))
}

fn gradients() -> Check {
    let prims = primitive_report();
    let (name, worst) = prims
        .iter()
        .cloned()
        .fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let mut e2e_worst: f64 = 0.0;
    let mut covered = true;
    for (kind, seed) in [(ChannelKind::Awgn, 11), (ChannelKind::Rayleigh, 12)] {
        let (err, parts) = e2e_gradient_error(kind, seed);
        e2e_worst = e2e_worst.max(err);
        covered &= [Partition::SemanticEncoder, Partition::ChannelEncoder, Partition::ChannelDecoder]
            .iter()
            .all(|p| parts.contains(p));
    }
    verdict(
        worst <= 1e-4 && e2e_worst <= 1e-3 && covered,
        format!(
            "{} primitives, worst {name} {worst:.2e}; end-to-end {e2e_worst:.2e}",
            prims.len()
        ),
    )
}

fn power(data: &Dataset, trained: &[&Model]) -> Check {
    let mut worst: f64 = 0.0;
    let mut batches = 0;
    let fresh: Vec<Model> = (0..3)
        .map(|s| Model::new(ModelConfig::default(), &mut rng_stream(40 + s, 0)).unwrap())
        .collect();
    for model in fresh.iter().chain(trained.iter().copied()) {
        for (i, u) in data.utterances.iter().enumerate() {
            for kind in [ChannelKind::Awgn, ChannelKind::Rayleigh] {
                let step = model
                    .step(&u.spectrum, u.target.tokens(), kind, 0.0, &mut rng_stream(9, i as u64))
                    .map_err(|e| e.to_string())?;
                worst = worst.max((step.tx_power - 1.0).abs());
                let x = model.channel_encode(&model.semantic_encode(&u.spectrum).unwrap()).unwrap();
                let flat: Vec<f64> = x.iter().flat_map(|c| [c.re, c.im]).collect();
                worst = worst.max((mean_symbol_power(&flat) - 1.0).abs());
                batches += 2;
            }
        }
    }
    verdict(worst <= 1e-9, format!("{batches} transmissions, max |P - 1| {worst:.2e}"))
}

fn channel_stats() -> Check {
    let mut detail = Vec::new();
    let mut pass = true;
    for (i, snr) in [0.0, 10.0, 20.0].into_iter().enumerate() {
        let n = 1_000_000;
        let r = Realization::draw(ChannelKind::Awgn, snr, n, &mut rng_stream(100 + i as u64, 0));
        let v = r.noise.iter().map(|w| w.norm_sqr()).sum::<f64>() / n as f64;
        let dev = v / snr_to_noise_variance(snr, 1.0) - 1.0;
        pass &= dev.abs() < 0.01;
        detail.push(format!("{snr} dB {:+.3}%", 100.0 * dev));
    }
    let mut g = rng_stream(3, 1);
    let n = 100_000;
    let mean = (0..n)
        .map(|_| Realization::draw(ChannelKind::Rayleigh, f64::INFINITY, 0, &mut g).gain.norm_sqr())
        .sum::<f64>()
        / n as f64;
    pass &= (mean - 1.0).abs() < 0.02;
    detail.push(format!("E|h|^2 {mean:.4}"));
    verdict(pass, detail.join(", "))
}

fn train_cer(model: &Model, data: &Dataset) -> f64 {
    evaluate(model, data, &[ChannelKind::Awgn], &[f64::INFINITY], 1).unwrap()[0].cer
}

fn overfit(outcome: &TrainOutcome, data: &Dataset) -> Check {
    let losses: Vec<f64> = outcome.epochs.iter().map(|e| e.mean_loss).collect();
    let windows: Vec<f64> = losses.chunks(10).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
    let rises = windows.windows(2).filter(|w| w[1] >= w[0]).count();
    let cer = train_cer(&outcome.model, data);
    verdict(
        cer <= 0.10 && rises == 0 && losses.len() <= 500,
        format!(
            "{} epochs, loss {:.3} -> {:.4}, {rises} non-decreasing 10-epoch windows, train CER {cer:.3}",
            losses.len(),
            losses[0],
            losses[losses.len() - 1]
        ),
    )
}

fn robustness(model: &Model, data: &Dataset) -> Check {
    let channels = [ChannelKind::Awgn, ChannelKind::Rayleigh];
    let mut rows = Vec::new();
    for seed in 1..=5 {
        rows.extend(evaluate(model, data, &channels, &EVAL_SNRS, seed).map_err(|e| e.to_string())?);
    }
    let mut detail = Vec::new();
    let mut pass = true;
    for kind in channels {
        let (x, y): (Vec<f64>, Vec<f64>) =
            rows.iter().filter(|r| r.channel == kind).map(|r| (r.snr_db, r.cer)).unzip();
        match spearman(&x, &y) {
            Some((rho, p)) => {
                pass &= rho < 0.0 && p < 0.01;
                detail.push(format!("{kind} rho {rho:.3} p {p:.1e}"));
            }
            None => {
                pass = false;
                detail.push(format!("{kind} constant CER"));
            }
        }
    }
    let mean = |k: ChannelKind| {
        let v: Vec<f64> = rows.iter().filter(|r| r.channel == k).map(|r| r.cer).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (a, r) = (mean(ChannelKind::Awgn), mean(ChannelKind::Rayleigh));
    pass &= r >= a;
    detail.push(format!("mean CER awgn {a:.3} rayleigh {r:.3}"));
    verdict(pass, detail.join(", "))
}

fn baseline() -> Check {
    let mut r = rng(21);
    let texts: Vec<String> = (0..200).map(|_| random_sentence(&mut r)).collect();
    let t = TextTransceiver::from_corpus(&texts).map_err(|e| e.to_string())?;
    let rows = evaluate_baseline(&t, &texts, &[ChannelKind::Awgn], &[18.0, -6.0], 1)
        .map_err(|e| e.to_string())?;
    let (high, low) = (rows[0].cer, rows[1].cer);
    verdict(
        high < 0.01 && low > 0.2,
        format!("{} sentences, CER {high:.4} at 18 dB, {low:.4} at -6 dB", rows[0].count),
    )
}

fn polar() -> Check {
    let mismatches = sc_mismatches(1000, 3.0, 3);
    let (sc, scl) = block_errors(10_000, 4, 3.0, 9);
    verdict(
        mismatches == 0 && scl < sc,
        format!("list-1 vs SC mismatches {mismatches}/1000; block errors at 3 dB SC {sc} vs SCL4 {scl} of 10000"),
    )
}

fn metrics() -> Check {
    let mut r = rng(11);
    for _ in 0..1000 {
        let a = random_text(&mut r, 30);
        let b = random_text(&mut r, 30);
        let chars = |s: &str| s.chars().collect::<Vec<_>>();
        let words = |s: &str| s.split(' ').filter(|w| !w.is_empty()).map(String::from).collect::<Vec<_>>();
        if char_counts(&a, &b).unwrap().distance() != levenshtein(&chars(&a), &chars(&b))
            || word_counts(&a, &b).distance() != levenshtein(&words(&a), &words(&b))
        {
            return Err(format!("mismatch on {a:?} / {b:?}"));
        }
    }
    let cat = edit_counts(&['c', 'a', 't'], &['c', 'u', 't']);
    let examples = [
        (cat.substitutions, cat.deletions, cat.insertions) == (1, 0, 0),
        edit_counts(&['a'], &['x', 'y', 'z']).distance() == 3,
        cer("semantic", "semantik") == Ok(0.125),
        cer("a", "xyz") == Ok(3.0),
        wer("the cat sat", "the cat") == Ok(1.0 / 3.0),
        wer("cat", "the cat sat") == Ok(2.0),
        wer("dog", "the cat sat") == Ok(3.0),
    ];
    let ok = examples.iter().filter(|b| **b).count();
    verdict(ok == examples.len(), format!("1000 pairs agree; {ok}/{} worked examples", examples.len()))
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(BIN).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn same_bytes(a: &Path, b: &Path) -> Result<bool, String> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
    Ok(read(a)? == read(b)?)
}

fn determinism(dir: &Path) -> Check {
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let mut compared = Vec::new();
    for run in ["a", "b"] {
        let d = dir.join(run);
        cli(&["synth", "--seed", "3", "--count", "4", "--out", &s(&d.join("corpus"))])?;
        let cfg = d.join("train.toml");
        std::fs::write(&cfg, "[train]\nepochs = 2\nbatch_size = 2\nlearning_rate = 0.05\ngrad_clip = 1.0\nsnr_db = 8.0\n")
            .map_err(|e| e.to_string())?;
        let manifest = s(&d.join("corpus/manifest.tsv"));
        cli(&["train", "--config", &s(&cfg), "--manifest", &manifest, "--out", &s(&d.join("m.ckpt"))])?;
        cli(&["eval", "--ckpt", &s(&d.join("m.ckpt")), "--manifest", &manifest, "--snrs=-6:18:6", "--seed", "4", "--out", &s(&d.join("eval.csv"))])?;
        cli(&["baseline-eval", "--manifest", &manifest, "--snrs=-6,18", "--seed", "4", "--out", &s(&d.join("base.csv"))])?;
    }
    for f in ["corpus/manifest.tsv", "corpus/utt0003.wav", "m.ckpt", "m.ckpt.loss.csv", "eval.csv", "base.csv", "base.csv.meta.json"] {
        if !same_bytes(&dir.join("a").join(f), &dir.join("b").join(f))? {
            return Err(format!("{f} differs between identical runs"));
        }
        compared.push(f);
    }
    Ok(format!("{} outputs byte-identical across repeated runs", compared.len()))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let manifest = synth_corpus(CORPUS_SEED, 20, &tmp.path().join("corpus")).expect("synthetic corpus");
    let data = load_dataset(&manifest, &ModelConfig::default()).expect("features");

    let mut failures = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Check| {
        let t = Instant::now();
        let result = f();
        let secs = t.elapsed().as_secs_f64();
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        if result.is_err() {
            failures += 1;
        }
        println!("{tag} {n:>2} {name}: {detail} [{secs:.1}s]");
    };

    report(1, "ctc oracle equivalence", &mut ctc_oracle);
    report(2, "ctc partition", &mut ctc_partition);
    report(3, "gradient suite", &mut gradients);

    let mut overfit_run = None;
    let mut robust_run = None;
    let mut train_time = 0.0;
    let mut train_both = || {
        let t = Instant::now();
        overfit_run = Some(train(&desk_recipe("awgn", "inf"), &data, |_| {}));
        robust_run = Some(train(&desk_recipe("awgn", "8.0"), &data, |_| {}));
        train_time = t.elapsed().as_secs_f64();
    };
    train_both();
    let overfit_run = overfit_run.unwrap();
    let robust_run = robust_run.unwrap();
    let trained: Vec<&Model> = [&overfit_run, &robust_run]
        .iter()
        .filter_map(|r| r.as_ref().ok().map(|o| &o.model))
        .collect();

    report(4, "power constraint", &mut || power(&data, &trained));
    report(5, "channel statistics", &mut channel_stats);
    report(6, "overfit sanity", &mut || match &overfit_run {
        Ok(o) => overfit(o, &data).map(|d| format!("{d}; both trainings took {train_time:.0}s")),
        Err(e) => Err(e.to_string()),
    });
    report(7, "robustness trend", &mut || match &robust_run {
        Ok(o) => robustness(&o.model, &data),
        Err(e) => Err(e.to_string()),
    });
    report(8, "baseline cliff", &mut baseline);
    report(9, "polar list decoding", &mut polar);
    report(10, "metric oracles", &mut metrics);
    report(11, "cli determinism", &mut || determinism(&tmp.path().join("det")));

    if failures > 0 {
        println!("{failures} criterion(s) failed");
        std::process::exit(1);
    }
}
