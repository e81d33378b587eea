//! Tab-separated manifests (`wav_path<TAB>transcript`) and feature loading.
//!
//! Relative WAV paths resolve against the manifest's directory. Blank lines
//! are ignored.

use std::path::{Path, PathBuf};

use super::{io_error, HarnessError, Result};
use crate::ctc::{min_alignment_len, tokenize, Transcript};
use crate::dsp::{self, Spectrum};
use crate::model::ModelConfig;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub wav_path: PathBuf,
    pub transcript: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub records: Vec<Record>,
}

impl Manifest {
    pub fn texts(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.transcript.as_str()).collect()
    }

    pub fn to_tsv(&self, base: &Path) -> String {
        let mut out = String::new();
        for r in &self.records {
            let p = r.wav_path.strip_prefix(base).unwrap_or(&r.wav_path);
            out.push_str(&format!("{}\t{}\n", p.display(), r.transcript));
        }
        out
    }
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<Manifest> {
    let base = path.parent().unwrap_or(Path::new(""));
    let bad = |line: usize, detail: String| HarnessError::Manifest {
        path: path.to_path_buf(),
        line,
        detail,
    };
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let (wav, transcript) = raw
            .split_once('\t')
            .ok_or_else(|| bad(line, "expected `wav_path<TAB>transcript`".into()))?;
        if wav.trim().is_empty() {
            return Err(bad(line, "empty wav path".into()));
        }
        let tokens = tokenize(transcript).map_err(|e| bad(line, e.to_string()))?;
        if tokens.is_empty() {
            return Err(bad(line, "empty transcript".into()));
        }
        let wav_path = base.join(wav.trim());
        if !wav_path.is_file() {
            return Err(bad(line, format!("missing audio file {}", wav_path.display())));
        }
        records.push(Record {
            wav_path,
            transcript: tokens.text(),
        });
    }
    if records.is_empty() {
        return Err(HarnessError::EmptyManifest(path.to_path_buf()));
    }
    Ok(Manifest { records })
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_manifest(&text, path)
}

/// An utterance ready for the model.
#[derive(Clone, Debug)]
pub struct Utterance {
    pub transcript: String,
    pub target: Transcript,
    pub spectrum: Spectrum,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub utterances: Vec<Utterance>,
}

impl Dataset {
    /// Utterances whose encoder output is long enough for their transcript,
    /// and the number left out.
    pub fn alignable(&self, config: &ModelConfig) -> (Vec<&Utterance>, usize) {
        let (keep, drop): (Vec<&Utterance>, Vec<&Utterance>) =
            self.utterances.iter().partition(|u| {
                config.steps_for(u.spectrum.n_frames()) >= min_alignment_len(u.target.tokens())
            });
        (keep, drop.len())
    }
}

/// Reads every WAV and computes normalized spectra with the model's framing.
pub fn load_dataset(manifest: &Manifest, config: &ModelConfig) -> Result<Dataset> {
    let utterances = manifest
        .records
        .iter()
        .map(|r| {
            let audio = dsp::read_wav(&r.wav_path)?;
            let spectrum = dsp::features(&audio.samples, config.frame_len, config.hop)?;
            Ok(Utterance {
                transcript: r.transcript.clone(),
                target: tokenize(&r.transcript).expect("validated when the manifest was parsed"),
                spectrum,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { utterances })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn malformed_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.wav"), b"").unwrap();
        let m = dir.path().join("m.tsv");
        let text = "a.wav\thello\na.wav\tworld\nno tab here\n";
        match parse_manifest(text, &m) {
            Err(HarnessError::Manifest { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let ok = parse_manifest("a.wav\tHello\n\n", &m).unwrap();
        assert_eq!(ok.records[0].transcript, "hello");
    }

    #[test]
    fn empty_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.tsv");
        assert!(matches!(parse_manifest("\n\n", &m), Err(HarnessError::EmptyManifest(_))));
        assert!(matches!(
            parse_manifest("nope.wav\thi\n", &m),
            Err(HarnessError::Manifest { line: 1, .. })
        ));
        assert!(matches!(
            parse_manifest("nope.wav\tcafé\n", &m),
            Err(HarnessError::Manifest { line: 1, .. })
        ));
    }
}
