//! Synthetic three-class corpora.
//!
//! Each speaker is a harmonic source with its own fundamental. The class
//! sets the spectral tilt of the harmonics, the depth of a slow amplitude
//! modulation and the amount of cycle-to-cycle pitch jitter, so the classes
//! are separable from spectral envelope features alone.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::audio::{write_wav_pcm16, CorpusManifest, ManifestEntry, SeverityClass, SignalBuffer, SpeakingTask};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub speakers_per_class: usize,
    pub utterances_per_speaker: usize,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            speakers_per_class: 10,
            utterances_per_speaker: 3,
            duration_s: 0.5,
            sample_rate_hz: 16000,
            seed: 7,
        }
    }
}

/// Per-class source parameters: (harmonic tilt exponent, AM depth, jitter).
fn class_params(class: SeverityClass) -> (f64, f64, f64) {
    match class {
        SeverityClass::Healthy => (0.8, 0.05, 0.002),
        SeverityClass::Mild => (1.5, 0.25, 0.01),
        SeverityClass::Severe => (2.2, 0.5, 0.02),
    }
}

#[derive(Debug, Clone, Copy)]
struct Voice {
    f0: f64,
    tilt: f64,
    am_depth: f64,
    am_rate: f64,
    jitter: f64,
}

fn voice_for(class: SeverityClass, rng: &mut impl Rng) -> Voice {
    let (tilt, am_depth, jitter) = class_params(class);
    Voice {
        f0: rng.random_range(100.0..180.0),
        tilt: tilt + rng.random_range(-0.1..0.1),
        am_depth,
        am_rate: rng.random_range(4.0..8.0),
        jitter,
    }
}

fn render(voice: &Voice, spec: &SynthSpec, rng: &mut impl Rng) -> Result<SignalBuffer> {
    let fs = f64::from(spec.sample_rate_hz);
    let n = (spec.duration_s * fs).round() as usize;
    let f0 = voice.f0 * rng.random_range(0.97..1.03);
    let n_harm = ((0.45 * fs) / f0).floor().max(1.0) as usize;
    let amps: Vec<f64> = (1..=n_harm).map(|h| (h as f64).powf(-voice.tilt)).collect();
    let am_phase = rng.random_range(0.0..2.0 * PI);
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");

    let mut phase = 0.0f64;
    let mut period_scale = 1.0;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / fs;
        let before = phase;
        phase += 2.0 * PI * f0 * period_scale / fs;
        // New jittered period at each cycle boundary.
        if (phase / (2.0 * PI)).floor() > (before / (2.0 * PI)).floor() {
            period_scale = 1.0 + voice.jitter * gauss.sample(rng);
        }
        let mut v: f64 = amps
            .iter()
            .enumerate()
            .map(|(h, a)| a * ((h + 1) as f64 * phase).sin())
            .sum();
        v *= 1.0 + voice.am_depth * (2.0 * PI * voice.am_rate * t + am_phase).sin();
        v += 1e-3 * gauss.sample(rng);
        samples.push(v);
    }
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        samples.iter_mut().for_each(|v| *v *= 0.8 / peak);
    }
    SignalBuffer::new(samples, spec.sample_rate_hz)
}

/// A generated utterance with its labels.
#[derive(Debug, Clone)]
pub struct SynthUtterance {
    pub speaker_id: String,
    pub utterance_id: String,
    pub class_label: SeverityClass,
    pub task: SpeakingTask,
    pub signal: SignalBuffer,
}

/// Generates every utterance of the corpus in memory. Output depends only
/// on `spec`.
pub fn generate(spec: &SynthSpec) -> Result<Vec<SynthUtterance>> {
    if spec.speakers_per_class == 0 || spec.utterances_per_speaker == 0 || !(spec.duration_s > 0.0) {
        return Err(Error::InvalidArgument("synthetic corpus would be empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let tasks = [SpeakingTask::Vowel, SpeakingTask::Sentence, SpeakingTask::ReadText];
    let mut out = Vec::new();
    for class in SeverityClass::ALL {
        for s in 0..spec.speakers_per_class {
            let voice = voice_for(class, &mut rng);
            let speaker_id = format!("{}{:02}", class.as_str(), s);
            for u in 0..spec.utterances_per_speaker {
                out.push(SynthUtterance {
                    speaker_id: speaker_id.clone(),
                    utterance_id: format!("u{u}"),
                    class_label: class,
                    task: tasks[u % tasks.len()],
                    signal: render(&voice, spec, &mut rng)?,
                });
            }
        }
    }
    Ok(out)
}

/// Writes the corpus as 16-bit WAV files plus `manifest.csv` under `dir`
/// and returns the manifest path.
pub fn write_corpus(dir: impl AsRef<Path>, spec: &SynthSpec) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for utt in generate(spec)? {
        let name = format!("{}_{}.wav", utt.speaker_id, utt.utterance_id);
        write_wav_pcm16(dir.join(&name), &utt.signal)?;
        entries.push(ManifestEntry {
            audio_path: PathBuf::from(name),
            speaker_id: utt.speaker_id,
            class_label: utt.class_label,
            task: utt.task,
            utterance_id: utt.utterance_id,
        });
    }
    let manifest = CorpusManifest::new(entries)?;
    let path = dir.join("manifest.csv");
    fs::write(&path, manifest.to_csv()?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
