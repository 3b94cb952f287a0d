//! Audio and corpus ingest.
//!
//! WAV files are parsed by hand (PCM 8/16/24/32-bit integer and 32-bit IEEE
//! float, little-endian). Multichannel audio is averaged down to mono and
//! integer samples are scaled by the full-scale value of their type.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WAVE_FORMAT_PCM: u16 = 0x0001;
const WAVE_FORMAT_IEEE_FLOAT: u16 = 0x0003;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Mono audio samples in `[-1, 1]` with their sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBuffer {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl SignalBuffer {
    /// Builds a buffer, rejecting empty or non-finite input and samples
    /// outside `[-1, 1]`.
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidArgument("signal has no samples".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "sample {i} ({}) is not a finite value in [-1, 1]",
                samples[i]
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Multiplies every sample by `gain`; fails if the result leaves `[-1, 1]`.
    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(
            self.samples.iter().map(|s| s * gain).collect(),
            self.sample_rate_hz,
        )
    }
}

/// Reads a WAV file into a mono [`SignalBuffer`].
pub fn load_wav(path: impl AsRef<Path>) -> Result<SignalBuffer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_wav(&bytes)
}

struct FmtChunk {
    format_tag: u16,
    channels: u16,
    sample_rate: u32,
    block_align: u16,
    bits_per_sample: u16,
}

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk> {
    if body.len() < 16 {
        return Err(Error::MalformedWav(format!(
            "fmt chunk is {} bytes, need at least 16",
            body.len()
        )));
    }
    let mut format_tag = read_u16(body, 0);
    let bits_per_sample = read_u16(body, 14);
    if format_tag == WAVE_FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) then the SubFormat GUID whose
        // first two bytes carry the actual format tag.
        if body.len() < 40 {
            return Err(Error::MalformedWav("truncated WAVE_FORMAT_EXTENSIBLE fmt chunk".into()));
        }
        format_tag = read_u16(body, 24);
    }
    Ok(FmtChunk {
        format_tag,
        channels: read_u16(body, 2),
        sample_rate: read_u32(body, 4),
        block_align: read_u16(body, 12),
        bits_per_sample,
    })
}

/// Parses an in-memory RIFF/WAVE image.
pub fn parse_wav(bytes: &[u8]) -> Result<SignalBuffer> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::MalformedWav("missing RIFF/WAVE header".into()));
    }

    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4) as usize;
        let start = pos + 8;
        // A truncated final chunk keeps whatever bytes are present.
        let end = start.saturating_add(size).min(bytes.len());
        let body = &bytes[start..end];
        match id {
            b"fmt " => fmt = Some(parse_fmt(body)?),
            b"data" => data = Some(body),
            _ => {}
        }
        pos = start.saturating_add(size).saturating_add(size & 1);
    }

    let fmt = fmt.ok_or_else(|| Error::MalformedWav("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::MalformedWav("no data chunk".into()))?;

    let supported = match fmt.format_tag {
        WAVE_FORMAT_PCM => matches!(fmt.bits_per_sample, 8 | 16 | 24 | 32),
        WAVE_FORMAT_IEEE_FLOAT => fmt.bits_per_sample == 32,
        _ => false,
    };
    if !supported {
        return Err(Error::UnsupportedEncoding {
            format_tag: fmt.format_tag,
            bits_per_sample: fmt.bits_per_sample,
        });
    }
    if fmt.channels == 0 || fmt.sample_rate == 0 {
        return Err(Error::MalformedWav("zero channels or zero sample rate".into()));
    }
    let bytes_per_sample = usize::from(fmt.bits_per_sample / 8);
    let channels = usize::from(fmt.channels);
    let frame_bytes = bytes_per_sample * channels;
    if usize::from(fmt.block_align) != frame_bytes {
        return Err(Error::MalformedWav(format!(
            "block align {} does not match {} channel(s) of {} bits",
            fmt.block_align, fmt.channels, fmt.bits_per_sample
        )));
    }

    let decode = |b: &[u8]| -> f64 {
        match (fmt.format_tag, fmt.bits_per_sample) {
            (WAVE_FORMAT_PCM, 8) => (f64::from(b[0]) - 128.0) / 128.0,
            (WAVE_FORMAT_PCM, 16) => f64::from(i16::from_le_bytes([b[0], b[1]])) / 32768.0,
            (WAVE_FORMAT_PCM, 24) => {
                let v = i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8;
                f64::from(v) / 8_388_608.0
            }
            (WAVE_FORMAT_PCM, 32) => {
                f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])) / 2_147_483_648.0
            }
            _ => f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
        }
    };

    let mut samples = Vec::with_capacity(data.len() / frame_bytes);
    for frame in data.chunks_exact(frame_bytes) {
        let sum: f64 = frame.chunks_exact(bytes_per_sample).map(decode).sum();
        let mono = sum / channels as f64;
        if !mono.is_finite() {
            return Err(Error::MalformedWav("non-finite float sample".into()));
        }
        samples.push(mono.clamp(-1.0, 1.0));
    }
    if samples.is_empty() {
        return Err(Error::MalformedWav("data chunk holds no complete frames".into()));
    }
    SignalBuffer::new(samples, fmt.sample_rate)
}

/// Encodes a buffer as a 16-bit mono PCM WAV image.
pub fn encode_wav_pcm16(sig: &SignalBuffer) -> Vec<u8> {
    let data_len = sig.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sig.sample_rate_hz().to_le_bytes());
    out.extend_from_slice(&(sig.sample_rate_hz() * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in sig.samples() {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

/// Writes a buffer to disk as 16-bit mono PCM.
pub fn write_wav_pcm16(path: impl AsRef<Path>, sig: &SignalBuffer) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_wav_pcm16(sig))
        .map_err(|e| Error::io(path, e))
}

/// Severity class; the discriminant is the class index used everywhere else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeverityClass {
    Healthy = 0,
    Mild = 1,
    Severe = 2,
}

impl SeverityClass {
    pub const ALL: [SeverityClass; 3] =
        [SeverityClass::Healthy, SeverityClass::Mild, SeverityClass::Severe];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SeverityClass::Healthy => "healthy",
            SeverityClass::Mild => "mild",
            SeverityClass::Severe => "severe",
        }
    }
}

impl fmt::Display for SeverityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SeverityClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "healthy" | "0" => Ok(SeverityClass::Healthy),
            "mild" | "1" => Ok(SeverityClass::Mild),
            "severe" | "2" => Ok(SeverityClass::Severe),
            other => Err(Error::UnknownClassLabel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeakingTask {
    Vowel,
    Sentence,
    ReadText,
}

impl SpeakingTask {
    pub fn as_str(self) -> &'static str {
        match self {
            SpeakingTask::Vowel => "vowel",
            SpeakingTask::Sentence => "sentence",
            SpeakingTask::ReadText => "read_text",
        }
    }
}

impl fmt::Display for SpeakingTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpeakingTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "vowel" => Ok(SpeakingTask::Vowel),
            "sentence" => Ok(SpeakingTask::Sentence),
            "read_text" => Ok(SpeakingTask::ReadText),
            other => Err(Error::UnknownTask(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub audio_path: PathBuf,
    pub speaker_id: String,
    pub class_label: SeverityClass,
    pub task: SpeakingTask,
    pub utterance_id: String,
}

/// Ordered list of recordings. Construction through [`CorpusManifest::new`]
/// guarantees unique `(speaker_id, utterance_id)` pairs and one class per
/// speaker.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusManifest {
    entries: Vec<ManifestEntry>,
}

pub const MANIFEST_HEADER: [&str; 5] =
    ["audio_path", "speaker_id", "class_label", "task", "utterance_id"];

impl CorpusManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        validate_entries(&entries, |i| i + 1)?;
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries whose task passes `keep`, order preserved.
    pub fn filter(&self, keep: impl Fn(&ManifestEntry) -> bool) -> CorpusManifest {
        CorpusManifest {
            entries: self.entries.iter().filter(|e| keep(e)).cloned().collect(),
        }
    }

    /// Distinct speakers in sorted order.
    pub fn speakers(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| e.speaker_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Serializes back to the manifest CSV layout.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(MANIFEST_HEADER)?;
        for e in &self.entries {
            w.write_record([
                e.audio_path.to_string_lossy().as_ref(),
                &e.speaker_id,
                e.class_label.as_str(),
                e.task.as_str(),
                &e.utterance_id,
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
    }
}

fn validate_entries(entries: &[ManifestEntry], line_of: impl Fn(usize) -> usize) -> Result<()> {
    let mut seen = HashSet::new();
    let mut class_of: HashMap<&str, SeverityClass> = HashMap::new();
    for (i, e) in entries.iter().enumerate() {
        if !seen.insert((e.speaker_id.as_str(), e.utterance_id.as_str())) {
            log::debug!("duplicate utterance on line {}", line_of(i));
            return Err(Error::DuplicateUtterance {
                speaker_id: e.speaker_id.clone(),
                utterance_id: e.utterance_id.clone(),
            });
        }
        match class_of.get(e.speaker_id.as_str()) {
            Some(&c) if c != e.class_label => {
                return Err(Error::ConflictingClass {
                    speaker_id: e.speaker_id.clone(),
                    first: c.to_string(),
                    second: e.class_label.to_string(),
                })
            }
            Some(_) => {}
            None => {
                class_of.insert(&e.speaker_id, e.class_label);
            }
        }
    }
    Ok(())
}

/// Loads a manifest CSV. Relative audio paths are resolved against the
/// directory containing the manifest.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<CorpusManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    parse_manifest(&text, base)
}

/// Parses manifest CSV text; relative paths are joined onto `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<CorpusManifest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != MANIFEST_HEADER {
        return Err(Error::Manifest {
            line: 1,
            message: format!("expected header {:?}, found {:?}", MANIFEST_HEADER.join(","), got.join(",")),
        });
    }

    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        let field = |j: usize| record.get(j).unwrap_or("").trim();
        let raw_path = PathBuf::from(field(0));
        let audio_path = if raw_path.is_relative() {
            base.join(raw_path)
        } else {
            raw_path
        };
        let speaker_id = field(1).to_string();
        let utterance_id = field(4).to_string();
        if speaker_id.is_empty() || utterance_id.is_empty() {
            return Err(Error::Manifest {
                line,
                message: "empty speaker_id or utterance_id".into(),
            });
        }
        entries.push(ManifestEntry {
            audio_path,
            speaker_id,
            class_label: field(2).parse()?,
            task: field(3).parse()?,
            utterance_id,
        });
    }
    validate_entries(&entries, |i| i + 2)?;
    Ok(CorpusManifest { entries })
}

/// Distinct-speaker counts per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub speakers_per_class: [usize; 3],
    pub balanced: bool,
}

pub fn check_balance(manifest: &CorpusManifest) -> BalanceReport {
    let mut speakers: [BTreeSet<&str>; 3] = Default::default();
    for e in manifest.entries() {
        speakers[e.class_label.index()].insert(&e.speaker_id);
    }
    let counts = [speakers[0].len(), speakers[1].len(), speakers[2].len()];
    BalanceReport {
        speakers_per_class: counts,
        balanced: counts.iter().all(|&c| c == counts[0]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_image(format_tag: u16, channels: u16, bits: u16, rate: u32, data: &[u8]) -> Vec<u8> {
        let block = channels * bits / 8;
        let mut v = Vec::new();
        v.extend_from_slice(b"RIFF");
        v.extend_from_slice(&(36 + data.len() as u32).to_le_bytes());
        v.extend_from_slice(b"WAVE");
        v.extend_from_slice(b"fmt ");
        v.extend_from_slice(&16u32.to_le_bytes());
        v.extend_from_slice(&format_tag.to_le_bytes());
        v.extend_from_slice(&channels.to_le_bytes());
        v.extend_from_slice(&rate.to_le_bytes());
        v.extend_from_slice(&(rate * u32::from(block)).to_le_bytes());
        v.extend_from_slice(&block.to_le_bytes());
        v.extend_from_slice(&bits.to_le_bytes());
        v.extend_from_slice(b"data");
        v.extend_from_slice(&(data.len() as u32).to_le_bytes());
        v.extend_from_slice(data);
        v
    }

    #[test]
    fn pcm16_scaling() {
        let data: Vec<u8> = [0i16, 16384, -16384]
            .iter()
            .flat_map(|s| s.to_le_bytes())
            .collect();
        let sig = parse_wav(&wav_image(1, 1, 16, 16000, &data)).unwrap();
        assert_eq!(sig.samples(), &[0.0, 0.5, -0.5]);
        assert_eq!(sig.sample_rate_hz(), 16000);
    }

    #[test]
    fn stereo_float_is_averaged() {
        let data: Vec<u8> = [1.0f32, 0.0].iter().flat_map(|s| s.to_le_bytes()).collect();
        let sig = parse_wav(&wav_image(3, 2, 32, 8000, &data)).unwrap();
        assert_eq!(sig.samples(), &[0.5]);
    }

    #[test]
    fn other_integer_depths() {
        let sig = parse_wav(&wav_image(1, 1, 8, 8000, &[128, 192, 0])).unwrap();
        assert_eq!(sig.samples(), &[0.0, 0.5, -1.0]);

        let s24: Vec<u8> = [0x40_0000i32, -0x40_0000]
            .iter()
            .flat_map(|s| s.to_le_bytes()[..3].to_vec())
            .collect();
        let sig = parse_wav(&wav_image(1, 1, 24, 8000, &s24)).unwrap();
        assert_eq!(sig.samples(), &[0.5, -0.5]);

        let s32: Vec<u8> = [i32::MIN, 1 << 30].iter().flat_map(|s| s.to_le_bytes()).collect();
        let sig = parse_wav(&wav_image(1, 1, 32, 8000, &s32)).unwrap();
        assert_eq!(sig.samples(), &[-1.0, 0.5]);
    }

    #[test]
    fn distinct_error_values() {
        assert!(matches!(
            load_wav("/definitely/not/here.wav"),
            Err(Error::MissingFile(_))
        ));
        assert!(matches!(parse_wav(b"RIFX0000WAVE"), Err(Error::MalformedWav(_))));
        // IMA ADPCM
        assert!(matches!(
            parse_wav(&wav_image(0x11, 1, 4, 8000, &[0u8; 8])),
            Err(Error::UnsupportedEncoding { format_tag: 0x11, .. })
        ));
        assert!(matches!(
            parse_wav(&wav_image(1, 1, 16, 8000, &[])),
            Err(Error::MalformedWav(_))
        ));
    }

    #[test]
    fn extensible_header_uses_subformat() {
        let mut v = Vec::new();
        v.extend_from_slice(b"RIFF");
        v.extend_from_slice(&0u32.to_le_bytes());
        v.extend_from_slice(b"WAVE");
        v.extend_from_slice(b"fmt ");
        v.extend_from_slice(&40u32.to_le_bytes());
        v.extend_from_slice(&WAVE_FORMAT_EXTENSIBLE.to_le_bytes());
        v.extend_from_slice(&1u16.to_le_bytes());
        v.extend_from_slice(&16000u32.to_le_bytes());
        v.extend_from_slice(&32000u32.to_le_bytes());
        v.extend_from_slice(&2u16.to_le_bytes());
        v.extend_from_slice(&16u16.to_le_bytes());
        v.extend_from_slice(&22u16.to_le_bytes());
        v.extend_from_slice(&16u16.to_le_bytes());
        v.extend_from_slice(&4u32.to_le_bytes());
        v.extend_from_slice(&1u16.to_le_bytes());
        v.extend_from_slice(&[0u8; 14]);
        v.extend_from_slice(b"data");
        v.extend_from_slice(&2u32.to_le_bytes());
        v.extend_from_slice(&16384i16.to_le_bytes());
        assert_eq!(parse_wav(&v).unwrap().samples(), &[0.5]);
    }

    #[test]
    fn manifest_parsing_and_errors() {
        let base = Path::new("/corpus");
        let ok = "audio_path,speaker_id,class_label,task,utterance_id\n\
                  a.wav,s1,0,vowel,u1\n\
                  /abs/b.wav,s2,severe,read_text,u1\n";
        let m = parse_manifest(ok, base).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.entries()[0].audio_path, PathBuf::from("/corpus/a.wav"));
        assert_eq!(m.entries()[1].class_label, SeverityClass::Severe);
        assert_eq!(m.entries()[1].task, SpeakingTask::ReadText);

        let bad_class = "audio_path,speaker_id,class_label,task,utterance_id\n\
                         a.wav,s1,moderate,vowel,u1\n";
        let err = parse_manifest(bad_class, base).unwrap_err();
        assert!(err.to_string().contains("unknown class label"), "{err}");

        let conflict = "audio_path,speaker_id,class_label,task,utterance_id\n\
                        a.wav,s1,healthy,vowel,u1\n\
                        b.wav,s1,severe,vowel,u2\n";
        let err = parse_manifest(conflict, base).unwrap_err();
        assert!(err.to_string().contains("conflicting class for speaker"), "{err}");

        let dup = "audio_path,speaker_id,class_label,task,utterance_id\n\
                   a.wav,s1,healthy,vowel,u1\n\
                   b.wav,s1,healthy,sentence,u1\n";
        assert!(matches!(
            parse_manifest(dup, base),
            Err(Error::DuplicateUtterance { .. })
        ));

        let bad_task = "audio_path,speaker_id,class_label,task,utterance_id\n\
                        a.wav,s1,healthy,monologue,u1\n";
        assert!(matches!(parse_manifest(bad_task, base), Err(Error::UnknownTask(_))));

        let bad_header = "path,speaker,class,task,utt\n";
        assert!(matches!(
            parse_manifest(bad_header, base),
            Err(Error::Manifest { line: 1, .. })
        ));
        assert!(matches!(
            load_manifest("/nope/manifest.csv"),
            Err(Error::MissingFile(_))
        ));
    }

    fn entry(speaker: &str, utt: &str, class: SeverityClass) -> ManifestEntry {
        ManifestEntry {
            audio_path: PathBuf::from(format!("{speaker}_{utt}.wav")),
            speaker_id: speaker.into(),
            class_label: class,
            task: SpeakingTask::Vowel,
            utterance_id: utt.into(),
        }
    }

    #[test]
    fn balance_counts_speakers_once() {
        let mut entries = Vec::new();
        for (class, n) in [(SeverityClass::Healthy, 50), (SeverityClass::Mild, 25), (SeverityClass::Severe, 25)] {
            for s in 0..n {
                for u in 0..3 {
                    entries.push(entry(&format!("{class}{s}"), &format!("u{u}"), class));
                }
            }
        }
        let report = check_balance(&CorpusManifest::new(entries).unwrap());
        assert_eq!(report.speakers_per_class, [50, 25, 25]);
        assert!(!report.balanced);

        let mut entries = Vec::new();
        for class in SeverityClass::ALL {
            for s in 0..20 {
                entries.push(entry(&format!("{class}{s}"), "u", class));
            }
        }
        assert!(check_balance(&CorpusManifest::new(entries).unwrap()).balanced);

        let empty = check_balance(&CorpusManifest::default());
        assert_eq!(empty.speakers_per_class, [0, 0, 0]);
        assert!(empty.balanced);
    }

    #[test]
    fn manifest_csv_round_trip_preserves_order() {
        let m = CorpusManifest::new(vec![
            entry("b", "1", SeverityClass::Mild),
            entry("a", "1", SeverityClass::Healthy),
        ])
        .unwrap();
        let text = m.to_csv().unwrap();
        let back = parse_manifest(&text, Path::new("")).unwrap();
        assert_eq!(back, m);
    }
}
