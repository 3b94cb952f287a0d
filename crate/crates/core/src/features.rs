//! Frame-wise cepstral features and utterance-level pooling.
//!
//! Three extractors share one output layout: `n_cepstra` static
//! coefficients followed by their deltas and double deltas, one row every
//! `hop_s` seconds.
//!
//! * SFFCC: log SFF envelope spectrum, mirrored to an even sequence, inverse
//!   FFT, real part.
//! * MFCC-SFF: squared SFF envelope spectrum, mel filterbank, log, DCT-II.
//! * MFCC: Hamming-windowed STFT power spectrum, mel filterbank, log, DCT-II.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::audio::SignalBuffer;
use crate::error::{Error, Result};
use crate::sff::{hop_indices, sff_sampled_envelopes, SffConfig};
use crate::transforms::{self, DctPlan, MelFilterbank};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Mfcc,
    Sffcc,
    MfccSff,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 3] = [FeatureKind::Mfcc, FeatureKind::Sffcc, FeatureKind::MfccSff];

    /// Name used on the command line and in reports.
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::Sffcc => "sffcc",
            FeatureKind::MfccSff => "mfcc-sff",
        }
    }

    /// Name used in table headers.
    pub fn display_name(self) -> &'static str {
        match self {
            FeatureKind::Mfcc => "MFCC",
            FeatureKind::Sffcc => "SFFCC",
            FeatureKind::MfccSff => "MFCC-SFF",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mfcc" => Ok(FeatureKind::Mfcc),
            "sffcc" => Ok(FeatureKind::Sffcc),
            "mfcc-sff" | "mfcc_sff" => Ok(FeatureKind::MfccSff),
            other => Err(Error::InvalidArgument(format!("unknown feature kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Static coefficients kept per frame, including the 0th.
    pub n_cepstra: usize,
    /// Mel filters applied to the SFF spectrum.
    pub n_mel_filters: usize,
    /// Mel filters applied to the STFT spectrum of the baseline MFCC.
    pub baseline_mel_filters: usize,
    pub hop_s: f64,
    /// Analysis window, STFT path only.
    pub window_s: f64,
    /// Half-width `M` of the delta regression.
    pub delta_window: usize,
    /// Lower clamp applied before every logarithm.
    pub log_floor: f64,
    pub mel_f_min_hz: f64,
    /// Upper mel band edge; Nyquist when absent.
    pub mel_f_max_hz: Option<f64>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            n_cepstra: 13,
            n_mel_filters: 80,
            baseline_mel_filters: 40,
            hop_s: 0.010,
            window_s: 0.030,
            delta_window: 2,
            log_floor: 1e-10,
            mel_f_min_hz: 0.0,
            mel_f_max_hz: None,
        }
    }
}

impl FeatureConfig {
    pub fn dim(&self) -> usize {
        3 * self.n_cepstra
    }

    fn validate(&self) -> Result<()> {
        if self.n_cepstra == 0 {
            return Err(Error::InvalidArgument("n_cepstra must be positive".into()));
        }
        if self.delta_window == 0 {
            return Err(Error::InvalidArgument("delta_window must be positive".into()));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::InvalidArgument("log_floor must be positive".into()));
        }
        if !(self.hop_s > 0.0) {
            return Err(Error::InvalidArgument("hop_s must be positive".into()));
        }
        Ok(())
    }

    fn mel_band(&self, sample_rate_hz: u32) -> (f64, f64) {
        let nyquist = f64::from(sample_rate_hz) / 2.0;
        (self.mel_f_min_hz, self.mel_f_max_hz.unwrap_or(nyquist))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub frames: Vec<Vec<f64>>,
    pub feature_kind: FeatureKind,
    pub hop_s: f64,
}

impl FeatureMatrix {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn dim(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub feature_kind: FeatureKind,
    pub utterance_id: String,
}

/// Real cepstrum of one SFF envelope spectrum.
///
/// The log spectrum `L_1..L_K` is mirrored to `L_1..L_K, L_K..L_1`,
/// zero-padded to a power of two and inverse transformed; the real parts of
/// the first `n_cepstra` outputs are returned.
pub fn cepstrum_from_envelope(envelope: &[f64], n_cepstra: usize, log_floor: f64) -> Result<Vec<f64>> {
    let k = envelope.len();
    if n_cepstra > k {
        return Err(Error::InvalidArgument(format!(
            "{n_cepstra} cepstra requested from a {k}-channel spectrum"
        )));
    }
    let n = (2 * k).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (i, &v) in envelope.iter().enumerate() {
        let l = v.max(log_floor).ln();
        buf[i] = Complex64::new(l, 0.0);
        buf[2 * k - 1 - i] = Complex64::new(l, 0.0);
    }
    transforms::fft_in_place(&mut buf, true);
    let scale = 1.0 / n as f64;
    Ok(buf[..n_cepstra].iter().map(|c| c.re * scale).collect())
}

/// Regression deltas with edge replication:
/// `d[t] = sum_m m (c[t+m] - c[t-m]) / (2 sum_m m^2)`.
pub fn deltas(frames: &[Vec<f64>], delta_window: usize) -> Vec<Vec<f64>> {
    let t_max = frames.len() as isize - 1;
    let norm: f64 = 2.0 * (1..=delta_window).map(|m| (m * m) as f64).sum::<f64>();
    let at = |t: isize| &frames[t.clamp(0, t_max) as usize];
    (0..frames.len() as isize)
        .map(|t| {
            let dim = frames[t as usize].len();
            let mut d = vec![0.0; dim];
            for m in 1..=delta_window as isize {
                let (fwd, back) = (at(t + m), at(t - m));
                for j in 0..dim {
                    d[j] += m as f64 * (fwd[j] - back[j]);
                }
            }
            d.iter_mut().for_each(|v| *v /= norm);
            d
        })
        .collect()
}

/// Appends deltas and double deltas to each static frame.
pub fn append_deltas(static_frames: &[Vec<f64>], delta_window: usize) -> Vec<Vec<f64>> {
    let d1 = deltas(static_frames, delta_window);
    let d2 = deltas(&d1, delta_window);
    static_frames
        .iter()
        .zip(d1.iter().zip(&d2))
        .map(|(s, (a, b))| s.iter().chain(a).chain(b).copied().collect())
        .collect()
}

fn finish(static_frames: Vec<Vec<f64>>, kind: FeatureKind, cfg: &FeatureConfig) -> FeatureMatrix {
    FeatureMatrix {
        frames: append_deltas(&static_frames, cfg.delta_window),
        feature_kind: kind,
        hop_s: cfg.hop_s,
    }
}

fn sampled_sff_frames(sig: &SignalBuffer, sff_cfg: &SffConfig, cfg: &FeatureConfig) -> Result<Vec<Vec<f64>>> {
    let idx = hop_indices(sig.len(), sig.sample_rate_hz(), cfg.hop_s)?;
    sff_sampled_envelopes(sig, sff_cfg, &idx)
}

pub fn sffcc(sig: &SignalBuffer, sff_cfg: &SffConfig, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    cfg.validate()?;
    let static_frames = sampled_sff_frames(sig, sff_cfg, cfg)?
        .iter()
        .map(|row| cepstrum_from_envelope(row, cfg.n_cepstra, cfg.log_floor))
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(static_frames, FeatureKind::Sffcc, cfg))
}

fn log_mel_cepstra(
    fb: &MelFilterbank,
    dct: &DctPlan,
    power: &[f64],
    cfg: &FeatureConfig,
) -> Result<Vec<f64>> {
    let log_energies: Vec<f64> = fb
        .apply(power)?
        .into_iter()
        .map(|e| e.max(cfg.log_floor).ln())
        .collect();
    dct.transform_truncated(&log_energies, cfg.n_cepstra)
}

pub fn mfcc_sff(sig: &SignalBuffer, sff_cfg: &SffConfig, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    cfg.validate()?;
    if cfg.n_mel_filters < cfg.n_cepstra {
        return Err(Error::InvalidArgument(format!(
            "{} mel filters cannot yield {} cepstra",
            cfg.n_mel_filters, cfg.n_cepstra
        )));
    }
    let fs = sig.sample_rate_hz();
    let (f_min, f_max) = cfg.mel_band(fs);
    let fb = MelFilterbank::from_bin_frequencies(
        cfg.n_mel_filters,
        &sff_cfg.frequencies_hz(fs)?,
        fs,
        f_min,
        f_max,
    )?;
    let dct = DctPlan::new(cfg.n_mel_filters)?;
    let static_frames = sampled_sff_frames(sig, sff_cfg, cfg)?
        .iter()
        .map(|row| {
            let power: Vec<f64> = row.iter().map(|v| v * v).collect();
            log_mel_cepstra(&fb, &dct, &power, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(static_frames, FeatureKind::MfccSff, cfg))
}

pub fn mfcc_baseline(sig: &SignalBuffer, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    cfg.validate()?;
    if cfg.baseline_mel_filters < cfg.n_cepstra {
        return Err(Error::InvalidArgument(format!(
            "{} mel filters cannot yield {} cepstra",
            cfg.baseline_mel_filters, cfg.n_cepstra
        )));
    }
    let fs = sig.sample_rate_hz();
    let spec = transforms::stft_magnitude(sig, cfg.window_s, cfg.hop_s)?;
    let (f_min, f_max) = cfg.mel_band(fs);
    let fb = transforms::build_mel_filterbank(cfg.baseline_mel_filters, spec.n_bins(), fs, f_min, f_max)?;
    let dct = DctPlan::new(cfg.baseline_mel_filters)?;
    let static_frames = spec
        .frames
        .iter()
        .map(|mag| {
            let power: Vec<f64> = mag.iter().map(|v| v * v).collect();
            log_mel_cepstra(&fb, &dct, &power, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(static_frames, FeatureKind::Mfcc, cfg))
}

/// Runs the extractor for `kind`.
pub fn extract(
    kind: FeatureKind,
    sig: &SignalBuffer,
    sff_cfg: &SffConfig,
    cfg: &FeatureConfig,
) -> Result<FeatureMatrix> {
    match kind {
        FeatureKind::Mfcc => mfcc_baseline(sig, cfg),
        FeatureKind::Sffcc => sffcc(sig, sff_cfg, cfg),
        FeatureKind::MfccSff => mfcc_sff(sig, sff_cfg, cfg),
    }
}

/// Coordinate-wise mean over frames.
pub fn mean_pool(fm: &FeatureMatrix, utterance_id: impl Into<String>) -> Result<FeatureVector> {
    let Some(first) = fm.frames.first() else {
        return Err(Error::InvalidArgument("cannot pool an empty feature matrix".into()));
    };
    let mut sum = vec![0.0; first.len()];
    for frame in &fm.frames {
        if frame.len() != sum.len() {
            return Err(Error::LengthMismatch {
                expected: sum.len(),
                actual: frame.len(),
            });
        }
        sum.iter_mut().zip(frame).for_each(|(s, v)| *s += v);
    }
    let n = fm.frames.len() as f64;
    Ok(FeatureVector {
        values: sum.into_iter().map(|s| s / n).collect(),
        feature_kind: fm.feature_kind,
        utterance_id: utterance_id.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(freq: f64, amp: f64, fs: u32, secs: f64) -> SignalBuffer {
        let n = (f64::from(fs) * secs) as usize;
        SignalBuffer::new(
            (0..n)
                .map(|i| amp * (2.0 * PI * freq * i as f64 / f64::from(fs)).sin())
                .collect(),
            fs,
        )
        .unwrap()
    }

    #[test]
    fn kind_names() {
        for kind in FeatureKind::ALL {
            assert_eq!(kind.as_str().parse::<FeatureKind>().unwrap(), kind);
        }
        assert_eq!("mfcc_sff".parse::<FeatureKind>().unwrap(), FeatureKind::MfccSff);
        assert!("plp".parse::<FeatureKind>().is_err());
    }

    #[test]
    fn flat_spectrum_cepstrum() {
        let c = cepstrum_from_envelope(&[3.5; 256], 13, 1e-10).unwrap();
        assert!((c[0] - 3.5f64.ln()).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
        assert!(cepstrum_from_envelope(&[1.0; 8], 13, 1e-10).is_err());
        // Silent frames hit the floor instead of -inf.
        let c = cepstrum_from_envelope(&[0.0; 16], 4, 1e-10).unwrap();
        assert!((c[0] - 1e-10f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn delta_cases() {
        let constant = vec![vec![2.0, -1.0]; 6];
        let out = append_deltas(&constant, 2);
        assert!(out.iter().all(|f| f.len() == 6 && f[2..].iter().all(|&v| v == 0.0)));

        let ramp: Vec<Vec<f64>> = (0..10).map(|t| vec![t as f64]).collect();
        let d = deltas(&ramp, 2);
        for t in 2..8 {
            assert_eq!(d[t][0], 1.0);
        }
        // Replicated edges shrink the slope at the borders.
        assert!(d[0][0] < 1.0 && d[9][0] < 1.0);

        let single = append_deltas(&[vec![1.0, 2.0, 3.0]], 2);
        assert_eq!(single, vec![vec![1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]]);
    }

    #[test]
    fn pooling() {
        let fm = FeatureMatrix {
            frames: vec![vec![0.0, 4.0], vec![2.0, 6.0]],
            feature_kind: FeatureKind::Sffcc,
            hop_s: 0.01,
        };
        let v = mean_pool(&fm, "u1").unwrap();
        assert_eq!(v.values, vec![1.0, 5.0]);
        assert_eq!(v.utterance_id, "u1");
        let same = FeatureMatrix {
            frames: vec![vec![1.5, -2.0]; 4],
            ..fm.clone()
        };
        assert_eq!(mean_pool(&same, "u").unwrap().values, vec![1.5, -2.0]);
        let empty = FeatureMatrix { frames: vec![], ..fm };
        assert!(mean_pool(&empty, "u").is_err());
    }

    #[test]
    fn extractor_shapes() {
        let sig = tone(440.0, 0.3, 16000, 1.0);
        let sff = SffConfig::default();
        let cfg = FeatureConfig::default();
        let a = sffcc(&sig, &sff, &cfg).unwrap();
        let b = mfcc_sff(&sig, &sff, &cfg).unwrap();
        let c = mfcc_baseline(&sig, &cfg).unwrap();
        assert_eq!(a.n_frames(), 100);
        assert_eq!(b.n_frames(), 100);
        let stft = transforms::stft_magnitude(&sig, 0.030, 0.010).unwrap();
        assert_eq!(c.n_frames(), stft.frames.len());
        for fm in [&a, &b, &c] {
            assert!(fm.frames.iter().all(|f| f.len() == 39 && f.iter().all(|v| v.is_finite())));
        }
    }

    #[test]
    fn silent_input_gives_flat_features() {
        let sig = SignalBuffer::new(vec![0.0; 4000], 16000).unwrap();
        let fm = mfcc_sff(&sig, &SffConfig::default(), &FeatureConfig::default()).unwrap();
        for f in &fm.frames {
            assert_eq!(&f[..13], &fm.frames[0][..13]);
            assert!(f[13..].iter().all(|&v| v == 0.0));
        }
        let dc = SignalBuffer::new(vec![0.5; 8000], 16000).unwrap();
        let fm = mfcc_baseline(&dc, &FeatureConfig::default()).unwrap();
        for f in &fm.frames {
            for j in 0..13 {
                assert!((f[j] - fm.frames[0][j]).abs() < 1e-9);
            }
            assert!(f[13..].iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn bad_configs() {
        let sig = tone(440.0, 0.3, 16000, 0.1);
        let sff = SffConfig::default();
        let cfg = FeatureConfig {
            n_mel_filters: 10,
            ..FeatureConfig::default()
        };
        assert!(mfcc_sff(&sig, &sff, &cfg).is_err());
        let cfg = FeatureConfig {
            baseline_mel_filters: 12,
            ..FeatureConfig::default()
        };
        assert!(mfcc_baseline(&sig, &cfg).is_err());
        let cfg = FeatureConfig {
            delta_window: 0,
            ..FeatureConfig::default()
        };
        assert!(sffcc(&sig, &sff, &cfg).is_err());
        let wide = SffConfig {
            delta_f_hz: 10_000.0,
            ..sff
        };
        assert!(sffcc(&sig, &wide, &FeatureConfig::default()).is_err());
    }
}
