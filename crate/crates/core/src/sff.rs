//! Single frequency filtering.
//!
//! For each analysis frequency `f_k = k * delta_f` (`k = 1..=K`) the signal is
//! multiplied by `exp(-j 2π (fs/2 - f_k) n / fs)`, which moves `f_k` to the
//! Nyquist frequency, and then passed through `H(z) = 1 / (1 + r z^-1)`,
//! whose pole sits at `z = -r`. The magnitude of the filter output is the
//! amplitude envelope of channel `k`; its argument is the phase.
//!
//! Channels are independent and are computed in parallel. Output does not
//! depend on the thread count.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::SignalBuffer;
use crate::error::{Error, Result};
use crate::transforms::{Spectrogram, SpectrogramOrigin};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SffConfig {
    /// Pole magnitude, `0 < r < 1`.
    pub r: f64,
    /// Spacing of analysis frequencies in Hz.
    pub delta_f_hz: f64,
    /// Overrides the channel count derived from `delta_f_hz`.
    #[serde(default)]
    pub explicit_k: Option<usize>,
}

impl Default for SffConfig {
    fn default() -> Self {
        Self {
            r: 0.99,
            delta_f_hz: 31.25,
            explicit_k: None,
        }
    }
}

impl SffConfig {
    /// Validates against a sampling rate and returns the channel count `K`.
    pub fn channel_count(&self, sample_rate_hz: u32) -> Result<usize> {
        if !(self.r > 0.0 && self.r < 1.0) {
            return Err(Error::InvalidSffConfig(format!(
                "pole magnitude r = {} must lie in (0, 1)",
                self.r
            )));
        }
        let nyquist = f64::from(sample_rate_hz) / 2.0;
        if !(self.delta_f_hz > 0.0 && self.delta_f_hz.is_finite()) {
            return Err(Error::InvalidSffConfig(format!(
                "delta_f = {} Hz must be positive",
                self.delta_f_hz
            )));
        }
        match self.explicit_k {
            Some(0) => Err(Error::InvalidSffConfig("explicit K must be positive".into())),
            Some(k) => Ok(k),
            None => {
                let k = (nyquist / self.delta_f_hz + 1e-9).floor() as usize;
                if k == 0 {
                    Err(Error::InvalidSffConfig(format!(
                        "delta_f = {} Hz exceeds Nyquist ({nyquist} Hz); no channels",
                        self.delta_f_hz
                    )))
                } else {
                    Ok(k)
                }
            }
        }
    }

    /// Analysis frequencies `k * delta_f` for `k = 1..=K`.
    pub fn frequencies_hz(&self, sample_rate_hz: u32) -> Result<Vec<f64>> {
        let k = self.channel_count(sample_rate_hz)?;
        Ok((1..=k).map(|i| i as f64 * self.delta_f_hz).collect())
    }
}

/// Runs one channel of the filter over `samples`, calling `emit(n, y[n])`
/// for every sample.
fn run_channel(
    samples: &[f64],
    sample_rate_hz: u32,
    freq_hz: f64,
    r: f64,
    mut emit: impl FnMut(usize, Complex64),
) {
    let fs = f64::from(sample_rate_hz);
    let shift = fs / 2.0 - freq_hz;
    let mut y = Complex64::new(0.0, 0.0);
    for (n, &s) in samples.iter().enumerate() {
        // Reduce the phase to one turn before scaling by 2π.
        let turns = (shift * n as f64 / fs).fract();
        let shifted = Complex64::from_polar(s, -2.0 * PI * turns);
        y = shifted - r * y;
        emit(n, y);
    }
}

fn phase_of(y: Complex64) -> f64 {
    if y.re == 0.0 && y.im == 0.0 {
        return 0.0;
    }
    let p = y.im.atan2(y.re);
    if p <= -PI {
        PI
    } else {
        p
    }
}

/// Full-resolution envelopes and phases for every sample and channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SffDecomposition {
    // Channel-major: `envelope[k][n]`.
    envelope: Vec<Vec<f64>>,
    phase: Vec<Vec<f64>>,
    frequencies_hz: Vec<f64>,
    sample_rate_hz: u32,
    n_samples: usize,
}

impl SffDecomposition {
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_channels(&self) -> usize {
        self.frequencies_hz.len()
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn frequencies_hz(&self) -> &[f64] {
        &self.frequencies_hz
    }

    pub fn envelope(&self, n: usize, k: usize) -> f64 {
        self.envelope[k][n]
    }

    pub fn phase(&self, n: usize, k: usize) -> f64 {
        self.phase[k][n]
    }

    /// Envelope of channel `k` over time.
    pub fn channel_envelope(&self, k: usize) -> &[f64] {
        &self.envelope[k]
    }

    pub fn channel_phase(&self, k: usize) -> &[f64] {
        &self.phase[k]
    }

    /// SFF magnitude spectrum at sample `n`.
    pub fn envelope_row(&self, n: usize) -> Vec<f64> {
        self.envelope.iter().map(|ch| ch[n]).collect()
    }
}

pub fn sff_analyze(sig: &SignalBuffer, cfg: &SffConfig) -> Result<SffDecomposition> {
    let frequencies_hz = cfg.frequencies_hz(sig.sample_rate_hz())?;
    let samples = sig.samples();
    let (envelope, phase): (Vec<_>, Vec<_>) = frequencies_hz
        .par_iter()
        .map(|&f| {
            let mut env = Vec::with_capacity(samples.len());
            let mut ph = Vec::with_capacity(samples.len());
            run_channel(samples, sig.sample_rate_hz(), f, cfg.r, |_, y| {
                env.push(y.norm());
                ph.push(phase_of(y));
            });
            (env, ph)
        })
        .unzip();
    Ok(SffDecomposition {
        envelope,
        phase,
        frequencies_hz,
        sample_rate_hz: sig.sample_rate_hz(),
        n_samples: samples.len(),
    })
}

/// Streaming variant: runs the full recursion but keeps only the envelope
/// rows at the requested (ascending) sample indices. Returns one row of
/// length `K` per index.
pub fn sff_sampled_envelopes(
    sig: &SignalBuffer,
    cfg: &SffConfig,
    indices: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let frequencies_hz = cfg.frequencies_hz(sig.sample_rate_hz())?;
    if indices.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("sample indices must be strictly increasing".into()));
    }
    let Some(&last) = indices.last() else {
        return Ok(Vec::new());
    };
    if last >= sig.len() {
        return Err(Error::TimeOutOfRange {
            time_s: last as f64 / f64::from(sig.sample_rate_hz()),
            duration_s: sig.duration_s(),
        });
    }
    let samples = &sig.samples()[..=last];
    let columns: Vec<Vec<f64>> = frequencies_hz
        .par_iter()
        .map(|&f| {
            let mut out = Vec::with_capacity(indices.len());
            let mut next = 0;
            run_channel(samples, sig.sample_rate_hz(), f, cfg.r, |n, y| {
                if next < indices.len() && indices[next] == n {
                    out.push(y.norm());
                    next += 1;
                }
            });
            out
        })
        .collect();
    Ok((0..indices.len())
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect())
}

/// Envelope spectrogram sampled every `hop_s` seconds.
pub fn sff_spectrogram(sig: &SignalBuffer, cfg: &SffConfig, hop_s: f64) -> Result<Spectrogram> {
    let indices = hop_indices(sig.len(), sig.sample_rate_hz(), hop_s)?;
    let fs = f64::from(sig.sample_rate_hz());
    let hop = (hop_s * fs).round() / fs;
    Ok(Spectrogram {
        frames: sff_sampled_envelopes(sig, cfg, &indices)?,
        bin_spacing_hz: cfg.delta_f_hz,
        hop_s: hop,
        origin: SpectrogramOrigin::Sff,
    })
}

/// Sample indices `0, h, 2h, ...` below `n_samples` with `h = round(hop_s * fs)`.
pub fn hop_indices(n_samples: usize, sample_rate_hz: u32, hop_s: f64) -> Result<Vec<usize>> {
    let hop = (hop_s * f64::from(sample_rate_hz)).round();
    if !(hop >= 1.0) {
        return Err(Error::InvalidArgument(format!("hop of {hop_s} s is below one sample")));
    }
    Ok((0..n_samples).step_by(hop as usize).collect())
}

/// Selects the envelope rows nearest to each time instant.
pub fn sff_spectrum_at(dec: &SffDecomposition, times_s: &[f64]) -> Result<Spectrogram> {
    let fs = f64::from(dec.sample_rate_hz);
    let duration_s = dec.n_samples as f64 / fs;
    let mut frames = Vec::with_capacity(times_s.len());
    for &t in times_s {
        let idx = (t * fs).round();
        if !(idx >= 0.0) || idx as usize >= dec.n_samples {
            return Err(Error::TimeOutOfRange { time_s: t, duration_s });
        }
        frames.push(dec.envelope_row(idx as usize));
    }
    let hop_s = if times_s.len() >= 2 {
        times_s[1] - times_s[0]
    } else {
        1.0 / fs
    };
    let bin_spacing_hz = match dec.frequencies_hz.as_slice() {
        [a, b, ..] => b - a,
        [a] => *a,
        [] => 0.0,
    };
    Ok(Spectrogram {
        frames,
        bin_spacing_hz,
        hop_s,
        origin: SpectrogramOrigin::Sff,
    })
}
