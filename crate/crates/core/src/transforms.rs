//! FFT, DCT-II, Hamming window, STFT magnitude and mel filterbanks.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::audio::SignalBuffer;
use crate::error::{Error, Result};

/// Forward DFT of `x`, zero-padded or truncated to `n` (a power of two).
pub fn fft(x: &[Complex64], n: usize) -> Result<Vec<Complex64>> {
    let mut buf = resized(x, n)?;
    fft_in_place(&mut buf, false);
    Ok(buf)
}

/// Inverse DFT with `1/n` scaling, so `ifft(fft(x)) == x` up to round-off.
pub fn ifft(x: &[Complex64], n: usize) -> Result<Vec<Complex64>> {
    let mut buf = resized(x, n)?;
    fft_in_place(&mut buf, true);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|v| *v *= scale);
    Ok(buf)
}

fn resized(x: &[Complex64], n: usize) -> Result<Vec<Complex64>> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let m = x.len().min(n);
    buf[..m].copy_from_slice(&x[..m]);
    Ok(buf)
}

/// Unscaled iterative radix-2 transform. `buf.len()` must be a power of two.
pub(crate) fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * PI / len as f64;
        // Twiddles computed directly rather than by repeated multiplication
        // to keep the error flat across large transforms.
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| Complex64::from_polar(1.0, step * k as f64))
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = buf[start + k];
                let b = buf[start + k + half] * twiddles[k];
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

/// Orthonormal DCT-II with a cached cosine table.
#[derive(Debug, Clone)]
pub struct DctPlan {
    len: usize,
    table: Vec<f64>,
}

impl DctPlan {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidArgument("DCT of an empty sequence".into()));
        }
        let m = len as f64;
        let mut table = Vec::with_capacity(len * len);
        for k in 0..len {
            let scale = if k == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
            for i in 0..len {
                table.push(scale * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * m)).cos());
            }
        }
        Ok(Self { len, table })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// First `n_out` coefficients of the transform of `x`.
    pub fn transform_truncated(&self, x: &[f64], n_out: usize) -> Result<Vec<f64>> {
        if x.len() != self.len {
            return Err(Error::LengthMismatch {
                expected: self.len,
                actual: x.len(),
            });
        }
        Ok(self
            .table
            .chunks_exact(self.len)
            .take(n_out)
            .map(|row| row.iter().zip(x).map(|(c, v)| c * v).sum())
            .collect())
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.transform_truncated(x, self.len)
    }
}

pub fn dct2(x: &[f64]) -> Result<Vec<f64>> {
    DctPlan::new(x.len())?.transform(x)
}

/// Symmetric Hamming window; `hamming(1) == [1.0]`.
pub fn hamming(n: usize) -> Result<Vec<f64>> {
    match n {
        0 => Err(Error::InvalidArgument("window length must be at least 1".into())),
        1 => Ok(vec![1.0]),
        _ => {
            let denom = (n - 1) as f64;
            Ok((0..n)
                .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / denom).cos())
                .collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrogramOrigin {
    Stft,
    Sff,
}

/// Time-ordered magnitude spectra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    pub frames: Vec<Vec<f64>>,
    pub bin_spacing_hz: f64,
    pub hop_s: f64,
    pub origin: SpectrogramOrigin,
}

/// Sidecar metadata written next to an exported spectrogram matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramMeta {
    pub bin_spacing_hz: f64,
    pub hop_s: f64,
    pub origin: SpectrogramOrigin,
    pub n_frames: usize,
    pub n_bins: usize,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    pub fn meta(&self) -> SpectrogramMeta {
        SpectrogramMeta {
            bin_spacing_hz: self.bin_spacing_hz,
            hop_s: self.hop_s,
            origin: self.origin,
            n_frames: self.frames.len(),
            n_bins: self.n_bins(),
        }
    }

    /// Path of the JSON sidecar for a given CSV path (`x.csv` -> `x.json`).
    pub fn sidecar_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("json")
    }

    /// Writes the matrix (one row per frame) and its JSON sidecar.
    pub fn write_csv(&self, csv_path: impl AsRef<Path>) -> Result<PathBuf> {
        let csv_path = csv_path.as_ref();
        let mut w = csv::Writer::from_path(csv_path)?;
        for frame in &self.frames {
            w.write_record(frame.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush().map_err(|e| Error::io(csv_path, e))?;
        let sidecar = Self::sidecar_path(csv_path);
        let json = serde_json::to_string_pretty(&self.meta())?;
        fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))?;
        Ok(sidecar)
    }

    /// Reads a matrix previously written by [`Spectrogram::write_csv`].
    pub fn read_csv(csv_path: impl AsRef<Path>) -> Result<Self> {
        let csv_path = csv_path.as_ref();
        let sidecar = Self::sidecar_path(csv_path);
        let meta: SpectrogramMeta = serde_json::from_str(
            &fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?,
        )?;
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(csv_path)?;
        let mut frames = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| Error::InvalidArgument(format!("bad matrix value {s:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            frames.push(row);
        }
        Ok(Self {
            frames,
            bin_spacing_hz: meta.bin_spacing_hz,
            hop_s: meta.hop_s,
            origin: meta.origin,
        })
    }
}

/// Frame start offsets for a signal of `len` samples.
///
/// Full frames are taken while they fit. If samples past the end of the
/// last full frame remain, one zero-padded frame starting one hop later is
/// appended so no audio is dropped. A signal shorter than one window yields
/// a single padded frame.
pub fn frame_starts(len: usize, window: usize, hop: usize) -> Vec<usize> {
    if len < window {
        return vec![0];
    }
    let n_full = (len - window) / hop + 1;
    let mut starts: Vec<usize> = (0..n_full).map(|i| i * hop).collect();
    let covered = (n_full - 1) * hop + window;
    if covered < len {
        starts.push(n_full * hop);
    }
    starts
}

/// Hamming-windowed STFT magnitude with `n_fft` equal to the smallest power
/// of two not below the window length.
pub fn stft_magnitude(sig: &SignalBuffer, window_s: f64, hop_s: f64) -> Result<Spectrogram> {
    let window = (window_s * f64::from(sig.sample_rate_hz())).round() as usize;
    stft_magnitude_with_nfft(sig, window_s, hop_s, window.max(1).next_power_of_two())
}

/// Same as [`stft_magnitude`] with an explicit transform length.
pub fn stft_magnitude_with_nfft(
    sig: &SignalBuffer,
    window_s: f64,
    hop_s: f64,
    n_fft: usize,
) -> Result<Spectrogram> {
    let fs = f64::from(sig.sample_rate_hz());
    let window = (window_s * fs).round() as usize;
    let hop = (hop_s * fs).round() as usize;
    if !(window_s.is_finite() && hop_s.is_finite()) || window < 2 {
        return Err(Error::InvalidArgument(format!(
            "window of {window_s} s is shorter than two samples"
        )));
    }
    if hop == 0 {
        return Err(Error::InvalidArgument(format!("hop of {hop_s} s is below one sample")));
    }
    if !n_fft.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n_fft));
    }
    if n_fft < window {
        return Err(Error::InvalidArgument(format!(
            "n_fft {n_fft} is shorter than the {window}-sample window"
        )));
    }
    let w = hamming(window)?;
    let samples = sig.samples();
    let n_bins = n_fft / 2 + 1;
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    let frames = frame_starts(samples.len(), window, hop)
        .into_iter()
        .map(|start| {
            buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            for (i, wv) in w.iter().enumerate() {
                if let Some(&s) = samples.get(start + i) {
                    buf[i] = Complex64::new(s * wv, 0.0);
                }
            }
            fft_in_place(&mut buf, false);
            buf[..n_bins].iter().map(|c| c.norm()).collect()
        })
        .collect();
    Ok(Spectrogram {
        frames,
        bin_spacing_hz: fs / n_fft as f64,
        hop_s: hop as f64 / fs,
        origin: SpectrogramOrigin::Stft,
    })
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters, each scaled to peak at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelFilterbank {
    n_filters: usize,
    fft_bins: usize,
    sample_rate_hz: u32,
    centers_hz: Vec<f64>,
    weights: Vec<Vec<f64>>,
}

/// Standard one-sided FFT bin layout: `fft_bins` points from 0 Hz to Nyquist.
pub fn build_mel_filterbank(
    n_filters: usize,
    fft_bins: usize,
    sample_rate_hz: u32,
    f_min: f64,
    f_max: f64,
) -> Result<MelFilterbank> {
    if fft_bins < 2 {
        return Err(Error::InvalidArgument("need at least two spectrum bins".into()));
    }
    let nyquist = f64::from(sample_rate_hz) / 2.0;
    let spacing = nyquist / (fft_bins - 1) as f64;
    let freqs: Vec<f64> = (0..fft_bins).map(|i| i as f64 * spacing).collect();
    MelFilterbank::from_bin_frequencies(n_filters, &freqs, sample_rate_hz, f_min, f_max)
}

impl MelFilterbank {
    /// Builds filters over an arbitrary increasing grid of bin frequencies
    /// (the SFF grid starts at `delta_f`, not at 0 Hz).
    ///
    /// Filter `i` has vertices at the mel-uniform points `i`, `i + 1`, `i + 2`
    /// of `n_filters + 2` points spanning `[f_min, f_max]`. The triangle is
    /// evaluated at each bin frequency and the row is rescaled so its largest
    /// weight is exactly 1.
    pub fn from_bin_frequencies(
        n_filters: usize,
        bin_freqs_hz: &[f64],
        sample_rate_hz: u32,
        f_min: f64,
        f_max: f64,
    ) -> Result<Self> {
        let nyquist = f64::from(sample_rate_hz) / 2.0;
        if n_filters == 0 {
            return Err(Error::InvalidArgument("n_filters must be at least 1".into()));
        }
        if !(f_min >= 0.0 && f_min < f_max) {
            return Err(Error::InvalidArgument(format!(
                "mel band [{f_min}, {f_max}] Hz is empty"
            )));
        }
        if f_max > nyquist + 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "f_max {f_max} Hz exceeds Nyquist {nyquist} Hz"
            )));
        }
        if bin_freqs_hz.is_empty() || bin_freqs_hz.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "bin frequencies must be non-empty and strictly increasing".into(),
            ));
        }

        let (mel_lo, mel_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let step = (mel_hi - mel_lo) / (n_filters + 1) as f64;
        let edges: Vec<f64> = (0..n_filters + 2)
            .map(|i| mel_to_hz(mel_lo + step * i as f64))
            .collect();

        let mut weights = Vec::with_capacity(n_filters);
        for i in 0..n_filters {
            let (lo, mid, hi) = (edges[i], edges[i + 1], edges[i + 2]);
            let mut row: Vec<f64> = bin_freqs_hz
                .iter()
                .map(|&f| {
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect();
            let peak = row.iter().cloned().fold(0.0, f64::max);
            if peak <= 0.0 {
                return Err(Error::EmptyFilter { index: i });
            }
            row.iter_mut().for_each(|w| *w /= peak);
            weights.push(row);
        }

        Ok(Self {
            n_filters,
            fft_bins: bin_freqs_hz.len(),
            sample_rate_hz,
            centers_hz: edges[1..=n_filters].to_vec(),
            weights,
        })
    }

    pub fn n_filters(&self) -> usize {
        self.n_filters
    }

    pub fn fft_bins(&self) -> usize {
        self.fft_bins
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Filter energies `out[i] = sum_k weights[i][k] * power[k]`.
    pub fn apply(&self, power_spectrum: &[f64]) -> Result<Vec<f64>> {
        if power_spectrum.len() != self.fft_bins {
            return Err(Error::LengthMismatch {
                expected: self.fft_bins,
                actual: power_spectrum.len(),
            });
        }
        if power_spectrum.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidArgument(
                "power spectrum entries must be non-negative".into(),
            ));
        }
        Ok(self
            .weights
            .iter()
            .map(|row| row.iter().zip(power_spectrum).map(|(w, p)| w * p).sum())
            .collect())
    }
}

pub fn apply_filterbank(fb: &MelFilterbank, power_spectrum: &[f64]) -> Result<Vec<f64>> {
    fb.apply(power_spectrum)
}
