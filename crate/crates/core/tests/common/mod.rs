//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_signal(rng: &mut impl Rng, n: usize, amp: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-amp..amp)).collect()
}

/// O(n^2) DFT. `sign` is -1 for forward, +1 for inverse (unscaled).
pub fn naive_dft(x: &[Complex64], sign: f64) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(j, v)| {
                    let angle = sign * 2.0 * PI * ((j * k) % n) as f64 / n as f64;
                    v * Complex64::new(angle.cos(), angle.sin())
                })
                .sum()
        })
        .collect()
}

/// O(n^2) orthonormal DCT-II.
pub fn naive_dct(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    (0..x.len())
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            scale
                * x.iter()
                    .enumerate()
                    .map(|(i, v)| v * (PI * (i as f64 + 0.5) * k as f64 / n).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// Filter output of one channel as an explicit convolution of the shifted
/// signal with the impulse response `(-r)^n`.
pub fn sff_direct(signal: &[f64], fs: f64, freq: f64, r: f64) -> Vec<Complex64> {
    let w = 2.0 * PI * (fs / 2.0 - freq) / fs;
    let shifted: Vec<Complex64> = signal
        .iter()
        .enumerate()
        .map(|(m, s)| s * Complex64::new((w * m as f64).cos(), -(w * m as f64).sin()))
        .collect();
    let taps: Vec<f64> = (0..signal.len()).map(|i| (-r).powi(i as i32)).collect();
    (0..signal.len())
        .map(|n| (0..=n).map(|m| shifted[m] * taps[n - m]).sum())
        .collect()
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel weights evaluated at `bin_freqs`, each peak scaled to one.
pub fn mel_weights(n_filters: usize, bin_freqs: &[f64], f_min: f64, f_max: f64) -> Vec<Vec<f64>> {
    let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_filters + 1) as f64))
        .collect();
    (0..n_filters)
        .map(|m| {
            let (a, b, c) = (edges[m], edges[m + 1], edges[m + 2]);
            let row: Vec<f64> = bin_freqs
                .iter()
                .map(|&f| {
                    if f > a && f <= b {
                        (f - a) / (b - a)
                    } else if f > b && f < c {
                        (c - f) / (c - b)
                    } else {
                        0.0
                    }
                })
                .collect();
            let peak = row.iter().cloned().fold(0.0, f64::max);
            row.iter().map(|v| v / peak).collect()
        })
        .collect()
}

/// Regression deltas with edge replication.
pub fn deltas(frames: &[Vec<f64>], m: usize) -> Vec<Vec<f64>> {
    let t = frames.len() as isize;
    let denom: f64 = 2.0 * (1..=m).map(|i| (i * i) as f64).sum::<f64>();
    (0..t)
        .map(|i| {
            (0..frames[0].len())
                .map(|d| {
                    (1..=m as isize)
                        .map(|k| {
                            let fwd = frames[(i + k).min(t - 1) as usize][d];
                            let back = frames[(i - k).max(0) as usize][d];
                            k as f64 * (fwd - back)
                        })
                        .sum::<f64>()
                        / denom
                })
                .collect()
        })
        .collect()
}

/// Dual SVM objective `sum(a) - 1/2 sum_ij a_i a_j y_i y_j <x_i, x_j>`.
pub fn dual_value(x: &[Vec<f64>], y: &[f64], alpha: &[f64]) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let mut quad = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * dot(&x[i], &x[j]);
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Euclidean projection onto `{0 <= a <= c, sum(y a) = 0}` by bisection on
/// the multiplier of the equality constraint.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> { v.iter().zip(y).map(|(vi, yi)| (vi - lam * yi).clamp(0.0, c)).collect() };
    let g = |lam: f64| -> f64 { at(lam).iter().zip(y).map(|(a, yi)| a * yi).sum() };
    let bound = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Accelerated projected gradient on the SVM dual. Returns the dual value.
pub fn projected_gradient_dual(x: &[Vec<f64>], y: &[f64], c: f64, iters: usize) -> f64 {
    let n = x.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * dot(&x[i], &x[j])).collect())
        .collect();
    let matvec = |v: &[f64]| -> Vec<f64> { q.iter().map(|row| dot(row, v)).collect() };
    // Largest eigenvalue by power iteration.
    let mut v = vec![1.0; n];
    let mut lmax = 1.0;
    for _ in 0..500 {
        let w = matvec(&v);
        let norm = dot(&w, &w).sqrt();
        if norm == 0.0 {
            break;
        }
        lmax = norm / dot(&v, &v).sqrt();
        v = w.iter().map(|x| x / norm).collect();
    }
    let step = 1.0 / (lmax * 1.01);
    let mut a = vec![0.0; n];
    let mut z = a.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let grad: Vec<f64> = matvec(&z).iter().map(|g| g - 1.0).collect();
        let next = project(
            &z.iter().zip(&grad).map(|(zi, gi)| zi - step * gi).collect::<Vec<_>>(),
            y,
            c,
        );
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next
            .iter()
            .zip(&a)
            .map(|(nx, ax)| nx + (t - 1.0) / t_next * (nx - ax))
            .collect();
        a = next;
        t = t_next;
    }
    dual_value(x, y, &a)
}

/// Overlapping two-class Gaussian blobs in two dimensions.
pub fn random_binary_problem(rng: &mut impl Rng, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let gauss = rand_distr::Normal::new(0.0, 1.0).unwrap();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = if i % 2 == 0 { 1.0 } else { -1.0 };
        let p: Vec<f64> = (0..2)
            .map(|_| 0.8 * label + rand_distr::Distribution::sample(&gauss, rng))
            .collect();
        x.push(p);
        y.push(label);
    }
    (x, y)
}
