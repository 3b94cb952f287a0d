//! Linear soft-margin SVMs, one-vs-one voting and speaker-grouped selection
//! of the regularization constant.
//!
//! The binary solver is SMO on the dual
//!
//! ```text
//! min_a  1/2 a'Qa - e'a   s.t.  0 <= a_i <= C,  y'a = 0,   Q_ij = y_i y_j <x_i, x_j>
//! ```
//!
//! Each step updates the pair made of the maximal KKT violator and the partner
//! with the best second-order gain; the solver stops once the violation gap
//! `m(a) - M(a)` drops below `tol`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, confusion};

pub const STD_FLOOR: f64 = 1e-8;

/// Default search grid: decades from 1e-4 to 1e4.
pub fn default_c_grid() -> Vec<f64> {
    (-4..=4).map(|e| 10f64.powi(e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub values: Vec<f64>,
    pub label: usize,
    pub speaker_id: String,
    pub utterance_id: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    samples: Vec<Sample>,
    dim: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let dim = samples.first().map_or(0, |s| s.values.len());
        for s in &samples {
            if s.values.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: s.values.len(),
                });
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "non-finite feature in utterance {}",
                    s.utterance_id
                )));
            }
        }
        Ok(Self { samples, dim })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn classes(&self) -> BTreeSet<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn speakers(&self) -> BTreeSet<&str> {
        self.samples.iter().map(|s| s.speaker_id.as_str()).collect()
    }

    /// Subset keeping samples for which `keep` holds; order preserved.
    pub fn filter(&self, keep: impl Fn(&Sample) -> bool) -> Dataset {
        Dataset {
            samples: self.samples.iter().filter(|s| keep(s)).cloned().collect(),
            dim: self.dim,
        }
    }

    /// Splits into (all other speakers, `speaker`).
    pub fn leave_out_speaker(&self, speaker: &str) -> (Dataset, Dataset) {
        (
            self.filter(|s| s.speaker_id != speaker),
            self.filter(|s| s.speaker_id == speaker),
        )
    }

    /// Distinct speakers per class.
    pub fn speakers_per_class(&self) -> BTreeMap<usize, usize> {
        let mut by_class: BTreeMap<usize, BTreeSet<&str>> = BTreeMap::new();
        for s in &self.samples {
            by_class.entry(s.label).or_default().insert(&s.speaker_id);
        }
        by_class.into_iter().map(|(c, s)| (c, s.len())).collect()
    }
}

/// Per-coordinate z-scoring fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population statistics. Coordinates whose deviation is below
    /// [`STD_FLOOR`] store the floor and standardize to 0.
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InsufficientData("cannot fit a standardizer on no samples".into()));
        };
        let dim = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            mean.iter_mut().zip(*r).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for j in 0..dim {
                let d = r[j] - mean[j];
                var[j] += d * d;
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    pub fn fit_dataset(train: &Dataset) -> Result<Self> {
        let rows: Vec<&[f64]> = train.samples.iter().map(|s| s.values.as_slice()).collect();
        Self::fit(&rows)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| if *s <= STD_FLOOR { 0.0 } else { (v - m) / s })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoOptions {
    /// Stopping threshold on the maximal KKT violation gap.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SmoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 1_000_000,
        }
    }
}

/// A trained linear binary classifier. Positive decision values vote for
/// `class_pair.0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c_value: f64,
    pub class_pair: (usize, usize),
}

impl BinarySvmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

/// Dual solution and solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub model: BinarySvmModel,
    pub alpha: Vec<f64>,
    pub iterations: usize,
    /// Final `m(a) - M(a)`.
    pub violation: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dual objective `sum a - 1/2 sum_ij a_i a_j y_i y_j <x_i, x_j>` (to be maximized).
pub fn dual_objective(x: &[Vec<f64>], y: &[f64], alpha: &[f64]) -> f64 {
    let dim = x.first().map_or(0, Vec::len);
    let mut w = vec![0.0; dim];
    for ((xi, yi), ai) in x.iter().zip(y).zip(alpha) {
        w.iter_mut().zip(xi).for_each(|(wj, v)| *wj += ai * yi * v);
    }
    alpha.iter().sum::<f64>() - 0.5 * dot(&w, &w)
}

/// Primal objective `1/2 |w|^2 + C sum max(0, 1 - y_i (w.x_i + b))`.
pub fn primal_objective(x: &[Vec<f64>], y: &[f64], weights: &[f64], bias: f64, c: f64) -> f64 {
    let hinge: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| (1.0 - yi * (dot(weights, xi) + bias)).max(0.0))
        .sum();
    0.5 * dot(weights, weights) + c * hinge
}

/// Largest violation of the KKT conditions in functional-margin form.
pub fn kkt_residual(x: &[Vec<f64>], y: &[f64], alpha: &[f64], c: f64, weights: &[f64], bias: f64) -> f64 {
    x.iter()
        .zip(y)
        .zip(alpha)
        .map(|((xi, yi), &a)| {
            let margin = yi * (dot(weights, xi) + bias);
            if a <= 0.0 {
                (1.0 - margin).max(0.0)
            } else if a >= c {
                (margin - 1.0).max(0.0)
            } else {
                (margin - 1.0).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Solves the linear soft-margin dual for labels `y` in {-1, +1}.
pub fn train_binary_svm(
    x: &[Vec<f64>],
    y: &[f64],
    c: f64,
    opts: &SmoOptions,
    class_pair: (usize, usize),
) -> Result<SmoSolution> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::LengthMismatch { expected: n, actual: y.len() });
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("C = {c} must be positive")));
    }
    if y.iter().any(|v| *v != 1.0 && *v != -1.0) {
        return Err(Error::InvalidArgument("binary labels must be +1 or -1".into()));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::InsufficientData("both classes must be present".into()));
    }
    let dim = x[0].len();

    let gram: Vec<f64> = {
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = dot(&x[i], &x[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    };
    let kern = |i: usize, j: usize| gram[i * n + j];
    const TAU: f64 = 1e-12;

    let mut alpha = vec![0.0; n];
    // Gradient of the minimization form: G = Q a - e.
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    let violation = loop {
        let mut i_sel = None;
        let mut m_up = f64::NEG_INFINITY;
        let mut m_low = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > m_up {
                m_up = v;
                i_sel = Some(t);
            }
            if in_low(alpha[t], y[t]) && v < m_low {
                m_low = v;
            }
        }
        let gap = m_up - m_low;
        let Some(i) = i_sel else { break 0.0 };
        if gap < opts.tol {
            break gap.max(0.0);
        }
        if iterations >= opts.max_iter {
            return Err(Error::NotConverged {
                iterations,
                violation: gap,
            });
        }

        let mut j_sel = None;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            let b = m_up - v;
            if b > 0.0 {
                let a = (kern(i, i) + kern(t, t) - 2.0 * kern(i, t)).max(TAU);
                let gain = -(b * b) / a;
                if gain < best {
                    best = gain;
                    j_sel = Some(t);
                }
            }
        }
        let Some(j) = j_sel else { break gap };

        // Move along u with u_i = y_i, u_j = -y_j, which keeps y'a fixed.
        let curvature = (kern(i, i) + kern(j, j) - 2.0 * kern(i, j)).max(TAU);
        let slope = -y[i] * grad[i] + y[j] * grad[j];
        let cap_i = if y[i] > 0.0 { c - alpha[i] } else { alpha[i] };
        let cap_j = if y[j] > 0.0 { alpha[j] } else { c - alpha[j] };
        let step = (slope / curvature).min(cap_i).min(cap_j);

        alpha[i] += y[i] * step;
        alpha[j] -= y[j] * step;
        for (a, cap) in [(i, cap_i), (j, cap_j)] {
            if step >= cap {
                alpha[a] = if (a == i) == (y[a] > 0.0) { c } else { 0.0 };
            }
            alpha[a] = alpha[a].clamp(0.0, c);
        }
        for t in 0..n {
            grad[t] += step * y[t] * (kern(t, i) - kern(t, j));
        }
        iterations += 1;
    };

    let mut weights = vec![0.0; dim];
    for t in 0..n {
        if alpha[t] > 0.0 {
            weights
                .iter_mut()
                .zip(&x[t])
                .for_each(|(w, v)| *w += alpha[t] * y[t] * v);
        }
    }

    let free: Vec<f64> = (0..n)
        .filter(|&t| alpha[t] > 0.0 && alpha[t] < c)
        .map(|t| -y[t] * grad[t])
        .collect();
    let bias = if free.is_empty() {
        let mut ub = f64::INFINITY;
        let mut lb = f64::NEG_INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) {
                lb = lb.max(v);
            }
            if in_low(alpha[t], y[t]) {
                ub = ub.min(v);
            }
        }
        match (lb.is_finite(), ub.is_finite()) {
            (true, true) => 0.5 * (lb + ub),
            (true, false) => lb,
            (false, true) => ub,
            (false, false) => 0.0,
        }
    } else {
        free.iter().sum::<f64>() / free.len() as f64
    };

    Ok(SmoSolution {
        model: BinarySvmModel {
            weights,
            bias,
            c_value: c,
            class_pair,
        },
        alpha,
        iterations,
        violation,
    })
}

/// One binary model per unordered class pair, sharing one standardizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvoModel {
    pub classes: Vec<usize>,
    pub standardizer: Standardizer,
    pub models: Vec<BinarySvmModel>,
    pub c_value: f64,
    #[serde(default)]
    pub config_fingerprint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: usize,
    /// Votes per entry of `OvoModel::classes`.
    pub votes: Vec<usize>,
    /// Decision value of every pairwise model, in model order.
    pub decision_values: Vec<f64>,
}

pub fn train_ovo(train: &Dataset, c: f64, opts: &SmoOptions) -> Result<OvoModel> {
    let classes: Vec<usize> = train.classes().into_iter().collect();
    if classes.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "one-vs-one training needs at least two classes, found {}",
            classes.len()
        )));
    }
    let standardizer = Standardizer::fit_dataset(train)?;
    let scaled: Vec<(usize, Vec<f64>)> = train
        .samples
        .iter()
        .map(|s| (s.label, standardizer.apply(&s.values)))
        .collect();

    let mut models = Vec::with_capacity(classes.len() * (classes.len() - 1) / 2);
    for (ai, &a) in classes.iter().enumerate() {
        for &b in &classes[ai + 1..] {
            let (x, y): (Vec<Vec<f64>>, Vec<f64>) = scaled
                .iter()
                .filter(|(l, _)| *l == a || *l == b)
                .map(|(l, v)| (v.clone(), if *l == a { 1.0 } else { -1.0 }))
                .unzip();
            models.push(train_binary_svm(&x, &y, c, opts, (a, b))?.model);
        }
    }
    Ok(OvoModel {
        classes,
        standardizer,
        models,
        c_value: c,
        config_fingerprint: None,
    })
}

impl OvoModel {
    /// Majority vote over pairwise models. Ties go to the tied class with the
    /// largest summed |decision value| over the pairs it won, then to the
    /// lowest class index.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let dim = self.standardizer.mean.len();
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: x.len(),
            });
        }
        let z = self.standardizer.apply(x);
        let pos = |label: usize| self.classes.iter().position(|&c| c == label).expect("model class");
        let mut votes = vec![0usize; self.classes.len()];
        let mut won_margin = vec![0.0f64; self.classes.len()];
        let mut decision_values = Vec::with_capacity(self.models.len());
        for m in &self.models {
            let d = m.decision(&z);
            let winner = if d >= 0.0 { m.class_pair.0 } else { m.class_pair.1 };
            votes[pos(winner)] += 1;
            won_margin[pos(winner)] += d.abs();
            decision_values.push(d);
        }
        let top = *votes.iter().max().expect("at least two classes");
        let mut best = None;
        for (idx, &v) in votes.iter().enumerate() {
            if v != top {
                continue;
            }
            match best {
                Some(b) if won_margin[idx] <= won_margin[b] => {}
                _ => best = Some(idx),
            }
        }
        Ok(Prediction {
            label: self.classes[best.expect("a top class exists")],
            votes,
            decision_values,
        })
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub c: f64,
    /// Pooled inner-LOSO UAR; `None` when not evaluated.
    pub uar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_c: f64,
    pub scores: Vec<GridScore>,
    pub warnings: Vec<String>,
}

/// Picks C by leave-one-speaker-out UAR over the training speakers.
/// Ties go to the smallest C.
pub fn grid_search_c(train: &Dataset, grid: &[f64], n_classes: usize, opts: &SmoOptions) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty C grid".into()));
    }
    if let Some(bad) = grid.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
        return Err(Error::InvalidArgument(format!("C = {bad} must be positive")));
    }
    if grid.len() == 1 {
        return Ok(GridSearchResult {
            best_c: grid[0],
            scores: vec![GridScore { c: grid[0], uar: None }],
            warnings: Vec::new(),
        });
    }
    let per_class = train.speakers_per_class();
    if per_class.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "grid search needs two or more classes, found {per_class:?}"
        )));
    }
    let all_classes = train.classes();
    let speakers: Vec<&str> = train.speakers().into_iter().collect();

    let mut warnings = Vec::new();
    let mut folds = Vec::new();
    for &spk in &speakers {
        let (inner_train, inner_test) = train.leave_out_speaker(spk);
        if inner_train.classes() != all_classes {
            warnings.push(format!(
                "inner fold for speaker {spk} skipped: a class has no other speaker"
            ));
            continue;
        }
        folds.push((inner_train, inner_test));
    }

    let cells: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|ci| (0..folds.len()).map(move |fi| (ci, fi)))
        .collect();
    let outputs = cells
        .par_iter()
        .map(|&(ci, fi)| {
            let (tr, te) = &folds[fi];
            let model = train_ovo(tr, grid[ci], opts)?;
            te.samples()
                .iter()
                .map(|s| Ok((s.label, model.predict(&s.values)?.label)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut scores = Vec::with_capacity(grid.len());
    for (ci, &c) in grid.iter().enumerate() {
        let pairs: Vec<(usize, usize)> = outputs[ci * folds.len()..(ci + 1) * folds.len()]
            .iter()
            .flatten()
            .copied()
            .collect();
        let uar = if pairs.is_empty() {
            None
        } else {
            let (actual, predicted): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            Some(compute_metrics(&confusion(&actual, &predicted, n_classes)?)?.uar)
        };
        scores.push(GridScore { c, uar });
    }

    let mut best: Option<(f64, f64)> = None;
    for s in &scores {
        let Some(u) = s.uar else { continue };
        best = match best {
            Some((bu, bc)) if u < bu || (u == bu && s.c >= bc) => Some((bu, bc)),
            _ => Some((u, s.c)),
        };
    }
    let best_c = match best {
        Some((_, c)) => c,
        None => {
            warnings.push("no inner fold could be evaluated; using the smallest C".into());
            grid.iter().cloned().fold(f64::INFINITY, f64::min)
        }
    };
    Ok(GridSearchResult {
        best_c,
        scores,
        warnings,
    })
}
