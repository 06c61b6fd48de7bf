//! Evidence-tiered multinomial classifiers over the beat feature vector.
//!
//! Two tiers stand in for the minimal/rich evidence states: Minimal sees
//! only the eight timing components (rr + norm_rr), Rich sees all 23.
//! Training is class-weighted multinomial logistic regression by full-batch
//! gradient descent, deterministic under a fixed seed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FULL_DIMS, MINIMAL_DIMS};
use crate::ingest::BeatClass;
use crate::num::Real;

const N_CLASSES: usize = 4;
/// Floor applied to per-feature scales so constant columns stay finite.
const SCALE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Minimal,
    Rich,
}

impl Tier {
    /// Feature indices this tier reads from the 23-vector.
    pub fn feature_mask(self) -> Vec<usize> {
        match self {
            Tier::Minimal => (0..MINIMAL_DIMS).collect(),
            Tier::Rich => (0..FULL_DIMS).collect(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tier::Minimal => "minimal",
            Tier::Rich => "rich",
        }
    }
}

/// Training hyperparameters. The optimizer is plain full-batch gradient
/// descent with a fixed learning rate; determinism matters more than speed
/// here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2000,
            learning_rate: 0.05,
            l2: 1e-4,
            seed: 0,
        }
    }
}

/// Per-beat probability vector over (N, S, V, F).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posterior<F> {
    pub probs: [F; 4],
}

impl<F: Real> Posterior<F> {
    pub fn argmax(&self) -> BeatClass {
        let mut best = 0;
        for i in 1..N_CLASSES {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        BeatClass::from_index(best).expect("class index")
    }

    pub fn confidence(&self) -> F {
        self.probs.iter().copied().fold(F::zero(), F::max)
    }
}

/// Trained classifier: feature mask, standardization, and a 4 x (m+1)
/// weight matrix whose last column is the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams<F> {
    pub tier: Tier,
    pub feature_mask: Vec<usize>,
    /// Row-major 4 x (mask+1), bias last.
    pub weights: Vec<F>,
    pub means: Vec<F>,
    pub scales: Vec<F>,
    pub config: TrainConfig,
    /// Classes that appeared in the training data.
    pub present: [bool; 4],
    /// Loss recorded every 100 epochs plus the final value.
    pub loss_trace: Vec<F>,
}

/// Per-feature mean and population standard deviation (floored) computed on
/// training rows.
pub fn standardize_fit<F: Real>(rows: &[Vec<F>]) -> Result<(Vec<F>, Vec<F>)> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::Validation("standardize_fit on an empty set".into()));
    }
    let dims = rows[0].len();
    let nf = F::from_f64_c(n as f64);
    let mut means = vec![F::zero(); dims];
    for row in rows {
        if row.len() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                got: row.len(),
            });
        }
        for (m, &v) in means.iter_mut().zip(row) {
            *m = *m + v;
        }
    }
    for m in &mut means {
        *m = *m / nf;
    }
    let mut scales = vec![F::zero(); dims];
    for row in rows {
        for ((s, &v), &m) in scales.iter_mut().zip(row).zip(&means) {
            let d = v - m;
            *s = *s + d * d;
        }
    }
    let floor = F::from_f64_c(SCALE_FLOOR);
    for s in &mut scales {
        *s = (*s / nf).sqrt().max(floor);
    }
    Ok((means, scales))
}

fn masked_standardized<F: Real>(params: &ClassifierParams<F>, row: &[F]) -> Result<Vec<F>> {
    if row.len() != FULL_DIMS {
        return Err(Error::DimensionMismatch {
            expected: FULL_DIMS,
            got: row.len(),
        });
    }
    params
        .feature_mask
        .iter()
        .enumerate()
        .map(|(j, &idx)| {
            let v = *row.get(idx).ok_or(Error::DimensionMismatch {
                expected: idx + 1,
                got: row.len(),
            })?;
            Ok((v - params.means[j]) / params.scales[j])
        })
        .collect()
}

fn softmax<F: Real>(scores: [F; 4]) -> [F; 4] {
    let max = scores.iter().copied().fold(scores[0], F::max);
    let exps = scores.map(|s| (s - max).exp());
    let sum: F = exps.iter().copied().sum();
    exps.map(|e| e / sum)
}

fn scores<F: Real>(weights: &[F], x: &[F]) -> [F; 4] {
    let stride = x.len() + 1;
    let mut out = [F::zero(); 4];
    for (c, slot) in out.iter_mut().enumerate() {
        let row = &weights[c * stride..(c + 1) * stride];
        let mut acc = row[x.len()]; // bias
        for (w, &v) in row[..x.len()].iter().zip(x) {
            acc = acc + *w * v;
        }
        *slot = acc;
    }
    out
}

/// Balanced class weights: n_total / (classes_present * n_c).
fn balanced_weights(labels: &[BeatClass]) -> [f64; 4] {
    let mut counts = [0usize; 4];
    for &l in labels {
        counts[l.index()] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count();
    let mut w = [0.0f64; 4];
    for c in 0..N_CLASSES {
        if counts[c] > 0 {
            w[c] = labels.len() as f64 / (present as f64 * counts[c] as f64);
        }
    }
    w
}

struct LossGrad<F> {
    loss: F,
    grad: Vec<F>,
}

/// Class-weighted multinomial cross-entropy with L2 on the non-bias weights,
/// averaged over rows, plus its analytic gradient. Rows are pre-masked and
/// pre-standardized.
fn loss_and_grad<F: Real>(
    weights: &[F],
    rows: &[Vec<F>],
    labels: &[BeatClass],
    class_weights: &[f64; 4],
    l2: f64,
    present: &[bool; 4],
) -> LossGrad<F> {
    let dims = rows.first().map(Vec::len).unwrap_or(0);
    let stride = dims + 1;
    let mut grad = vec![F::zero(); weights.len()];
    let mut loss = F::zero();
    if rows.is_empty() {
        return LossGrad { loss, grad };
    }
    let n = F::from_f64_c(rows.len() as f64);
    for (row, &label) in rows.iter().zip(labels) {
        let p = softmax(scores(weights, row));
        let wc = F::from_f64_c(class_weights[label.index()]);
        let floor = F::from_f64_c(1e-300);
        loss = loss - wc * (p[label.index()].max(floor)).ln();
        for c in 0..N_CLASSES {
            let indicator = if c == label.index() {
                F::one()
            } else {
                F::zero()
            };
            let coeff = wc * (p[c] - indicator);
            let g = &mut grad[c * stride..(c + 1) * stride];
            for (gj, &xj) in g[..dims].iter_mut().zip(row) {
                *gj = *gj + coeff * xj;
            }
            g[dims] = g[dims] + coeff;
        }
    }
    loss = loss / n;
    for v in &mut grad {
        *v = *v / n;
    }
    let lambda = F::from_f64_c(l2);
    let half = F::from_f64_c(0.5);
    for c in 0..N_CLASSES {
        for j in 0..dims {
            let idx = c * stride + j;
            loss = loss + lambda * weights[idx] * weights[idx] * half;
            grad[idx] = grad[idx] + lambda * weights[idx];
        }
    }
    // Classes absent from training keep a bias-only score: their feature
    // weights are pinned at zero.
    for c in 0..N_CLASSES {
        if !present[c] {
            for j in 0..dims {
                grad[c * stride + j] = F::zero();
            }
        }
    }
    LossGrad { loss, grad }
}

/// Trains one tier on full 23-dimensional rows with labels in {N,S,V,F}.
///
/// Requires at least two distinct classes and finite features; the loss is
/// recorded every 100 epochs into `loss_trace`.
pub fn train<F: Real>(
    rows: &[Vec<F>],
    labels: &[BeatClass],
    tier: Tier,
    config: TrainConfig,
) -> Result<ClassifierParams<F>> {
    if rows.is_empty() {
        return Err(Error::Validation("no training rows".into()));
    }
    if rows.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            got: labels.len(),
        });
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != FULL_DIMS {
            return Err(Error::DimensionMismatch {
                expected: FULL_DIMS,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i });
        }
    }
    let mut present = [false; 4];
    for &l in labels {
        present[l.index()] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::Validation(
            "training needs at least two distinct classes".into(),
        ));
    }

    let mask = tier.feature_mask();
    let masked: Vec<Vec<F>> = rows
        .iter()
        .map(|row| mask.iter().map(|&i| row[i]).collect())
        .collect();
    let (means, scales) = standardize_fit(&masked)?;
    let standardized: Vec<Vec<F>> = masked
        .iter()
        .map(|row| {
            row.iter()
                .zip(means.iter().zip(&scales))
                .map(|(&v, (&m, &s))| (v - m) / s)
                .collect()
        })
        .collect();

    let class_weights = balanced_weights(labels);
    let stride = mask.len() + 1;
    let mut weights = vec![F::zero(); N_CLASSES * stride];
    let lr = F::from_f64_c(config.learning_rate);
    let mut loss_trace = Vec::new();
    for epoch in 0..config.epochs {
        let lg = loss_and_grad(
            &weights,
            &standardized,
            labels,
            &class_weights,
            config.l2,
            &present,
        );
        if epoch % 100 == 0 {
            loss_trace.push(lg.loss);
        }
        for (w, g) in weights.iter_mut().zip(&lg.grad) {
            *w = *w - lr * *g;
        }
    }
    let final_loss = loss_and_grad(
        &weights,
        &standardized,
        labels,
        &class_weights,
        config.l2,
        &present,
    )
    .loss;
    loss_trace.push(final_loss);

    Ok(ClassifierParams {
        tier,
        feature_mask: mask,
        weights,
        means,
        scales,
        config,
        present,
        loss_trace,
    })
}

/// Softmax posterior for one full 23-dimensional row.
pub fn predict<F: Real>(params: &ClassifierParams<F>, row: &[F]) -> Result<Posterior<F>> {
    if row.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: 0 });
    }
    let x = masked_standardized(params, row)?;
    Ok(Posterior {
        probs: softmax(scores(&params.weights, &x)),
    })
}

/// Maximum relative error between the analytic gradient and a central
/// finite difference at step 1e-5, over a small batch. Empty batches return
/// zero by convention.
pub fn grad_check<F: Real>(
    params: &ClassifierParams<F>,
    rows: &[Vec<F>],
    labels: &[BeatClass],
) -> Result<f64> {
    if rows.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            got: labels.len(),
        });
    }
    if rows.len() > 32 {
        return Err(Error::Validation(
            "grad_check batch limited to 32 rows".into(),
        ));
    }
    if rows.is_empty() {
        return Ok(0.0);
    }
    let standardized: Vec<Vec<F>> = rows
        .iter()
        .map(|row| masked_standardized(params, row))
        .collect::<Result<_>>()?;
    let class_weights = balanced_weights(labels);
    let present = [true; 4]; // probe every parameter, including bias rows
    let analytic = loss_and_grad(
        &params.weights,
        &standardized,
        labels,
        &class_weights,
        params.config.l2,
        &present,
    )
    .grad;

    let step = 1e-5;
    let mut max_rel = 0.0f64;
    let mut weights: Vec<F> = params.weights.clone();
    for i in 0..weights.len() {
        let orig = weights[i];
        weights[i] = orig + F::from_f64_c(step);
        let up = loss_and_grad(
            &weights,
            &standardized,
            labels,
            &class_weights,
            params.config.l2,
            &present,
        )
        .loss
        .as_f64();
        weights[i] = orig - F::from_f64_c(step);
        let down = loss_and_grad(
            &weights,
            &standardized,
            labels,
            &class_weights,
            params.config.l2,
            &present,
        )
        .loss
        .as_f64();
        weights[i] = orig;
        let fd = (up - down) / (2.0 * step);
        let rel = (analytic[i].as_f64() - fd).abs() / fd.abs().max(1e-8);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}
