use serde::{Deserialize, Serialize};

use super::PROB_FLOOR;
use crate::error::{invalid, Result};

/// A stated confidence and whether the thing it was about succeeded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub confidence: f64,
    pub success: bool,
}

impl CalibrationSample {
    pub fn new(confidence: f64, success: bool) -> Self {
        Self {
            confidence,
            success,
        }
    }
}

/// Scalar temperature applied to confidence log-odds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub temperature: f64,
    /// Held-out negative log-likelihood (mean per sample) at `T = 1`;
    /// `None` when no fit was run.
    pub nll_before: Option<f64>,
    /// Held-out negative log-likelihood at the fitted temperature.
    pub nll_after: Option<f64>,
    /// Set when the data cannot identify a temperature.
    pub degenerate: bool,
}

impl Default for CalibrationModel {
    fn default() -> Self {
        Self::identity()
    }
}

impl CalibrationModel {
    pub fn identity() -> Self {
        Self {
            temperature: 1.0,
            nll_before: None,
            nll_after: None,
            degenerate: true,
        }
    }

    pub fn with_temperature(temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return invalid(format!("temperature must be positive, got {temperature}"));
        }
        Ok(Self {
            temperature,
            ..Self::identity()
        })
    }

    /// `sigmoid(logit(c) / T)`.
    pub fn apply(&self, confidence: f64) -> f64 {
        // endpoints are fixed points for every positive temperature
        if confidence <= 0.0 || confidence >= 1.0 {
            return confidence.clamp(0.0, 1.0);
        }
        sigmoid(logit(confidence) / self.temperature)
    }
}

fn logit(c: f64) -> f64 {
    let c = c.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    (c / (1.0 - c)).ln()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Mean NLL of outcomes under `sigmoid(w · z)`.
fn nll(logits: &[(f64, bool)], w: f64) -> f64 {
    let total: f64 = logits
        .iter()
        .map(|&(z, y)| if y { softplus(-w * z) } else { softplus(w * z) })
        .sum();
    total / logits.len() as f64
}

/// d NLL / d w, monotone non-decreasing in `w` because the NLL is convex.
fn nll_slope(logits: &[(f64, bool)], w: f64) -> f64 {
    let total: f64 = logits
        .iter()
        .map(|&(z, y)| (sigmoid(w * z) - if y { 1.0 } else { 0.0 }) * z)
        .sum();
    total / logits.len() as f64
}

const GRID_BASE: f64 = 0.05;
const GRID_STEPS: i32 = 11;
const REFINEMENTS: usize = 30;
const MIN_SAMPLES: usize = 10;

/// Fits a temperature by minimising cross-entropy of the scaled confidences.
///
/// Even-indexed samples are used for fitting and odd-indexed samples are held
/// out. The search evaluates `T ∈ {0.05·2^k, k = 0..=10}`, then bisects the
/// NLL slope in inverse temperature between the neighbours of the best grid
/// point. If the fitted temperature does not lower held-out NLL, `T = 1` is
/// kept.
pub fn fit_temperature(samples: &[CalibrationSample]) -> Result<CalibrationModel> {
    if samples.len() < MIN_SAMPLES {
        return invalid(format!(
            "temperature fit needs at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        ));
    }
    if let Some(s) = samples
        .iter()
        .find(|s| !(0.0..=1.0).contains(&s.confidence) || s.confidence.is_nan())
    {
        return invalid(format!("confidence {} outside [0, 1]", s.confidence));
    }
    let logits: Vec<(f64, bool)> = samples
        .iter()
        .map(|s| (logit(s.confidence), s.success))
        .collect();

    let successes = logits.iter().filter(|(_, y)| *y).count();
    let all_zero = logits.iter().all(|(z, _)| z.abs() < 1e-12);
    if successes == 0 || successes == logits.len() || all_zero {
        let base = nll(&logits, 1.0);
        return Ok(CalibrationModel {
            temperature: 1.0,
            nll_before: Some(base),
            nll_after: Some(base),
            degenerate: true,
        });
    }

    let (fit, held): (Vec<_>, Vec<_>) = logits.iter().enumerate().partition(|(i, _)| i % 2 == 0);
    let fit: Vec<(f64, bool)> = fit.into_iter().map(|(_, s)| *s).collect();
    let held: Vec<(f64, bool)> = held.into_iter().map(|(_, s)| *s).collect();
    let fit_has_both = fit.iter().any(|(_, y)| *y) && fit.iter().any(|(_, y)| !*y);
    let fit_set: &[(f64, bool)] = if fit_has_both { &fit } else { &logits };

    let grid: Vec<f64> = (0..GRID_STEPS).map(|k| GRID_BASE * 2f64.powi(k)).collect();
    let mut best = 0;
    let mut best_nll = f64::INFINITY;
    for (k, &t) in grid.iter().enumerate() {
        let v = nll(fit_set, 1.0 / t);
        if v < best_nll {
            best_nll = v;
            best = k;
        }
    }
    let t_lo = grid[best.saturating_sub(1)];
    let t_hi = grid[(best + 1).min(grid.len() - 1)];
    // bisect in w = 1/T, where the slope is monotone
    let (mut w_lo, mut w_hi) = (1.0 / t_hi, 1.0 / t_lo);
    let mut w = 1.0 / grid[best];
    if nll_slope(fit_set, w_lo) < 0.0 && nll_slope(fit_set, w_hi) > 0.0 {
        for _ in 0..REFINEMENTS {
            let mid = 0.5 * (w_lo + w_hi);
            if nll_slope(fit_set, mid) > 0.0 {
                w_hi = mid;
            } else {
                w_lo = mid;
            }
        }
        let mid = 0.5 * (w_lo + w_hi);
        if nll(fit_set, mid) <= nll(fit_set, w) {
            w = mid;
        }
    }

    let nll_before = nll(&held, 1.0);
    let fitted = nll(&held, w);
    let (temperature, nll_after) = if fitted <= nll_before {
        (1.0 / w, fitted)
    } else {
        (1.0, nll_before)
    };
    Ok(CalibrationModel {
        temperature,
        nll_before: Some(nll_before),
        nll_after: Some(nll_after),
        degenerate: false,
    })
}

/// Expected calibration error over `bins` equal-width confidence bins.
pub fn ece(samples: &[CalibrationSample], bins: usize) -> Result<f64> {
    if bins == 0 {
        return invalid("ECE needs at least one bin");
    }
    if samples.is_empty() {
        return invalid("ECE needs at least one sample");
    }
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut hits = vec![0.0; bins];
    for s in samples {
        if !(0.0..=1.0).contains(&s.confidence) {
            return invalid(format!("confidence {} outside [0, 1]", s.confidence));
        }
        let b = ((s.confidence * bins as f64) as usize).min(bins - 1);
        count[b] += 1;
        conf_sum[b] += s.confidence;
        if s.success {
            hits[b] += 1.0;
        }
    }
    let n = samples.len() as f64;
    let e = (0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let m = count[b] as f64;
            (m / n) * (hits[b] / m - conf_sum[b] / m).abs()
        })
        .sum::<f64>();
    Ok(e.clamp(0.0, 1.0))
}
