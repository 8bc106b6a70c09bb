//! Entropy-based confidence signals.
//!
//! Five channels are tracked: perceptual, utility, model, control and
//! decision. Each channel's confidence is a monotone decreasing transform of
//! the entropy of the posterior that channel monitors. Discrete posteriors
//! have a natural maximum entropy (`ln n`) and are normalised linearly;
//! differential entropies are unbounded and go through a logistic squash.
//!
//! All entropies are in nats.

mod calibration;
mod dirichlet;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use calibration::{ece, fit_temperature, CalibrationModel, CalibrationSample};
pub use dirichlet::{
    dirichlet_entropy, epistemic_aleatoric_decompose, ln_multivariate_beta, DirichletParams,
    UncertaintySplit,
};

/// Tolerance on the sum of a probability vector.
pub const SUM_TOL: f64 = 1e-9;
/// Floor applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// A normalised categorical distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVec(Vec<f64>);

impl ProbVec {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return invalid("probability vector must have at least one entry");
        }
        if let Some(x) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return invalid(format!("probability entry {x} is negative or not finite"));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return invalid(format!("probabilities sum to {sum}, not 1"));
        }
        Ok(Self(p))
    }

    /// Normalises non-negative weights. Fails when every weight is zero.
    pub fn from_weights(w: &[f64]) -> Result<Self> {
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return invalid("weights must be finite and non-negative");
        }
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return invalid("weights sum to zero");
        }
        Self::new(w.iter().map(|x| x / total).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("uniform distribution needs n >= 1");
        }
        Ok(Self(vec![1.0 / n as f64; n]))
    }

    pub fn delta(n: usize, at: usize) -> Result<Self> {
        if at >= n {
            return invalid(format!("delta index {at} out of range for n = {n}"));
        }
        let mut p = vec![0.0; n];
        p[at] = 1.0;
        Ok(Self(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &x) in self.0.iter().enumerate() {
            if x > self.0[best] {
                best = i;
            }
        }
        best
    }
}

impl TryFrom<Vec<f64>> for ProbVec {
    type Error = crate::Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ProbVec> for Vec<f64> {
    fn from(p: ProbVec) -> Self {
        p.0
    }
}

/// Shannon entropy `-Σ p ln p` with `0 ln 0 = 0`.
pub fn entropy_categorical(p: &ProbVec) -> f64 {
    let h: f64 =
        p.0.iter()
            .filter(|&&x| x > 0.0)
            .map(|&x| -x * x.max(PROB_FLOOR).ln())
            .sum();
    // rounding can leave a tiny negative for delta vectors
    h.max(0.0)
}

/// Maps a categorical entropy onto `[0, 1]` as `1 - H / ln n`.
pub fn confidence_from_entropy(h: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return invalid("category count must be >= 1");
    }
    if !h.is_finite() || h < -SUM_TOL {
        return invalid(format!("entropy {h} is negative or not finite"));
    }
    if n == 1 {
        return Ok(1.0);
    }
    let h_max = (n as f64).ln();
    if h > h_max + SUM_TOL {
        return invalid(format!("entropy {h} exceeds ln {n} = {h_max}"));
    }
    Ok((1.0 - h / h_max).clamp(0.0, 1.0))
}

/// Logistic squash of an unbounded (differential) entropy:
/// `1 / (1 + exp((H - H_ref) / s))`.
pub fn squash_to_confidence(h: f64, h_ref: f64, scale: f64) -> Result<f64> {
    if !(scale > 0.0) || !scale.is_finite() {
        return invalid(format!("squash scale must be positive, got {scale}"));
    }
    if h.is_nan() || h_ref.is_nan() {
        return invalid("entropy is NaN");
    }
    let z = (h - h_ref) / scale;
    // split on sign so exp never overflows
    let c = if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    };
    Ok(c.clamp(0.0, 1.0))
}

/// Squash reference point and scale for one continuous channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquashParams {
    pub h_ref: f64,
    pub scale: f64,
}

impl SquashParams {
    pub fn apply(&self, h: f64) -> Result<f64> {
        squash_to_confidence(h, self.h_ref, self.scale)
    }
}

/// The five confidence channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Perceptual,
    Utility,
    Model,
    Control,
    Decision,
}

impl Channel {
    pub const ALL: [Channel; 5] = [
        Channel::Perceptual,
        Channel::Utility,
        Channel::Model,
        Channel::Control,
        Channel::Decision,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Perceptual => "perceptual",
            Channel::Utility => "utility",
            Channel::Model => "model",
            Channel::Control => "control",
            Channel::Decision => "decision",
        }
    }
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One channel's confidence together with the entropy it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceScore {
    pub channel: Channel,
    /// Entropy in nats (differential for model/control).
    pub raw_entropy: f64,
    pub value: f64,
}

impl ConfidenceScore {
    pub fn new(channel: Channel, raw_entropy: f64, value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return invalid(format!("{channel} confidence {value} outside [0, 1]"));
        }
        Ok(Self {
            channel,
            raw_entropy,
            value,
        })
    }
}

/// The evaluator's per-episode snapshot; each channel is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    pub episode: u64,
    pub perceptual: Option<ConfidenceScore>,
    pub utility: Option<ConfidenceScore>,
    pub model: Option<ConfidenceScore>,
    pub control: Option<ConfidenceScore>,
    pub decision: Option<ConfidenceScore>,
}

impl ConfidenceReport {
    pub fn new(episode: u64) -> Self {
        Self {
            episode,
            ..Self::default()
        }
    }

    fn slot_mut(&mut self, channel: Channel) -> &mut Option<ConfidenceScore> {
        match channel {
            Channel::Perceptual => &mut self.perceptual,
            Channel::Utility => &mut self.utility,
            Channel::Model => &mut self.model,
            Channel::Control => &mut self.control,
            Channel::Decision => &mut self.decision,
        }
    }

    pub fn get(&self, channel: Channel) -> Option<&ConfidenceScore> {
        match channel {
            Channel::Perceptual => self.perceptual.as_ref(),
            Channel::Utility => self.utility.as_ref(),
            Channel::Model => self.model.as_ref(),
            Channel::Control => self.control.as_ref(),
            Channel::Decision => self.decision.as_ref(),
        }
    }

    /// Stores a score in its channel slot. A channel can be filled once.
    pub fn insert(&mut self, score: ConfidenceScore) -> Result<()> {
        let slot = self.slot_mut(score.channel);
        if slot.is_some() {
            return invalid(format!("{} channel already filled", score.channel));
        }
        *slot = Some(score);
        Ok(())
    }

    /// Confidence value of a channel, or a validation error when absent.
    pub fn value(&self, channel: Channel) -> Result<f64> {
        self.get(channel)
            .map(|s| s.value)
            .ok_or_else(|| crate::Error::Validation(format!("report lacks the {channel} channel")))
    }

    pub fn channels(&self) -> impl Iterator<Item = &ConfidenceScore> {
        Channel::ALL.into_iter().filter_map(|c| self.get(c))
    }
}
