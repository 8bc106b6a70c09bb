//! Tool design, discovery and generative fine-tuning.
//!
//! Tools are parameterised as `(L_1..L_N, φ_1..φ_N)` with `N` the maximum
//! segment count. Sampled vectors are clamped into the bounds box and then
//! shrunk proportionally if they exceed the length budget, so every sample is
//! a valid tool.

mod cem;
mod discard;
mod discovery;
mod finetune;
mod structure;

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::confidence::{epistemic_aleatoric_decompose, DirichletParams, UncertaintySplit};
use crate::error::{config, invalid, Result};
use crate::toyworld::{Segment, ToolBounds, ToolSpec};

pub use cem::{cem_design, CemResult, DesignConfig};
pub use discard::{early_discard, DiscardDecision, DiscardReason};
pub use discovery::{
    affordance_template, discover_tool, enumerate_combos, template_tool, Discovery,
};
pub use finetune::{finetune_generative, symmetric_kl, FinetuneConfig, FinetuneResult};
pub use structure::{prune_affordance_feature, PruneVerdict};

/// One row of a design trace; serialised to CSV by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub best_j: f64,
    pub mean_j: f64,
    /// Symmetric KL between successive sampling distributions.
    pub kl_step: f64,
    /// Evaluator confidence that set the step size (fine-tuning only).
    pub c_eval: Option<f64>,
    /// Cumulative simulator evaluations.
    pub evaluations: usize,
}

pub(crate) fn dims(bounds: &ToolBounds) -> usize {
    2 * bounds.max_segments
}

/// Clamps a parameter vector into the bounds box and length budget.
pub fn clamp_params(theta: &mut [f64], bounds: &ToolBounds) {
    let n = bounds.max_segments;
    for l in &mut theta[..n] {
        *l = l.clamp(0.0, bounds.max_segment_length);
    }
    for phi in &mut theta[n..2 * n] {
        *phi = phi.clamp(-bounds.max_bend, bounds.max_bend);
    }
    let total: f64 = theta[..n].iter().sum();
    if total > bounds.length_budget {
        let k = bounds.length_budget / total;
        for l in &mut theta[..n] {
            *l *= k;
        }
    }
}

pub fn tool_from_params(id: impl Into<String>, theta: &[f64], bounds: &ToolBounds) -> ToolSpec {
    let n = bounds.max_segments;
    let segments = (0..n)
        .map(|i| Segment::new(theta[i], theta[n + i]))
        .collect();
    ToolSpec::new(id, segments)
}

/// Parameter vector of a tool, padding missing segments with zeros.
pub fn params_from_tool(tool: &ToolSpec, bounds: &ToolBounds) -> Result<Vec<f64>> {
    let n = bounds.max_segments;
    if tool.segments.len() > n {
        return invalid(format!("tool {:?} has more than {n} segments", tool.id));
    }
    let mut theta = vec![0.0; 2 * n];
    for (i, s) in tool.segments.iter().enumerate() {
        theta[i] = s.length;
        theta[n + i] = s.bend;
    }
    Ok(theta)
}

/// Diagonal Gaussian over tool parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeDesignModel {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl GenerativeDesignModel {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() || mean.is_empty() {
            return invalid("mean and std must have the same non-zero length");
        }
        if std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return invalid("every std must be positive");
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return invalid("mean must be finite");
        }
        Ok(Self { mean, std })
    }

    /// Broad prior: equal lengths that spend the budget, straight bends.
    pub fn prior(bounds: &ToolBounds) -> Self {
        let n = bounds.max_segments;
        let l0 = (bounds.length_budget / n as f64).min(bounds.max_segment_length);
        let mut mean = vec![l0; n];
        mean.extend(std::iter::repeat_n(0.0, n));
        let mut std = vec![0.5 * bounds.max_segment_length; n];
        std.extend(std::iter::repeat_n(0.5 * bounds.max_bend, n));
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn check_layout(&self, bounds: &ToolBounds) -> Result<()> {
        if self.dim() != dims(bounds) {
            return invalid(format!(
                "design model has {} parameters, bounds need {}",
                self.dim(),
                dims(bounds)
            ));
        }
        Ok(())
    }

    /// Draws one clamped parameter vector.
    pub fn sample<R: Rng>(&self, rng: &mut R, bounds: &ToolBounds) -> Vec<f64> {
        let mut theta: Vec<f64> = self
            .mean
            .iter()
            .zip(&self.std)
            .map(|(m, s)| {
                let z: f64 = rng.sample(StandardNormal);
                m + s * z
            })
            .collect();
        clamp_params(&mut theta, bounds);
        theta
    }
}

/// Coarse grid surrogate of design reward.
///
/// A tool is projected onto two features, the lever length `‖tip offset‖`
/// and the cumulative bend, and each grid cell keeps a Dirichlet over binned
/// rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateGrid {
    pub lever_edges: Vec<f64>,
    pub bend_edges: Vec<f64>,
    pub reward_bins: usize,
    /// Row-major over (lever bin, bend bin).
    pub cells: Vec<DirichletParams>,
}

impl SurrogateGrid {
    pub fn new(bounds: &ToolBounds, bins_per_dim: usize, reward_bins: usize) -> Result<Self> {
        if bins_per_dim == 0 {
            return config("surrogate needs at least one bin per dimension");
        }
        if reward_bins < 2 {
            return config("surrogate needs at least two reward bins");
        }
        let lever_edges = edges(0.0, bounds.length_budget, bins_per_dim);
        let bend_edges = edges(-PI, PI, bins_per_dim);
        let cells =
            vec![DirichletParams::symmetric(reward_bins, 1.0)?; bins_per_dim * bins_per_dim];
        Ok(Self {
            lever_edges,
            bend_edges,
            reward_bins,
            cells,
        })
    }

    /// Default grid: 6 bins per feature, 8 reward bins.
    pub fn with_defaults(bounds: &ToolBounds) -> Self {
        Self::new(bounds, 6, 8).expect("default surrogate sizes are valid")
    }

    fn bin(edges: &[f64], x: f64) -> usize {
        let n = edges.len() - 1;
        let lo = edges[0];
        let hi = edges[n];
        let t = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
        ((t * n as f64) as usize).min(n - 1)
    }

    pub fn cell_index(&self, tool: &ToolSpec) -> usize {
        let r = tool.tip_offset();
        let i = Self::bin(&self.lever_edges, r[0].hypot(r[1]));
        let j = Self::bin(&self.bend_edges, tool.cumulative_bend());
        i * (self.bend_edges.len() - 1) + j
    }

    fn reward_bin(&self, reward: f64) -> usize {
        ((reward.clamp(0.0, 1.0) * self.reward_bins as f64) as usize).min(self.reward_bins - 1)
    }

    pub fn observe(&mut self, tool: &ToolSpec, reward: f64) {
        let c = self.cell_index(tool);
        let b = self.reward_bin(reward);
        self.cells[c].observe(b, 1.0).expect("bin index in range");
    }

    /// Expected reward from the cell's predictive over bin centres.
    pub fn predicted_reward(&self, tool: &ToolSpec) -> f64 {
        let mean = self.cells[self.cell_index(tool)].mean();
        let k = self.reward_bins as f64;
        mean.as_slice()
            .iter()
            .enumerate()
            .map(|(b, p)| p * (b as f64 + 0.5) / k)
            .sum()
    }

    pub fn uncertainty(&self, tool: &ToolSpec) -> UncertaintySplit {
        epistemic_aleatoric_decompose(&self.cells[self.cell_index(tool)])
    }

    pub fn cell(&self, tool: &ToolSpec) -> &DirichletParams {
        &self.cells[self.cell_index(tool)]
    }
}

fn edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect()
}

/// A proposed design with its evaluator annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignCandidate {
    pub tool: ToolSpec,
    pub predicted_reward: f64,
    /// Estimated probability that the design succeeds.
    pub confidence: f64,
    pub valid: bool,
    /// Constraint code when `valid` is false.
    pub violation: Option<String>,
    pub iteration: usize,
    pub sample: usize,
    pub epistemic: f64,
    pub aleatoric: f64,
}
