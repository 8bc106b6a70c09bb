//! Metacognitive monitoring.
//!
//! The evaluator turns posteriors into a [`ConfidenceReport`] and uses the
//! channels to act: choosing tools, skipping expensive simulation when
//! control confidence is high, asking the designer for help when every tool
//! looks unreliable, ranking design candidates and scaling learning rates.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::confidence::{
    confidence_from_entropy, dirichlet_entropy, entropy_categorical, CalibrationModel, Channel,
    ConfidenceReport, ConfidenceScore, DirichletParams, ProbVec, SquashParams,
};
use crate::controller::{
    control_confidence, control_precision, ControlPrecision, ControllerParams,
};
use crate::designer::{DesignCandidate, SurrogateGrid};
use crate::error::{invalid, Result};
use crate::pomdp::{model_confidence, Belief, ComboKey, WorldModel};
use crate::toyworld::{EnvSpec, TaskSpec, ToolSpec, ToyWorld};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluatorConfig {
    /// Weight of control confidence in tool selection.
    pub beta_select: f64,
    /// Confidence gate for skipping simulation and for calling the designer.
    pub tau_skip: f64,
    pub lr_min: f64,
    pub lr_max: f64,
    /// Optimistic-bound floor used by early discard.
    pub checkpoint_floor: f64,
    /// Squash scale of the utility channel (nats).
    pub utility_scale: f64,
    pub calibration: CalibrationModel,
}

impl Default for EvaluatorConfig {
    fn default() -> Self {
        Self {
            beta_select: 0.5,
            tau_skip: 0.5,
            lr_min: 0.5,
            lr_max: 2.0,
            checkpoint_floor: 0.5,
            utility_scale: 1.0,
            calibration: CalibrationModel::identity(),
        }
    }
}

impl EvaluatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_skip > 0.0 && self.tau_skip < 1.0) {
            return invalid("tau_skip must lie in (0, 1)");
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_max && self.lr_max <= 10.0) {
            return invalid("need 0 < lr_min <= lr_max <= 10");
        }
        if !(self.beta_select >= 0.0) || !(self.utility_scale > 0.0) {
            return invalid("beta_select must be >= 0 and utility_scale > 0");
        }
        Ok(())
    }
}

/// Posteriors for the channels to report; absent inputs leave the channel
/// empty.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReportInputs<'a> {
    pub perceptual: Option<&'a Belief>,
    pub utility: Option<&'a DirichletParams>,
    pub model: Option<(&'a WorldModel, &'a [ComboKey])>,
    pub control: Option<(&'a ControlPrecision, &'a SquashParams)>,
    pub decision: Option<&'a ProbVec>,
}

/// Utility confidence: the reward-bin Dirichlet's entropy squashed around the
/// entropy of the flat Dirichlet of the same size.
pub fn utility_confidence(d: &DirichletParams, scale: f64) -> Result<ConfidenceScore> {
    let h = dirichlet_entropy(d);
    let h_ref = dirichlet_entropy(&DirichletParams::symmetric(d.dim(), 1.0)?);
    let sq = SquashParams { h_ref, scale };
    ConfidenceScore::new(Channel::Utility, h, sq.apply(h)?)
}

fn categorical_score(channel: Channel, p: &ProbVec) -> Result<ConfidenceScore> {
    let h = entropy_categorical(p);
    let c = confidence_from_entropy(h.min((p.len() as f64).ln()), p.len())?;
    ConfidenceScore::new(channel, h, c)
}

pub fn assemble_report(
    inputs: &ReportInputs<'_>,
    episode: u64,
    cfg: &EvaluatorConfig,
) -> Result<ConfidenceReport> {
    let mut report = ConfidenceReport::new(episode);
    if let Some(b) = inputs.perceptual {
        report.insert(categorical_score(Channel::Perceptual, b)?)?;
    }
    if let Some(d) = inputs.utility {
        report.insert(utility_confidence(d, cfg.utility_scale)?)?;
    }
    if let Some((model, scope)) = inputs.model {
        report.insert(model_confidence(model, scope)?)?;
    }
    if let Some((pi, squash)) = inputs.control {
        report.insert(control_confidence(pi, squash)?)?;
    }
    if let Some(q) = inputs.decision {
        report.insert(categorical_score(Channel::Decision, q)?)?;
    }
    if report.channels().next().is_none() {
        return invalid("report needs at least one channel input");
    }
    Ok(report)
}

/// Cheap stand-in for simulation when the evaluator bypasses the user.
pub trait PerfPredictor {
    fn predict(&self, tool: &ToolSpec) -> f64;
}

impl PerfPredictor for SurrogateGrid {
    fn predict(&self, tool: &ToolSpec) -> f64 {
        self.predicted_reward(tool)
    }
}

impl<F: Fn(&ToolSpec) -> f64> PerfPredictor for F {
    fn predict(&self, tool: &ToolSpec) -> f64 {
        self(tool)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolAssessment {
    pub id: String,
    pub predicted_perf: f64,
    pub control_confidence: f64,
    /// Geometric mean of predicted performance and control confidence.
    pub combined_confidence: f64,
    pub score: f64,
}

impl ToolAssessment {
    pub fn new(
        id: impl Into<String>,
        predicted_perf: f64,
        control_confidence: f64,
        beta: f64,
    ) -> Self {
        Self {
            id: id.into(),
            predicted_perf,
            control_confidence,
            combined_confidence: (predicted_perf.max(0.0) * control_confidence.max(0.0)).sqrt(),
            score: predicted_perf + beta * control_confidence,
        }
    }
}

/// Index of the highest score; ties go to the lexicographically smaller id.
pub fn best_assessment(items: &[ToolAssessment]) -> Option<usize> {
    (0..items.len()).min_by(|&a, &b| {
        items[b]
            .score
            .total_cmp(&items[a].score)
            .then_with(|| items[a].id.cmp(&items[b].id))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub choice: usize,
    pub report: ConfidenceReport,
    /// Every tool's combined confidence is below the gate.
    pub trigger_designer: bool,
    /// Performance came from the predictor instead of simulation.
    pub bypassed: bool,
    pub assessments: Vec<ToolAssessment>,
}

/// Chooses a tool by `predicted perf + β · control confidence`.
///
/// When the most controllable tool clears `τ_skip`, predicted performance
/// comes from `predictor` and the simulator is not run at all.
#[allow(clippy::too_many_arguments)]
pub fn select_tool(
    world: &ToyWorld,
    toolbox: &[ToolSpec],
    task: &TaskSpec,
    env: &EnvSpec,
    ctrl: &ControllerParams,
    cfg: &EvaluatorConfig,
    predictor: &dyn PerfPredictor,
    episode: u64,
) -> Result<Selection> {
    if toolbox.is_empty() {
        return invalid("toolbox is empty");
    }
    cfg.validate()?;
    for t in toolbox {
        t.validate(world.bounds())?;
    }
    let precisions = toolbox
        .iter()
        .map(|t| control_precision(t, ctrl))
        .collect::<Result<Vec<_>>>()?;
    let control = precisions
        .iter()
        .map(|p| control_confidence(p, &ctrl.squash))
        .collect::<Result<Vec<_>>>()?;

    let top = (0..toolbox.len())
        .min_by(|&a, &b| {
            control[b]
                .value
                .total_cmp(&control[a].value)
                .then_with(|| toolbox[a].id.cmp(&toolbox[b].id))
        })
        .expect("non-empty toolbox");
    let bypassed = control[top].value >= cfg.tau_skip;

    let assessments: Vec<ToolAssessment> = toolbox
        .iter()
        .zip(&control)
        .map(|(tool, c)| {
            let perf = if bypassed {
                predictor.predict(tool)
            } else {
                world.evaluate_robust(tool, task, env).gated_reward()
            };
            ToolAssessment::new(tool.id.clone(), perf, c.value, cfg.beta_select)
        })
        .collect();

    let choice = best_assessment(&assessments).expect("non-empty toolbox");
    let trigger_designer = assessments
        .iter()
        .all(|a| a.combined_confidence < cfg.tau_skip);
    let mut report = ConfidenceReport::new(episode);
    report.insert(control[choice])?;
    Ok(Selection {
        choice,
        report,
        trigger_designer,
        bypassed,
        assessments,
    })
}

/// Drops invalid candidates, recalibrates the rest and returns the `top_k`
/// most confident. Ties prefer shorter tools, then smaller ids.
pub fn filter_rank(
    candidates: &[DesignCandidate],
    cal: &CalibrationModel,
    top_k: usize,
) -> Vec<DesignCandidate> {
    let mut kept: Vec<DesignCandidate> = candidates
        .iter()
        .filter(|c| c.valid)
        .cloned()
        .map(|mut c| {
            c.confidence = cal.apply(c.confidence);
            c
        })
        .collect();
    kept.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.tool.total_length().total_cmp(&b.tool.total_length()))
            .then_with(|| a.tool.id.cmp(&b.tool.id))
            .then(Ordering::Equal)
    });
    kept.truncate(top_k.max(1));
    kept
}

/// `lr = lr_min + (lr_max − lr_min) · (1 − c_dec)`.
pub fn adapt_learning_weight(report: &ConfidenceReport, cfg: &EvaluatorConfig) -> Result<f64> {
    let c = report.value(Channel::Decision)?;
    Ok(cfg.lr_min + (cfg.lr_max - cfg.lr_min) * (1.0 - c))
}
