use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dims, symmetric_kl, tool_from_params, GenerativeDesignModel, TraceRow};
use crate::controller::{tool_control_confidence, ControllerParams};
use crate::error::{config, Result};
use crate::rng::component_rng;
use crate::toyworld::{EnvSpec, TaskSpec, ToolSpec, ToyWorld};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignConfig {
    /// Weight of control confidence in the design objective.
    pub beta: f64,
    pub population: usize,
    pub elite_frac: f64,
    pub iterations: usize,
    /// Lower bound on every sampling std.
    pub noise_floor: f64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            beta: 0.0,
            population: 64,
            elite_frac: 0.125,
            iterations: 30,
            noise_floor: 0.01,
        }
    }
}

impl DesignConfig {
    pub fn elite_count(&self) -> usize {
        (self.elite_frac * self.population as f64).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return config("design population must be >= 2");
        }
        if !(self.elite_frac > 0.0 && self.elite_frac <= 1.0) {
            return config("elite fraction must lie in (0, 1]");
        }
        if self.elite_count() < 1 || self.elite_count() > self.population {
            return config("elite count must lie in 1..=population");
        }
        if !(self.noise_floor >= 0.0) || !(self.beta >= 0.0) {
            return config("beta and noise floor must be non-negative");
        }
        if self.iterations == 0 {
            return config("at least one design iteration is required");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CemResult {
    pub best: ToolSpec,
    /// Objective of the best tool.
    pub best_j: f64,
    /// Task reward term of the best tool.
    pub best_reward: f64,
    /// Control-confidence term of the best tool.
    pub best_confidence: f64,
    pub model: GenerativeDesignModel,
    pub trace: Vec<TraceRow>,
}

/// Cross-entropy design of a tool.
///
/// Objective: `J = reward + β · control confidence`, where the reward is the
/// hook-gated mean performance over the robustness trials (plain mean
/// performance for reach tasks). Every candidate sees the same trial seeds.
pub fn cem_design(
    world: &ToyWorld,
    task: &TaskSpec,
    env: &EnvSpec,
    ctrl: &ControllerParams,
    cfg: &DesignConfig,
    seed: u64,
) -> Result<CemResult> {
    cfg.validate()?;
    let bounds = *world.bounds();
    task.validate(&bounds)?;
    env.validate()?;
    ctrl.validate()?;

    let mut model = GenerativeDesignModel::prior(&bounds);
    let elites = cfg.elite_count();
    let mut best: Option<(f64, f64, f64, Vec<f64>)> = None;
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut evaluations = 0;

    for iteration in 0..cfg.iterations {
        let mut rng = component_rng(seed, "cem", iteration as u64);
        let thetas: Vec<Vec<f64>> = (0..cfg.population)
            .map(|_| model.sample(&mut rng, &bounds))
            .collect();
        let scored: Vec<(f64, f64, f64)> = thetas
            .par_iter()
            .map(|theta| {
                let tool = tool_from_params("candidate", theta, &bounds);
                let reward = world.evaluate_robust(&tool, task, env).gated_reward();
                let conf = tool_control_confidence(&tool, ctrl)?;
                Ok((reward + cfg.beta * conf, reward, conf))
            })
            .collect::<Result<_>>()?;
        evaluations += cfg.population;

        for (theta, &(j, r, c)) in thetas.iter().zip(&scored) {
            if best.as_ref().is_none_or(|b| j > b.0) {
                best = Some((j, r, c, theta.clone()));
            }
        }

        let mut order: Vec<usize> = (0..cfg.population).collect();
        order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0).then(a.cmp(&b)));
        let elite = &order[..elites];
        let d = dims(&bounds);
        let mut mean = vec![0.0; d];
        for &i in elite {
            for (m, x) in mean.iter_mut().zip(&thetas[i]) {
                *m += x / elites as f64;
            }
        }
        let mut std = vec![0.0; d];
        for &i in elite {
            for ((s, x), m) in std.iter_mut().zip(&thetas[i]).zip(&mean) {
                *s += (x - m).powi(2) / elites as f64;
            }
        }
        let std: Vec<f64> = std
            .into_iter()
            .map(|v| v.sqrt().max(cfg.noise_floor).max(1e-9))
            .collect();
        let next = GenerativeDesignModel::new(mean, std)?;
        let kl_step = symmetric_kl(&model, &next);
        model = next;

        let mean_j = scored.iter().map(|s| s.0).sum::<f64>() / cfg.population as f64;
        trace.push(TraceRow {
            iteration,
            best_j: best.as_ref().map_or(f64::NEG_INFINITY, |b| b.0),
            mean_j,
            kl_step,
            c_eval: None,
            evaluations,
        });
    }

    let (best_j, best_reward, best_confidence, theta) = best.expect("at least one iteration ran");
    Ok(CemResult {
        best: tool_from_params(format!("cem-{seed}"), &theta, &bounds),
        best_j,
        best_reward,
        best_confidence,
        model,
        trace,
    })
}
