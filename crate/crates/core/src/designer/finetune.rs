use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{tool_from_params, DesignCandidate, GenerativeDesignModel, SurrogateGrid, TraceRow};
use crate::confidence::CalibrationModel;
use crate::controller::ControllerParams;
use crate::error::{config, Result};
use crate::rng::component_rng;
use crate::toyworld::{EnvSpec, TaskSpec, ToyWorld};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    /// Designs sampled per iteration.
    pub population: usize,
    /// Fraction of the sampled designs that is actually simulated.
    pub eval_frac: f64,
    pub eta_min: f64,
    pub eta_max: f64,
    /// Per-iteration cap on the symmetric KL between successive models.
    pub kappa_max: f64,
    /// Weight of epistemic uncertainty in the acquisition score.
    pub eta_e: f64,
    /// Temperature of the reward weights in the refit.
    pub t_w: f64,
    pub noise_floor: f64,
    /// Success rate that counts as solving the task.
    pub success_target: f64,
    /// Maps the incumbent's success rate to the evaluator's confidence.
    pub calibration: CalibrationModel,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            population: 32,
            eval_frac: 0.25,
            eta_min: 0.1,
            eta_max: 0.9,
            kappa_max: 0.5,
            eta_e: 1.0,
            t_w: 0.2,
            noise_floor: 0.01,
            success_target: 0.8,
            calibration: CalibrationModel::identity(),
        }
    }
}

impl FinetuneConfig {
    pub fn eval_count(&self) -> usize {
        ((self.eval_frac * self.population as f64).ceil() as usize).clamp(1, self.population)
    }

    pub fn validate(&self) -> Result<()> {
        if self.population < 1 {
            return config("fine-tuning population must be >= 1");
        }
        if !(self.eval_frac > 0.0 && self.eval_frac <= 1.0) {
            return config("evaluated fraction must lie in (0, 1]");
        }
        if !(0.0 <= self.eta_min && self.eta_min <= self.eta_max && self.eta_max <= 1.0) {
            return config("need 0 <= eta_min <= eta_max <= 1");
        }
        if !(self.kappa_max >= 0.0) || !(self.eta_e >= 0.0) || !(self.noise_floor >= 0.0) {
            return config("kappa_max, eta_e and noise_floor must be non-negative");
        }
        if !(self.t_w > 0.0) {
            return config("reward temperature must be positive");
        }
        Ok(())
    }
}

/// Symmetric KL divergence between two diagonal Gaussians.
pub fn symmetric_kl(p: &GenerativeDesignModel, q: &GenerativeDesignModel) -> f64 {
    let kl = |a: &GenerativeDesignModel, b: &GenerativeDesignModel| -> f64 {
        a.mean
            .iter()
            .zip(&a.std)
            .zip(b.mean.iter().zip(&b.std))
            .map(|((ma, sa), (mb, sb))| {
                (sb / sa).ln() + (sa * sa + (ma - mb).powi(2)) / (2.0 * sb * sb) - 0.5
            })
            .sum()
    };
    kl(p, q) + kl(q, p)
}

fn interpolate(
    old: &GenerativeDesignModel,
    target: &GenerativeDesignModel,
    t: f64,
) -> GenerativeDesignModel {
    let lerp = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
    };
    GenerativeDesignModel {
        mean: lerp(&old.mean, &target.mean),
        std: lerp(&old.std, &target.std),
    }
}

/// Largest step toward `target` whose symmetric KL from `old` stays within
/// `kappa`.
fn capped_step(
    old: &GenerativeDesignModel,
    target: &GenerativeDesignModel,
    kappa: f64,
) -> GenerativeDesignModel {
    if kappa <= 0.0 {
        return old.clone();
    }
    if symmetric_kl(old, target) <= kappa {
        return target.clone();
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if symmetric_kl(old, &interpolate(old, target, mid)) <= kappa {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo == 0.0 {
        old.clone()
    } else {
        interpolate(old, target, lo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneResult {
    pub model: GenerativeDesignModel,
    pub surrogate: SurrogateGrid,
    pub best: Option<DesignCandidate>,
    pub best_reward: f64,
    pub best_success_rate: f64,
    pub evaluations: usize,
    /// Evaluations used when a design first met the success target.
    pub first_target_at: Option<usize>,
    pub trace: Vec<TraceRow>,
}

/// Confidence-modulated fine-tuning of the generative design model.
///
/// Each iteration samples designs, ranks them by surrogate reward plus an
/// epistemic bonus, simulates the top fraction, feeds the results back into
/// the surrogate and refits the model by reward-weighted moments. The refit
/// is blended in with step `η = η_min + (η_max − η_min) · c_eval`, where
/// `c_eval` is the calibrated confidence in the incumbent design, so a
/// design model the evaluator does not trust stays close to its prior. The
/// blended step is then shrunk until its symmetric KL is at most `κ_max`.
#[allow(clippy::too_many_arguments)]
pub fn finetune_generative(
    world: &ToyWorld,
    model: &GenerativeDesignModel,
    surrogate: &SurrogateGrid,
    task: &TaskSpec,
    env: &EnvSpec,
    ctrl: &ControllerParams,
    budget: usize,
    cfg: &FinetuneConfig,
    seed: u64,
) -> Result<FinetuneResult> {
    cfg.validate()?;
    let bounds = *world.bounds();
    model.check_layout(&bounds)?;
    task.validate(&bounds)?;
    env.validate()?;
    ctrl.validate()?;
    if budget < cfg.population {
        return config(format!(
            "evaluation budget {budget} is below the population {}",
            cfg.population
        ));
    }

    let mut g = model.clone();
    let mut surrogate = surrogate.clone();
    let mut best: Option<DesignCandidate> = None;
    let mut best_reward = f64::NEG_INFINITY;
    let mut best_success = 0.0;
    let mut evaluations = 0;
    let mut first_target_at = None;
    let mut trace = Vec::new();
    let mut iteration = 0;

    while evaluations < budget {
        let mut rng = component_rng(seed, "finetune", iteration as u64);
        let thetas: Vec<Vec<f64>> = (0..cfg.population)
            .map(|_| g.sample(&mut rng, &bounds))
            .collect();
        let tools: Vec<_> = thetas
            .iter()
            .enumerate()
            .map(|(i, t)| tool_from_params(format!("ft-{iteration}-{i}"), t, &bounds))
            .collect();

        let acquisition: Vec<f64> = tools
            .iter()
            .map(|t| surrogate.predicted_reward(t) + cfg.eta_e * surrogate.uncertainty(t).epistemic)
            .collect();
        let mut order: Vec<usize> = (0..cfg.population).collect();
        order.sort_by(|&a, &b| acquisition[b].total_cmp(&acquisition[a]).then(a.cmp(&b)));
        let take = cfg.eval_count().min(budget - evaluations);
        let chosen = &order[..take];

        let results: Vec<(f64, f64)> = chosen
            .par_iter()
            .map(|&i| {
                let r = world.evaluate_robust(&tools[i], task, env);
                (r.gated_reward(), r.success_rate)
            })
            .collect();

        for (&i, &(reward, success)) in chosen.iter().zip(&results) {
            evaluations += 1;
            let split = surrogate.uncertainty(&tools[i]);
            let predicted = surrogate.predicted_reward(&tools[i]);
            surrogate.observe(&tools[i], reward);
            if success >= cfg.success_target && first_target_at.is_none() {
                first_target_at = Some(evaluations);
            }
            if reward > best_reward {
                best_reward = reward;
                best_success = success;
                best = Some(DesignCandidate {
                    tool: tools[i].clone(),
                    predicted_reward: predicted,
                    confidence: cfg.calibration.apply(success),
                    valid: true,
                    violation: None,
                    iteration,
                    sample: i,
                    epistemic: split.epistemic,
                    aleatoric: split.aleatoric,
                });
            }
        }

        // reward-weighted moments of the simulated designs
        let max_r = results
            .iter()
            .map(|r| r.0)
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = results
            .iter()
            .map(|r| ((r.0 - max_r) / cfg.t_w).exp())
            .collect();
        let wsum: f64 = weights.iter().sum();
        let d = g.dim();
        let mut mean = vec![0.0; d];
        for (&i, w) in chosen.iter().zip(&weights) {
            for (m, x) in mean.iter_mut().zip(&thetas[i]) {
                *m += w / wsum * x;
            }
        }
        let mut var = vec![0.0; d];
        for (&i, w) in chosen.iter().zip(&weights) {
            for ((v, x), m) in var.iter_mut().zip(&thetas[i]).zip(&mean) {
                *v += w / wsum * (x - m).powi(2);
            }
        }
        let std: Vec<f64> = var
            .into_iter()
            .map(|v| v.sqrt().max(cfg.noise_floor).max(1e-9))
            .collect();
        let refit = GenerativeDesignModel { mean, std };

        let c_eval = best.as_ref().map_or(0.0, |b| b.confidence);
        let eta = cfg.eta_min + (cfg.eta_max - cfg.eta_min) * c_eval;
        let blended = interpolate(&g, &refit, eta);
        let next = capped_step(&g, &blended, cfg.kappa_max);
        let kl_step = symmetric_kl(&g, &next);
        g = next;

        let mean_j = results.iter().map(|r| r.0).sum::<f64>() / results.len() as f64;
        trace.push(TraceRow {
            iteration,
            best_j: best_reward,
            mean_j,
            kl_step,
            c_eval: Some(c_eval),
            evaluations,
        });
        iteration += 1;
    }

    Ok(FinetuneResult {
        model: g,
        surrogate,
        best,
        best_reward,
        best_success_rate: best_success,
        evaluations,
        first_target_at,
        trace,
    })
}
