//! Per-seed bodies of the five experiments.

use std::path::Path;

use serde::Serialize;

use crate::confidence::{
    ece, fit_temperature, CalibrationModel, CalibrationSample, Channel, PROB_FLOOR,
};
use crate::designer::{
    cem_design, early_discard, finetune_generative, tool_from_params, DesignCandidate,
    DesignConfig, FinetuneConfig, GenerativeDesignModel, SurrogateGrid, TraceRow,
};
use crate::error::Result;
use crate::evaluator::filter_rank;
use crate::pomdp::WorldModel;
use crate::rng::{component_rng, sub_seed};
use crate::toyworld::{EnvSpec, TaskSpec, ToolSpec, ToyWorld};

use super::config::ExperimentConfig;
use super::episode::{run_episode, EpisodeRecord, LoopState};
use super::output::{line_chart, write_csv, Series};

/// What every experiment writes for one seed.
pub trait SeedResult {
    type Row: Serialize;
    type Record: Serialize;

    fn seed(&self) -> u64;
    /// Rows of `summary.csv`.
    fn rows(&self) -> Vec<Self::Row>;
    /// Lines of `episodes.jsonl`.
    fn records(&self) -> Vec<Self::Record>;
    fn plot(&self) -> String;
    /// Experiment-specific tables next to the summary.
    fn write_details(&self, _dir: &Path) -> Result<()> {
        Ok(())
    }
}

fn with_seed(env: &EnvSpec, seed: u64) -> EnvSpec {
    EnvSpec { seed, ..*env }
}

/// Cheap pre-simulation confidence that a design works: one noiseless
/// trial, smoothed away from 0 and 1. Returns `(confidence, nominal reward)`.
pub fn nominal_confidence(world: &ToyWorld, tool: &ToolSpec, task: &TaskSpec) -> (f64, f64) {
    let r = world
        .evaluate_robust(tool, task, &EnvSpec::noiseless())
        .gated_reward();
    ((1.0 + 8.0 * r) / 10.0, r)
}

fn lever(tool: &ToolSpec) -> f64 {
    let r = tool.tip_offset();
    r[0].hypot(r[1])
}

// ---------------------------------------------------------------- e1

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct E1Design {
    pub beta: f64,
    pub tool: ToolSpec,
    pub objective: f64,
    pub reward: f64,
    pub control_confidence: f64,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct E1Row {
    pub seed: u64,
    pub beta: f64,
    pub sigma_env: f64,
    pub success_rate: f64,
    pub mean_perf: f64,
    pub lever: f64,
    pub total_length: f64,
    pub control_confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct E1Seed {
    pub seed: u64,
    pub designs: Vec<E1Design>,
    pub rows: Vec<E1Row>,
}

impl E1Seed {
    pub fn success_at(&self, beta: f64, sigma_env: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.beta == beta && r.sigma_env == sigma_env)
            .map(|r| r.success_rate)
    }
}

pub fn e1_seed(cfg: &ExperimentConfig, world: &ToyWorld, seed: u64) -> Result<E1Seed> {
    let e = &cfg.e1;
    let mut designs = Vec::new();
    let mut rows = Vec::new();
    for (arm, &beta) in e.betas.iter().enumerate() {
        let dc = DesignConfig { beta, ..cfg.design };
        let res = cem_design(
            world,
            &e.task,
            &e.design_env,
            &cfg.controller,
            &dc,
            sub_seed(seed, "e1-design", arm as u64),
        )?;
        let tool = ToolSpec {
            id: format!("e1-beta-{beta}"),
            ..res.best
        };
        for (k, &sigma_env) in e.sigma_grid.iter().enumerate() {
            let env = EnvSpec {
                sigma_env,
                sigma_act: e.sigma_act,
                trials: e.trials,
                seed: sub_seed(seed, "e1-eval", k as u64),
            };
            let ev = world.evaluate_robust(&tool, &e.task, &env);
            rows.push(E1Row {
                seed,
                beta,
                sigma_env,
                success_rate: ev.success_rate,
                mean_perf: ev.mean_perf,
                lever: lever(&tool),
                total_length: tool.total_length(),
                control_confidence: res.best_confidence,
            });
        }
        designs.push(E1Design {
            beta,
            tool,
            objective: res.best_j,
            reward: res.best_reward,
            control_confidence: res.best_confidence,
            trace: res.trace,
        });
    }
    Ok(E1Seed {
        seed,
        designs,
        rows,
    })
}

fn e1_series(rows: &[E1Row], betas: &[f64]) -> Vec<Series> {
    betas
        .iter()
        .map(|&b| {
            let mut sigmas: Vec<f64> = rows
                .iter()
                .filter(|r| r.beta == b)
                .map(|r| r.sigma_env)
                .collect();
            sigmas.sort_by(f64::total_cmp);
            sigmas.dedup();
            let pts = sigmas
                .iter()
                .map(|&s| {
                    let xs: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.beta == b && r.sigma_env == s)
                        .map(|r| r.success_rate)
                        .collect();
                    (s, xs.iter().sum::<f64>() / xs.len() as f64)
                })
                .collect();
            Series::new(format!("beta = {b}"), pts)
        })
        .collect()
}

pub fn e1_plot(rows: &[E1Row], betas: &[f64]) -> String {
    line_chart(
        "Robustness sweep",
        "object noise sigma_env (m)",
        "success rate",
        &e1_series(rows, betas),
    )
}

impl SeedResult for E1Seed {
    type Row = E1Row;
    type Record = E1Row;

    fn seed(&self) -> u64 {
        self.seed
    }
    fn rows(&self) -> Vec<E1Row> {
        self.rows.clone()
    }
    fn records(&self) -> Vec<E1Row> {
        self.rows.clone()
    }
    fn plot(&self) -> String {
        let betas: Vec<f64> = self.designs.iter().map(|d| d.beta).collect();
        e1_plot(&self.rows, &betas)
    }
    fn write_details(&self, dir: &Path) -> Result<()> {
        for d in &self.designs {
            write_csv(&dir.join(format!("trace-beta-{}.csv", d.beta)), &d.trace)?;
        }
        std::fs::write(
            dir.join("designs.json"),
            serde_json::to_string_pretty(&self.designs)?,
        )?;
        Ok(())
    }
}

// ---------------------------------------------------------------- e2

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct E2Row {
    pub seed: u64,
    pub episode: u64,
    pub tool: String,
    pub success_rate: f64,
    pub mean_perf: f64,
    pub learning_weight: f64,
    pub perceptual: Option<f64>,
    pub utility: Option<f64>,
    pub model: Option<f64>,
    pub control: Option<f64>,
    pub decision: Option<f64>,
    pub bypassed: bool,
    pub impasse_reason: String,
    pub designer_called: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct E2Line {
    pub seed: u64,
    #[serde(flatten)]
    pub record: EpisodeRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct E2Seed {
    pub seed: u64,
    pub episodes: Vec<EpisodeRecord>,
    /// First episode by which every starting tool had been used.
    pub exhaustion_episode: Option<u64>,
    /// Episode of the first designer call.
    pub designer_episode: Option<u64>,
    pub designer_calls: usize,
    /// Mean batch success rate up to and including the designer episode.
    pub pre_success: Option<f64>,
    /// Mean batch success rate after the designer episode.
    pub post_success: Option<f64>,
    pub final_state: LoopState,
}

pub fn e2_initial_state(cfg: &ExperimentConfig, world: &ToyWorld) -> Result<LoopState> {
    let e = &cfg.e2;
    let model = WorldModel::new(e.states.clone(), e.outcomes.clone(), [], e.prior_count)?;
    LoopState::new(
        e.toolbox.clone(),
        model,
        GenerativeDesignModel::prior(world.bounds()),
        SurrogateGrid::with_defaults(world.bounds()),
        e.retention,
    )
}

pub fn e2_seed(cfg: &ExperimentConfig, world: &ToyWorld, seed: u64) -> Result<E2Seed> {
    let e = &cfg.e2;
    let loop_cfg = cfg.loop_config();
    let mut state = e2_initial_state(cfg, world)?;
    let starting: Vec<String> = state.toolbox.iter().map(|t| t.id.clone()).collect();
    let mut used = std::collections::BTreeSet::new();
    let mut exhaustion_episode = None;
    let mut episodes = Vec::new();
    for _ in 0..e.episodes {
        let rec = run_episode(&mut state, world, &e.task, &e.env, &loop_cfg, seed)?;
        used.insert(rec.tool.clone());
        if exhaustion_episode.is_none() && starting.iter().all(|id| used.contains(id)) {
            exhaustion_episode = Some(rec.episode);
        }
        episodes.push(rec);
    }
    let designer_episode = episodes
        .iter()
        .find(|r| r.designer.is_some())
        .map(|r| r.episode);
    let designer_calls = episodes.iter().filter(|r| r.designer.is_some()).count();
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let (pre_success, post_success) = match designer_episode {
        Some(d) => (
            mean(
                episodes
                    .iter()
                    .filter(|r| r.episode <= d)
                    .map(|r| r.success_rate)
                    .collect(),
            ),
            mean(
                episodes
                    .iter()
                    .filter(|r| r.episode > d)
                    .map(|r| r.success_rate)
                    .collect(),
            ),
        ),
        None => (
            mean(episodes.iter().map(|r| r.success_rate).collect()),
            None,
        ),
    };
    Ok(E2Seed {
        seed,
        episodes,
        exhaustion_episode,
        designer_episode,
        designer_calls,
        pre_success,
        post_success,
        final_state: state,
    })
}

fn e2_row(seed: u64, r: &EpisodeRecord) -> E2Row {
    E2Row {
        seed,
        episode: r.episode,
        tool: r.tool.clone(),
        success_rate: r.success_rate,
        mean_perf: r.mean_perf,
        learning_weight: r.learning_weight,
        perceptual: r.report.value(Channel::Perceptual),
        utility: r.report.value(Channel::Utility),
        model: r.report.value(Channel::Model),
        control: r.report.value(Channel::Control),
        decision: r.report.value(Channel::Decision),
        bypassed: r.bypassed,
        impasse_reason: r.impasse_reason.clone(),
        designer_called: r.designer.is_some(),
    }
}

pub fn e2_plot(seeds: &[&E2Seed]) -> String {
    let n = seeds.iter().map(|s| s.episodes.len()).max().unwrap_or(0);
    let avg = |f: &dyn Fn(&EpisodeRecord) -> Option<f64>| -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let xs: Vec<f64> = seeds
                    .iter()
                    .filter_map(|s| s.episodes.get(i))
                    .filter_map(f)
                    .collect();
                (
                    (i + 1) as f64,
                    xs.iter().sum::<f64>() / xs.len().max(1) as f64,
                )
            })
            .collect()
    };
    line_chart(
        "Impasse and invention",
        "episode",
        "value",
        &[
            Series::new("success rate", avg(&|r| Some(r.success_rate))),
            Series::new(
                "decision confidence",
                avg(&|r| r.report.value(Channel::Decision)),
            ),
            Series::new("model confidence", avg(&|r| r.report.value(Channel::Model))),
            Series::new(
                "designer call",
                avg(&|r| Some(if r.designer.is_some() { 1.0 } else { 0.0 })),
            ),
        ],
    )
}

impl SeedResult for E2Seed {
    type Row = E2Row;
    type Record = E2Line;

    fn seed(&self) -> u64 {
        self.seed
    }
    fn rows(&self) -> Vec<E2Row> {
        self.episodes.iter().map(|r| e2_row(self.seed, r)).collect()
    }
    fn records(&self) -> Vec<E2Line> {
        self.episodes
            .iter()
            .map(|r| E2Line {
                seed: self.seed,
                record: r.clone(),
            })
            .collect()
    }
    fn plot(&self) -> String {
        e2_plot(&[self])
    }
    fn write_details(&self, dir: &Path) -> Result<()> {
        std::fs::write(
            dir.join("world_model.json"),
            serde_json::to_string_pretty(&self.final_state.world_model)?,
        )?;
        std::fs::write(
            dir.join("toolbox.json"),
            serde_json::to_string_pretty(&self.final_state.toolbox)?,
        )?;
        Ok(())
    }
}

// ---------------------------------------------------------------- e3

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct E3Candidate {
    pub seed: u64,
    pub index: usize,
    pub id: String,
    pub valid: bool,
    pub violation: Option<String>,
    pub confidence: f64,
    pub nominal_reward: f64,
    pub robust_success_rate: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct E3Row {
    pub seed: u64,
    pub candidates: usize,
    pub valid: usize,
    pub successes: usize,
    /// Simulations the ranked order needs to reach its first success.
    pub ranked_evaluations: Option<usize>,
    /// Simulations generation order needs to reach its first success.
    pub exhaustive_evaluations: Option<usize>,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct E3Seed {
    pub seed: u64,
    pub candidates: Vec<E3Candidate>,
    /// Candidate indices in filter-and-rank order.
    pub ranked: Vec<usize>,
    pub row: E3Row,
}

/// Draws designs from the prior generative model and scores each with the
/// early-discard checks and the nominal confidence.
pub fn prior_candidates(
    world: &ToyWorld,
    task: &TaskSpec,
    n: usize,
    floor: f64,
    seed: u64,
    component: &str,
) -> Vec<DesignCandidate> {
    let bounds = *world.bounds();
    let g = GenerativeDesignModel::prior(&bounds);
    let mut rng = component_rng(seed, component, 0);
    let thetas: Vec<Vec<f64>> = (0..n).map(|_| g.sample(&mut rng, &bounds)).collect();
    thetas
        .iter()
        .enumerate()
        .map(|(i, th)| {
            let tool = tool_from_params(format!("cand-{i:03}"), th, &bounds);
            let d = early_discard(&tool, task, &bounds, &[floor]);
            let (confidence, reward) = nominal_confidence(world, &tool, task);
            DesignCandidate {
                tool,
                predicted_reward: reward,
                confidence,
                valid: d.proceed,
                violation: d.reason.map(|r| r.code().to_string()),
                iteration: 0,
                sample: i,
                epistemic: 0.0,
                aleatoric: 0.0,
            }
        })
        .collect()
}

pub fn e3_seed(cfg: &ExperimentConfig, world: &ToyWorld, seed: u64) -> Result<E3Seed> {
    let e = &cfg.e3;
    let cands = prior_candidates(
        world,
        &e.task,
        e.candidates,
        cfg.evaluator.checkpoint_floor,
        seed,
        "e3",
    );
    let env = with_seed(&e.env, sub_seed(seed, "e3-eval", 0));
    let rates: Vec<f64> = {
        use rayon::prelude::*;
        cands
            .par_iter()
            .map(|c| world.evaluate_robust(&c.tool, &e.task, &env).success_rate)
            .collect()
    };
    let success: Vec<bool> = rates.iter().map(|&r| r >= e.success_target).collect();
    let ranked: Vec<usize> = filter_rank(&cands, &cfg.evaluator.calibration, cands.len())
        .iter()
        .map(|c| c.sample)
        .collect();
    let ranked_evaluations = ranked.iter().position(|&i| success[i]).map(|p| p + 1);
    let exhaustive_evaluations = success.iter().position(|&s| s).map(|p| p + 1);
    let ratio = match (ranked_evaluations, exhaustive_evaluations) {
        (Some(a), Some(b)) => Some(a as f64 / b as f64),
        _ => None,
    };
    let candidates: Vec<E3Candidate> = cands
        .iter()
        .zip(rates.iter().zip(&success))
        .map(|(c, (&rate, &ok))| E3Candidate {
            seed,
            index: c.sample,
            id: c.tool.id.clone(),
            valid: c.valid,
            violation: c.violation.clone(),
            confidence: c.confidence,
            nominal_reward: c.predicted_reward,
            robust_success_rate: rate,
            success: ok,
        })
        .collect();
    let row = E3Row {
        seed,
        candidates: cands.len(),
        valid: cands.iter().filter(|c| c.valid).count(),
        successes: success.iter().filter(|&&s| s).count(),
        ranked_evaluations,
        exhaustive_evaluations,
        ratio,
    };
    Ok(E3Seed {
        seed,
        candidates,
        ranked,
        row,
    })
}

/// Median of the per-seed ratios; seeds where either order never succeeds
/// are left out.
pub fn median_ratio(rows: &[E3Row]) -> Option<f64> {
    let mut r: Vec<f64> = rows.iter().filter_map(|x| x.ratio).collect();
    if r.is_empty() {
        return None;
    }
    r.sort_by(f64::total_cmp);
    let m = r.len() / 2;
    Some(if r.len() % 2 == 1 {
        r[m]
    } else {
        0.5 * (r[m - 1] + r[m])
    })
}

impl SeedResult for E3Seed {
    type Row = E3Row;
    type Record = E3Candidate;

    fn seed(&self) -> u64 {
        self.seed
    }
    fn rows(&self) -> Vec<E3Row> {
        vec![self.row.clone()]
    }
    fn records(&self) -> Vec<E3Candidate> {
        self.candidates.clone()
    }
    fn plot(&self) -> String {
        let cumulative = |order: &mut dyn Iterator<Item = usize>| -> Vec<(f64, f64)> {
            let mut found = 0.0;
            order
                .enumerate()
                .map(|(k, i)| {
                    if self.candidates[i].success {
                        found += 1.0;
                    }
                    ((k + 1) as f64, found)
                })
                .collect()
        };
        line_chart(
            "Ranked versus generation-order evaluation",
            "simulations",
            "successful designs found",
            &[
                Series::new(
                    "confidence-ranked",
                    cumulative(&mut self.ranked.iter().copied()),
                ),
                Series::new(
                    "generation order",
                    cumulative(&mut (0..self.candidates.len())),
                ),
            ],
        )
    }
}

// ---------------------------------------------------------------- e4

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct E4Row {
    pub seed: u64,
    pub samples: usize,
    pub holdout: usize,
    pub temperature: f64,
    pub degenerate: bool,
    pub ece_before: f64,
    pub ece_after: f64,
    pub nll_before: f64,
    pub nll_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct E4Seed {
    pub seed: u64,
    pub model: CalibrationModel,
    pub holdout: Vec<CalibrationSample>,
    pub bins: usize,
    pub row: E4Row,
}

fn mean_nll(samples: &[CalibrationSample], cal: &CalibrationModel) -> f64 {
    let total: f64 = samples
        .iter()
        .map(|s| {
            let p = cal.apply(s.confidence).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            if s.success {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / samples.len() as f64
}

fn recalibrated(samples: &[CalibrationSample], cal: &CalibrationModel) -> Vec<CalibrationSample> {
    samples
        .iter()
        .map(|s| CalibrationSample {
            confidence: cal.apply(s.confidence),
            success: s.success,
        })
        .collect()
}

/// Confidence / success pairs for calibration: prior designs scored by the
/// nominal confidence, labelled by robust simulation.
pub fn calibration_samples(
    cfg: &ExperimentConfig,
    world: &ToyWorld,
    seed: u64,
) -> Vec<CalibrationSample> {
    use rayon::prelude::*;
    let e = &cfg.e4;
    let cands = prior_candidates(
        world,
        &e.task,
        e.samples,
        cfg.evaluator.checkpoint_floor,
        seed,
        "e4",
    );
    let env = with_seed(&e.env, sub_seed(seed, "e4-eval", 0));
    cands
        .par_iter()
        .map(|c| CalibrationSample {
            confidence: c.confidence,
            success: world.evaluate_robust(&c.tool, &e.task, &env).success_rate >= e.success_target,
        })
        .collect()
}

pub fn e4_seed(cfg: &ExperimentConfig, world: &ToyWorld, seed: u64) -> Result<E4Seed> {
    let samples = calibration_samples(cfg, world, seed);
    let fit: Vec<CalibrationSample> = samples.iter().step_by(2).copied().collect();
    let holdout: Vec<CalibrationSample> = samples.iter().skip(1).step_by(2).copied().collect();
    let model = fit_temperature(&fit)?;
    let identity = CalibrationModel::identity();
    let bins = cfg.e4.bins;
    let row = E4Row {
        seed,
        samples: samples.len(),
        holdout: holdout.len(),
        temperature: model.temperature,
        degenerate: model.degenerate,
        ece_before: ece(&holdout, bins)?,
        ece_after: ece(&recalibrated(&holdout, &model), bins)?,
        nll_before: mean_nll(&holdout, &identity),
        nll_after: mean_nll(&holdout, &model),
    };
    Ok(E4Seed {
        seed,
        model,
        holdout,
        bins,
        row,
    })
}

/// Reliability curve: (mean confidence, success frequency) per non-empty bin.
pub fn reliability(samples: &[CalibrationSample], bins: usize) -> Vec<(f64, f64)> {
    let mut acc = vec![(0.0, 0.0, 0usize); bins];
    for s in samples {
        let b = ((s.confidence * bins as f64) as usize).min(bins - 1);
        acc[b].0 += s.confidence;
        acc[b].1 += if s.success { 1.0 } else { 0.0 };
        acc[b].2 += 1;
    }
    acc.into_iter()
        .filter(|a| a.2 > 0)
        .map(|(c, y, n)| (c / n as f64, y / n as f64))
        .collect()
}

pub fn e4_plot(seeds: &[&E4Seed]) -> String {
    let bins = seeds.first().map_or(10, |s| s.bins);
    let before: Vec<CalibrationSample> = seeds
        .iter()
        .flat_map(|s| s.holdout.iter().copied())
        .collect();
    let after: Vec<CalibrationSample> = seeds
        .iter()
        .flat_map(|s| recalibrated(&s.holdout, &s.model))
        .collect();
    line_chart(
        "Reliability on held-out designs",
        "stated confidence",
        "empirical success frequency",
        &[
            Series::new("before", reliability(&before, bins)),
            Series::new("after", reliability(&after, bins)),
            Series::new("ideal", vec![(0.0, 0.0), (1.0, 1.0)]),
        ],
    )
}

impl SeedResult for E4Seed {
    type Row = E4Row;
    type Record = E4Row;

    fn seed(&self) -> u64 {
        self.seed
    }
    fn rows(&self) -> Vec<E4Row> {
        vec![self.row.clone()]
    }
    fn records(&self) -> Vec<E4Row> {
        vec![self.row.clone()]
    }
    fn plot(&self) -> String {
        e4_plot(&[self])
    }
}

// ---------------------------------------------------------------- e5

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct E5Row {
    pub seed: u64,
    pub arm: String,
    pub eta_e: f64,
    pub first_target_at: Option<usize>,
    pub evaluations: usize,
    pub best_reward: f64,
    pub best_success_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct E5Seed {
    pub seed: u64,
    pub rows: Vec<E5Row>,
    pub traces: Vec<Vec<TraceRow>>,
}

impl E5Seed {
    /// `first_target_at` of the acquisition arm over that of the ablation.
    pub fn ratio(&self) -> Option<f64> {
        match (self.rows[0].first_target_at, self.rows[1].first_target_at) {
            (Some(a), Some(b)) => Some(a as f64 / b as f64),
            _ => None,
        }
    }
}

pub fn e5_seed(cfg: &ExperimentConfig, world: &ToyWorld, seed: u64) -> Result<E5Seed> {
    let e = &cfg.e5;
    let bounds = *world.bounds();
    let env = with_seed(&e.env, sub_seed(seed, "e5-eval", 0));
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for (arm, eta_e) in [("acquisition", cfg.finetune.eta_e), ("ablation", 0.0)] {
        let fc = FinetuneConfig {
            eta_e,
            ..cfg.finetune
        };
        let res = finetune_generative(
            world,
            &GenerativeDesignModel::prior(&bounds),
            &SurrogateGrid::with_defaults(&bounds),
            &e.task,
            &env,
            &cfg.controller,
            e.budget,
            &fc,
            sub_seed(seed, "e5", 0),
        )?;
        rows.push(E5Row {
            seed,
            arm: arm.to_string(),
            eta_e,
            first_target_at: res.first_target_at,
            evaluations: res.evaluations,
            best_reward: res.best_reward,
            best_success_rate: res.best_success_rate,
        });
        traces.push(res.trace);
    }
    Ok(E5Seed { seed, rows, traces })
}

impl SeedResult for E5Seed {
    type Row = E5Row;
    type Record = E5Row;

    fn seed(&self) -> u64 {
        self.seed
    }
    fn rows(&self) -> Vec<E5Row> {
        self.rows.clone()
    }
    fn records(&self) -> Vec<E5Row> {
        self.rows.clone()
    }
    fn plot(&self) -> String {
        let series: Vec<Series> = self
            .rows
            .iter()
            .zip(&self.traces)
            .map(|(r, t)| {
                Series::new(
                    r.arm.clone(),
                    t.iter().map(|x| (x.evaluations as f64, x.best_j)).collect(),
                )
            })
            .collect();
        line_chart(
            "Fine-tuning efficiency",
            "simulations",
            "best reward",
            &series,
        )
    }
    fn write_details(&self, dir: &Path) -> Result<()> {
        for (r, t) in self.rows.iter().zip(&self.traces) {
            write_csv(&dir.join(format!("trace-{}.csv", r.arm)), t)?;
        }
        Ok(())
    }
}
