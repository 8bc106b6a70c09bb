use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::controller::ControllerParams;
use crate::designer::{DesignConfig, FinetuneConfig};
use crate::error::{config, Result};
use crate::evaluator::EvaluatorConfig;
use crate::pomdp::{ImpasseConfig, PolicyConfig, SUCCESS};
use crate::toyworld::{
    Affordance, EnvSpec, Segment, TaskSpec, ToolBounds, ToolSpec, ToyWorld, WorldConfig,
};

use super::episode::{LoopConfig, FAILURE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    E1,
    E2,
    E3,
    E4,
    E5,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 5] = [Self::E1, Self::E2, Self::E3, Self::E4, Self::E5];

    pub fn name(self) -> &'static str {
        match self {
            Self::E1 => "e1",
            Self::E2 => "e2",
            Self::E3 => "e3",
            Self::E4 => "e4",
            Self::E5 => "e5",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                crate::Error::Config(format!("unknown experiment {s:?} (expected e1..e5)"))
            })
    }
}

fn noisy(sigma_env: f64, trials: usize) -> EnvSpec {
    EnvSpec {
        sigma_env,
        sigma_act: 0.0,
        trials,
        seed: 0,
    }
}

/// Robustness sweep: designs with and without the control term, evaluated
/// across object-position noise levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct E1Config {
    pub task: TaskSpec,
    pub betas: Vec<f64>,
    pub sigma_grid: Vec<f64>,
    pub sigma_act: f64,
    pub trials: usize,
    /// Trial protocol seen by the designer.
    pub design_env: EnvSpec,
}

impl Default for E1Config {
    fn default() -> Self {
        Self {
            task: TaskSpec::default_reach(),
            betas: vec![0.0, 0.5],
            sigma_grid: vec![0.0, 0.1, 0.2, 0.3, 0.4],
            sigma_act: 0.0,
            trials: 200,
            design_env: EnvSpec::noiseless(),
        }
    }
}

/// The starting toolbox of the invention scenario: a long straight stick
/// that cannot hook and a short hook that cannot reach.
pub fn default_toolbox() -> Vec<ToolSpec> {
    vec![
        ToolSpec::new(
            "stick",
            vec![Segment::new(0.8, 0.0), Segment::new(0.8, 0.0)],
        )
        .with_affordances([Affordance::Extend]),
        ToolSpec::new(
            "hook",
            vec![
                Segment::new(0.2, 0.0),
                Segment::new(0.2, std::f64::consts::FRAC_PI_3),
            ],
        )
        .with_affordances([Affordance::Hook]),
    ]
}

/// Closed-loop impasse-to-invention scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct E2Config {
    pub task: TaskSpec,
    pub env: EnvSpec,
    pub design_env: EnvSpec,
    pub episodes: u64,
    pub states: Vec<String>,
    pub outcomes: Vec<String>,
    pub prior_count: f64,
    pub library: Vec<Affordance>,
    pub max_combo: usize,
    pub retention: usize,
    pub toolbox: Vec<ToolSpec>,
}

impl Default for E2Config {
    fn default() -> Self {
        Self {
            task: TaskSpec::default_pull(),
            env: noisy(0.05, 20),
            design_env: EnvSpec::noiseless(),
            episodes: 12,
            states: vec!["reach".into(), "pull".into()],
            outcomes: vec![SUCCESS.into(), FAILURE.into()],
            prior_count: 1.0,
            library: Affordance::ALL.to_vec(),
            max_combo: 2,
            retention: 64,
            toolbox: default_toolbox(),
        }
    }
}

/// Confidence-ranked versus generation-order evaluation of prior samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct E3Config {
    pub task: TaskSpec,
    pub env: EnvSpec,
    pub candidates: usize,
    /// Robust success rate a design needs to count as successful.
    pub success_target: f64,
}

impl Default for E3Config {
    fn default() -> Self {
        Self {
            task: TaskSpec::default_pull(),
            env: noisy(0.1, 50),
            candidates: 64,
            success_target: 0.8,
        }
    }
}

/// Temperature calibration of design confidences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct E4Config {
    pub task: TaskSpec,
    pub env: EnvSpec,
    pub samples: usize,
    pub bins: usize,
    pub success_target: f64,
}

impl Default for E4Config {
    fn default() -> Self {
        Self {
            task: TaskSpec::default_pull(),
            env: noisy(0.1, 50),
            samples: 200,
            bins: 10,
            success_target: 0.8,
        }
    }
}

/// Fine-tuning with and without the epistemic acquisition bonus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct E5Config {
    pub task: TaskSpec,
    pub env: EnvSpec,
    pub budget: usize,
}

impl Default for E5Config {
    fn default() -> Self {
        Self {
            task: TaskSpec::default_pull(),
            env: noisy(0.1, 50),
            budget: 480,
        }
    }
}

/// Inputs of the `select` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectConfig {
    pub task: TaskSpec,
    pub env: EnvSpec,
    pub toolbox: Vec<ToolSpec>,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            task: TaskSpec::default_pull(),
            env: noisy(0.05, 20),
            toolbox: default_toolbox(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub world: WorldConfig,
    pub controller: ControllerParams,
    pub design: DesignConfig,
    pub finetune: FinetuneConfig,
    pub evaluator: EvaluatorConfig,
    pub policy: PolicyConfig,
    pub impasse: ImpasseConfig,
    pub e1: E1Config,
    pub e2: E2Config,
    pub e3: E3Config,
    pub e4: E4Config,
    pub e5: E5Config,
    pub select: SelectConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentId::E1,
            seeds: (1..=5).collect(),
            out_dir: PathBuf::from("out"),
            world: WorldConfig::default(),
            controller: ControllerParams::default(),
            design: DesignConfig::default(),
            finetune: FinetuneConfig::default(),
            evaluator: EvaluatorConfig::default(),
            policy: PolicyConfig::default(),
            impasse: ImpasseConfig::default(),
            e1: E1Config::default(),
            e2: E2Config::default(),
            e3: E3Config::default(),
            e4: E4Config::default(),
            e5: E5Config::default(),
            select: SelectConfig::default(),
        }
    }
}

fn check_env(name: &str, env: &EnvSpec) -> Result<()> {
    env.validate()
        .map_err(|e| crate::Error::Config(format!("{name}: {e}")))
}

fn check_task(name: &str, task: &TaskSpec, bounds: &ToolBounds) -> Result<()> {
    task.validate(bounds)
        .map_err(|e| crate::Error::Config(format!("{name}: {e}")))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| crate::Error::Config(format!("bad config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            crate::Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return config("seed list is empty");
        }
        let world = ToyWorld::new(self.world)?;
        let bounds = world.bounds();
        self.controller.validate()?;
        self.design.validate()?;
        self.finetune.validate()?;
        self.evaluator.validate()?;
        self.impasse.validate()?;
        if !(self.policy.gamma >= 0.0) {
            return config("policy gamma must be >= 0");
        }

        check_task("e1.task", &self.e1.task, bounds)?;
        check_env("e1.design_env", &self.e1.design_env)?;
        if self.e1.betas.is_empty() || self.e1.betas.iter().any(|b| !(*b >= 0.0)) {
            return config("e1.betas must be a non-empty list of non-negative weights");
        }
        if self.e1.sigma_grid.is_empty() || self.e1.sigma_grid.iter().any(|s| !(*s >= 0.0)) {
            return config("e1.sigma_grid must be a non-empty list of non-negative values");
        }
        if !(self.e1.sigma_act >= 0.0) || self.e1.trials == 0 {
            return config("e1 needs sigma_act >= 0 and trials >= 1");
        }

        check_task("e2.task", &self.e2.task, bounds)?;
        check_env("e2.env", &self.e2.env)?;
        check_env("e2.design_env", &self.e2.design_env)?;
        if self.e2.episodes == 0 || self.e2.retention == 0 || self.e2.max_combo == 0 {
            return config("e2 needs episodes, retention and max_combo >= 1");
        }
        if self.e2.library.is_empty() {
            return config("e2.library is empty");
        }
        if self.e2.toolbox.is_empty() {
            return config("e2.toolbox is empty");
        }
        for t in self.e2.toolbox.iter().chain(&self.select.toolbox) {
            t.validate(bounds)?;
        }
        crate::pomdp::WorldModel::new(
            self.e2.states.clone(),
            self.e2.outcomes.clone(),
            [],
            self.e2.prior_count,
        )?;
        for o in &self.e2.outcomes {
            if o != SUCCESS && o != FAILURE {
                return config(format!("e2 outcome {o:?} is not produced by the simulator"));
            }
        }

        check_task("e3.task", &self.e3.task, bounds)?;
        check_env("e3.env", &self.e3.env)?;
        if self.e3.candidates == 0
            || !(self.e3.success_target > 0.0 && self.e3.success_target <= 1.0)
        {
            return config("e3 needs candidates >= 1 and success_target in (0, 1]");
        }

        check_task("e4.task", &self.e4.task, bounds)?;
        check_env("e4.env", &self.e4.env)?;
        if self.e4.samples < 20 || self.e4.bins == 0 {
            return config("e4 needs samples >= 20 and bins >= 1");
        }
        if !(self.e4.success_target > 0.0 && self.e4.success_target <= 1.0) {
            return config("e4.success_target must lie in (0, 1]");
        }

        check_task("e5.task", &self.e5.task, bounds)?;
        check_env("e5.env", &self.e5.env)?;
        if self.e5.budget < self.finetune.population {
            return config(format!(
                "e5.budget {} is below the fine-tuning population {}",
                self.e5.budget, self.finetune.population
            ));
        }

        check_task("select.task", &self.select.task, bounds)?;
        check_env("select.env", &self.select.env)?;
        if self.select.toolbox.is_empty() {
            return config("select.toolbox is empty");
        }
        Ok(())
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            controller: self.controller.clone(),
            evaluator: self.evaluator,
            policy: self.policy.clone(),
            impasse: self.impasse,
            design: self.design,
            library: self.e2.library.clone(),
            max_combo: self.e2.max_combo,
            design_env: self.e2.design_env,
        }
    }
}
