//! Planar tool-use world.
//!
//! A tool is a polyline of segments, each with a length and a bend relative
//! to the previous segment. The user holds the tool at a hand pose chosen
//! from a fixed grid over a disk of radius `R`, and succeeds when the tool tip
//! lands within `success_radius` of the object. Pull tasks additionally need
//! a hook: the cumulative bend must reach the task's hook threshold.

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, PI};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::keyed_rng;

/// Action opportunities a tool can offer. The derived order is the canonical
/// order used everywhere combinations are keyed or enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Affordance {
    Extend,
    Hook,
    Push,
    Wedge,
}

impl Affordance {
    pub const ALL: [Affordance; 4] = [
        Affordance::Extend,
        Affordance::Hook,
        Affordance::Push,
        Affordance::Wedge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Affordance::Extend => "extend",
            Affordance::Hook => "hook",
            Affordance::Push => "push",
            Affordance::Wedge => "wedge",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "extend" => Ok(Affordance::Extend),
            "hook" => Ok(Affordance::Hook),
            "push" => Ok(Affordance::Push),
            "wedge" => Ok(Affordance::Wedge),
            other => invalid(format!("unknown affordance {other:?}")),
        }
    }
}

impl std::fmt::Display for Affordance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Meters.
    pub length: f64,
    /// Radians, relative to the previous segment (or the hand for the first).
    pub bend: f64,
}

impl Segment {
    pub fn new(length: f64, bend: f64) -> Self {
        Self { length, bend }
    }
}

/// Geometric limits every tool must respect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolBounds {
    pub max_segments: usize,
    pub max_segment_length: f64,
    pub max_bend: f64,
    pub length_budget: f64,
}

impl Default for ToolBounds {
    fn default() -> Self {
        Self {
            max_segments: 4,
            max_segment_length: 0.8,
            max_bend: FRAC_PI_2,
            length_budget: 1.6,
        }
    }
}

impl ToolBounds {
    pub fn validate(&self) -> Result<()> {
        if self.max_segments == 0 {
            return invalid("max_segments must be >= 1");
        }
        if !(self.max_segment_length > 0.0) || !(self.max_bend > 0.0) || !(self.length_budget > 0.0)
        {
            return invalid("tool bounds must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub id: String,
    pub segments: Vec<Segment>,
    #[serde(default)]
    pub affordances: BTreeSet<Affordance>,
}

const GEOM_TOL: f64 = 1e-9;

impl ToolSpec {
    pub fn new(id: impl Into<String>, segments: Vec<Segment>) -> Self {
        Self {
            id: id.into(),
            segments,
            affordances: BTreeSet::new(),
        }
    }

    pub fn with_affordances(mut self, tags: impl IntoIterator<Item = Affordance>) -> Self {
        self.affordances = tags.into_iter().collect();
        self
    }

    /// A single straight segment.
    pub fn straight(id: impl Into<String>, length: f64) -> Self {
        Self::new(id, vec![Segment::new(length, 0.0)])
    }

    pub fn validate(&self, bounds: &ToolBounds) -> Result<()> {
        let m = self.segments.len();
        if m == 0 || m > bounds.max_segments {
            return invalid(format!(
                "tool {:?} has {m} segments, allowed 1..={}",
                self.id, bounds.max_segments
            ));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !s.length.is_finite()
                || s.length < 0.0
                || s.length > bounds.max_segment_length + GEOM_TOL
            {
                return invalid(format!(
                    "tool {:?} segment {i} length {} out of bounds",
                    self.id, s.length
                ));
            }
            if !s.bend.is_finite() || s.bend.abs() > bounds.max_bend + GEOM_TOL {
                return invalid(format!(
                    "tool {:?} segment {i} bend {} out of bounds",
                    self.id, s.bend
                ));
            }
        }
        if self.total_length() > bounds.length_budget + GEOM_TOL {
            return invalid(format!(
                "tool {:?} total length {} exceeds budget {}",
                self.id,
                self.total_length(),
                bounds.length_budget
            ));
        }
        Ok(())
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    pub fn cumulative_bend(&self) -> f64 {
        self.segments.iter().map(|s| s.bend).sum()
    }

    /// Tip position relative to the hand, in the hand frame.
    pub fn tip_offset(&self) -> [f64; 2] {
        tip_offset_with(self.segments.iter().map(|s| (s.length, s.bend)))
    }
}

fn tip_offset_with(segments: impl Iterator<Item = (f64, f64)>) -> [f64; 2] {
    let mut angle = 0.0;
    let mut tip = [0.0, 0.0];
    for (length, bend) in segments {
        angle += bend;
        tip[0] += length * angle.cos();
        tip[1] += length * angle.sin();
    }
    tip
}

/// Hand position and heading.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, psi: f64) -> Self {
        Self { x, y, psi }
    }
}

fn rotate(v: [f64; 2], cos: f64, sin: f64) -> [f64; 2] {
    [cos * v[0] - sin * v[1], sin * v[0] + cos * v[1]]
}

/// Tip position for a tool held at `hand`.
pub fn forward_kinematics(tool: &ToolSpec, hand: Pose) -> [f64; 2] {
    let mut angle = hand.psi;
    let mut tip = [hand.x, hand.y];
    for s in &tool.segments {
        angle += s.bend;
        tip[0] += s.length * angle.cos();
        tip[1] += s.length * angle.sin();
    }
    tip
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Reach,
    Pull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Object position, meters.
    pub object: [f64; 2],
    /// Radius of the disk the hand can move in.
    pub reach_radius: f64,
    /// Width of the Gaussian performance score.
    pub sigma_task: f64,
    /// Minimum cumulative bend for a pull (radians).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hook_threshold: Option<f64>,
}

impl TaskSpec {
    pub fn reach(object: [f64; 2]) -> Self {
        Self {
            kind: TaskKind::Reach,
            object,
            reach_radius: 1.0,
            sigma_task: 0.1,
            hook_threshold: None,
        }
    }

    pub fn pull(object: [f64; 2], hook_threshold: f64) -> Self {
        Self {
            kind: TaskKind::Pull,
            object,
            reach_radius: 1.0,
            sigma_task: 0.1,
            hook_threshold: Some(hook_threshold),
        }
    }

    /// Reach task used by the robustness experiments.
    pub fn default_reach() -> Self {
        Self::reach([1.4, 0.0])
    }

    /// An object beyond the hand's reach that must be pulled with a hook.
    pub fn default_pull() -> Self {
        Self::pull([1.8, 0.0], PI / 3.0)
    }

    pub fn validate(&self, bounds: &ToolBounds) -> Result<()> {
        if !(self.reach_radius > 0.0) {
            return invalid("reach radius must be positive");
        }
        if !(self.sigma_task > 0.0) {
            return invalid("task score width must be positive");
        }
        if self.object.iter().any(|x| !x.is_finite()) {
            return invalid("object position must be finite");
        }
        match (self.kind, self.hook_threshold) {
            (TaskKind::Pull, None) => invalid("pull task needs a hook threshold"),
            (TaskKind::Pull, Some(h)) => {
                let max = bounds.max_segments as f64 * bounds.max_bend;
                if !(h > 0.0) || h > max + GEOM_TOL {
                    invalid(format!("hook threshold {h} outside (0, {max}]"))
                } else {
                    Ok(())
                }
            }
            (TaskKind::Reach, _) => Ok(()),
        }
    }

    /// Whether a tool with this cumulative bend satisfies the task's hook rule.
    pub fn hook_ok(&self, cumulative_bend: f64) -> bool {
        match (self.kind, self.hook_threshold) {
            (TaskKind::Pull, Some(h)) => cumulative_bend >= h,
            _ => true,
        }
    }

    pub fn object_distance(&self) -> f64 {
        self.object[0].hypot(self.object[1])
    }
}

/// Perturbation magnitudes and the trial protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvSpec {
    /// Object-position noise std (meters).
    pub sigma_env: f64,
    /// Per-joint bend execution noise std (radians).
    pub sigma_act: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for EnvSpec {
    fn default() -> Self {
        Self {
            sigma_env: 0.0,
            sigma_act: 0.0,
            trials: 200,
            seed: 0,
        }
    }
}

impl EnvSpec {
    pub fn noiseless() -> Self {
        Self {
            sigma_env: 0.0,
            sigma_act: 0.0,
            trials: 1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_env >= 0.0) || !(self.sigma_act >= 0.0) {
            return invalid("noise magnitudes must be non-negative");
        }
        if self.trials == 0 {
            return invalid("at least one trial is required");
        }
        Ok(())
    }
}

/// Resolution of the user's hand-pose search and the success radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub bounds: ToolBounds,
    /// Grid points per axis over the square enclosing the reach disk.
    pub grid_positions: usize,
    pub grid_orientations: usize,
    /// Tip-to-object distance that counts as success (meters).
    pub success_radius: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            bounds: ToolBounds::default(),
            grid_positions: 21,
            grid_orientations: 24,
            success_radius: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    pub score: f64,
    pub success: bool,
    pub tip_distance: f64,
    pub best_pose: Pose,
}

/// Perturbations sampled for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDraw {
    pub object_offset: [f64; 2],
    pub bend_noise: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub success: bool,
    pub perf: f64,
    /// The executed tool met the task's hook rule.
    pub hook_ok: bool,
    pub draw: TrialDraw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustEval {
    pub success_rate: f64,
    pub mean_perf: f64,
    pub trials: Vec<TrialOutcome>,
}

impl RobustEval {
    /// Mean performance counting trials that break the hook rule as zero.
    /// Equal to `mean_perf` for reach tasks.
    pub fn gated_reward(&self) -> f64 {
        let n = self.trials.len() as f64;
        self.trials
            .iter()
            .map(|t| if t.hook_ok { t.perf } else { 0.0 })
            .sum::<f64>()
            / n
    }
}

/// The simulated environment with its pose grid precomputed.
#[derive(Debug, Clone)]
pub struct ToyWorld {
    config: WorldConfig,
    /// Grid positions inside the unit disk; scaled by the task's reach radius.
    unit_positions: Vec<[f64; 2]>,
    /// (ψ, cos ψ, sin ψ) per grid orientation.
    headings: Vec<(f64, f64, f64)>,
}

impl Default for ToyWorld {
    fn default() -> Self {
        Self::new(WorldConfig::default()).expect("default world config is valid")
    }
}

impl ToyWorld {
    pub fn new(config: WorldConfig) -> Result<Self> {
        config.bounds.validate()?;
        if config.grid_positions < 2 || config.grid_orientations == 0 {
            return invalid("pose grid needs >= 2 positions per axis and >= 1 orientation");
        }
        if !(config.success_radius > 0.0) {
            return invalid("success radius must be positive");
        }
        let n = config.grid_positions;
        let step = 2.0 / (n - 1) as f64;
        let mut unit_positions = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let x = -1.0 + step * i as f64;
                let y = -1.0 + step * j as f64;
                if x * x + y * y <= 1.0 + 1e-12 {
                    unit_positions.push([x, y]);
                }
            }
        }
        let headings = (0..config.grid_orientations)
            .map(|k| {
                let psi = 2.0 * PI * k as f64 / config.grid_orientations as f64;
                (psi, psi.cos(), psi.sin())
            })
            .collect();
        Ok(Self {
            config,
            unit_positions,
            headings,
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn bounds(&self) -> &ToolBounds {
        &self.config.bounds
    }

    /// Number of hand poses searched per evaluation.
    pub fn pose_count(&self) -> usize {
        self.unit_positions.len() * self.headings.len()
    }

    /// Best grid pose for a tip offset, as (distance², position, heading index).
    fn plan(&self, offset: [f64; 2], object: [f64; 2], radius: f64) -> (f64, [f64; 2], usize) {
        let mut best = (f64::INFINITY, [0.0, 0.0], 0);
        for (k, &(_, c, s)) in self.headings.iter().enumerate() {
            let r = rotate(offset, c, s);
            let target = [object[0] - r[0], object[1] - r[1]];
            for u in &self.unit_positions {
                let dx = radius * u[0] - target[0];
                let dy = radius * u[1] - target[1];
                let d2 = dx * dx + dy * dy;
                if d2 < best.0 {
                    best = (d2, [radius * u[0], radius * u[1]], k);
                }
            }
        }
        best
    }

    fn score(&self, task: &TaskSpec, distance: f64) -> f64 {
        (-distance * distance / (2.0 * task.sigma_task * task.sigma_task)).exp()
    }

    /// Best score over the pose grid for an object at `object`.
    pub fn performance(&self, tool: &ToolSpec, task: &TaskSpec, object: [f64; 2]) -> Performance {
        let (d2, pos, k) = self.plan(tool.tip_offset(), object, task.reach_radius);
        let distance = d2.sqrt();
        Performance {
            score: self.score(task, distance),
            success: distance <= self.config.success_radius && task.hook_ok(tool.cumulative_bend()),
            tip_distance: distance,
            best_pose: Pose::new(pos[0], pos[1], self.headings[k].0),
        }
    }

    /// Runs `env.trials` perturbed trials.
    ///
    /// Trial `t` draws its perturbations from a stream keyed by
    /// `(env.seed, t)`. The user sees the displaced object and plans with
    /// the nominal tool geometry; the bend noise only acts at execution.
    pub fn evaluate_robust(&self, tool: &ToolSpec, task: &TaskSpec, env: &EnvSpec) -> RobustEval {
        let nominal = tool.tip_offset();
        let trials: Vec<TrialOutcome> = (0..env.trials as u64)
            .into_par_iter()
            .map(|t| self.trial(tool, nominal, task, env, t))
            .collect();
        let n = trials.len() as f64;
        let successes = trials.iter().filter(|t| t.success).count() as f64;
        let perf_sum: f64 = trials.iter().map(|t| t.perf).sum();
        RobustEval {
            success_rate: successes / n,
            mean_perf: perf_sum / n,
            trials,
        }
    }

    fn trial(
        &self,
        tool: &ToolSpec,
        nominal: [f64; 2],
        task: &TaskSpec,
        env: &EnvSpec,
        t: u64,
    ) -> TrialOutcome {
        let mut rng = keyed_rng(env.seed, t);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let object_offset = [env.sigma_env * normal(), env.sigma_env * normal()];
        let bend_noise: Vec<f64> = tool
            .segments
            .iter()
            .map(|_| env.sigma_act * normal())
            .collect();
        let object = [
            task.object[0] + object_offset[0],
            task.object[1] + object_offset[1],
        ];

        let (_, pos, k) = self.plan(nominal, object, task.reach_radius);
        let executed = tip_offset_with(
            tool.segments
                .iter()
                .zip(&bend_noise)
                .map(|(s, e)| (s.length, s.bend + e)),
        );
        let (_, c, s) = self.headings[k];
        let r = rotate(executed, c, s);
        let distance = (pos[0] + r[0] - object[0]).hypot(pos[1] + r[1] - object[1]);
        let bend: f64 = tool.cumulative_bend() + bend_noise.iter().sum::<f64>();
        let hook_ok = task.hook_ok(bend);
        TrialOutcome {
            success: hook_ok && distance <= self.config.success_radius,
            perf: self.score(task, distance),
            hook_ok,
            draw: TrialDraw {
                object_offset,
                bend_noise,
            },
        }
    }
}
