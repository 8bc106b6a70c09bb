//! The closed evaluator–user–designer loop.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::confidence::{Channel, ConfidenceReport};
use crate::controller::{control_precision, ControllerParams};
use crate::designer::{
    cem_design, discover_tool, DesignConfig, GenerativeDesignModel, SurrogateGrid,
};
use crate::error::{invalid, Error, Result};
use crate::evaluator::{
    adapt_learning_weight, assemble_report, select_tool, EvaluatorConfig, ReportInputs,
};
use crate::pomdp::{
    belief_update, impasse_detect, policy_posterior, Belief, ComboKey, ImpasseConfig, PolicyConfig,
    WorldModel, SUCCESS,
};
use crate::rng::sub_seed;
use crate::toyworld::{Affordance, EnvSpec, TaskSpec, ToolSpec, ToyWorld};

/// Outcome label recorded for a failed trial.
pub const FAILURE: &str = "failure";

/// Everything the loop needs besides its mutable state.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub controller: ControllerParams,
    pub evaluator: EvaluatorConfig,
    pub policy: PolicyConfig,
    pub impasse: ImpasseConfig,
    pub design: DesignConfig,
    /// Affordances the designer may combine.
    pub library: Vec<Affordance>,
    pub max_combo: usize,
    /// Trial protocol used inside `cem_design` when the designer is called.
    pub design_env: EnvSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopState {
    pub toolbox: Vec<ToolSpec>,
    pub world_model: WorldModel,
    pub design_model: GenerativeDesignModel,
    pub surrogate: SurrogateGrid,
    pub belief: Belief,
    pub history: Vec<ConfidenceReport>,
    /// Number of completed episodes.
    pub episode: u64,
    /// Maximum number of reports kept in `history`.
    pub retention: usize,
    /// Combinations that have been acted with at least once.
    pub tried: BTreeSet<ComboKey>,
    /// Episode of the most recent designer call. Only later reports count
    /// towards the next impasse.
    pub last_designer: Option<u64>,
}

impl LoopState {
    pub fn new(
        toolbox: Vec<ToolSpec>,
        world_model: WorldModel,
        design_model: GenerativeDesignModel,
        surrogate: SurrogateGrid,
        retention: usize,
    ) -> Result<Self> {
        if toolbox.is_empty() {
            return invalid("toolbox is empty");
        }
        if retention == 0 {
            return invalid("history retention must be >= 1");
        }
        let belief = Belief::uniform(world_model.states.len())?;
        Ok(Self {
            toolbox,
            world_model,
            design_model,
            surrogate,
            belief,
            history: Vec::new(),
            episode: 0,
            retention,
            tried: BTreeSet::new(),
            last_designer: None,
        })
    }

    fn combos(&self) -> Vec<ComboKey> {
        let set: BTreeSet<ComboKey> = self.toolbox.iter().map(ComboKey::of_tool).collect();
        set.into_iter().collect()
    }
}

/// One channel of an episode report; absent channels carry a reason code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub channel: Channel,
    pub value: Option<f64>,
    pub raw_entropy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub episode: u64,
    pub channels: Vec<ChannelRecord>,
}

impl ReportRecord {
    /// Lists all five channels in canonical order; channels missing from the
    /// report get `reason` (or "not-computed").
    pub fn from_report(report: &ConfidenceReport, reasons: &[(Channel, &str)]) -> Self {
        let channels = Channel::ALL
            .iter()
            .map(|&ch| match report.get(ch) {
                Some(s) => ChannelRecord {
                    channel: ch,
                    value: Some(s.value),
                    raw_entropy: Some(s.raw_entropy),
                    reason: None,
                },
                None => ChannelRecord {
                    channel: ch,
                    value: None,
                    raw_entropy: None,
                    reason: Some(
                        reasons
                            .iter()
                            .find(|(c, _)| *c == ch)
                            .map_or("not-computed", |(_, r)| r)
                            .to_string(),
                    ),
                },
            })
            .collect();
        Self {
            episode: report.episode,
            channels,
        }
    }

    pub fn value(&self, ch: Channel) -> Option<f64> {
        self.channels
            .iter()
            .find(|c| c.channel == ch)
            .and_then(|c| c.value)
    }

    /// Every channel has a value or a reason code.
    pub fn is_complete(&self) -> bool {
        self.channels.len() == Channel::ALL.len()
            && self
                .channels
                .iter()
                .all(|c| c.value.is_some() || c.reason.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignerCall {
    pub combo: ComboKey,
    pub discovery_confidence: f64,
    /// "template" when discovery was confident enough, else "cem".
    pub method: String,
    pub tool: ToolSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub tool: String,
    pub combo: ComboKey,
    pub bypassed: bool,
    pub trigger_designer: bool,
    pub success_rate: f64,
    pub mean_perf: f64,
    pub learning_weight: f64,
    pub report: ReportRecord,
    pub impasse: bool,
    /// "impasse", "explore-more", "nominal" or "insufficient-history".
    pub impasse_reason: String,
    pub designer: Option<DesignerCall>,
}

/// Runs one episode: select, act, learn, report, and call the designer on
/// an impasse. Errors are tagged with the episode number.
pub fn run_episode(
    state: &mut LoopState,
    world: &ToyWorld,
    task: &TaskSpec,
    env: &EnvSpec,
    cfg: &LoopConfig,
    seed: u64,
) -> Result<EpisodeRecord> {
    let ep = state.episode + 1;
    step(state, world, task, env, cfg, seed, ep).map_err(|e| Error::Episode {
        episode: ep,
        source: Box::new(e),
    })
}

fn step(
    state: &mut LoopState,
    world: &ToyWorld,
    task: &TaskSpec,
    env: &EnvSpec,
    cfg: &LoopConfig,
    seed: u64,
    ep: u64,
) -> Result<EpisodeRecord> {
    let sel = select_tool(
        world,
        &state.toolbox,
        task,
        env,
        &cfg.controller,
        &cfg.evaluator,
        &state.surrogate,
        ep,
    )?;
    let tool = state.toolbox[sel.choice].clone();
    let combo = ComboKey::of_tool(&tool);
    let combos = state.combos();
    for c in &combos {
        state.world_model.add_combo(c.clone());
    }
    let before = policy_posterior(&state.belief, &combos, &state.world_model, &cfg.policy)?;
    let mut pre = ConfidenceReport::new(ep);
    pre.insert(before.decision)?;
    let lr = adapt_learning_weight(&pre, &cfg.evaluator)?;

    let batch_env = EnvSpec {
        seed: sub_seed(seed, "user", ep),
        ..*env
    };
    let eval = world.evaluate_robust(&tool, task, &batch_env);
    for t in &eval.trials {
        let outcome = if t.success { SUCCESS } else { FAILURE };
        state.belief = belief_update(&state.belief, &combo, outcome, &state.world_model)?.belief;
        state
            .world_model
            .record_outcome(&combo, &state.belief, outcome, lr)?;
        state
            .surrogate
            .observe(&tool, if t.hook_ok { t.perf } else { 0.0 });
    }
    state.tried.insert(combo.clone());

    let after = policy_posterior(&state.belief, &combos, &state.world_model, &cfg.policy)?;
    let precision = control_precision(&tool, &cfg.controller)?;
    let scope: Vec<ComboKey> = state.tried.iter().cloned().collect();
    let report = assemble_report(
        &ReportInputs {
            perceptual: Some(&state.belief),
            utility: Some(state.surrogate.cell(&tool)),
            model: Some((&state.world_model, &scope)),
            control: Some((&precision, &cfg.controller.squash)),
            decision: Some(&after.q),
        },
        ep,
        &cfg.evaluator,
    )?;
    state.history.push(report.clone());
    if state.history.len() > state.retention {
        let excess = state.history.len() - state.retention;
        state.history.drain(..excess);
    }

    let fresh: Vec<ConfidenceReport> = state
        .history
        .iter()
        .filter(|r| state.last_designer.is_none_or(|d| r.episode > d))
        .cloned()
        .collect();
    let (impasse, impasse_reason) = if fresh.len() >= cfg.impasse.window {
        let v = impasse_detect(&fresh, &cfg.impasse)?;
        let reason = serde_json::to_value(v.reason)?
            .as_str()
            .unwrap_or("nominal")
            .to_string();
        (v.impasse, reason)
    } else {
        (false, "insufficient-history".to_string())
    };

    let mut designer = None;
    if impasse && sel.trigger_designer {
        let disc = discover_tool(
            &cfg.library,
            &state.belief,
            &state.world_model,
            &cfg.policy,
            cfg.max_combo,
            world.bounds(),
        )?;
        let id = format!("invented-{ep}");
        let tags = disc.combo.affordances().to_vec();
        let (new_tool, method) = if disc.decision.value < cfg.impasse.decision_threshold {
            let design = cem_design(
                world,
                task,
                &cfg.design_env,
                &cfg.controller,
                &cfg.design,
                sub_seed(seed, "designer", ep),
            )?;
            state.design_model = design.model;
            let mut t = design.best;
            t.id = id;
            (t.with_affordances(tags), "cem")
        } else {
            let mut t = disc.tool;
            t.id = id;
            (t, "template")
        };
        state.world_model.add_combo(disc.combo.clone());
        state.toolbox.push(new_tool.clone());
        state.last_designer = Some(ep);
        designer = Some(DesignerCall {
            combo: disc.combo,
            discovery_confidence: disc.decision.value,
            method: method.to_string(),
            tool: new_tool,
        });
    }

    state.episode = ep;
    Ok(EpisodeRecord {
        episode: ep,
        tool: tool.id,
        combo,
        bypassed: sel.bypassed,
        trigger_designer: sel.trigger_designer,
        success_rate: eval.success_rate,
        mean_perf: eval.mean_perf,
        learning_weight: lr,
        report: ReportRecord::from_report(&report, &[]),
        impasse,
        impasse_reason,
        designer,
    })
}
