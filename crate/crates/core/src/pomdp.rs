//! Discrete world model over hidden task contexts.
//!
//! Tools are treated as bundles of affordances. For every affordance
//! combination and hidden state the model keeps a Dirichlet posterior over
//! outcomes; its predictive mean drives belief updates and the policy
//! posterior, and its entropy drives model-parameter confidence. Episodes are
//! single steps: apply a tool, observe one outcome.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::confidence::{
    confidence_from_entropy, dirichlet_entropy, entropy_categorical, squash_to_confidence, Channel,
    ConfidenceReport, ConfidenceScore, DirichletParams, ProbVec,
};
use crate::error::{invalid, Result};
use crate::toyworld::{Affordance, ToolSpec};

/// Belief over hidden states.
pub type Belief = ProbVec;

/// Canonical (sorted, deduplicated) affordance combination.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ComboKey(Vec<Affordance>);

impl ComboKey {
    pub fn new(tags: impl IntoIterator<Item = Affordance>) -> Self {
        let mut v: Vec<Affordance> = tags.into_iter().collect();
        v.sort();
        v.dedup();
        Self(v)
    }

    pub fn of_tool(tool: &ToolSpec) -> Self {
        Self::new(tool.affordances.iter().copied())
    }

    pub fn affordances(&self) -> &[Affordance] {
        &self.0
    }

    pub fn contains(&self, a: Affordance) -> bool {
        self.0.binary_search(&a).is_ok()
    }

    pub fn without(&self, a: Affordance) -> Self {
        Self(self.0.iter().copied().filter(|x| *x != a).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Ok(Self(Vec::new()));
        }
        let tags = s
            .split('+')
            .map(Affordance::parse)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(tags))
    }
}

impl fmt::Display for ComboKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|a| a.name()).collect();
        f.write_str(&names.join("+"))
    }
}

impl Serialize for ComboKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ComboKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ComboKey::parse(&s).map_err(serde::de::Error::custom)
    }
}

pub const SUCCESS: &str = "success";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub states: Vec<String>,
    pub outcomes: Vec<String>,
    pub prior_count: f64,
    /// Squash scale of the model-confidence channel (nats).
    #[serde(default = "default_scale")]
    pub confidence_scale: f64,
    /// One Dirichlet over outcomes per state, for each known combination.
    pub counts: BTreeMap<ComboKey, Vec<DirichletParams>>,
}

fn default_scale() -> f64 {
    1.0
}

impl WorldModel {
    pub fn new(
        states: Vec<String>,
        outcomes: Vec<String>,
        combos: impl IntoIterator<Item = ComboKey>,
        prior_count: f64,
    ) -> Result<Self> {
        if states.len() < 2 {
            return invalid("world model needs at least two states");
        }
        if outcomes.len() < 2 {
            return invalid("world model needs at least two outcomes");
        }
        if !outcomes.iter().any(|o| o == SUCCESS) {
            return invalid("outcomes must include \"success\"");
        }
        if !(prior_count > 0.0) {
            return invalid("prior count must be positive");
        }
        let mut model = Self {
            states,
            outcomes,
            prior_count,
            confidence_scale: default_scale(),
            counts: BTreeMap::new(),
        };
        for c in combos {
            model.add_combo(c);
        }
        Ok(model)
    }

    /// Registers a combination at prior counts; no-op if already known.
    pub fn add_combo(&mut self, combo: ComboKey) {
        let prior = self.prior_cell();
        let n = self.states.len();
        self.counts.entry(combo).or_insert_with(|| vec![prior; n]);
    }

    fn prior_cell(&self) -> DirichletParams {
        DirichletParams::symmetric(self.outcomes.len(), self.prior_count)
            .expect("validated prior count")
    }

    /// Entropy of an untrained cell.
    pub fn prior_entropy(&self) -> f64 {
        dirichlet_entropy(&self.prior_cell())
    }

    pub fn state_index(&self, label: &str) -> Result<usize> {
        self.states
            .iter()
            .position(|s| s == label)
            .ok_or_else(|| crate::Error::Validation(format!("unknown state {label:?}")))
    }

    pub fn outcome_index(&self, label: &str) -> Result<usize> {
        self.outcomes
            .iter()
            .position(|s| s == label)
            .ok_or_else(|| crate::Error::Validation(format!("unknown outcome {label:?}")))
    }

    pub fn cells(&self, combo: &ComboKey) -> Result<&[DirichletParams]> {
        self.counts
            .get(combo)
            .map(Vec::as_slice)
            .ok_or_else(|| crate::Error::Validation(format!("unknown combination {combo:?}")))
    }

    /// Predictive outcome distribution for a known combination in state `s`.
    pub fn predictive(&self, combo: &ComboKey, s: usize) -> Result<ProbVec> {
        let cells = self.cells(combo)?;
        cells
            .get(s)
            .map(DirichletParams::mean)
            .ok_or_else(|| crate::Error::Validation(format!("state index {s} out of range")))
    }

    /// Like [`predictive`](Self::predictive), falling back to the prior for
    /// combinations the model has never seen.
    pub fn predictive_or_prior(&self, combo: &ComboKey, s: usize) -> ProbVec {
        match self.counts.get(combo) {
            Some(cells) => cells[s].mean(),
            None => ProbVec::uniform(self.outcomes.len()).expect("outcomes non-empty"),
        }
    }

    /// Observation counts (concentration minus prior) of one cell.
    pub fn observation_counts(&self, combo: &ComboKey, s: usize) -> Result<Vec<f64>> {
        let cells = self.cells(combo)?;
        Ok(cells[s]
            .alpha()
            .iter()
            .map(|a| a - self.prior_count)
            .collect())
    }

    /// Adds `lr · b_s` to the `(combo, s, outcome)` count for every state.
    pub fn record_outcome(
        &mut self,
        combo: &ComboKey,
        belief: &Belief,
        outcome: &str,
        lr: f64,
    ) -> Result<()> {
        if !(lr > 0.0 && lr <= 10.0) {
            return invalid(format!("learning weight {lr} outside (0, 10]"));
        }
        if belief.len() != self.states.len() {
            return invalid("belief dimension does not match the state count");
        }
        let o = self.outcome_index(outcome)?;
        let cells = self
            .counts
            .get_mut(combo)
            .ok_or_else(|| crate::Error::Validation(format!("unknown combination {combo:?}")))?;
        for (cell, &b) in cells.iter_mut().zip(belief.as_slice()) {
            cell.observe(o, lr * b)?;
        }
        Ok(())
    }

    /// [`record_outcome`](Self::record_outcome) for a known state label.
    pub fn record_outcome_in_state(
        &mut self,
        combo: &ComboKey,
        state: &str,
        outcome: &str,
        lr: f64,
    ) -> Result<()> {
        let s = self.state_index(state)?;
        let b = ProbVec::delta(self.states.len(), s)?;
        self.record_outcome(combo, &b, outcome, lr)
    }

    /// Expected reward of a combination under belief `b`.
    pub fn expected_reward(&self, b: &Belief, combo: &ComboKey, rewards: &[f64]) -> f64 {
        b.as_slice()
            .iter()
            .enumerate()
            .map(|(s, &bs)| {
                let pred = self.predictive_or_prior(combo, s);
                bs * pred
                    .as_slice()
                    .iter()
                    .zip(rewards)
                    .map(|(p, r)| p * r)
                    .sum::<f64>()
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefUpdate {
    pub belief: Belief,
    /// Every state assigned the observation zero likelihood; the prior
    /// belief was returned unchanged.
    pub uninformative: bool,
}

/// One Bayes step: `b'_s ∝ b_s · P(outcome | combo, s)`.
pub fn belief_update(
    b: &Belief,
    combo: &ComboKey,
    outcome: &str,
    model: &WorldModel,
) -> Result<BeliefUpdate> {
    if b.len() != model.states.len() {
        return invalid("belief dimension does not match the state count");
    }
    let o = model.outcome_index(outcome)?;
    model.cells(combo)?;
    let weights: Vec<f64> = (0..b.len())
        .map(|s| Ok(b.as_slice()[s] * model.predictive(combo, s)?.as_slice()[o]))
        .collect::<Result<_>>()?;
    let total: f64 = weights.iter().sum();
    if !(total > f64::MIN_POSITIVE) {
        return Ok(BeliefUpdate {
            belief: b.clone(),
            uninformative: true,
        });
    }
    Ok(BeliefUpdate {
        belief: ProbVec::from_weights(&weights)?,
        uninformative: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    /// Inverse temperature of the softmax over expected rewards.
    pub gamma: f64,
    pub rewards: BTreeMap<String, f64>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            gamma: 10.0,
            rewards: [(SUCCESS.to_string(), 1.0), ("failure".to_string(), 0.0)]
                .into_iter()
                .collect(),
        }
    }
}

impl PolicyConfig {
    /// Rewards in the model's outcome order.
    pub fn reward_vector(&self, model: &WorldModel) -> Result<Vec<f64>> {
        if !(self.gamma >= 0.0) {
            return invalid("policy inverse temperature must be non-negative");
        }
        model
            .outcomes
            .iter()
            .map(|o| {
                self.rewards
                    .get(o)
                    .copied()
                    .ok_or_else(|| crate::Error::Validation(format!("no reward for outcome {o:?}")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyPosterior {
    pub q: ProbVec,
    pub expected_rewards: Vec<f64>,
    /// Index (into the input list) of the best combination.
    pub best: usize,
    pub decision: ConfidenceScore,
}

/// Softmax over expected rewards and its decision confidence.
pub fn policy_posterior(
    b: &Belief,
    combos: &[ComboKey],
    model: &WorldModel,
    cfg: &PolicyConfig,
) -> Result<PolicyPosterior> {
    if combos.is_empty() {
        return invalid("policy posterior needs at least one combination");
    }
    if b.len() != model.states.len() {
        return invalid("belief dimension does not match the state count");
    }
    let rewards = cfg.reward_vector(model)?;
    let values: Vec<f64> = combos
        .iter()
        .map(|c| model.expected_reward(b, c, &rewards))
        .collect();
    let q = softmax(&values, cfg.gamma)?;
    let mut best = 0;
    for i in 1..combos.len() {
        if values[i] > values[best] || (values[i] == values[best] && combos[i] < combos[best]) {
            best = i;
        }
    }
    let h = entropy_categorical(&q);
    let c = confidence_from_entropy(h.min((combos.len() as f64).ln()), combos.len())?;
    Ok(PolicyPosterior {
        q,
        expected_rewards: values,
        best,
        decision: ConfidenceScore::new(Channel::Decision, h, c)?,
    })
}

fn softmax(values: &[f64], gamma: f64) -> Result<ProbVec> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = values.iter().map(|v| (gamma * (v - max)).exp()).collect();
    ProbVec::from_weights(&w)
}

/// Model-parameter confidence: mean Dirichlet entropy over every state's
/// cell for the combinations in scope, squashed around the prior entropy.
pub fn model_confidence(model: &WorldModel, scope: &[ComboKey]) -> Result<ConfidenceScore> {
    if scope.is_empty() {
        return invalid("model confidence needs a non-empty scope");
    }
    let prior = model.prior_entropy();
    let mut total = 0.0;
    let mut n = 0usize;
    for combo in scope {
        match model.counts.get(combo) {
            Some(cells) => {
                total += cells.iter().map(dirichlet_entropy).sum::<f64>();
                n += cells.len();
            }
            None => {
                total += prior * model.states.len() as f64;
                n += model.states.len();
            }
        }
    }
    let h = total / n as f64;
    let value = squash_to_confidence(h, prior, model.confidence_scale)?;
    ConfidenceScore::new(Channel::Model, h, value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImpasseConfig {
    pub decision_threshold: f64,
    pub model_threshold: f64,
    pub window: usize,
}

impl Default for ImpasseConfig {
    fn default() -> Self {
        Self {
            decision_threshold: 0.3,
            model_threshold: 0.7,
            window: 5,
        }
    }
}

impl ImpasseConfig {
    pub fn validate(&self) -> Result<()> {
        let open = |x: f64| x > 0.0 && x < 1.0;
        if !open(self.decision_threshold) || !open(self.model_threshold) {
            return invalid("impasse thresholds must lie in (0, 1)");
        }
        if self.window == 0 {
            return invalid("impasse window must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImpasseReason {
    /// Decision confidence stayed low while the model is well learned.
    Impasse,
    /// Decision confidence stayed low but the model itself is uncertain.
    ExploreMore,
    Nominal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpasseVerdict {
    pub impasse: bool,
    pub reason: ImpasseReason,
}

/// Checks the last `window` reports for persistent low decision confidence
/// combined with high model confidence (both strict).
pub fn impasse_detect(history: &[ConfidenceReport], cfg: &ImpasseConfig) -> Result<ImpasseVerdict> {
    cfg.validate()?;
    if history.len() < cfg.window {
        return invalid(format!(
            "impasse window {} exceeds history length {}",
            cfg.window,
            history.len()
        ));
    }
    let window = &history[history.len() - cfg.window..];
    let mut all_low_decision = true;
    let mut all_high_model = true;
    for r in window {
        let d = r.value(Channel::Decision)?;
        let m = r.value(Channel::Model)?;
        all_low_decision &= d < cfg.decision_threshold;
        all_high_model &= m > cfg.model_threshold;
    }
    let reason = match (all_low_decision, all_high_model) {
        (true, true) => ImpasseReason::Impasse,
        (true, false) => ImpasseReason::ExploreMore,
        _ => ImpasseReason::Nominal,
    };
    Ok(ImpasseVerdict {
        impasse: reason == ImpasseReason::Impasse,
        reason,
    })
}
