use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::confidence::ln_multivariate_beta;
use crate::error::{invalid, Result};
use crate::pomdp::{ComboKey, WorldModel};
use crate::toyworld::Affordance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneVerdict {
    pub prune: bool,
    /// Log evidence of the feature-split model minus the pooled model (nats).
    pub delta_log_evidence: f64,
}

/// Dirichlet-multinomial log marginal likelihood `ln B(α + n) − ln B(α)`.
fn log_evidence(prior: &[f64], counts: &[f64]) -> f64 {
    let post: Vec<f64> = prior.iter().zip(counts).map(|(a, n)| a + n).collect();
    ln_multivariate_beta(&post) - ln_multivariate_beta(prior)
}

/// Bayesian model comparison for one affordance feature.
///
/// The split model keeps one outcome distribution per combination and state.
/// The pooled model merges each combination with its counterpart that lacks
/// `feature`, so the feature cannot influence outcomes. The feature is pruned
/// when the split model's extra evidence falls below `threshold` nats.
pub fn prune_affordance_feature(
    model: &WorldModel,
    feature: Affordance,
    threshold: f64,
) -> Result<PruneVerdict> {
    if !model.counts.keys().any(|k| k.contains(feature)) {
        return invalid(format!("feature {feature} occurs in no combination"));
    }
    let prior = vec![model.prior_count; model.outcomes.len()];
    let mut split = 0.0;
    let mut pooled: BTreeMap<(ComboKey, usize), Vec<f64>> = BTreeMap::new();
    for combo in model.counts.keys() {
        for s in 0..model.states.len() {
            let n = model.observation_counts(combo, s)?;
            split += log_evidence(&prior, &n);
            let acc = pooled
                .entry((combo.without(feature), s))
                .or_insert_with(|| vec![0.0; n.len()]);
            for (a, x) in acc.iter_mut().zip(&n) {
                *a += x;
            }
        }
    }
    let pooled: f64 = pooled.values().map(|n| log_evidence(&prior, n)).sum();
    let delta = split - pooled;
    Ok(PruneVerdict {
        prune: delta < threshold,
        delta_log_evidence: delta,
    })
}
