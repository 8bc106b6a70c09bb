use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceScore;
use crate::error::{invalid, Result};
use crate::pomdp::{policy_posterior, Belief, ComboKey, PolicyConfig, WorldModel};
use crate::toyworld::{Affordance, Segment, ToolBounds, ToolSpec};

/// Fixed geometry each affordance contributes to a discovered tool.
pub fn affordance_template(a: Affordance, bounds: &ToolBounds) -> Segment {
    match a {
        Affordance::Extend => Segment::new(bounds.max_segment_length, 0.0),
        Affordance::Hook => Segment::new(0.2, PI / 3.0),
        Affordance::Push => Segment::new(0.4, 0.0),
        Affordance::Wedge => Segment::new(0.2, -PI / 4.0),
    }
}

/// Concatenates the templates of a combination in canonical order.
pub fn template_tool(combo: &ComboKey, bounds: &ToolBounds) -> ToolSpec {
    let segments = combo
        .affordances()
        .iter()
        .map(|&a| affordance_template(a, bounds))
        .collect();
    ToolSpec::new(format!("discovered:{combo}"), segments)
        .with_affordances(combo.affordances().iter().copied())
}

/// Every non-empty subset of `library` with at most `k` members, in
/// canonical key order.
pub fn enumerate_combos(library: &[Affordance], k: usize) -> Vec<ComboKey> {
    let mut lib = library.to_vec();
    lib.sort();
    lib.dedup();
    let n = lib.len();
    let mut out: Vec<ComboKey> = (1u32..(1 << n))
        .filter(|mask| (mask.count_ones() as usize) <= k)
        .map(|mask| ComboKey::new((0..n).filter(|i| mask & (1 << i) != 0).map(|i| lib[i])))
        .collect();
    out.sort();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discovery {
    pub combo: ComboKey,
    pub tool: ToolSpec,
    pub decision: ConfidenceScore,
    /// Candidate combinations and their expected rewards.
    pub scored: Vec<(ComboKey, f64)>,
}

/// Picks the affordance combination with the highest expected reward under
/// the current belief and instantiates it as a tool.
pub fn discover_tool(
    library: &[Affordance],
    b: &Belief,
    model: &WorldModel,
    cfg: &PolicyConfig,
    k: usize,
    bounds: &ToolBounds,
) -> Result<Discovery> {
    if library.is_empty() {
        return invalid("affordance library is empty");
    }
    if k == 0 {
        return invalid("combination size limit must be >= 1");
    }
    let combos = enumerate_combos(library, k);
    let post = policy_posterior(b, &combos, model, cfg)?;
    let combo = combos[post.best].clone();
    let scored = combos.into_iter().zip(post.expected_rewards).collect();
    Ok(Discovery {
        tool: template_tool(&combo, bounds),
        combo,
        decision: post.decision,
        scored,
    })
}
