use serde::{Deserialize, Serialize};

use crate::toyworld::{TaskSpec, ToolBounds, ToolSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscardReason {
    /// Prefix already spends more than the length budget.
    Budget,
    /// A segment violates the per-segment bounds or the segment count.
    Bounds,
    /// Even spending the remaining budget cannot bring the tip to the object.
    Unreachable,
    /// The remaining segments cannot bend enough to form the required hook.
    Hook,
}

impl DiscardReason {
    pub fn code(self) -> &'static str {
        match self {
            Self::Budget => "budget",
            Self::Bounds => "bounds",
            Self::Unreachable => "unreachable",
            Self::Hook => "hook",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscardDecision {
    pub proceed: bool,
    pub reason: Option<DiscardReason>,
    /// Number of segments checked when the decision was made.
    pub checkpoint: usize,
    /// Optimistic performance bound at that checkpoint.
    pub bound: f64,
}

/// Checks a tool as it is built segment by segment and aborts as soon as an
/// optimistic bound on its performance drops below the checkpoint floor.
///
/// The bound assumes the remaining budget is spent in a straight line from
/// the current tip: the farthest the tip can get from the hand is the current
/// lever plus the remaining length, so the object is out of reach when it is
/// farther than the reach radius plus that. `floors[i]` applies after segment
/// `i + 1`; the last floor repeats.
pub fn early_discard(
    partial: &ToolSpec,
    task: &TaskSpec,
    bounds: &ToolBounds,
    floors: &[f64],
) -> DiscardDecision {
    let mut last = DiscardDecision {
        proceed: true,
        reason: None,
        checkpoint: 0,
        bound: 1.0,
    };
    for i in 1..=partial.segments.len() {
        let abort = |reason, bound| DiscardDecision {
            proceed: false,
            reason: Some(reason),
            checkpoint: i,
            bound,
        };
        let seg = partial.segments[i - 1];
        if i > bounds.max_segments
            || !(0.0..=bounds.max_segment_length + 1e-9).contains(&seg.length)
            || seg.bend.abs() > bounds.max_bend + 1e-9
        {
            return abort(DiscardReason::Bounds, 0.0);
        }
        let prefix = ToolSpec::new(partial.id.clone(), partial.segments[..i].to_vec());
        let used = prefix.total_length();
        if used > bounds.length_budget + 1e-9 {
            return abort(DiscardReason::Budget, 0.0);
        }
        let remaining_segs = bounds.max_segments - i;
        let remaining_len =
            (bounds.length_budget - used).min(remaining_segs as f64 * bounds.max_segment_length);

        let r = prefix.tip_offset();
        let max_reach = task.reach_radius + r[0].hypot(r[1]) + remaining_len;
        let gap = (task.object_distance() - max_reach).max(0.0);
        let bound = (-gap * gap / (2.0 * task.sigma_task * task.sigma_task)).exp();

        let floor = floors.get(i - 1).or(floors.last()).copied().unwrap_or(0.0);
        if bound < floor {
            return abort(DiscardReason::Unreachable, bound);
        }
        let max_bend = prefix.cumulative_bend() + remaining_segs as f64 * bounds.max_bend;
        if !task.hook_ok(max_bend) {
            return abort(DiscardReason::Hook, 0.0);
        }
        last = DiscardDecision {
            proceed: true,
            reason: None,
            checkpoint: i,
            bound,
        };
    }
    last
}
