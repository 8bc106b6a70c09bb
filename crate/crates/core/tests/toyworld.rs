use std::f64::consts::{FRAC_PI_2, PI};

use approx::assert_abs_diff_eq;
use metacog::toyworld::{
    forward_kinematics, Affordance, EnvSpec, Pose, Segment, TaskSpec, ToolSpec, ToyWorld,
};
use proptest::prelude::*;

fn seg_tool(segs: &[(f64, f64)]) -> ToolSpec {
    ToolSpec::new("t", segs.iter().map(|&(l, b)| Segment::new(l, b)).collect())
}

fn tool_strategy() -> impl Strategy<Value = ToolSpec> {
    prop::collection::vec((0.0f64..0.8, -FRAC_PI_2..FRAC_PI_2), 1..=4).prop_map(|s| seg_tool(&s))
}

#[test]
fn forward_kinematics_examples() {
    let tip = forward_kinematics(&seg_tool(&[(1.0, 0.0)]), Pose::new(0.0, 0.0, 0.0));
    assert_abs_diff_eq!(tip[0], 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(tip[1], 0.0, epsilon = 1e-12);

    let tip = forward_kinematics(
        &seg_tool(&[(1.0, 0.0), (1.0, FRAC_PI_2)]),
        Pose::new(0.0, 0.0, 0.0),
    );
    assert_abs_diff_eq!(tip[0], 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(tip[1], 1.0, epsilon = 1e-12);

    let tip = forward_kinematics(&seg_tool(&[(1.0, 0.0)]), Pose::new(0.0, 0.0, PI));
    assert_abs_diff_eq!(tip[0], -1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(tip[1], 0.0, epsilon = 1e-12);
}

proptest! {
    #[test]
    fn forward_kinematics_is_rotation_equivariant(
        tool in tool_strategy(),
        x in -1.0f64..1.0,
        y in -1.0f64..1.0,
        psi in -PI..PI,
        theta in -PI..PI,
    ) {
        let a = forward_kinematics(&tool, Pose::new(x, y, psi));
        let b = forward_kinematics(&tool, Pose::new(x, y, psi + theta));
        let (dx, dy) = (a[0] - x, a[1] - y);
        let (c, s) = (theta.cos(), theta.sin());
        prop_assert!((b[0] - x - (c * dx - s * dy)).abs() < 1e-9);
        prop_assert!((b[1] - y - (s * dx + c * dy)).abs() < 1e-9);
    }

    #[test]
    fn performance_ignores_id_and_tags(tool in tool_strategy(), ox in 0.5f64..2.0) {
        let world = ToyWorld::default();
        let task = TaskSpec::reach([ox, 0.3]);
        let other = ToolSpec { id: "renamed".into(), ..tool.clone() }
            .with_affordances([Affordance::Hook, Affordance::Wedge]);
        prop_assert_eq!(
            world.performance(&tool, &task, task.object),
            world.performance(&other, &task, task.object)
        );
    }
}

#[test]
fn reach_with_half_metre_rod_is_exact() {
    let world = ToyWorld::default();
    let task = TaskSpec::reach([1.5, 0.0]);
    let p = world.performance(&seg_tool(&[(0.5, 0.0)]), &task, task.object);
    assert_abs_diff_eq!(p.score, 1.0, epsilon = 1e-12);
    assert!(p.success);
}

#[test]
fn straight_tool_never_pulls() {
    let world = ToyWorld::default();
    let task = TaskSpec::pull([1.5, 0.0], PI / 3.0);
    // scores perfectly but has no hook
    let p = world.performance(&seg_tool(&[(0.5, 0.0)]), &task, task.object);
    assert!(p.score > 0.99);
    assert!(!p.success);
}

#[test]
fn zero_length_tool_score() {
    let world = ToyWorld::default();
    let task = TaskSpec::reach([1.5, 0.0]);
    let p = world.performance(&seg_tool(&[(0.0, 0.0)]), &task, task.object);
    let expected = (-0.25f64 / 0.02).exp();
    assert_abs_diff_eq!(p.score, expected, epsilon = 1e-12);
    assert!((p.score - 3.7e-6).abs() < 1e-7);
    assert!(!p.success);
}

#[test]
fn noiseless_success_is_certain() {
    let world = ToyWorld::default();
    let task = TaskSpec::reach([1.5, 0.0]);
    let env = EnvSpec {
        trials: 50,
        ..EnvSpec::default()
    };
    let r = world.evaluate_robust(&seg_tool(&[(0.5, 0.0)]), &task, &env);
    assert_eq!(r.success_rate, 1.0);
    assert_eq!(r.trials.len(), 50);
}

#[test]
fn same_seed_same_outcomes() {
    let world = ToyWorld::default();
    let task = TaskSpec::default_pull();
    let tool = seg_tool(&[(0.8, 0.0), (0.3, 1.2)]);
    let env = EnvSpec {
        sigma_env: 0.2,
        sigma_act: 0.1,
        trials: 100,
        seed: 42,
    };
    let a = world.evaluate_robust(&tool, &task, &env);
    let b = world.evaluate_robust(&tool, &task, &env);
    assert_eq!(a, b);
    let c = world.evaluate_robust(&tool, &task, &EnvSpec { seed: 43, ..env });
    assert_ne!(a.trials, c.trials);
}

#[test]
fn huge_object_noise_breaks_reach() {
    let world = ToyWorld::default();
    let task = TaskSpec::reach([1.5, 0.0]);
    let env = EnvSpec {
        sigma_env: 10.0,
        ..EnvSpec::default()
    };
    let r = world.evaluate_robust(&seg_tool(&[(0.5, 0.0)]), &task, &env);
    assert_eq!(r.trials.len(), 200);
    assert!(r.success_rate < 0.2, "success rate {}", r.success_rate);
}

#[test]
fn success_rate_non_increasing_in_object_noise() {
    let world = ToyWorld::default();
    let task = TaskSpec::default_reach();
    let tool = seg_tool(&[(0.4, 0.0)]);
    let means: Vec<f64> = [0.0, 0.1, 0.2, 0.4]
        .iter()
        .map(|&sigma_env| {
            (1..=5)
                .map(|seed| {
                    let env = EnvSpec {
                        sigma_env,
                        sigma_act: 0.0,
                        trials: 500,
                        seed,
                    };
                    world.evaluate_robust(&tool, &task, &env).success_rate
                })
                .sum::<f64>()
                / 5.0
        })
        .collect();
    assert_eq!(means[0], 1.0);
    for w in means.windows(2) {
        assert!(w[1] <= w[0], "{means:?}");
    }
}

#[test]
fn invalid_tools_rejected() {
    let world = ToyWorld::default();
    let b = world.bounds();
    assert!(seg_tool(&[(0.9, 0.0)]).validate(b).is_err());
    assert!(seg_tool(&[(0.5, 2.0)]).validate(b).is_err());
    assert!(seg_tool(&[(0.8, 0.0), (0.8, 0.0), (0.1, 0.0)])
        .validate(b)
        .is_err());
    assert!(seg_tool(&[]).validate(b).is_err());
    assert!(seg_tool(&[(0.8, 0.0), (0.8, 0.0)]).validate(b).is_ok());
}

#[test]
fn specs_round_trip_through_json() {
    let tool = seg_tool(&[(0.2, 0.0), (0.2, PI / 3.0)]).with_affordances([Affordance::Hook]);
    let back: ToolSpec = serde_json::from_str(&serde_json::to_string(&tool).unwrap()).unwrap();
    assert_eq!(tool, back);
    let task = TaskSpec::default_pull();
    let back: TaskSpec = serde_json::from_str(&serde_json::to_string(&task).unwrap()).unwrap();
    assert_eq!(task, back);
}
