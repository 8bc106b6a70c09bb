use approx::assert_abs_diff_eq;
use metacog::confidence::{Channel, ConfidenceReport, ConfidenceScore, ProbVec};
use metacog::pomdp::{
    belief_update, impasse_detect, model_confidence, policy_posterior, ComboKey, ImpasseConfig,
    ImpasseReason, PolicyConfig, WorldModel, SUCCESS,
};
use metacog::toyworld::Affordance;
use metacog::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FAIL: &str = "failure";

fn combo(tags: &[Affordance]) -> ComboKey {
    ComboKey::new(tags.iter().copied())
}

fn model(combos: &[ComboKey]) -> WorldModel {
    WorldModel::new(
        vec!["reach".into(), "pull".into()],
        vec![SUCCESS.into(), FAIL.into()],
        combos.iter().cloned(),
        1.0,
    )
    .unwrap()
}

fn observe(m: &mut WorldModel, c: &ComboKey, state: &str, outcome: &str, times: usize) {
    for _ in 0..times {
        m.record_outcome_in_state(c, state, outcome, 1.0).unwrap();
    }
}

/// Predictive P(success) is 0.8 in "reach" and 0.2 in "pull".
fn informative() -> (WorldModel, ComboKey) {
    let c = combo(&[Affordance::Extend]);
    let mut m = model(std::slice::from_ref(&c));
    observe(&mut m, &c, "reach", SUCCESS, 3);
    observe(&mut m, &c, "pull", FAIL, 3);
    (m, c)
}

fn pv(p: &[f64]) -> ProbVec {
    ProbVec::new(p.to_vec()).unwrap()
}

// ---------------------------------------------------------------- belief

#[test]
fn belief_update_examples() {
    let (m, c) = informative();
    let b = belief_update(&pv(&[0.5, 0.5]), &c, SUCCESS, &m).unwrap();
    assert_abs_diff_eq!(b.belief.as_slice()[0], 0.8, epsilon = 1e-12);
    assert_abs_diff_eq!(b.belief.as_slice()[1], 0.2, epsilon = 1e-12);

    let d = belief_update(&pv(&[0.0, 1.0]), &c, SUCCESS, &m).unwrap();
    assert_eq!(d.belief.as_slice(), &[0.0, 1.0]);

    let flat = model(std::slice::from_ref(&c));
    let u = belief_update(&pv(&[0.3, 0.7]), &c, FAIL, &flat).unwrap();
    assert_abs_diff_eq!(u.belief.as_slice()[0], 0.3, epsilon = 1e-12);
    assert!(!u.uninformative);
}

#[test]
fn belief_update_rejects_unknown_labels() {
    let (m, c) = informative();
    let b = pv(&[0.5, 0.5]);
    assert!(matches!(
        belief_update(&b, &c, "spilled", &m),
        Err(Error::Validation(_))
    ));
    let other = combo(&[Affordance::Wedge]);
    assert!(matches!(
        belief_update(&b, &other, SUCCESS, &m),
        Err(Error::Validation(_))
    ));
}

proptest! {
    #[test]
    fn opposite_observation_restores_belief(p in 0.01f64..0.99, k in 1usize..20) {
        let c = combo(&[Affordance::Hook]);
        let mut m = model(std::slice::from_ref(&c));
        observe(&mut m, &c, "reach", SUCCESS, k);
        observe(&mut m, &c, "pull", FAIL, k);
        let b0 = pv(&[p, 1.0 - p]);
        let b1 = belief_update(&b0, &c, SUCCESS, &m).unwrap().belief;
        let b2 = belief_update(&b1, &c, FAIL, &m).unwrap().belief;
        prop_assert!((b2.as_slice()[0] - p).abs() < 1e-9);
    }

    #[test]
    fn argmax_survives_reward_shift_and_gamma(
        counts in prop::collection::vec((0usize..6, 0usize..6), 2..5),
        shift in -5.0f64..5.0,
        gamma in 0.1f64..100.0,
    ) {
        let combos: Vec<ComboKey> = Affordance::ALL[..counts.len()].iter().map(|&a| combo(&[a])).collect();
        let mut m = model(&combos);
        for (c, &(s, f)) in combos.iter().zip(&counts) {
            observe(&mut m, c, "pull", SUCCESS, s);
            observe(&mut m, c, "pull", FAIL, f);
        }
        let b = pv(&[0.3, 0.7]);
        let base = policy_posterior(&b, &combos, &m, &PolicyConfig::default()).unwrap();
        let mut shifted = PolicyConfig { gamma, ..PolicyConfig::default() };
        for v in shifted.rewards.values_mut() {
            *v += shift;
        }
        let other = policy_posterior(&b, &combos, &m, &shifted).unwrap();
        prop_assert_eq!(base.best, other.best);
    }
}

// ---------------------------------------------------------------- policy

#[test]
fn identical_combos_give_uniform_policy() {
    let cs = [combo(&[Affordance::Extend]), combo(&[Affordance::Push])];
    let m = model(&cs);
    let p = policy_posterior(&pv(&[0.5, 0.5]), &cs, &m, &PolicyConfig::default()).unwrap();
    assert_abs_diff_eq!(p.q.as_slice()[0], 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(p.decision.value, 0.0, epsilon = 1e-12);
    // canonical order breaks the tie
    assert_eq!(p.best, 0);
}

#[test]
fn zero_gamma_gives_uniform_policy() {
    let (m, c) = informative();
    let cs = [c, combo(&[Affordance::Hook])];
    let cfg = PolicyConfig {
        gamma: 0.0,
        ..PolicyConfig::default()
    };
    let p = policy_posterior(&pv(&[0.9, 0.1]), &cs, &m, &cfg).unwrap();
    assert_abs_diff_eq!(p.q.as_slice()[0], 0.5, epsilon = 1e-12);
}

#[test]
fn sharp_softmax_example() {
    // predictives: (0.5, 0.5) for the untrained combo, (0.25, 0.75) for the
    // other; these rewards make Q = (1.0, 0.2)
    let a = combo(&[Affordance::Extend]);
    let b = combo(&[Affordance::Push]);
    let mut m = model(&[a.clone(), b.clone()]);
    observe(&mut m, &b, "reach", FAIL, 2);
    observe(&mut m, &b, "pull", FAIL, 2);
    let mut cfg = PolicyConfig {
        gamma: 50.0,
        ..PolicyConfig::default()
    };
    cfg.rewards.insert(SUCCESS.into(), 2.6);
    cfg.rewards.insert(FAIL.into(), -0.6);
    let p = policy_posterior(&pv(&[0.5, 0.5]), &[a, b], &m, &cfg).unwrap();
    assert_abs_diff_eq!(p.expected_rewards[0], 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(p.expected_rewards[1], 0.2, epsilon = 1e-12);
    let tail = (-40f64).exp() / (1.0 + (-40f64).exp());
    assert_abs_diff_eq!(p.q.as_slice()[1], tail, epsilon = 1e-30);
    assert!((p.q.as_slice()[1] - 4e-18).abs() < 5e-19);
    assert!(p.decision.value > 0.999_999_999);
}

#[test]
fn empty_combo_list_rejected() {
    let (m, _) = informative();
    let r = policy_posterior(&pv(&[0.5, 0.5]), &[], &m, &PolicyConfig::default());
    assert!(matches!(r, Err(Error::Validation(_))));
}

// ---------------------------------------------------------------- model confidence

#[test]
fn model_confidence_examples() {
    let cs = [combo(&[Affordance::Extend]), combo(&[Affordance::Hook])];
    let mut m = model(&cs);
    let untrained = model_confidence(&m, &cs).unwrap().value;
    assert_abs_diff_eq!(untrained, 0.5, epsilon = 1e-12);
    for c in &cs {
        for s in ["reach", "pull"] {
            for i in 0..100 {
                m.record_outcome_in_state(c, s, if i % 3 == 0 { FAIL } else { SUCCESS }, 1.0)
                    .unwrap();
            }
        }
    }
    assert!(model_confidence(&m, &cs).unwrap().value > untrained);
}

#[test]
fn concentrated_cell_is_more_confident() {
    let c = combo(&[Affordance::Wedge]);
    let flat = model(std::slice::from_ref(&c));
    let mut sharp = model(std::slice::from_ref(&c));
    observe(&mut sharp, &c, "reach", SUCCESS, 100);
    observe(&mut sharp, &c, "pull", SUCCESS, 100);
    let scope = [c];
    assert!(
        model_confidence(&sharp, &scope).unwrap().value
            > model_confidence(&flat, &scope).unwrap().value
    );
}

// ---------------------------------------------------------------- impasse

fn report(decision: f64, model: f64) -> ConfidenceReport {
    let mut r = ConfidenceReport::new(0);
    r.insert(ConfidenceScore::new(Channel::Decision, 0.0, decision).unwrap())
        .unwrap();
    r.insert(ConfidenceScore::new(Channel::Model, 0.0, model).unwrap())
        .unwrap();
    r
}

#[test]
fn impasse_examples() {
    let cfg = ImpasseConfig::default();
    let h = vec![report(0.1, 0.9); 5];
    let v = impasse_detect(&h, &cfg).unwrap();
    assert!(v.impasse);
    assert_eq!(v.reason, ImpasseReason::Impasse);

    let h = vec![report(0.1, 0.5); 5];
    let v = impasse_detect(&h, &cfg).unwrap();
    assert!(!v.impasse);
    assert_eq!(v.reason, ImpasseReason::ExploreMore);

    let mut h = vec![report(0.1, 0.9); 5];
    h[2] = report(0.3, 0.9);
    assert!(!impasse_detect(&h, &cfg).unwrap().impasse);
}

#[test]
fn impasse_needs_full_window_and_both_channels() {
    let cfg = ImpasseConfig::default();
    assert!(matches!(
        impasse_detect(&vec![report(0.1, 0.9); 4], &cfg),
        Err(Error::Validation(_))
    ));
    let mut h = vec![report(0.1, 0.9); 5];
    h[0] = ConfidenceReport::new(0);
    assert!(matches!(
        impasse_detect(&h, &cfg),
        Err(Error::Validation(_))
    ));
    assert_eq!(
        serde_json::to_string(&ImpasseReason::ExploreMore).unwrap(),
        "\"explore-more\""
    );
}

// ---------------------------------------------------------------- learning

fn cell(m: &WorldModel, c: &ComboKey, s: usize) -> Vec<f64> {
    m.observation_counts(c, s).unwrap()
}

#[test]
fn record_outcome_examples() {
    let c = combo(&[Affordance::Extend]);
    let mut m = model(std::slice::from_ref(&c));
    m.record_outcome(&c, &pv(&[1.0, 0.0]), SUCCESS, 1.0)
        .unwrap();
    assert_eq!(cell(&m, &c, 0), vec![1.0, 0.0]);
    assert_eq!(cell(&m, &c, 1), vec![0.0, 0.0]);

    let mut m = model(std::slice::from_ref(&c));
    m.record_outcome(&c, &pv(&[0.5, 0.5]), SUCCESS, 1.0)
        .unwrap();
    assert_eq!(cell(&m, &c, 0), vec![0.5, 0.0]);
    assert_eq!(cell(&m, &c, 1), vec![0.5, 0.0]);

    let mut m2 = model(std::slice::from_ref(&c));
    m2.record_outcome(&c, &pv(&[0.5, 0.5]), SUCCESS, 2.0)
        .unwrap();
    assert_eq!(cell(&m2, &c, 0), vec![1.0, 0.0]);
}

#[test]
fn record_outcome_validates() {
    let c = combo(&[Affordance::Extend]);
    let mut m = model(std::slice::from_ref(&c));
    let b = pv(&[0.5, 0.5]);
    for lr in [0.0, -1.0, 10.5] {
        assert!(matches!(
            m.record_outcome(&c, &b, SUCCESS, lr),
            Err(Error::Validation(_))
        ));
    }
    assert!(matches!(
        m.record_outcome(&c, &b, "dropped", 1.0),
        Err(Error::Validation(_))
    ));
    let other = combo(&[Affordance::Push]);
    assert!(matches!(
        m.record_outcome(&other, &b, SUCCESS, 1.0),
        Err(Error::Validation(_))
    ));
    assert!(m.record_outcome(&c, &b, SUCCESS, 10.0).is_ok());
}

proptest! {
    #[test]
    fn counts_never_decrease(steps in prop::collection::vec((0.0f64..1.0, any::<bool>(), 0.01f64..10.0), 1..40)) {
        let c = combo(&[Affordance::Extend, Affordance::Hook]);
        let mut m = model(std::slice::from_ref(&c));
        for (p, ok, lr) in steps {
            let before: Vec<Vec<f64>> = (0..2).map(|s| cell(&m, &c, s)).collect();
            m.record_outcome(&c, &pv(&[p, 1.0 - p]), if ok { SUCCESS } else { FAIL }, lr).unwrap();
            for (s, old) in before.iter().enumerate() {
                for (a, b) in old.iter().zip(cell(&m, &c, s)) {
                    prop_assert!(b >= *a);
                }
            }
        }
    }
}

#[test]
fn predictive_converges_to_ground_truth() {
    let cs = [
        combo(&[Affordance::Extend]),
        combo(&[Affordance::Extend, Affordance::Hook]),
    ];
    let truth = [[0.7, 0.1], [0.2, 0.9]];
    let states = ["reach", "pull"];
    let mut m = model(&cs);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..2000 {
        let (ci, s) = (rng.random_range(0..2), rng.random_range(0..2));
        let outcome = if rng.random_bool(truth[ci][s]) {
            SUCCESS
        } else {
            FAIL
        };
        m.record_outcome_in_state(&cs[ci], states[s], outcome, 1.0)
            .unwrap();
    }
    let mut total = 0.0;
    for (ci, c) in cs.iter().enumerate() {
        for (s, &t) in truth[ci].iter().enumerate() {
            let p = m.predictive(c, s).unwrap();
            total += (p.as_slice()[0] - t).abs() + (p.as_slice()[1] - (1.0 - t)).abs();
        }
    }
    let mean_l1 = total / 4.0;
    assert!(mean_l1 < 0.05, "mean L1 {mean_l1}");
}

#[test]
fn world_model_json_uses_canonical_keys() {
    let c = ComboKey::new([Affordance::Hook, Affordance::Extend]);
    let mut m = model(std::slice::from_ref(&c));
    observe(&mut m, &c, "pull", SUCCESS, 2);
    let text = serde_json::to_string(&m).unwrap();
    assert!(text.contains("\"extend+hook\""));
    let back: WorldModel = serde_json::from_str(&text).unwrap();
    assert_eq!(back, m);
}
