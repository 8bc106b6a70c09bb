use std::cell::Cell;

use approx::assert_abs_diff_eq;
use metacog::confidence::CalibrationModel;
use metacog::confidence::{Channel, ConfidenceReport, ConfidenceScore, DirichletParams, ProbVec};
use metacog::controller::{control_precision, tool_control_confidence, ControllerParams};
use metacog::designer::DesignCandidate;
use metacog::evaluator::{
    adapt_learning_weight, assemble_report, best_assessment, filter_rank, select_tool,
    EvaluatorConfig, ReportInputs, ToolAssessment,
};
use metacog::toyworld::{EnvSpec, TaskSpec, ToolSpec, ToyWorld};
use metacog::Error;
use proptest::prelude::*;

fn env() -> EnvSpec {
    EnvSpec {
        sigma_env: 0.1,
        trials: 20,
        seed: 11,
        ..EnvSpec::default()
    }
}

#[test]
fn report_examples() {
    let cfg = EvaluatorConfig::default();
    let ctrl = ControllerParams::default();

    let b = ProbVec::uniform(3).unwrap();
    let flat = DirichletParams::symmetric(5, 1.0).unwrap();
    let pi = control_precision(&ToolSpec::straight("bare", 0.0), &ctrl).unwrap();
    let q = ProbVec::delta(4, 2).unwrap();
    let r = assemble_report(
        &ReportInputs {
            perceptual: Some(&b),
            utility: Some(&flat),
            control: Some((&pi, &ctrl.squash)),
            decision: Some(&q),
            ..Default::default()
        },
        7,
        &cfg,
    )
    .unwrap();
    assert_eq!(r.episode, 7);
    assert_abs_diff_eq!(r.value(Channel::Perceptual).unwrap(), 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(r.value(Channel::Utility).unwrap(), 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(r.value(Channel::Control).unwrap(), 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(r.value(Channel::Decision).unwrap(), 1.0, epsilon = 1e-12);
    assert!(r.model.is_none());
    assert!(r.value(Channel::Model).is_err());

    // a concentrated utility posterior is more confident than the flat one
    let sharp = DirichletParams::new(vec![1.0, 1.0, 40.0, 1.0, 1.0]).unwrap();
    let r = assemble_report(
        &ReportInputs {
            utility: Some(&sharp),
            ..Default::default()
        },
        0,
        &cfg,
    )
    .unwrap();
    assert!(r.value(Channel::Utility).unwrap() > 0.5);
}

#[test]
fn empty_report_rejected() {
    let r = assemble_report(&ReportInputs::default(), 0, &EvaluatorConfig::default());
    assert!(matches!(r, Err(Error::Validation(_))));
}

#[test]
fn report_values_stay_in_unit_interval() {
    let cfg = EvaluatorConfig::default();
    for w in [[1.0, 0.0, 0.0], [0.2, 0.3, 0.5], [1.0, 1.0, 1.0]] {
        let b = ProbVec::from_weights(&w).unwrap();
        let r = assemble_report(
            &ReportInputs {
                perceptual: Some(&b),
                decision: Some(&b),
                ..Default::default()
            },
            0,
            &cfg,
        )
        .unwrap();
        for s in r.channels() {
            assert!((0.0..=1.0).contains(&s.value));
        }
    }
}

#[test]
fn single_tool_is_always_chosen() {
    let world = ToyWorld::default();
    let sel = select_tool(
        &world,
        &[ToolSpec::straight("only", 0.3)],
        &TaskSpec::default_reach(),
        &env(),
        &ControllerParams::default(),
        &EvaluatorConfig::default(),
        &|_: &ToolSpec| 0.0,
        0,
    )
    .unwrap();
    assert_eq!(sel.choice, 0);
    assert_eq!(sel.assessments.len(), 1);
    assert!(sel.report.control.is_some());
}

#[test]
fn ties_break_by_id() {
    let world = ToyWorld::default();
    let toolbox = [ToolSpec::straight("b", 0.4), ToolSpec::straight("a", 0.4)];
    let sel = select_tool(
        &world,
        &toolbox,
        &TaskSpec::default_reach(),
        &env(),
        &ControllerParams::default(),
        &EvaluatorConfig::default(),
        &|_: &ToolSpec| 0.5,
        0,
    )
    .unwrap();
    assert_eq!(toolbox[sel.choice].id, "a");
}

#[test]
fn control_weight_decides_between_close_performers() {
    // 0.85 + 0.5·0.9 = 1.30 beats 0.9 + 0.5·0.2 = 1.00
    let items = [
        ToolAssessment::new("steady", 0.85, 0.9, 0.5),
        ToolAssessment::new("shaky", 0.9, 0.2, 0.5),
    ];
    assert_abs_diff_eq!(items[0].score, 1.3, epsilon = 1e-12);
    assert_abs_diff_eq!(items[1].score, 1.0, epsilon = 1e-12);
    assert_eq!(best_assessment(&items), Some(0));
    assert_abs_diff_eq!(
        items[0].combined_confidence,
        (0.85f64 * 0.9).sqrt(),
        epsilon = 1e-12
    );

    // without the control term raw performance wins
    let items = [
        ToolAssessment::new("steady", 0.85, 0.9, 0.0),
        ToolAssessment::new("shaky", 0.9, 0.2, 0.0),
    ];
    assert_eq!(best_assessment(&items), Some(1));
}

#[test]
fn confident_selection_uses_the_predictor() {
    let world = ToyWorld::default();
    let ctrl = ControllerParams::default();
    let toolbox = [
        ToolSpec::straight("short", 0.2),
        ToolSpec::straight("long", 0.8),
    ];
    let calls = Cell::new(0);
    let predictor = |t: &ToolSpec| {
        calls.set(calls.get() + 1);
        if t.id == "short" {
            0.9
        } else {
            0.1
        }
    };
    let sel = select_tool(
        &world,
        &toolbox,
        &TaskSpec::default_reach(),
        &env(),
        &ctrl,
        &EvaluatorConfig::default(),
        &predictor,
        3,
    )
    .unwrap();
    assert!(sel.bypassed);
    assert_eq!(calls.get(), 2);
    let c_short = tool_control_confidence(&toolbox[0], &ctrl).unwrap();
    let c_long = tool_control_confidence(&toolbox[1], &ctrl).unwrap();
    let want = if 0.9 + 0.5 * c_short >= 0.1 + 0.5 * c_long {
        0
    } else {
        1
    };
    assert_eq!(sel.choice, want);
    assert_eq!(sel.report.episode, 3);
    assert_abs_diff_eq!(
        sel.report.value(Channel::Control).unwrap(),
        [c_short, c_long][sel.choice],
        epsilon = 1e-12
    );
}

#[test]
fn unsure_selection_simulates_and_may_trigger_designer() {
    let world = ToyWorld::default();
    let cfg = EvaluatorConfig {
        tau_skip: 0.95,
        ..EvaluatorConfig::default()
    };
    let sel = select_tool(
        &world,
        &[ToolSpec::straight("bare", 0.0)],
        &TaskSpec::default_pull(),
        &env(),
        &ControllerParams::default(),
        &cfg,
        &|_: &ToolSpec| -> f64 { panic!("predictor must not run") },
        0,
    )
    .unwrap();
    assert!(!sel.bypassed);
    assert_eq!(sel.assessments[0].predicted_perf, 0.0);
    assert!(sel.trigger_designer);
}

#[test]
fn selection_validates_inputs() {
    let world = ToyWorld::default();
    let run = |toolbox: &[ToolSpec], cfg: EvaluatorConfig| {
        select_tool(
            &world,
            toolbox,
            &TaskSpec::default_reach(),
            &env(),
            &ControllerParams::default(),
            &cfg,
            &|_: &ToolSpec| 0.0,
            0,
        )
    };
    assert!(run(&[], EvaluatorConfig::default()).is_err());
    assert!(run(
        &[ToolSpec::straight("big", 2.0)],
        EvaluatorConfig::default()
    )
    .is_err());
    let bad = EvaluatorConfig {
        tau_skip: 1.5,
        ..EvaluatorConfig::default()
    };
    assert!(run(&[ToolSpec::straight("ok", 0.3)], bad).is_err());
}

proptest! {
    #[test]
    fn choice_invariant_to_common_rescaling(
        perf in prop::collection::vec(0.0f64..1.0, 1..6),
        ctrl in prop::collection::vec(0.0f64..1.0, 6),
        beta in 0.0f64..3.0,
        k in 0.1f64..10.0,
    ) {
        let make = |scale: f64| -> Vec<ToolAssessment> {
            perf.iter()
                .zip(&ctrl)
                .enumerate()
                .map(|(i, (&p, &c))| ToolAssessment::new(format!("t{i}"), scale * p, c, scale * beta))
                .collect()
        };
        let a = best_assessment(&make(1.0)).unwrap();
        let b = best_assessment(&make(k)).unwrap();
        // rescaling can only matter through rounding of near-ties
        let base = make(1.0);
        prop_assert!(a == b || (base[a].score - base[b].score).abs() < 1e-9);
    }
}

fn candidate(id: &str, conf: f64, length: f64, valid: bool) -> DesignCandidate {
    DesignCandidate {
        tool: ToolSpec::straight(id, length),
        predicted_reward: 0.0,
        confidence: conf,
        valid,
        violation: (!valid).then(|| "budget".to_string()),
        iteration: 0,
        sample: 0,
        epistemic: 0.0,
        aleatoric: 0.0,
    }
}

#[test]
fn filter_rank_examples() {
    let cands = [
        candidate("x", 0.9, 0.5, false),
        candidate("y", 0.6, 1.2, true),
        candidate("z", 0.6, 0.8, true),
    ];
    let out = filter_rank(&cands, &CalibrationModel::identity(), 5);
    let ids: Vec<&str> = out.iter().map(|c| c.tool.id.as_str()).collect();
    assert_eq!(ids, ["z", "y"]);
    assert_eq!(
        filter_rank(&cands, &CalibrationModel::identity(), 1).len(),
        1
    );
}

#[test]
fn filter_rank_applies_calibration_without_reordering() {
    let cands: Vec<DesignCandidate> = [0.2, 0.9, 0.55, 0.7]
        .iter()
        .enumerate()
        .map(|(i, &c)| candidate(&format!("c{i}"), c, 0.4, true))
        .collect();
    let cal = CalibrationModel::with_temperature(2.0).unwrap();
    let out = filter_rank(&cands, &cal, 4);
    let ids: Vec<&str> = out.iter().map(|c| c.tool.id.as_str()).collect();
    assert_eq!(ids, ["c1", "c3", "c2", "c0"]);
    assert_abs_diff_eq!(out[0].confidence, cal.apply(0.9), epsilon = 1e-15);
    assert!(out[0].confidence < 0.9);
}

fn decision_report(c: f64) -> ConfidenceReport {
    let mut r = ConfidenceReport::new(0);
    r.insert(ConfidenceScore::new(Channel::Decision, 0.0, c).unwrap())
        .unwrap();
    r
}

#[test]
fn learning_weight_examples() {
    let cfg = EvaluatorConfig::default();
    assert_abs_diff_eq!(
        adapt_learning_weight(&decision_report(1.0), &cfg).unwrap(),
        0.5,
        epsilon = 1e-12
    );
    assert_abs_diff_eq!(
        adapt_learning_weight(&decision_report(0.0), &cfg).unwrap(),
        2.0,
        epsilon = 1e-12
    );
    assert_abs_diff_eq!(
        adapt_learning_weight(&decision_report(0.5), &cfg).unwrap(),
        1.25,
        epsilon = 1e-12
    );
    assert!(adapt_learning_weight(&ConfidenceReport::new(0), &cfg).is_err());
}

proptest! {
    #[test]
    fn learning_weight_is_bounded_and_decreasing(c in 0.0f64..1.0, d in 0.0f64..1.0) {
        let cfg = EvaluatorConfig::default();
        let a = adapt_learning_weight(&decision_report(c), &cfg).unwrap();
        let b = adapt_learning_weight(&decision_report(c.max(d)), &cfg).unwrap();
        prop_assert!((cfg.lr_min..=cfg.lr_max).contains(&a));
        prop_assert!(b <= a + 1e-12);
    }
}
