//! Independent oracles shared by the unit-level suites and the acceptance run.
#![allow(dead_code)]

use metacog::confidence::{
    confidence_from_entropy, entropy_categorical, epistemic_aleatoric_decompose, DirichletParams,
    ProbVec,
};
use metacog::controller::{control_precision, free_energy, ControlSignal, ControllerParams};
use metacog::designer::{discover_tool, prune_affordance_feature, template_tool};
use metacog::pomdp::{Belief, ComboKey, PolicyConfig, WorldModel, SUCCESS};
use metacog::toyworld::{Affordance, Segment, ToolSpec, ToyWorld};
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

pub const FAIL: &str = "failure";

// ---------------------------------------------------------------- dirichlet

/// Draws from Dir(α) by normalising independent Gamma(α_j, 1) variates.
pub fn sample_dirichlet(rng: &mut ChaCha8Rng, alpha: &[f64]) -> Vec<f64> {
    let g: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).unwrap().sample(rng))
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|x| x / s).collect()
}

pub fn plain_entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

/// Closed-form aleatoric entropy against a 100k-sample Monte Carlo estimate
/// of E[H(p)], p ~ Dir(α), on `cases` random Dirichlets.
pub fn aleatoric_vs_monte_carlo(seed: u64, cases: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 100_000;
    for case in 0..cases {
        let k = rng.random_range(2..=5);
        let alpha: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..50.0)).collect();
        let closed =
            epistemic_aleatoric_decompose(&DirichletParams::new(alpha.clone()).unwrap()).aleatoric;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let h = plain_entropy(&sample_dirichlet(&mut rng, &alpha));
            sum += h;
            sum_sq += h * h;
        }
        let mean = sum / n as f64;
        let var = (sum_sq / n as f64 - mean * mean) * n as f64 / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        if (closed - mean).abs() > 3.0 * se {
            return Err(format!(
                "case {case}: alpha {alpha:?} closed {closed} mc {mean} se {se}"
            ));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- controller

pub fn random_tool(rng: &mut ChaCha8Rng) -> ToolSpec {
    let n = rng.random_range(1..=4);
    let mut budget = 1.6;
    let segs = (0..n)
        .map(|_| {
            let l = rng.random_range(0.0..0.8f64).min(budget);
            budget -= l;
            Segment::new(l, rng.random_range(-1.5..1.5))
        })
        .collect();
    ToolSpec::new("r", segs)
}

pub fn random_params(rng: &mut ChaCha8Rng) -> ControllerParams {
    let a = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let p = a * a.transpose() + Matrix3::identity() * 0.1;
    ControllerParams {
        sigma_0: rng.random_range(0.2..2.0),
        sigma_act: rng.random_range(0.0..0.5),
        prior_precision: std::array::from_fn(|i| std::array::from_fn(|j| p[(i, j)])),
        ..ControllerParams::default()
    }
}

/// Central second differences of the free energy, entry by entry.
pub fn fd_hessian(
    tool: &ToolSpec,
    params: &ControllerParams,
    u: [f64; 3],
    e: [f64; 2],
) -> Matrix3<f64> {
    let h = 1e-2;
    let f = |du: [f64; 3]| {
        free_energy(
            ControlSignal::new(u[0] + du[0], u[1] + du[1], u[2] + du[2]),
            e,
            tool,
            params,
        )
    };
    Matrix3::from_fn(|i, j| {
        let shift = |si: f64, sj: f64| {
            let mut d = [0.0; 3];
            d[i] += si * h;
            d[j] += sj * h;
            f(d)
        };
        (shift(1.0, 1.0) - shift(1.0, -1.0) - shift(-1.0, 1.0) + shift(-1.0, -1.0)) / (4.0 * h * h)
    })
}

/// `control_precision` against the finite-difference Hessian on `cases`
/// random tools and parameter sets, relative tolerance 1e-6.
pub fn hessian_matches_finite_differences(seed: u64, cases: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let tool = random_tool(&mut rng);
        let params = random_params(&mut rng);
        let u = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let e = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let exact = *control_precision(&tool, &params)
            .map_err(|e| e.to_string())?
            .matrix();
        let fd = fd_hessian(&tool, &params, u, e);
        let scale = exact.abs().max();
        for i in 0..3 {
            for j in 0..3 {
                let err = (fd[(i, j)] - exact[(i, j)]).abs();
                if err > 1e-6 * scale.max(exact[(i, j)].abs()) {
                    return Err(format!(
                        "case {case} entry ({i},{j}): fd {} exact {}",
                        fd[(i, j)],
                        exact[(i, j)]
                    ));
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- discovery

/// Hand scoring of one combination: Σ_s b_s Σ_o mean(α)_o · reward(o).
pub fn hand_q(m: &WorldModel, b: &[f64], c: &ComboKey, rewards: &[f64]) -> f64 {
    (0..m.states.len())
        .map(|s| {
            let alpha: Vec<f64> = match m.counts.get(c) {
                Some(cells) => cells[s].alpha().to_vec(),
                None => vec![m.prior_count; m.outcomes.len()],
            };
            let a0: f64 = alpha.iter().sum();
            b[s] * alpha
                .iter()
                .zip(rewards)
                .map(|(a, r)| a / a0 * r)
                .sum::<f64>()
        })
        .sum()
}

/// All non-empty subsets of size <= k, built independently of the library.
pub fn subsets(lib: &[Affordance], k: usize) -> Vec<ComboKey> {
    let mut out = Vec::new();
    for mask in 1u32..(1 << lib.len()) {
        if mask.count_ones() as usize <= k {
            out.push(ComboKey::new(
                (0..lib.len())
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| lib[i]),
            ));
        }
    }
    out.sort();
    out.dedup();
    out
}

pub fn random_world(seed: u64) -> (WorldModel, Belief) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all = subsets(&Affordance::ALL, 4);
    let known: Vec<ComboKey> = all
        .iter()
        .filter(|_| rng.random_bool(0.7))
        .cloned()
        .collect();
    let mut m = WorldModel::new(
        vec!["reach".into(), "pull".into(), "push".into()],
        vec![SUCCESS.into(), FAIL.into()],
        known.clone(),
        1.0,
    )
    .unwrap();
    for c in &known {
        for s in ["reach", "pull", "push"] {
            let p = rng.random::<f64>();
            for _ in 0..rng.random_range(0..15) {
                let o = if rng.random_bool(p) { SUCCESS } else { FAIL };
                m.record_outcome_in_state(c, s, o, 1.0).unwrap();
            }
        }
    }
    let w: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 0.01).collect();
    (m, ProbVec::from_weights(&w).unwrap())
}

/// `discover_tool` against brute-force enumeration on every library of up
/// to four affordances, K = 1..3, over `models` seeded world models.
/// Returns the number of cases checked.
pub fn discovery_matches_enumeration(models: u64) -> Result<usize, String> {
    let world = ToyWorld::default();
    let libs = subsets(&Affordance::ALL, 4);
    let cfg = PolicyConfig::default();
    let rewards = [1.0, 0.0];
    let mut checked = 0;
    for seed in 0..models {
        let (m, b) = random_world(seed);
        for lib in &libs {
            for k in 1..=3 {
                let d = discover_tool(lib.affordances(), &b, &m, &cfg, k, world.bounds())
                    .map_err(|e| e.to_string())?;
                let cands = subsets(lib.affordances(), k);
                let qs: Vec<f64> = cands
                    .iter()
                    .map(|c| hand_q(&m, b.as_slice(), c, &rewards))
                    .collect();
                let best_q = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                // first maximal one in canonical order
                let want = cands
                    .iter()
                    .zip(&qs)
                    .find(|(_, &q)| (q - best_q).abs() <= 1e-12)
                    .map(|(c, _)| c.clone())
                    .unwrap();
                let ctx = format!("seed {seed} lib {lib} k {k}");
                if d.combo != want {
                    return Err(format!("{ctx}: got {} want {want}", d.combo));
                }
                if d.tool.segments != template_tool(&want, world.bounds()).segments {
                    return Err(format!("{ctx}: tool geometry differs"));
                }
                let w: Vec<f64> = qs
                    .iter()
                    .map(|q| (cfg.gamma * (q - best_q)).exp())
                    .collect();
                let q = ProbVec::from_weights(&w).unwrap();
                let c = confidence_from_entropy(
                    entropy_categorical(&q).min((cands.len() as f64).ln()),
                    cands.len(),
                )
                .unwrap();
                if (d.decision.value - c).abs() > 1e-9 {
                    return Err(format!("{ctx}: confidence {} want {c}", d.decision.value));
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}

// ---------------------------------------------------------------- structure

/// 2000 draws over {extend} and {extend, hook} in two states. Outcomes depend
/// on the hook only when `dependent`.
pub fn feature_model(seed: u64, dependent: bool) -> WorldModel {
    let plain = ComboKey::new([Affordance::Extend]);
    let hooked = ComboKey::new([Affordance::Extend, Affordance::Hook]);
    let mut m = WorldModel::new(
        vec!["reach".into(), "pull".into()],
        vec![SUCCESS.into(), FAIL.into()],
        [plain.clone(), hooked.clone()],
        1.0,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..2000 {
        let has_hook = rng.random_bool(0.5);
        let state = if rng.random_bool(0.5) {
            "reach"
        } else {
            "pull"
        };
        let p = match (dependent, has_hook) {
            (true, true) => 0.9,
            (true, false) => 0.1,
            (false, _) if state == "reach" => 0.7,
            (false, _) => 0.4,
        };
        let outcome = if rng.random_bool(p) { SUCCESS } else { FAIL };
        let c = if has_hook { &hooked } else { &plain };
        m.record_outcome_in_state(c, state, outcome, 1.0).unwrap();
    }
    m
}

/// (runs pruned on independent data, runs kept on dependent data) out of 100
/// each, δ = 3 nats.
pub fn prune_keep_counts() -> (usize, usize) {
    let pruned = (0..100)
        .filter(|&s| {
            prune_affordance_feature(&feature_model(s, false), Affordance::Hook, 3.0)
                .unwrap()
                .prune
        })
        .count();
    let kept = (0..100)
        .filter(|&s| {
            !prune_affordance_feature(&feature_model(1000 + s, true), Affordance::Hook, 3.0)
                .unwrap()
                .prune
        })
        .count();
    (pruned, kept)
}
