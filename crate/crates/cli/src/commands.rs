//! Subcommand bodies. Each writes `config.json`, `summary.csv` and
//! `episodes.jsonl` (plus `plot.svg` where a chart makes sense) into the
//! output directory and returns the text to print.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use metacog::confidence::{ece, fit_temperature, CalibrationSample};
use metacog::designer::{cem_design, discover_tool, SurrogateGrid};
use metacog::evaluator::select_tool;
use metacog::harness::experiments::{calibration_samples, e2_initial_state, reliability};
use metacog::harness::{
    ensure_writable, line_chart, run_experiment, write_csv, write_jsonl, ExperimentConfig,
    ExperimentId, ExperimentOutput, Series,
};
use metacog::pomdp::{Belief, WorldModel};
use metacog::rng::sub_seed;
use metacog::toyworld::{EnvSpec, ToolSpec, ToyWorld};
use metacog::{Error, Result};
use serde::{Deserialize, Serialize};

fn prepare(cfg: &ExperimentConfig) -> Result<(ToyWorld, u64)> {
    ensure_writable(&cfg.out_dir)?;
    let world = ToyWorld::new(cfg.world)?;
    std::fs::write(
        cfg.out_dir.join("config.json"),
        serde_json::to_string_pretty(cfg)?,
    )?;
    Ok((world, cfg.seeds[0]))
}

fn wrote(cfg: &ExperimentConfig, what: &str) -> String {
    format!("{what}; wrote {}\n", cfg.out_dir.display())
}

#[derive(Serialize)]
struct DesignLine<'a> {
    seed: u64,
    beta: f64,
    tool: &'a ToolSpec,
    objective: f64,
    reward: f64,
    control_confidence: f64,
}

pub fn design(cfg: &ExperimentConfig) -> Result<String> {
    let (world, seed) = prepare(cfg)?;
    let res = cem_design(
        &world,
        &cfg.e1.task,
        &cfg.e1.design_env,
        &cfg.controller,
        &cfg.design,
        sub_seed(seed, "design", 0),
    )?;
    let out = &cfg.out_dir;
    write_csv(&out.join("summary.csv"), &res.trace)?;
    write_jsonl(
        &out.join("episodes.jsonl"),
        &[DesignLine {
            seed,
            beta: cfg.design.beta,
            tool: &res.best,
            objective: res.best_j,
            reward: res.best_reward,
            control_confidence: res.best_confidence,
        }],
    )?;
    let best: Vec<(f64, f64)> = res
        .trace
        .iter()
        .map(|t| (t.iteration as f64, t.best_j))
        .collect();
    let mean: Vec<(f64, f64)> = res
        .trace
        .iter()
        .map(|t| (t.iteration as f64, t.mean_j))
        .collect();
    let plot = line_chart(
        "Cross-entropy design",
        "iteration",
        "objective",
        &[Series::new("best", best), Series::new("elite mean", mean)],
    );
    std::fs::write(out.join("plot.svg"), plot)?;
    std::fs::write(
        out.join("tool.json"),
        serde_json::to_string_pretty(&res.best)?,
    )?;
    Ok(wrote(
        cfg,
        &format!(
            "designed tool: objective {:.4}, reward {:.4}, control confidence {:.4}",
            res.best_j, res.best_reward, res.best_confidence
        ),
    ))
}

#[derive(Serialize)]
struct DiscoverRow {
    combo: String,
    expected_reward: f64,
    chosen: bool,
}

#[derive(Serialize)]
struct DiscoverLine<'a> {
    seed: u64,
    discovery: &'a metacog::designer::Discovery,
}

pub fn discover(cfg: &ExperimentConfig, model: Option<&Path>) -> Result<String> {
    let model: Option<WorldModel> = match model {
        Some(p) => Some(serde_json::from_str(&std::fs::read_to_string(p)?)?),
        None => None,
    };
    let (world, seed) = prepare(cfg)?;
    let model = match model {
        Some(m) => m,
        None => e2_initial_state(cfg, &world)?.world_model,
    };
    let belief = Belief::uniform(model.states.len())?;
    let d = discover_tool(
        &cfg.e2.library,
        &belief,
        &model,
        &cfg.policy,
        cfg.e2.max_combo,
        world.bounds(),
    )?;
    let rows: Vec<DiscoverRow> = d
        .scored
        .iter()
        .map(|(c, r)| DiscoverRow {
            combo: c.to_string(),
            expected_reward: *r,
            chosen: *c == d.combo,
        })
        .collect();
    let out = &cfg.out_dir;
    write_csv(&out.join("summary.csv"), &rows)?;
    write_jsonl(
        &out.join("episodes.jsonl"),
        &[DiscoverLine {
            seed,
            discovery: &d,
        }],
    )?;
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (i as f64, r.expected_reward))
        .collect();
    let plot = line_chart(
        "Expected reward per affordance combination",
        "combination index",
        "expected reward",
        &[Series::new("expected reward", pts)],
    );
    std::fs::write(out.join("plot.svg"), plot)?;
    Ok(wrote(
        cfg,
        &format!(
            "discovered {} with decision confidence {:.4}",
            d.combo, d.decision.value
        ),
    ))
}

fn experiment_message(out: &ExperimentOutput) -> String {
    use metacog::harness::ExperimentResults as R;
    let mut s = String::new();
    let n = |x: Option<usize>| x.map_or("-".to_string(), |v| v.to_string());
    match &out.results {
        R::E1(seeds) => {
            for r in seeds.iter().flat_map(|s| &s.rows) {
                let _ = writeln!(
                    s,
                    "seed {} beta {} sigma_env {}: success {:.3}",
                    r.seed, r.beta, r.sigma_env, r.success_rate
                );
            }
        }
        R::E2(seeds) => {
            for e in seeds {
                let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
                let _ = writeln!(
                    s,
                    "seed {}: designer at episode {}, success {} before, {} after",
                    e.seed,
                    e.designer_episode
                        .map_or("-".to_string(), |d| d.to_string()),
                    f(e.pre_success),
                    f(e.post_success)
                );
            }
        }
        R::E3(seeds) => {
            for e in seeds {
                let _ = writeln!(
                    s,
                    "seed {}: first success after {} ranked vs {} in generation order",
                    e.seed,
                    n(e.row.ranked_evaluations),
                    n(e.row.exhaustive_evaluations)
                );
            }
        }
        R::E4(seeds) => {
            for e in seeds {
                let _ = writeln!(
                    s,
                    "seed {}: T {:.4}, ECE {:.4} -> {:.4}",
                    e.seed, e.row.temperature, e.row.ece_before, e.row.ece_after
                );
            }
        }
        R::E5(seeds) => {
            for e in seeds {
                let _ = writeln!(
                    s,
                    "seed {}: target reached at evaluation {} with acquisition, {} without",
                    e.seed,
                    n(e.rows[0].first_target_at),
                    n(e.rows[1].first_target_at)
                );
            }
        }
    }
    let _ = writeln!(s, "wrote {}", out.out_dir.display());
    s
}

pub fn experiment(cfg: &ExperimentConfig, id: ExperimentId) -> Result<String> {
    let cfg = ExperimentConfig {
        experiment: id,
        ..cfg.clone()
    };
    Ok(experiment_message(&run_experiment(&cfg)?))
}

/// The closed loop of the impasse scenario on the first seed.
pub fn invent(cfg: &ExperimentConfig) -> Result<String> {
    let cfg = ExperimentConfig {
        seeds: vec![cfg.seeds[0]],
        ..cfg.clone()
    };
    experiment(&cfg, ExperimentId::E2)
}

#[derive(Serialize)]
struct SelectRow<'a> {
    id: &'a str,
    predicted_perf: f64,
    control_confidence: f64,
    combined_confidence: f64,
    score: f64,
    chosen: bool,
}

#[derive(Serialize)]
struct SelectLine<'a> {
    seed: u64,
    choice: &'a str,
    trigger_designer: bool,
    bypassed: bool,
    report: &'a metacog::confidence::ConfidenceReport,
}

pub fn select(cfg: &ExperimentConfig) -> Result<String> {
    let (world, seed) = prepare(cfg)?;
    let s = &cfg.select;
    let env = EnvSpec {
        seed: sub_seed(seed, "select", 0),
        ..s.env
    };
    let predictor = SurrogateGrid::with_defaults(world.bounds());
    let sel = select_tool(
        &world,
        &s.toolbox,
        &s.task,
        &env,
        &cfg.controller,
        &cfg.evaluator,
        &predictor,
        1,
    )?;
    let rows: Vec<SelectRow> = sel
        .assessments
        .iter()
        .enumerate()
        .map(|(i, a)| SelectRow {
            id: &a.id,
            predicted_perf: a.predicted_perf,
            control_confidence: a.control_confidence,
            combined_confidence: a.combined_confidence,
            score: a.score,
            chosen: i == sel.choice,
        })
        .collect();
    let choice = &s.toolbox[sel.choice].id;
    let out = &cfg.out_dir;
    write_csv(&out.join("summary.csv"), &rows)?;
    write_jsonl(
        &out.join("episodes.jsonl"),
        &[SelectLine {
            seed,
            choice,
            trigger_designer: sel.trigger_designer,
            bypassed: sel.bypassed,
            report: &sel.report,
        }],
    )?;
    Ok(wrote(
        cfg,
        &format!(
            "selected {choice} (designer trigger {}, bypassed {})",
            sel.trigger_designer, sel.bypassed
        ),
    ))
}

#[derive(Deserialize)]
struct InputSample {
    confidence: f64,
    success: String,
}

fn read_samples(path: &Path) -> Result<Vec<CalibrationSample>> {
    let mut rd = csv::Reader::from_path(path)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, row) in rd.deserialize::<InputSample>().enumerate() {
        let row =
            row.map_err(|e| Error::Validation(format!("{} row {}: {e}", path.display(), i + 1)))?;
        let success = match row.success.trim().to_ascii_lowercase().as_str() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(Error::Validation(format!(
                    "{} row {}: success must be 0/1 or true/false, got {other:?}",
                    path.display(),
                    i + 1
                )))
            }
        };
        out.push(CalibrationSample::new(row.confidence, success));
    }
    Ok(out)
}

#[derive(Serialize)]
struct CalibrateRow {
    seed: u64,
    samples: usize,
    temperature: f64,
    degenerate: bool,
    ece_before: f64,
    ece_after: f64,
}

pub fn calibrate(cfg: &ExperimentConfig, input: Option<&Path>) -> Result<String> {
    let given = input.map(read_samples).transpose()?;
    let (world, seed) = prepare(cfg)?;
    let samples = match given {
        Some(s) => s,
        None => calibration_samples(cfg, &world, seed),
    };
    let model = fit_temperature(&samples)?;
    let after: Vec<CalibrationSample> = samples
        .iter()
        .map(|s| CalibrationSample::new(model.apply(s.confidence), s.success))
        .collect();
    let bins = cfg.e4.bins;
    let row = CalibrateRow {
        seed,
        samples: samples.len(),
        temperature: model.temperature,
        degenerate: model.degenerate,
        ece_before: ece(&samples, bins)?,
        ece_after: ece(&after, bins)?,
    };
    let out = &cfg.out_dir;
    write_csv(&out.join("summary.csv"), std::slice::from_ref(&row))?;
    write_jsonl(&out.join("episodes.jsonl"), &[&model])?;
    let plot = line_chart(
        "Reliability (in-sample)",
        "stated confidence",
        "empirical success frequency",
        &[
            Series::new("before", reliability(&samples, bins)),
            Series::new("after", reliability(&after, bins)),
            Series::new("ideal", vec![(0.0, 0.0), (1.0, 1.0)]),
        ],
    );
    std::fs::write(out.join("plot.svg"), plot)?;
    Ok(wrote(
        cfg,
        &format!(
            "temperature {:.4}{}; ECE {:.4} -> {:.4}",
            model.temperature,
            if model.degenerate {
                " (degenerate, identity kept)"
            } else {
                ""
            },
            row.ece_before,
            row.ece_after
        ),
    ))
}

/// Counts rows and records in an output directory and averages every
/// confidence channel found in the records.
pub fn report(dir: &Path) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "{}", dir.display());
    if let Ok(text) = std::fs::read_to_string(dir.join("config.json")) {
        let v: serde_json::Value = serde_json::from_str(&text)?;
        let _ = writeln!(s, "experiment: {}", v["experiment"].as_str().unwrap_or("?"));
        let _ = writeln!(s, "seeds: {}", v["seeds"]);
    }

    let summary = dir.join("summary.csv");
    let mut rd = csv::Reader::from_path(&summary)
        .map_err(|e| Error::Validation(format!("{}: {e}", summary.display())))?;
    let headers = rd
        .headers()
        .map_err(|e| Error::Validation(format!("{}: {e}", summary.display())))?
        .clone();
    let rows = rd.records().count();
    let _ = writeln!(
        s,
        "summary.csv: {rows} rows, columns {}",
        headers.iter().collect::<Vec<_>>().join(",")
    );

    let text = std::fs::read_to_string(dir.join("episodes.jsonl"))?;
    let mut lines = 0;
    let mut sums: BTreeMap<String, (f64, usize, usize)> = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        lines += 1;
        let v: serde_json::Value = serde_json::from_str(line)?;
        if let Some(chs) = v["report"]["channels"].as_array() {
            for c in chs {
                let name = c["channel"].as_str().unwrap_or("?").to_string();
                let e = sums.entry(name).or_insert((0.0, 0, 0));
                match c["value"].as_f64() {
                    Some(x) => {
                        e.0 += x;
                        e.1 += 1;
                    }
                    None => e.2 += 1,
                }
            }
        }
    }
    let _ = writeln!(s, "episodes.jsonl: {lines} records");
    for (name, (sum, n, missing)) in &sums {
        let mean = if *n > 0 { sum / *n as f64 } else { f64::NAN };
        let _ = writeln!(
            s,
            "  {name:<11} mean {mean:.4} over {n} episodes, {missing} missing"
        );
    }
    Ok(s)
}
