//! Experiment harness: the closed loop, the five canned experiments and
//! their reports.
//!
//! Output layout for one run:
//!
//! ```text
//! <out>/config.json        resolved configuration
//! <out>/summary.csv        rows of every seed, in seed-list order
//! <out>/episodes.jsonl     records of every seed, in seed-list order
//! <out>/plot.svg           chart over all seeds
//! <out>/seed-<s>/...       the same three files per seed plus details
//! ```

mod config;
mod episode;
pub mod experiments;
mod output;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::Result;
use crate::toyworld::ToyWorld;

pub use config::{
    default_toolbox, E1Config, E2Config, E3Config, E4Config, E5Config, ExperimentConfig,
    ExperimentId, SelectConfig,
};
pub use episode::{
    run_episode, ChannelRecord, DesignerCall, EpisodeRecord, LoopConfig, LoopState, ReportRecord,
    FAILURE,
};
pub use experiments::{E1Seed, E2Seed, E3Seed, E4Seed, E5Seed, SeedResult};
pub use output::{ensure_writable, line_chart, write_csv, write_jsonl, Series};

/// Typed per-seed results of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentResults {
    E1(Vec<E1Seed>),
    E2(Vec<E2Seed>),
    E3(Vec<E3Seed>),
    E4(Vec<E4Seed>),
    E5(Vec<E5Seed>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub id: ExperimentId,
    pub out_dir: PathBuf,
    pub results: ExperimentResults,
}

impl ExperimentOutput {
    pub fn summary_csv(&self) -> PathBuf {
        self.out_dir.join("summary.csv")
    }

    pub fn episodes_jsonl(&self) -> PathBuf {
        self.out_dir.join("episodes.jsonl")
    }
}

/// Writes per-seed files, then the merged files, in seed-list order.
pub fn write_seed_results<S: SeedResult>(out: &Path, seeds: &[S], merged_plot: &str) -> Result<()> {
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for s in seeds {
        let dir = out.join(format!("seed-{}", s.seed()));
        std::fs::create_dir_all(&dir)?;
        let r = s.rows();
        let j = s.records();
        write_csv(&dir.join("summary.csv"), &r)?;
        write_jsonl(&dir.join("episodes.jsonl"), &j)?;
        std::fs::write(dir.join("plot.svg"), s.plot())?;
        s.write_details(&dir)?;
        rows.extend(r);
        records.extend(j);
    }
    write_csv(&out.join("summary.csv"), &rows)?;
    write_jsonl(&out.join("episodes.jsonl"), &records)?;
    std::fs::write(out.join("plot.svg"), merged_plot)?;
    Ok(())
}

fn per_seed<S: Send>(
    cfg: &ExperimentConfig,
    world: &ToyWorld,
    f: impl Fn(&ExperimentConfig, &ToyWorld, u64) -> Result<S> + Sync,
) -> Result<Vec<S>> {
    cfg.seeds.par_iter().map(|&s| f(cfg, world, s)).collect()
}

/// Runs `cfg.experiment` for every seed and writes its reports under
/// `cfg.out_dir`. The output directory is checked before any computation.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    ensure_writable(&cfg.out_dir)?;
    let world = ToyWorld::new(cfg.world)?;
    let out = cfg.out_dir.as_path();
    std::fs::write(out.join("config.json"), serde_json::to_string_pretty(cfg)?)?;

    let results = match cfg.experiment {
        ExperimentId::E1 => {
            let seeds = per_seed(cfg, &world, experiments::e1_seed)?;
            let rows: Vec<_> = seeds.iter().flat_map(|s| s.rows.clone()).collect();
            write_seed_results(out, &seeds, &experiments::e1_plot(&rows, &cfg.e1.betas))?;
            ExperimentResults::E1(seeds)
        }
        ExperimentId::E2 => {
            let seeds = per_seed(cfg, &world, experiments::e2_seed)?;
            let refs: Vec<&E2Seed> = seeds.iter().collect();
            write_seed_results(out, &seeds, &experiments::e2_plot(&refs))?;
            ExperimentResults::E2(seeds)
        }
        ExperimentId::E3 => {
            let seeds = per_seed(cfg, &world, experiments::e3_seed)?;
            let pts: Vec<(f64, f64)> = seeds
                .iter()
                .filter_map(|s| s.row.ratio.map(|r| (s.seed as f64, r)))
                .collect();
            let plot = line_chart(
                "Ranked / generation-order simulations to first success",
                "seed",
                "ratio",
                &[Series::new("ratio", pts)],
            );
            write_seed_results(out, &seeds, &plot)?;
            ExperimentResults::E3(seeds)
        }
        ExperimentId::E4 => {
            let seeds = per_seed(cfg, &world, experiments::e4_seed)?;
            let refs: Vec<&E4Seed> = seeds.iter().collect();
            write_seed_results(out, &seeds, &experiments::e4_plot(&refs))?;
            ExperimentResults::E4(seeds)
        }
        ExperimentId::E5 => {
            let seeds = per_seed(cfg, &world, experiments::e5_seed)?;
            let arm = |k: usize| -> Vec<(f64, f64)> {
                seeds
                    .iter()
                    .map(|s| {
                        (
                            s.seed as f64,
                            s.rows[k].first_target_at.map_or(f64::NAN, |v| v as f64),
                        )
                    })
                    .collect()
            };
            let plot = line_chart(
                "Simulations until a design reaches the success target",
                "seed",
                "simulations",
                &[
                    Series::new("acquisition", arm(0)),
                    Series::new("ablation", arm(1)),
                ],
            );
            write_seed_results(out, &seeds, &plot)?;
            ExperimentResults::E5(seeds)
        }
    };
    Ok(ExperimentOutput {
        id: cfg.experiment,
        out_dir: cfg.out_dir.clone(),
        results,
    })
}
