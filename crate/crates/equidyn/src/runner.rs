//! Loading the training data of a configuration and running every repetition
//! of every flow mode.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use equidyn_core::data::Dataset;
use equidyn_core::experiment::{self, ExperimentConfig, ExperimentKind, SummaryRow};
use equidyn_core::risk::{Model, TrajectoryRecord};

use crate::config::{Config, DataSource};
use crate::formats::{self, Checkpoint};
use crate::{mnist, parallel_map, plot};

/// The dataset described by `[data]`, sized by the architecture.
pub fn load_data(cfg: &Config, exp: &ExperimentConfig) -> Result<Dataset> {
    let arch = &exp.arch;
    let seed = cfg.data_seed()?;
    let data = match cfg.data_source()? {
        DataSource::Auto => {
            let dir = cfg.data_dir();
            if arch.kind == ExperimentKind::MnistTranslation
                && !arch.toy
                && mnist::find_files(&dir).is_some()
            {
                mnist::load_downsampled(&dir, arch.n, arch.samples)?
            } else {
                if arch.kind == ExperimentKind::MnistTranslation && !arch.toy {
                    log::warn!(
                        "no digit files in {}; training on synthetic digits (run `equidyn data fetch`)",
                        dir.display()
                    );
                }
                arch.synthetic_data(seed)?
            }
        }
        DataSource::Generate => arch.synthetic_data(seed)?,
        DataSource::Synthetic => {
            if arch.kind != ExperimentKind::MnistTranslation {
                bail!("data.source = \"synthetic\" applies to group.kind = \"translation\" only");
            }
            arch.synthetic_data(seed)?
        }
        DataSource::Mnist => {
            if arch.kind != ExperimentKind::MnistTranslation {
                bail!("data.source = \"mnist\" applies to group.kind = \"translation\" only");
            }
            mnist::load_downsampled(&cfg.data_dir(), arch.n, arch.samples)?
        }
        DataSource::File(path) => formats::load_dataset(&path)?,
    };
    let d_in = arch.reps()[0].dim();
    if data.inputs().cols() != d_in {
        bail!(
            "dataset inputs have {} features, the architecture expects {d_in}",
            data.inputs().cols()
        );
    }
    Ok(data)
}

/// Everything produced by one configuration.
#[derive(Debug)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    /// One entry per repetition, one record per mode.
    pub runs: Vec<Vec<TrajectoryRecord>>,
    pub summary: Vec<SummaryRow>,
}

pub fn trajectory_file_name(mode: &str, rep: usize) -> String {
    format!("{mode}_rep{rep:03}.csv")
}

/// Runs all repetitions on up to `jobs` threads. Each trajectory CSV is
/// written as soon as its repetition finishes; `summary.csv`, `plot.svg` and
/// the checkpoints follow at the end.
pub fn run_experiment(cfg: &Config, jobs: usize) -> Result<RunOutcome> {
    let exp = cfg.experiment()?;
    let out = cfg.output.dir.clone();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("config.toml"), toml::to_string(cfg)?)
        .with_context(|| format!("writing {}", out.join("config.toml").display()))?;
    let data = load_data(cfg, &exp)?;
    let model = exp.arch.model(exp.method)?;
    log::info!(
        "{}; {} repetitions",
        experiment::describe(&exp.arch),
        exp.repetitions
    );
    let reps: Vec<usize> = (0..exp.repetitions).collect();
    let results = parallel_map(&reps, jobs, |_, &rep| {
        run_one(&exp, &model, &data, rep, &out)
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let summary = experiment::summarize(&runs);
    formats::write_summary_file(&out.join("summary.csv"), &summary)?;
    if cfg.output.plot {
        let title = format!("{} ({} repetitions)", exp.arch.kind, exp.repetitions);
        fs::write(out.join("plot.svg"), plot::render(&title, &summary))
            .with_context(|| format!("writing {}", out.join("plot.svg").display()))?;
    }
    if cfg.output.checkpoints {
        for (rep, records) in runs.iter().enumerate() {
            for r in records {
                let path = out.join(format!("{}_rep{rep:03}.json", r.mode.name()));
                Checkpoint::new(cfg, rep, r.mode, &r.final_layers).save(&path)?;
            }
        }
    }
    Ok(RunOutcome {
        output_dir: out,
        runs,
        summary,
    })
}

fn run_one(
    exp: &ExperimentConfig,
    model: &Model,
    data: &Dataset,
    rep: usize,
    out: &Path,
) -> Result<Vec<TrajectoryRecord>> {
    let records = experiment::run_repetition(exp, model, data, rep)?;
    for r in &records {
        if let Some(e) = &r.aborted {
            log::warn!(
                "repetition {rep}, {} flow stopped early: {e}",
                r.mode.name()
            );
        }
        formats::write_trajectory_file(
            &out.join(trajectory_file_name(r.mode.name(), rep)),
            &r.rows,
        )?;
    }
    log::info!("repetition {rep} done");
    Ok(records)
}
