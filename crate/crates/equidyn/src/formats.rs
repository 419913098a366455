//! On-disk formats: trajectory and summary CSV, JSON-lines check reports,
//! JSON checkpoints and datasets.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use equidyn_core::data::Dataset;
use equidyn_core::experiment::SummaryRow;
use equidyn_core::risk::{FlowMode, TrajectoryRow};
use equidyn_core::theory::CheckReport;
use equidyn_core::LayerStack;
use serde::{Deserialize, Serialize};

use crate::config::Config;

pub const TRAJECTORY_HEADER: &str = "epoch,dist_from_init,dist_from_E,risk";
pub const SUMMARY_HEADER: &str = "mode,epoch,runs,mean_dist_from_init,mean_dist_from_E,mean_risk";

pub fn write_trajectory<W: Write>(mut w: W, rows: &[TrajectoryRow]) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e}",
            r.epoch, r.dist_from_init, r.dist_from_e, r.risk
        )?;
    }
    w.flush()
}

pub fn write_trajectory_file(path: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_trajectory(BufWriter::new(f), rows).with_context(|| format!("writing {}", path.display()))
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse()
        .with_context(|| format!("line {line}: bad number {field:?}"))
}

pub fn read_trajectory<R: BufRead>(r: R) -> Result<Vec<TrajectoryRow>> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim_end() != TRAJECTORY_HEADER {
        bail!("missing trajectory header {TRAJECTORY_HEADER:?}");
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            bail!("line {}: expected 4 fields, found {}", i + 2, fields.len());
        }
        rows.push(TrajectoryRow {
            epoch: fields[0]
                .trim()
                .parse()
                .with_context(|| format!("line {}: bad epoch", i + 2))?,
            dist_from_init: parse_f64(fields[1], i + 2)?,
            dist_from_e: parse_f64(fields[2], i + 2)?,
            risk: parse_f64(fields[3], i + 2)?,
        });
    }
    Ok(rows)
}

pub fn read_trajectory_file(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_trajectory(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

pub fn write_summary<W: Write>(mut w: W, rows: &[SummaryRow]) -> io::Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:.16e},{:.16e},{:.16e}",
            r.mode.name(),
            r.epoch,
            r.runs,
            r.mean_dist_from_init,
            r.mean_dist_from_e,
            r.mean_risk
        )?;
    }
    w.flush()
}

pub fn write_summary_file(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_summary(BufWriter::new(f), rows).with_context(|| format!("writing {}", path.display()))
}

/// One report per line.
pub fn write_reports<W: Write>(mut w: W, reports: &[CheckReport]) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Final layers of one run together with everything needed to rebuild its
/// model and data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: Config,
    pub repetition: usize,
    pub mode: FlowMode,
    pub dims: Vec<usize>,
    pub layers: Vec<f64>,
}

impl Checkpoint {
    pub fn new(config: &Config, repetition: usize, mode: FlowMode, layers: &LayerStack) -> Self {
        Self {
            config: config.clone(),
            repetition,
            mode,
            dims: layers.dims().to_vec(),
            layers: layers.as_slice().to_vec(),
        }
    }

    pub fn layer_stack(&self) -> Result<LayerStack> {
        Ok(LayerStack::from_flat(&self.dims, self.layers.clone())?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        serde_json::from_reader(BufReader::new(f))
            .with_context(|| format!("parsing checkpoint {}", path.display()))
    }
}

pub fn save_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer(&mut w, data)?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f))
        .with_context(|| format!("parsing dataset {}", path.display()))
}
