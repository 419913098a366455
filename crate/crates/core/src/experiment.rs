//! The three experiment architectures at several scales, and the runner that
//! trains every flow mode from a shared equivariant initialization.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::basis::BasisMethod;
use crate::data::{self, Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::group::{seeded_rng, FiniteGroup, Representation};
use crate::induced::InducedRep;
use crate::linalg::Matrix;
use crate::mlp::{LossSpec, MlpSpec, Nonlinearity};
use crate::risk::{train, FlowConfig, FlowMode, Model, TrajectoryRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ExperimentKind {
    /// Permutation-invariant connectivity classification of graphs.
    GraphConnectivity,
    /// Translation-invariant digit classification.
    MnistTranslation,
    /// Rotation-equivariant segmentation of shapes.
    ShapeSegmentation,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 3] = [
        ExperimentKind::GraphConnectivity,
        ExperimentKind::MnistTranslation,
        ExperimentKind::ShapeSegmentation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::GraphConnectivity => "graph_connectivity",
            ExperimentKind::MnistTranslation => "mnist_translation",
            ExperimentKind::ShapeSegmentation => "shape_segmentation",
        }
    }

    pub fn group(self, n: usize) -> FiniteGroup {
        match self {
            ExperimentKind::GraphConnectivity => FiniteGroup::Symmetric(n),
            ExperimentKind::MnistTranslation => FiniteGroup::TranslationGrid(n),
            ExperimentKind::ShapeSegmentation => FiniteGroup::CyclicRotation,
        }
    }

    /// The projection construction used for this experiment by default.
    pub fn default_method(self) -> BasisMethod {
        match self {
            ExperimentKind::GraphConnectivity => BasisMethod::Partition,
            ExperimentKind::MnistTranslation => BasisMethod::Convolution,
            ExperimentKind::ShapeSegmentation => BasisMethod::GroupAverage,
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "graph_connectivity" | "graphs" | "1" => Ok(ExperimentKind::GraphConnectivity),
            "mnist_translation" | "mnist" | "2" => Ok(ExperimentKind::MnistTranslation),
            "shape_segmentation" | "shapes" | "3" => Ok(ExperimentKind::ShapeSegmentation),
            other => Err(Error::InvalidArgument(alloc::format!(
                "unknown experiment {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Scale {
    /// The published sizes: 32 channels, full datasets.
    Paper,
    /// Single-core sizes with every group-theoretic feature kept.
    Desk,
    /// Smaller images and fewer channels, for the timed acceptance runs.
    Acceptance,
    /// Layer spaces of dimension at most 200, for dense Hessians.
    Toy,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            "acceptance" => Ok(Scale::Acceptance),
            "toy" => Ok(Scale::Toy),
            other => Err(Error::InvalidArgument(alloc::format!(
                "unknown scale {other:?}"
            ))),
        }
    }
}

/// Size parameters of one experiment architecture and its data.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Architecture {
    pub kind: ExperimentKind,
    /// Graph nodes, or image side length.
    pub n: usize,
    /// Channels `C` of the first hidden space.
    pub channels: usize,
    /// Dataset size.
    pub samples: usize,
    pub batch_norm: bool,
    /// Toy architectures drop a head layer and use sigmoid hidden units so
    /// that Hessians are smooth and small.
    pub toy: bool,
}

impl Architecture {
    pub fn new(kind: ExperimentKind, scale: Scale) -> Self {
        use ExperimentKind::*;
        let (n, channels, samples) = match (scale, kind) {
            (Scale::Paper, GraphConnectivity) => (10, 32, 1000),
            (Scale::Paper, MnistTranslation) => (14, 32, 10000),
            (Scale::Paper, ShapeSegmentation) => (14, 32, 3000),
            (Scale::Desk, GraphConnectivity) => (5, 8, 200),
            (Scale::Desk, MnistTranslation) => (14, 8, 2000),
            (Scale::Desk, ShapeSegmentation) => (14, 8, 500),
            (Scale::Acceptance, GraphConnectivity) => (5, 8, 200),
            (Scale::Acceptance, MnistTranslation) => (7, 4, 500),
            (Scale::Acceptance, ShapeSegmentation) => (8, 4, 300),
            (Scale::Toy, GraphConnectivity) => (3, 2, 12),
            (Scale::Toy, MnistTranslation) => (3, 1, 12),
            (Scale::Toy, ShapeSegmentation) => (3, 1, 12),
        };
        Self {
            kind,
            n,
            channels,
            samples,
            batch_norm: scale != Scale::Toy,
            toy: scale == Scale::Toy,
        }
    }

    pub fn group(&self) -> FiniteGroup {
        self.kind.group(self.n)
    }

    /// Representations on the input, hidden and output spaces.
    pub fn reps(&self) -> Vec<Representation> {
        let (n, c) = (self.n, self.channels);
        let g = self.group();
        match (self.kind, self.toy) {
            (ExperimentKind::GraphConnectivity, false) => vec![
                Representation::perm_tensor(n, 2),
                Representation::perm_tensor(n, 2).channelwise(c),
                Representation::trivial(g.clone(), 2 * c),
                Representation::trivial(g.clone(), c),
                Representation::trivial(g, 1),
            ],
            (ExperimentKind::GraphConnectivity, true) => vec![
                Representation::perm_tensor(n, 2),
                Representation::perm_tensor(n, 2).channelwise(c),
                Representation::trivial(g.clone(), c),
                Representation::trivial(g, 1),
            ],
            (ExperimentKind::MnistTranslation, false) => vec![
                Representation::translation_image(n),
                Representation::translation_image(n).channelwise(c),
                Representation::translation_image(n).channelwise(c),
                Representation::trivial(g.clone(), c),
                Representation::trivial(g, 10),
            ],
            (ExperimentKind::MnistTranslation, true) => vec![
                Representation::translation_image(n),
                Representation::translation_image(n).channelwise(c),
                Representation::trivial(g.clone(), 2),
                Representation::trivial(g, TOY_CLASSES),
            ],
            (ExperimentKind::ShapeSegmentation, false) => vec![
                Representation::rotation_image(n),
                Representation::rotation_image(n).channelwise(c),
                Representation::rotation_image(n).channelwise(c),
                Representation::rotation_image(n).channelwise((c / 2).max(1)),
                Representation::rotation_image(n).channelwise(2),
            ],
            (ExperimentKind::ShapeSegmentation, true) => vec![
                Representation::rotation_image(n),
                Representation::rotation_image(n).channelwise(c),
                Representation::rotation_image(n),
            ],
        }
    }

    pub fn loss(&self) -> LossSpec {
        match self.kind {
            ExperimentKind::GraphConnectivity => LossSpec::BinaryCrossEntropy,
            ExperimentKind::MnistTranslation => LossSpec::CrossEntropy,
            ExperimentKind::ShapeSegmentation => LossSpec::PixelwiseSegmentation {
                channels: if self.toy { 1 } else { 2 },
            },
        }
    }

    pub fn mlp(&self, dims: Vec<usize>) -> Result<MlpSpec> {
        let layers = dims.len() - 1;
        let hidden = if self.toy {
            Nonlinearity::Sigmoid
        } else {
            Nonlinearity::leaky_relu()
        };
        let last = match self.kind {
            ExperimentKind::MnistTranslation => Nonlinearity::SoftMax,
            _ => Nonlinearity::Sigmoid,
        };
        let mut sigmas = vec![hidden; layers];
        sigmas[layers - 1] = last;
        let shift = match self.kind {
            ExperimentKind::ShapeSegmentation => 0.0,
            _ => 0.5,
        };
        let spec = MlpSpec::new(dims.clone(), sigmas, shift)?;
        if !self.batch_norm || self.toy {
            return Ok(spec);
        }
        // batch norm after the pooling layer, or before the final
        // nonlinearity for segmentation
        match self.kind {
            ExperimentKind::GraphConnectivity => spec.with_batch_norm(1, dims[2]),
            ExperimentKind::MnistTranslation => spec.with_batch_norm(2, dims[3]),
            ExperimentKind::ShapeSegmentation => spec.with_batch_norm(layers - 1, 2),
        }
    }

    /// The model with projection by `method`, or by orbit averaging when
    /// `None`.
    pub fn model(&self, method: Option<BasisMethod>) -> Result<Model> {
        let ind = InducedRep::new(self.reps())?;
        let mlp = self.mlp(ind.dims())?;
        Model::new(mlp, ind, self.loss(), method)
    }

    /// The synthetic dataset this experiment trains on. The digit experiment
    /// uses the offline stand-in; real digit images are loaded by the caller.
    pub fn synthetic_data(&self, seed: u64) -> Result<Dataset> {
        if self.toy {
            return toy_data(self, seed);
        }
        match self.kind {
            ExperimentKind::GraphConnectivity => {
                data::gen_graphs(self.samples, self.n, 0.5, 0.05, seed)
            }
            ExperimentKind::MnistTranslation => data::synthetic_digits(self.samples, self.n, seed),
            ExperimentKind::ShapeSegmentation => data::gen_shapes(self.samples, self.n, seed),
        }
    }
}

/// Output classes of the toy digit architecture.
pub const TOY_CLASSES: usize = 3;

/// Uniform random inputs with random targets of the right kind.
fn toy_data(arch: &Architecture, seed: u64) -> Result<Dataset> {
    let mut rng = seeded_rng(seed);
    let d_in = arch.reps()[0].dim();
    let x = Matrix::from_fn(arch.samples, d_in, |_, _| rng.random_range(0.0..1.0));
    let t = match arch.kind {
        ExperimentKind::GraphConnectivity => {
            Matrix::from_fn(arch.samples, 1, |_, _| f64::from(rng.random_bool(0.5)))
        }
        ExperimentKind::MnistTranslation => {
            let mut t = Matrix::zeros(arch.samples, TOY_CLASSES);
            for r in 0..arch.samples {
                t[(r, rng.random_range(0..TOY_CLASSES))] = 1.0;
            }
            t
        }
        ExperimentKind::ShapeSegmentation => {
            Matrix::from_fn(arch.samples, d_in, |_, _| f64::from(rng.random_bool(0.3)))
        }
    };
    Dataset::new(
        x,
        t,
        DatasetMeta::new("toy", Some(seed)).with("experiment", arch.kind),
    )
}

/// Repetitions of every flow mode from shared initializations.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExperimentConfig {
    pub arch: Architecture,
    pub method: Option<BasisMethod>,
    /// Learning rate, epochs, augmentation and penalty; `mode` and `seed`
    /// are set per run.
    pub flow: FlowConfig,
    pub modes: Vec<FlowMode>,
    pub repetitions: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, scale: Scale) -> Self {
        Self {
            arch: Architecture::new(kind, scale),
            method: Some(kind.default_method()),
            flow: FlowConfig::default(),
            modes: FlowMode::ALL.to_vec(),
            repetitions: 5,
            seed: 0,
        }
    }

    /// Seed of the equivariant initialization of repetition `rep`.
    pub fn init_seed(&self, rep: usize) -> u64 {
        derive_seed(self.seed, 1, rep as u64)
    }

    /// Seed of the augmentation draws of repetition `rep`.
    pub fn flow_seed(&self, rep: usize) -> u64 {
        derive_seed(self.seed, 2, rep as u64)
    }

    /// Seed of the generated dataset.
    pub fn data_seed(&self) -> u64 {
        derive_seed(self.seed, 3, 0)
    }
}

/// SplitMix64 finalizer over `(base, stream, index)`.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// All modes of one repetition, each started from the same `A⁰ ∈ E`.
pub fn run_repetition(
    cfg: &ExperimentConfig,
    model: &Model,
    data: &Dataset,
    rep: usize,
) -> Result<Vec<TrajectoryRecord>> {
    let a0 = model.init_equivariant(cfg.init_seed(rep))?;
    cfg.modes
        .iter()
        .map(|&mode| {
            let flow = FlowConfig {
                mode,
                seed: cfg.flow_seed(rep),
                ..cfg.flow
            };
            train(&flow, model, data, &a0)
        })
        .collect()
}

/// Mean metrics of one mode at one epoch across repetitions.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SummaryRow {
    pub mode: FlowMode,
    pub epoch: usize,
    pub runs: usize,
    pub mean_dist_from_init: f64,
    pub mean_dist_from_e: f64,
    pub mean_risk: f64,
}

/// Per-epoch means over the repetitions, ordered by mode then epoch.
/// Epochs missing from aborted runs average over the runs that reached them.
pub fn summarize(runs: &[Vec<TrajectoryRecord>]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    for mode in FlowMode::ALL {
        let records: Vec<&TrajectoryRecord> =
            runs.iter().flatten().filter(|r| r.mode == mode).collect();
        let mut epochs: Vec<usize> = records
            .iter()
            .flat_map(|r| r.rows.iter().map(|row| row.epoch))
            .collect();
        epochs.sort_unstable();
        epochs.dedup();
        for epoch in epochs {
            let rows: Vec<_> = records
                .iter()
                .filter_map(|r| r.rows.iter().find(|row| row.epoch == epoch))
                .collect();
            let k = rows.len() as f64;
            out.push(SummaryRow {
                mode,
                epoch,
                runs: rows.len(),
                mean_dist_from_init: rows.iter().map(|r| r.dist_from_init).sum::<f64>() / k,
                mean_dist_from_e: rows.iter().map(|r| r.dist_from_e).sum::<f64>() / k,
                mean_risk: rows.iter().map(|r| r.risk).sum::<f64>() / k,
            });
        }
    }
    out
}

/// The summary row of `mode` at the largest recorded epoch.
pub fn final_row(summary: &[SummaryRow], mode: FlowMode) -> Option<SummaryRow> {
    summary
        .iter()
        .filter(|r| r.mode == mode)
        .max_by_key(|r| r.epoch)
        .copied()
}

/// Human-readable one-line description of an architecture.
pub fn describe(arch: &Architecture) -> String {
    let dims = InducedRep::new(arch.reps())
        .map(|i| i.dims())
        .unwrap_or_default();
    alloc::format!(
        "{} on {} with dims {:?}, {} samples, batch norm {}",
        arch.kind,
        arch.group(),
        dims,
        arch.samples,
        if arch.batch_norm && !arch.toy {
            "on"
        } else {
            "off"
        }
    )
}
