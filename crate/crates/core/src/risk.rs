//! Nominal, augmented and equivariant risks of an MLP on a finite dataset, and
//! the three gradient-descent flows with their per-epoch metrics.

use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::basis::{BasisMethod, Projector};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::grad::{GradResult, Objective};
use crate::group::{seeded_rng, GroupElement, HaarStrategy};
use crate::induced::InducedRep;
use crate::layers::LayerStack;
use crate::linalg::Matrix;
use crate::mlp::{BatchNormMode, BatchNormState, Forward, LossSpec, MlpSpec, Nonlinearity};

/// An architecture together with its symmetry, loss and projector onto `E`.
#[derive(Debug, Clone)]
pub struct Model {
    pub mlp: MlpSpec,
    pub ind: InducedRep,
    pub loss: LossSpec,
    projector: Arc<Projector>,
}

impl Model {
    /// `method = None` projects by orbit averaging; otherwise through the
    /// basis built by `method`.
    pub fn new(
        mlp: MlpSpec,
        ind: InducedRep,
        loss: LossSpec,
        method: Option<BasisMethod>,
    ) -> Result<Self> {
        if mlp.dims() != ind.dims().as_slice() {
            return Err(Error::ShapeMismatch {
                context: "architecture vs representations",
                expected: ind.num_params(),
                got: crate::layers::param_count(mlp.dims()),
            });
        }
        let projector = match method {
            None => Projector::orbits(&ind)?,
            Some(m) => Projector::from_method(&ind, m)?,
        };
        Ok(Self {
            mlp,
            ind,
            loss,
            projector: Arc::new(projector),
        })
    }

    pub fn dims(&self) -> &[usize] {
        self.mlp.dims()
    }

    pub fn projector(&self) -> &Arc<Projector> {
        &self.projector
    }

    pub fn project_e(&self, a: &LayerStack) -> Result<LayerStack> {
        self.projector.project(a)
    }

    pub fn project_e_perp(&self, a: &LayerStack) -> Result<LayerStack> {
        self.projector.project_perp(a)
    }

    pub fn dist_from_e(&self, a: &LayerStack) -> Result<f64> {
        self.projector.dist_from_e(a)
    }

    /// `Π_E G` for a standard Gaussian `G` drawn from `seed`.
    pub fn init_equivariant(&self, seed: u64) -> Result<LayerStack> {
        let mut rng = seeded_rng(seed);
        self.project_e(&LayerStack::random_gaussian(self.dims(), false, &mut rng))
    }

    /// `Π_E G` with `G` scaled by `1/√fan_in` per layer.
    pub fn random_equivariant<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<LayerStack> {
        self.project_e(&LayerStack::random_gaussian(self.dims(), true, rng))
    }

    /// The same model with batch normalization removed.
    pub fn without_batch_norm(&self) -> Self {
        Self {
            mlp: self.mlp.without_batch_norm(),
            ..self.clone()
        }
    }

    /// The same model with every LeakyReLU replaced by `sigma`.
    pub fn with_hidden_nonlinearity(&self, sigma: Nonlinearity) -> Self {
        Self {
            mlp: self.mlp.with_hidden_nonlinearity(sigma),
            ..self.clone()
        }
    }
}

fn check_data(model: &Model, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.targets().cols() != model.mlp.output_dim() {
        return Err(Error::ShapeMismatch {
            context: "target dimension",
            expected: model.mlp.output_dim(),
            got: data.targets().cols(),
        });
    }
    Ok(())
}

fn mean_loss(loss: &LossSpec, y: &Matrix, targets: &Matrix) -> Result<f64> {
    let mut total = 0.0;
    for r in 0..y.rows() {
        total += loss.value(y.row(r), targets.row(r))?;
    }
    Ok(total / y.rows() as f64)
}

/// Mean loss over the dataset, and its gradient when asked for.
fn evaluate(
    model: &Model,
    inputs: &Matrix,
    targets: &Matrix,
    a: &LayerStack,
    with_grad: bool,
) -> Result<(f64, Option<LayerStack>, Forward)> {
    let fwd = model.mlp.forward(a, inputs, BatchNormMode::Batch)?;
    let y = fwd.output();
    let value = mean_loss(&model.loss, y, targets)?;
    if !with_grad {
        return Ok((value, None, fwd));
    }
    let n = y.rows();
    let mut dy = Matrix::zeros(n, y.cols());
    for r in 0..n {
        model
            .loss
            .add_gradient(y.row(r), targets.row(r), 1.0 / n as f64, dy.row_mut(r))?;
    }
    let grad = model.mlp.backward(a, &fwd, &dy)?;
    Ok((value, Some(grad), fwd))
}

/// `R(A)`, the mean loss over the dataset.
pub fn nominal_risk(model: &Model, data: &Dataset, a: &LayerStack) -> Result<f64> {
    check_data(model, data)?;
    Ok(evaluate(model, data.inputs(), data.targets(), a, false)?.0)
}

fn nominal_gradient(
    model: &Model,
    data: &Dataset,
    a: &LayerStack,
) -> Result<(GradResult, Forward)> {
    check_data(model, data)?;
    let (value, grad, fwd) = evaluate(model, data.inputs(), data.targets(), a, true)?;
    let grad = grad.ok_or(Error::NonFiniteGradient)?;
    Ok((GradResult { grad, value }, fwd))
}

/// Average over `elements` of the risk on the transformed dataset.
fn input_side(
    model: &Model,
    data: &Dataset,
    a: &LayerStack,
    elements: &[GroupElement],
    with_grad: bool,
) -> Result<GradResult> {
    check_data(model, data)?;
    let reps = model.ind.reps();
    let (rx, ry) = (&reps[0], &reps[reps.len() - 1]);
    let mut value = 0.0;
    let mut grad = a.zeros_like();
    for g in elements {
        let moved = data.transformed(rx, ry, g)?;
        let (v, gr, _) = evaluate(model, moved.inputs(), moved.targets(), a, with_grad)?;
        value += v;
        if let Some(gr) = gr {
            grad.axpy(1.0, &gr);
        }
    }
    let w = 1.0 / elements.len() as f64;
    grad.scale(w);
    Ok(GradResult {
        grad,
        value: value * w,
    })
}

/// Which form of the augmented risk to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentedForm {
    /// Transform inputs and targets.
    InputSide,
    /// Transform the layers.
    LayerSide,
}

/// `R^aug(A)` in the requested form.
pub fn augmented_risk(
    model: &Model,
    data: &Dataset,
    a: &LayerStack,
    haar: HaarStrategy,
    form: AugmentedForm,
) -> Result<f64> {
    let elements = haar.elements(model.ind.group())?;
    match form {
        AugmentedForm::InputSide => Ok(input_side(model, data, a, &elements, false)?.value),
        AugmentedForm::LayerSide => {
            let mut total = 0.0;
            for g in &elements {
                total += nominal_risk(model, data, &model.ind.apply(g, a)?)?;
            }
            Ok(total / elements.len() as f64)
        }
    }
}

/// `R^eqv(A) = R(Π_E A)`.
pub fn equivariant_risk(model: &Model, data: &Dataset, a: &LayerStack) -> Result<f64> {
    nominal_risk(model, data, &model.project_e(a)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum RiskKind {
    Nominal,
    AugmentedInputSide,
    AugmentedLayerSide,
    Equivariant,
}

/// A risk functional bound to a model, a dataset and a Haar quadrature.
#[derive(Debug, Clone)]
pub struct RiskSpec {
    pub kind: RiskKind,
    pub model: Arc<Model>,
    pub data: Arc<Dataset>,
    pub haar: HaarStrategy,
}

impl RiskSpec {
    pub fn new(kind: RiskKind, model: Arc<Model>, data: Arc<Dataset>, haar: HaarStrategy) -> Self {
        Self {
            kind,
            model,
            data,
            haar,
        }
    }

    pub fn with_kind(&self, kind: RiskKind) -> Self {
        Self {
            kind,
            ..self.clone()
        }
    }
}

impl Objective for RiskSpec {
    fn dims(&self) -> &[usize] {
        self.model.dims()
    }

    fn value(&self, a: &LayerStack) -> Result<f64> {
        let (m, d) = (&self.model, &self.data);
        match self.kind {
            RiskKind::Nominal => nominal_risk(m, d, a),
            RiskKind::AugmentedInputSide => {
                augmented_risk(m, d, a, self.haar, AugmentedForm::InputSide)
            }
            RiskKind::AugmentedLayerSide => {
                augmented_risk(m, d, a, self.haar, AugmentedForm::LayerSide)
            }
            RiskKind::Equivariant => equivariant_risk(m, d, a),
        }
    }

    fn gradient(&self, a: &LayerStack) -> Result<GradResult> {
        let (m, d) = (&self.model, &self.data);
        let nominal = self.with_kind(RiskKind::Nominal);
        match self.kind {
            RiskKind::Nominal => Ok(nominal_gradient(m, d, a)?.0),
            RiskKind::AugmentedInputSide => {
                let elements = self.haar.elements(m.ind.group())?;
                input_side(m, d, a, &elements, true)
            }
            RiskKind::AugmentedLayerSide => crate::grad::LayerAveraged {
                inner: nominal,
                ind: m.ind.clone(),
                haar: self.haar,
            }
            .gradient(a),
            RiskKind::Equivariant => crate::grad::Projected {
                inner: nominal,
                projector: m.projector.clone(),
            }
            .gradient(a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum FlowMode {
    Nominal,
    Augmented,
    Equivariant,
}

impl FlowMode {
    pub const ALL: [FlowMode; 3] = [
        FlowMode::Nominal,
        FlowMode::Augmented,
        FlowMode::Equivariant,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FlowMode::Nominal => "nominal",
            FlowMode::Augmented => "augmented",
            FlowMode::Equivariant => "equivariant",
        }
    }
}

/// How the augmented gradient integrates over the group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Augmentation {
    /// Every group element applied to every mini-batch, every epoch.
    Exact,
    /// `n_aug` passes over the data per epoch; every mini-batch of every
    /// pass is transformed by its own uniform draw.
    Sampled { n_aug: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FlowConfig {
    pub mode: FlowMode,
    pub learning_rate: f64,
    pub epochs: usize,
    pub augmentation: Augmentation,
    pub seed: u64,
    pub record_every: usize,
    /// Mini-batch size; `None` feeds the whole dataset at once. The gradient
    /// is always the sample-weighted average over all mini-batches, and
    /// batch normalization uses the statistics of each mini-batch.
    pub batch_size: Option<usize>,
    /// Coefficient `λ` of an optional `λ‖A_{E⊥}‖²` term added to the risk.
    pub perp_penalty: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            mode: FlowMode::Nominal,
            learning_rate: 1e-5,
            epochs: 50,
            augmentation: Augmentation::Sampled { n_aug: 8 },
            seed: 0,
            record_every: 1,
            batch_size: None,
            perp_penalty: 0.0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(
                "learning rate must be finite and nonnegative".into(),
            ));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument(
                "record_every must be at least 1".into(),
            ));
        }
        if let Augmentation::Sampled { n_aug: 0 } = self.augmentation {
            return Err(Error::InvalidArgument("n_aug must be at least 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidArgument(
                "batch_size must be at least 1".into(),
            ));
        }
        if self.perp_penalty < 0.0 {
            return Err(Error::InvalidArgument(
                "perp_penalty must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Metrics of one recorded epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectoryRow {
    pub epoch: usize,
    /// `‖A − A⁰‖`.
    pub dist_from_init: f64,
    /// `‖A_{E⊥}‖`.
    pub dist_from_e: f64,
    /// Nominal risk `R(A)`.
    pub risk: f64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub mode: FlowMode,
    pub rows: Vec<TrajectoryRow>,
    /// Set when the run stopped early; `rows` then holds the partial record.
    pub aborted: Option<Error>,
    pub final_layers: LayerStack,
    pub batch_norm: Option<BatchNormState>,
}

/// Gradient of one mode's risk, accumulated over mini-batches.
struct Accumulator<'a> {
    model: &'a Model,
    data: &'a Dataset,
    batches: Vec<core::ops::Range<usize>>,
    bn: Option<&'a mut BatchNormState>,
}

impl Accumulator<'_> {
    /// `Σ_b (|b|/n) ∇R_b(A)` on the mini-batches transformed by `draw(b)`.
    fn pass(
        &mut self,
        a: &LayerStack,
        grad: &mut LayerStack,
        weight: f64,
        mut draw: impl FnMut() -> Option<GroupElement>,
    ) -> Result<()> {
        let reps = self.model.ind.reps();
        let (rx, ry) = (&reps[0], &reps[reps.len() - 1]);
        let n = self.data.len() as f64;
        for range in &self.batches {
            let mut batch = if self.batches.len() == 1 {
                None
            } else {
                Some(self.data.slice(range.clone()))
            };
            if let Some(g) = draw() {
                batch = Some(
                    batch
                        .as_ref()
                        .unwrap_or(self.data)
                        .transformed(rx, ry, &g)?,
                );
            }
            let b = batch.as_ref().unwrap_or(self.data);
            let (_, gr, fwd) = evaluate(self.model, b.inputs(), b.targets(), a, true)?;
            if let Some(bn) = self.bn.as_deref_mut() {
                bn.update(&fwd);
            }
            let gr = gr.ok_or(Error::NonFiniteGradient)?;
            grad.axpy(weight * b.len() as f64 / n, &gr);
        }
        Ok(())
    }
}

fn batch_ranges(n: usize, batch: Option<usize>) -> Vec<core::ops::Range<usize>> {
    let size = batch.unwrap_or(n).clamp(1, n);
    (0..n).step_by(size).map(|s| s..(s + size).min(n)).collect()
}

/// Gradient descent `A ← A − τ g` from `a0` with `g` the mode's gradient
/// accumulated over the whole dataset. Metrics are recorded at epoch 0 and
/// every `record_every` epochs, always including the last.
pub fn train(
    flow: &FlowConfig,
    model: &Model,
    data: &Dataset,
    a0: &LayerStack,
) -> Result<TrajectoryRecord> {
    flow.validate()?;
    check_data(model, data)?;
    let group = model.ind.group().clone();
    let exact = match flow.augmentation {
        Augmentation::Exact if flow.mode == FlowMode::Augmented => group.enumerate_elements()?,
        _ => Vec::new(),
    };
    let mut rng = seeded_rng(flow.seed);
    let mut bn = model
        .mlp
        .has_batch_norm()
        .then(|| BatchNormState::new(&model.mlp));
    let batches = batch_ranges(data.len(), flow.batch_size);
    let mut a = a0.clone();
    let mut record = TrajectoryRecord {
        mode: flow.mode,
        rows: Vec::new(),
        aborted: None,
        final_layers: a0.clone(),
        batch_norm: None,
    };

    for epoch in 0..=flow.epochs {
        let last = epoch == flow.epochs;
        if epoch % flow.record_every == 0 || last {
            let risk = match evaluate(model, data.inputs(), data.targets(), &a, false) {
                Ok((risk, _, _)) => risk,
                Err(e @ Error::NonFiniteActivation { .. }) => {
                    record.aborted = Some(e);
                    break;
                }
                Err(e) => return Err(e),
            };
            record.rows.push(TrajectoryRow {
                epoch,
                dist_from_init: a.distance(a0),
                dist_from_e: model.dist_from_e(&a)?,
                risk,
            });
        }
        if last {
            break;
        }
        let mut acc = Accumulator {
            model,
            data,
            batches: batches.clone(),
            bn: bn.as_mut(),
        };
        let mut grad = a.zeros_like();
        let step = match flow.mode {
            FlowMode::Nominal | FlowMode::Equivariant => acc.pass(&a, &mut grad, 1.0, || None),
            FlowMode::Augmented => match flow.augmentation {
                Augmentation::Exact => {
                    let w = 1.0 / exact.len() as f64;
                    exact
                        .iter()
                        .try_for_each(|g| acc.pass(&a, &mut grad, w, || Some(g.clone())))
                }
                Augmentation::Sampled { n_aug } => {
                    let w = 1.0 / n_aug as f64;
                    (0..n_aug).try_for_each(|_| {
                        acc.pass(&a, &mut grad, w, || Some(group.sample_haar(&mut rng)))
                    })
                }
            },
        };
        match step {
            Ok(()) => {}
            Err(e @ (Error::NonFiniteGradient | Error::NonFiniteActivation { .. })) => {
                record.aborted = Some(e);
                break;
            }
            Err(e) => return Err(e),
        }
        if flow.mode == FlowMode::Equivariant {
            grad = model.project_e(&grad)?;
        }
        if flow.perp_penalty > 0.0 {
            grad.axpy(2.0 * flow.perp_penalty, &model.project_e_perp(&a)?);
        }
        if !grad.is_finite() {
            record.aborted = Some(Error::NonFiniteGradient);
            break;
        }
        a.axpy(-flow.learning_rate, &grad);
    }
    record.final_layers = a;
    record.batch_norm = bn;
    Ok(record)
}

/// Standard Gaussian vector, used by checks that need random directions.
pub fn gaussian_like<R: Rng + ?Sized>(a: &LayerStack, rng: &mut R) -> LayerStack {
    let mut out = a.zeros_like();
    out.as_mut_slice()
        .iter_mut()
        .for_each(|v| *v = rng.sample::<f64, _>(StandardNormal));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DatasetMeta;
    use crate::group::{FiniteGroup, Representation};

    fn toy() -> (Model, Dataset) {
        let g = FiniteGroup::CyclicRotation;
        let ind = InducedRep::new(vec![
            Representation::rotation_image(3),
            Representation::rotation_image(3).channelwise(2),
            Representation::trivial(g, 1),
        ])
        .unwrap();
        let mlp = MlpSpec::new(
            ind.dims(),
            vec![Nonlinearity::leaky_relu(), Nonlinearity::Sigmoid],
            0.0,
        )
        .unwrap();
        let model = Model::new(mlp, ind, LossSpec::BinaryCrossEntropy, None).unwrap();
        let mut rng = seeded_rng(11);
        let x = Matrix::from_fn(8, 9, |_, _| rng.random_range(0.0..1.0));
        let t = Matrix::from_fn(8, 1, |r, _| (r % 2) as f64);
        (model, Dataset::new(x, t, DatasetMeta::default()).unwrap())
    }

    #[test]
    fn duplicated_dataset_has_same_risk() {
        let (model, data) = toy();
        let a = model.init_equivariant(1).unwrap();
        let r1 = nominal_risk(&model, &data, &a).unwrap();
        let r2 = nominal_risk(&model, &data.duplicated(), &a).unwrap();
        assert!((r1 - r2).abs() < 1e-14);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let (model, data) = toy();
        let a = model.init_equivariant(1).unwrap();
        assert!(matches!(
            nominal_risk(&model, &data.take(0), &a),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn zero_learning_rate_keeps_trajectory_at_init() {
        let (model, data) = toy();
        let a0 = model.init_equivariant(2).unwrap();
        let flow = FlowConfig {
            learning_rate: 0.0,
            epochs: 3,
            ..FlowConfig::default()
        };
        let rec = train(&flow, &model, &data, &a0).unwrap();
        assert_eq!(rec.rows.len(), 4);
        assert!(rec.rows.iter().all(|r| r.dist_from_init == 0.0));
    }

    #[test]
    fn equivariant_flow_stays_in_e() {
        let (model, data) = toy();
        let a0 = model.init_equivariant(3).unwrap();
        let flow = FlowConfig {
            mode: FlowMode::Equivariant,
            learning_rate: 1e-2,
            epochs: 10,
            ..FlowConfig::default()
        };
        let rec = train(&flow, &model, &data, &a0).unwrap();
        assert!(rec.rows.iter().all(|r| r.dist_from_e <= 1e-8));
        assert!(rec.rows.last().unwrap().dist_from_init > 0.0);
    }
}
