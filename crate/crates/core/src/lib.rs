//! Gradient-flow dynamics of multilayer perceptrons trained on symmetric data.
//!
//! The crate compares two ways of building symmetry into a network whose
//! parameters are a stack of dense layers `A = (A_0, .., A_{L-1})`:
//!
//! * constraining the layers to the equivariant subspace `E` (the fixed
//!   points of the induced group action on layer space), and
//! * training on data augmented by randomly drawn group elements.
//!
//! Everything here is pure computation over `alloc` collections, so the crate
//! builds with `--no-default-features` for `no_std` targets. File formats,
//! configuration and the command line live in the `equidyn` companion crate.
//!
//! Module map:
//!
//! * [`group`]: finite groups, elements, permutation-type representations.
//! * [`layers`]: the layer space `L` as a [`LayerStack`].
//! * [`induced`]: induced representations on `L` and `L ⊗ L`, Haar projectors.
//! * [`basis`]: orthonormal bases of `E` by four interchangeable constructions.
//! * [`mlp`]: forward/backward passes, batch norm, losses, feature averaging.
//! * [`grad`]: gradients, Hessian-vector products, Hessian blocks, eigensolvers.
//! * [`risk`]: nominal, augmented and equivariant risks; the training flows.
//! * [`theory`]: executable checks of the gradient and Hessian identities.
//! * [`data`]: graph, image and shape generators, IDX parsing.
//! * [`experiment`]: the three experiment architectures and repetition runner.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod basis;
pub mod data;
pub mod eigen;
pub mod error;
pub mod experiment;
pub mod grad;
pub mod group;
pub mod induced;
pub mod layers;
pub mod linalg;
mod math;
pub mod mlp;
pub mod risk;
pub mod theory;
pub mod tol;

pub use basis::{BasisMethod, EquivariantBasis, Projector};
pub use data::Dataset;
pub use error::{Error, Result};
pub use grad::{GradResult, HessianBlock, Objective};
pub use group::{FiniteGroup, GroupElement, HaarStrategy, Representation, SeededRng};
pub use induced::{InducedRep, OrbitAverager};
pub use layers::LayerStack;
pub use linalg::Matrix;
pub use mlp::{LossSpec, MlpSpec, Nonlinearity};
pub use risk::{FlowConfig, FlowMode, Model, RiskKind, RiskSpec, TrajectoryRecord};
pub use theory::{CheckReport, CheckStatus};
pub use tol::Tolerances;
