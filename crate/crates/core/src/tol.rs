//! Every numeric threshold used by the checks, in one place.
//!
//! The constants are the defaults; [`Tolerances`] carries a copy that a
//! configuration file can override key by key.

/// Orthogonality and homomorphism residuals of a representation.
pub const REPRESENTATION: f64 = 1e-12;
/// Invariance and orthonormality of equivariant basis elements.
pub const BASIS: f64 = 1e-10;
/// Rank decisions in Gram-Schmidt and null-space extraction.
pub const RANK_DROP: f64 = 1e-8;
/// Input-side versus layer-side augmented risk.
pub const AUGMENTED_RISK_FORMS: f64 = 1e-10;
/// Gradient identities at points of `E`.
pub const GRADIENT_IDENTITY: f64 = 1e-8;
/// Hessian identities where the Hessian comes from finite differences of
/// gradients.
pub const HESSIAN_IDENTITY: f64 = 1e-3;
/// Hessian identities for quadratic risks.
pub const QUADRATIC_HESSIAN: f64 = 1e-6;
/// Distance from `E` along an exact augmented flow, relative to `max(1, |A|)`.
pub const AUGMENTED_FLOW_DRIFT: f64 = 1e-7;
/// Distance from `E` along an equivariant flow.
pub const EQUIVARIANT_FLOW_DRIFT: f64 = 1e-8;
/// Largest admissible distance from `E` for points fed to the identities.
pub const IN_SUBSPACE: f64 = 1e-10;
/// Relative gradient versus central finite differences.
pub const FINITE_DIFFERENCE: f64 = 1e-4;
/// Step of the finite-difference gradient check.
pub const FD_STEP: f64 = 1e-4;
/// Finite-difference step for networks with kinked hidden units, small
/// enough that a central difference rarely straddles a kink.
pub const FD_STEP_KINKED: f64 = 1e-5;
/// Minimum log-log slope of the decoupling deviation.
pub const DECOUPLING_ORDER: f64 = 1.9;
/// Gradient norm below which a point counts as approximately stationary.
pub const STATIONARY: f64 = 1e-4;
/// Eigenvalues below `-NEGATIVE_EIGENVALUE` count as unstable directions.
pub const NEGATIVE_EIGENVALUE: f64 = 1e-6;
/// Relative eigen-residual `|Hv - λv| / |H|`.
pub const EIGEN_RESIDUAL: f64 = 1e-8;
/// Agreement of the counterexample spectra with their exact values.
pub const COUNTEREXAMPLE: f64 = 1e-8;
/// Orthonormality required of directions spanning a Hessian block.
pub const ORTHONORMAL_BASIS: f64 = 1e-8;
/// Relative agreement of augmented and equivariant trajectories started on `E`.
pub const TRAJECTORY_COINCIDENCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Tolerances {
    pub representation: f64,
    pub basis: f64,
    pub rank_drop: f64,
    pub augmented_risk_forms: f64,
    pub gradient_identity: f64,
    pub hessian_identity: f64,
    pub quadratic_hessian: f64,
    pub augmented_flow_drift: f64,
    pub equivariant_flow_drift: f64,
    pub in_subspace: f64,
    pub finite_difference: f64,
    pub fd_step: f64,
    pub fd_step_kinked: f64,
    pub decoupling_order: f64,
    pub stationary: f64,
    pub negative_eigenvalue: f64,
    pub eigen_residual: f64,
    pub counterexample: f64,
    pub orthonormal_basis: f64,
    pub trajectory_coincidence: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            representation: REPRESENTATION,
            basis: BASIS,
            rank_drop: RANK_DROP,
            augmented_risk_forms: AUGMENTED_RISK_FORMS,
            gradient_identity: GRADIENT_IDENTITY,
            hessian_identity: HESSIAN_IDENTITY,
            quadratic_hessian: QUADRATIC_HESSIAN,
            augmented_flow_drift: AUGMENTED_FLOW_DRIFT,
            equivariant_flow_drift: EQUIVARIANT_FLOW_DRIFT,
            in_subspace: IN_SUBSPACE,
            finite_difference: FINITE_DIFFERENCE,
            fd_step: FD_STEP,
            fd_step_kinked: FD_STEP_KINKED,
            decoupling_order: DECOUPLING_ORDER,
            stationary: STATIONARY,
            negative_eigenvalue: NEGATIVE_EIGENVALUE,
            eigen_residual: EIGEN_RESIDUAL,
            counterexample: COUNTEREXAMPLE,
            orthonormal_basis: ORTHONORMAL_BASIS,
            trajectory_coincidence: TRAJECTORY_COINCIDENCE,
        }
    }
}

impl Tolerances {
    /// The finite-difference step suited to a network's hidden units.
    pub fn fd_step_for(&self, spec: &crate::mlp::MlpSpec) -> f64 {
        if spec.is_piecewise_linear() {
            self.fd_step_kinked
        } else {
            self.fd_step
        }
    }
}
