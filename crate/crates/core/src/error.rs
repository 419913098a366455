use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{what}: size {size} exceeds cap {cap}")]
    CapExceeded {
        what: &'static str,
        size: u64,
        cap: u64,
    },
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("group element {element} does not belong to {group}")]
    IncompatibleElement { element: String, group: String },
    #[error("basis method {method} is not applicable to {what}")]
    MethodUnsupported { method: &'static str, what: String },
    #[error("non-finite activation after layer {layer}")]
    NonFiniteActivation { layer: usize },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("basis is not orthonormal (residual {residual:e})")]
    BasisNotOrthonormal { residual: f64 },
    #[error("eigensolver did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("precondition violated: {what} = {value:e} exceeds {bound:e}")]
    PreconditionViolated {
        what: &'static str,
        value: f64,
        bound: f64,
    },
    #[error("bad IDX magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("count mismatch in {context}: expected {expected}, found {found}")]
    CountMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
