use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    Lattice(String),
    #[error("empty support")]
    EmptySupport,
    #[error("particle number {n} out of range for {modes} modes")]
    SectorRange { n: usize, modes: usize },
    #[error("full Fock space operations are limited to {limit} modes, got {modes}")]
    SizeLimit { modes: usize, limit: usize },
    #[error("operator is not {expected}: deviation {deviation:.3e}")]
    Adjointness { expected: &'static str, deviation: f64 },
    #[error("term does not conserve particle number")]
    NotNumberConserving,
    #[error("term support outside lattice: {0}")]
    SupportOutside(String),
    #[error("non-self-adjoint kernel: {0}")]
    NonSelfAdjointKernel(String),
    #[error("discontinuous across seam: {0}")]
    Seam(String),
    #[error("no spectral gap: {0}")]
    NoGap(String),
    #[error("empty selection")]
    EmptySelection,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("derivative strategy failure: {0}")]
    Derivative(String),
    #[error("step too large: {0}")]
    StepTooLarge(String),
    #[error("geometry mismatch: {0}")]
    Geometry(String),
    #[error("initial state outside the patch range: deviation {0:.3e}")]
    OutsideRange(f64),
    #[error(transparent)]
    Linalg(#[from] ndarray_linalg::error::LinalgError),
}

pub type Result<T> = std::result::Result<T, Error>;
