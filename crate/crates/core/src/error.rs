use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("self-duality requires even dimension, got {0}")]
    OddDimension(usize),
    #[error("matrix is not unitary (defect {defect:.3e})")]
    NotUnitary { defect: f64 },
    #[error("Moebius singularity: smallest singular value of CZ+D is {sigma_min:.3e}")]
    MoebiusSingular { sigma_min: f64 },
    #[error("frame not in the invertible chart: lower block singular value {sigma_min:.3e}")]
    ChartSingular { sigma_min: f64 },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),
    #[error("Im E = {0:.3e} too small (minimum {1:.1e})")]
    ImagPartTooSmall(f64, f64),
    #[error("winding step too coarse: |increment| = {increment:.6} >= pi - margin")]
    StepTooCoarse { increment: f64 },
    #[error("eigenvalue within {tol:.3e} of the query energy; counts {below} or {with_boundary}")]
    BoundaryAmbiguity { below: usize, with_boundary: usize, tol: f64 },
    #[error("Jordan block / band edge at E = {energy}: {reason}")]
    BandEdge { energy: f64, reason: String },
    #[error("anomaly at E = {energy}: {reason}")]
    Anomaly { energy: f64, reason: String },
    #[error("eigensolver failed to converge")]
    EigenFailure,
    #[error("branch anchor degenerate: {0}")]
    BranchAnchor(String),
    #[error("{0}")]
    InvalidInput(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(#[from] serde_json::Error),
}
