use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate element {element}: jacobian determinant {det:e}")]
    Geometry { element: usize, det: f64 },
    #[error("inadmissible deformation: J = {0:e}")]
    InadmissibleState(f64),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("degenerate random field: {0}")]
    DegenerateField(String),
    #[error("singular system: pivot {pivot:e} at row {row}")]
    Singular { row: usize, pivot: f64 },
    #[error("nonlinear solve failed: {0}")]
    SolverFailure(String),
    #[error("Monte Carlo oracle unreliable: {failed} of {total} samples failed")]
    OracleUnreliable { failed: usize, total: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
