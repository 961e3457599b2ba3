use crate::mesh::BlockId;

/// Errors produced by grid construction, assembly, solvers and the experiment
/// runner.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("divisibility violation: {0}")]
    Divisibility(String),

    #[error("continuum {continuum} is absent from block ({},{})", block.bx, block.by)]
    AbsentContinuum { block: BlockId, continuum: u8 },

    #[error("constraint system is rank deficient at row {row} (block ({},{}), continuum {continuum})", block.bx, block.by)]
    RankDeficient {
        row: usize,
        block: BlockId,
        continuum: u8,
    },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("macro system is singular; block ({},{}) has minimal coupling eigenvalue {eigenvalue:.3e}", block.bx, block.by)]
    SingularMacro { block: BlockId, eigenvalue: f64 },

    #[error("cell solve failed at macropoint ({},{}): {source}", macropoint.bx, macropoint.by)]
    CellFailure {
        macropoint: BlockId,
        #[source]
        source: Box<Error>,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid medium: {0}")]
    InvalidMedium(String),

    #[error("malformed raster file: {0}")]
    MalformedRaster(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("degenerate reference: {0}")]
    DegenerateReference(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
