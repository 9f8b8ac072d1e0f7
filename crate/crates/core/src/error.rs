use thiserror::Error;

/// Errors raised by the solver, its I/O and its worker transport.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice specification: {0}")]
    InvalidSpec(String),

    #[error("cannot allocate a lattice of {sites} sites")]
    Allocation { sites: usize },

    #[error("coefficient singularity at site ({i}, {j}, {k}): 1 + dtau*V/2 vanishes")]
    CoefficientSingularity { i: usize, j: usize, k: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("dimension mismatch: expected N={expected}, found N={found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("wavefunction has zero norm")]
    ZeroNorm,

    #[error("numerical divergence at step {step}: {reason}")]
    Divergence { step: u64, reason: String },

    #[error("snapshot carries no new state (relative residual {ratio:e})")]
    DegenerateSnapshot { ratio: f64 },

    #[error("insufficient snapshots: needed {needed}, {available} usable")]
    InsufficientSnapshots { needed: usize, available: usize },

    #[error("N={n} is not divisible by M={m}")]
    IndivisiblePartition { n: usize, m: usize },

    #[error("timestep {dtau:e} violates the stability bound dtau < a^2/3 = {limit:e}")]
    Unstable { dtau: f64, limit: f64 },

    #[error("lattice volumes differ: L={coarse} vs L={fine}")]
    VolumeMismatch { coarse: f64, fine: f64 },

    #[error("transport failure: {0}")]
    Transport(String),

    #[error("protocol desynchronized: expected tag {expected} from rank {peer}, received {found}")]
    Protocol { peer: usize, expected: u32, found: u32 },

    #[error("format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit status used by the command-line front end.
    ///
    /// 1 configuration, 2 numerical divergence, 3 non-convergence (reported by
    /// the caller, not an error variant), 4 transport failure.
    pub fn exit_status(&self) -> i32 {
        match self {
            Error::Divergence { .. }
            | Error::NonFinite(_)
            | Error::ZeroNorm
            | Error::CoefficientSingularity { .. }
            | Error::DegenerateSnapshot { .. }
            | Error::InsufficientSnapshots { .. } => 2,
            Error::Transport(_) | Error::Protocol { .. } => 4,
            _ => 1,
        }
    }
}
