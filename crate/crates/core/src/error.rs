use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("representation mismatch: {0}")]
    Representation(String),

    #[error("state has zero norm (perfect cancellation); refusing to renormalize")]
    ZeroNorm,

    #[error("wavepacket tail {tail:e} at the grid edge exceeds {tolerance:e}; widen the grid or narrow the packet")]
    TailClipped { tail: f64, tolerance: f64 },

    #[error(
        "V'' of a square well is distributional (delta-like at x = ±L/2); use a smoothed well"
    )]
    Distributional,

    #[error("no root of |R|^2 = {target} on the first branch (branch maximum {branch_max})")]
    NoRoot { target: f64, branch_max: f64 },

    #[error("probability {mass:e} in the {axis} boundary band at t = {time} exceeds {tolerance:e} (wrap-around hazard)")]
    BoundaryLeak {
        axis: String,
        time: f64,
        mass: f64,
        tolerance: f64,
    },

    #[error("Riccati solution left the unitary regime: |E| = {magnitude} at t = {time}")]
    RiccatiBlowUp { time: f64, magnitude: f64 },

    #[error("number-basis truncation error {deficit:e} exceeds {tolerance:e} at n_fock = {n_fock}; a larger basis on a wider or finer grid is needed")]
    Truncation {
        deficit: f64,
        tolerance: f64,
        n_fock: usize,
    },

    #[error("number-basis propagator is unstable at n_fock = {n_fock}: norm grew by {gain:e}")]
    PropagatorInstability { gain: f64, n_fock: usize },

    #[error("time lattice mismatch: {0}")]
    LatticeMismatch(String),

    #[error("three-point theta fit disagrees with the confirmation evaluation by {mismatch:e}")]
    ThetaFit { mismatch: f64 },

    #[error("stop condition not met by t = {0}")]
    StopNotReached(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors that come from the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::BoundaryLeak { .. }
                | Error::RiccatiBlowUp { .. }
                | Error::Truncation { .. }
                | Error::PropagatorInstability { .. }
                | Error::ThetaFit { .. }
                | Error::StopNotReached(_)
                | Error::ZeroNorm
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
