use thiserror::Error;

use crate::device::BareLabel;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid system spec: {0}")]
    InvalidSpec(String),

    #[error("basis of {size} states exceeds the configured cap of {cap}")]
    BasisTooLarge { size: usize, cap: usize },

    #[error("ambiguous adiabatic match at ramp step {step}: {first} and {second} overlap equally")]
    AmbiguousLabel {
        step: usize,
        first: BareLabel,
        second: BareLabel,
    },

    #[error("adiabatic labels are not a permutation at ramp step {step}")]
    LabelCollision { step: usize },

    #[error("eigensolve at omega_c = {omega_c:e} rad/s failed: {source}")]
    GridPoint {
        omega_c: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("pulses on qubit systems {first} and {second} interfere (slot {slot})")]
    Interference {
        first: usize,
        second: usize,
        slot: usize,
    },

    #[error("compilation failed: {0}")]
    Compile(String),

    #[error("walk design error: {0}")]
    Design(String),

    #[error("no return-walk solution with indices up to {max_index}: {detail}")]
    NoSolution { max_index: usize, detail: String },

    #[error("norm drift {drift:e} at t = {time:e} exceeds tolerance; use a smaller step")]
    NormDrift { drift: f64, time: f64 },

    #[error("implicit step did not converge at t = {time:e}; use a smaller step")]
    StepTooLarge { time: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::AmbiguousLabel { .. }
            | Error::LabelCollision { .. }
            | Error::NoSolution { .. }
            | Error::NormDrift { .. }
            | Error::StepTooLarge { .. } => true,
            Error::GridPoint { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::InvalidSpec(_) => "invalid_spec",
            Error::BasisTooLarge { .. } => "resource",
            Error::AmbiguousLabel { .. } => "ambiguous_label",
            Error::LabelCollision { .. } => "label_collision",
            Error::GridPoint { .. } => "grid_point",
            Error::Precondition(_) => "precondition",
            Error::Interference { .. } => "interference",
            Error::Compile(_) => "compile",
            Error::Design(_) => "design",
            Error::NoSolution { .. } => "no_solution",
            Error::NormDrift { .. } => "norm_drift",
            Error::StepTooLarge { .. } => "step_too_large",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
