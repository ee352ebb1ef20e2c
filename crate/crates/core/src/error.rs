use std::fmt;

use thiserror::Error;

/// Pipeline stage an error originated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Irradiance,
    Thermal,
    Cell,
    Hierarchy,
    Mlpe,
    OperatingPoint,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Irradiance => "irradiance",
            Stage::Thermal => "thermal",
            Stage::Cell => "cell",
            Stage::Hierarchy => "hierarchy",
            Stage::Mlpe => "mlpe",
            Stage::OperatingPoint => "operating-point",
        };
        f.write_str(s)
    }
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown module `{0}`")]
    UnknownModule(String),
    #[error("invalid module record `{id}`: {reason}")]
    InvalidModuleSpec { id: String, reason: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),
    #[error("unsupported sky patch count {0} (supported: 1, 145, 577, 2305)")]
    InvalidPatchCount(usize),
    #[error("{what} did not converge")]
    NonConvergence { what: &'static str },
    #[error("no root of the steady-state balance in [{lo:.2}, {hi:.2}] K")]
    NoRootInBracket { lo: f64, hi: f64 },
    #[error("Rs/Rsh calibration diverged at rs = {rs:.5} ohm (MPP error {mpp_error:.4})")]
    CalibrationDiverged { rs: f64, mpp_error: f64 },
    #[error("shunt resistance became non-positive at rs = {rs:.5} ohm")]
    NegativeRsh { rs: f64 },
    #[error("empty input")]
    EmptyInput,
    #[error("curves share no voltage domain")]
    NoDomainOverlap,
    #[error("invalid IV curve: {0}")]
    InvalidCurve(String),
    #[error("inconsistent inputs: {0}")]
    InconsistentInputs(String),
    #[error("non-uniform timestep at record {index}")]
    NonUniformTimestep { index: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("measured series has zero variance")]
    DegenerateVariance,
    #[error("{stage} stage: {source}")]
    InStage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn in_stage(self, stage: Stage) -> Error {
        match self {
            e @ Error::InStage { .. } => e,
            e => Error::InStage { stage, source: Box::new(e) },
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::UnknownModule(_)
            | Error::InvalidModuleSpec { .. }
            | Error::Config(_)
            | Error::TopologyMismatch(_)
            | Error::InvalidPatchCount(_)
            | Error::DimensionMismatch { .. } => ErrorClass::Config,
            Error::Parse { .. }
            | Error::NonUniformTimestep { .. }
            | Error::LengthMismatch { .. }
            | Error::DegenerateVariance
            | Error::EmptyInput
            | Error::Io(_)
            | Error::Csv(_) => ErrorClass::Data,
            Error::InStage { source, .. } => source.class(),
            _ => ErrorClass::Numerical,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
