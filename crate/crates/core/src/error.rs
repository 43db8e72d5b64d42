use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown mode: {0}")]
    UnknownMode(String),

    #[error("transform is not an isometry (max deviation {deviation:.3e})")]
    NotIsometric { deviation: f64 },

    #[error("mode {0} is an output-only mode of the transform but is already occupied")]
    OccupiedFreshMode(String),

    #[error("states share modes: {0}")]
    OverlappingModes(String),

    #[error("detector assignments overlap on mode {0}")]
    OverlappingDetectors(String),

    #[error("parameter {name} = {value} outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("registry mismatch between operands")]
    RegistryMismatch,

    #[error("density matrix has zero trace; fidelity undefined")]
    ZeroTrace,

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("post-selection succeeded with zero probability")]
    EmptyPostSelection,

    #[error("calibration target {target} unattainable (maximum {max_attainable:.6})")]
    Unattainable { target: f64, max_attainable: f64 },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("oracle deviation {deviation:.3e} exceeds {tolerance:.1e}")]
    OracleMismatch { deviation: f64, tolerance: f64 },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable kind tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::UnknownMode(_) => "unknown_mode",
            Error::NotIsometric { .. } => "not_isometric",
            Error::OccupiedFreshMode(_) => "occupied_fresh_mode",
            Error::OverlappingModes(_) => "overlapping_modes",
            Error::OverlappingDetectors(_) => "overlapping_detectors",
            Error::OutOfRange { .. } => "out_of_range",
            Error::RegistryMismatch => "registry_mismatch",
            Error::ZeroTrace => "zero_trace",
            Error::InvalidDensityMatrix(_) => "invalid_density_matrix",
            Error::EmptyPostSelection => "empty_post_selection",
            Error::Unattainable { .. } => "unattainable",
            Error::Fit(_) => "fit",
            Error::OracleMismatch { .. } => "oracle_mismatch",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub(crate) fn check_unit_interval(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            range: "[0, 1]",
        })
    }
}
