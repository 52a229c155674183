use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("unknown unit tag `{0}`")]
    UnknownUnit(String),

    #[error("process time of the ansatz is unresolved")]
    UnresolvedProcessTime,

    #[error("separation diverges at t = {t:.6} (omega_minus_sq = {omega_minus_sq:.6}); enlarge T or reshape ansatz")]
    SeparationDiverges { t: f64, omega_minus_sq: f64 },

    #[error("transient anti-confinement required: curvature {value:.6} at t = {t:.6}")]
    AntiConfinement { value: f64, t: f64 },

    #[error("center undefined at near-zero curvature ({value:.3e}) at t = {t:.6}")]
    CenterUndefined { value: f64, t: f64 },

    #[error("no phase bracket found below T_max = {t_max}")]
    NoPhaseBracket { t_max: f64 },

    #[error("no process-time bracket: {0}")]
    NoTimeBracket(String),

    #[error("integration failure: {0}")]
    Integration(String),

    #[error("inconsistent dual solutions: deviation {deviation:.3e} exceeds {tolerance:.1e}")]
    Inconsistency { deviation: f64, tolerance: f64 },

    #[error("cutoff leakage: population {population:.3e} at the top Fock level of mode {mode} (cutoff {cutoff}); rerun with a larger cutoff")]
    Leakage {
        population: f64,
        mode: usize,
        cutoff: usize,
    },

    #[error("species mismatch: {0}")]
    SpeciesMismatch(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("invalid waveform file: {0}")]
    WaveformFile(String),

    #[error("waveform validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
