use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShieldError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} = {value} is outside [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("formation construction failed: {0}")]
    Construction(String),

    #[error("agent {agent} left the admissible region (barrier coordinate {coordinate})")]
    BarrierDomain { agent: usize, coordinate: f64 },

    #[error("state diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("initial-condition sampling failed: {0}")]
    Sampling(String),
}

pub type Result<T, E = ShieldError> = std::result::Result<T, E>;
