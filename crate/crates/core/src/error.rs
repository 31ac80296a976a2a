use thiserror::Error;

use crate::mdp::State;
use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("delay model rejected: {0}")]
    InvalidDelay(ValidationReport),

    #[error("transmission slot index must be >= 1")]
    ZeroSlot,

    #[error("invalid state {0}")]
    InvalidState(State),

    #[error("state {0} is outside the truncated state space")]
    OutOfRange(State),

    #[error("operation requires a bounded delay model")]
    UnboundedDelay,

    #[error("truncation too small: t_max_trunc = {given} but the delay model needs at least {needed}")]
    TruncationTooSmall { given: u32, needed: u32 },

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("policy does not induce a unichain: {unreaching} state(s) cannot reach the reference state {reference}")]
    Multichain { reference: State, unreaching: usize },

    #[error("linear system is singular")]
    Singular,

    #[error("policy iteration cycled after {rounds} rounds (period {period})")]
    PolicyCycle { rounds: usize, period: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
