use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("collision: walker {walker} moved {from} -> {to}, occupied by walker {occupant}")]
    Collision { walker: usize, from: usize, to: usize, occupant: usize },

    #[error("infeasible hold probability s = {s}: {reason}")]
    InfeasibleS { s: String, reason: &'static str },

    #[error("bad factors a = {a}, b = {b}: both must be at least 2")]
    BadFactors { a: usize, b: usize },

    #[error("bad walker set: {0}")]
    BadWalkerSet(String),

    #[error("process does not stay in waves")]
    NotWaves,

    #[error("cannot thin Bern({p}) to Bern({q})")]
    BadThin { p: String, q: String },

    #[error("bad parameter: {0}")]
    BadParam(String),

    #[error("bad keep set: {0}")]
    BadKeep(String),

    #[error("walker counts differ: {left} vs {right}")]
    KMismatch { left: usize, right: usize },

    #[error("loop modes differ")]
    LoopMismatch,

    #[error("state space exceeds the enumeration bound of {limit} states")]
    StateSpaceTooLarge { limit: usize },

    #[error(
        "no plan found for n = {n}, k = {k}, looped = {looped} with the implemented methods \
         (this is not a proof that no coupling exists)"
    )]
    InfeasibleWithMethod { n: usize, k: usize, looped: bool },

    #[error("trajectory log has no rounds")]
    EmptyLog,

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
