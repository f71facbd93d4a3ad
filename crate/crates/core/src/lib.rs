//! Avoidance couplings of random walkers on complete graphs.

pub mod dist;
pub mod error;
pub mod prob;
pub mod process;
pub mod basic;
pub mod hypercube;
pub mod combinators;
pub mod entropy;
pub mod stats;
pub mod verifier;
pub mod planner;

pub use dist::Dist;
pub use error::{Error, Result};
pub use prob::{Prob, Rational};
pub use process::{CouplingProcess, Flags, GraphSpec, LoopMode, Process, State, TrajectoryLog, TurnMachine};
