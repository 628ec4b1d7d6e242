//! Unravelling equivalence for Lindblad master equations.
//!
//! Given two representations `(H, {J_k})` of the same master equation, this
//! crate decides whether they produce the same ensemble of quantum-jump
//! trajectories, with or without jump labels, and provides the gauge
//! transformations, sets of jump operators with equal destinations (SJEDs),
//! a trajectory simulator and the statistics needed to confirm those
//! verdicts empirically.

pub mod equivalence;
pub mod error;
pub mod format;
pub mod gauge;
pub mod linalg;
pub mod models;
pub mod representation;
pub mod sjed;
pub mod stats;
pub mod trajectory;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{PureState, Tolerance};
pub use representation::Representation;
