//! Simulation engine and strategy library for the variable-processor cup
//! game: a filler distributes p units of water per round (choosing p each
//! round, at most one unit per cup) and an emptier then removes up to one
//! unit from each of p cups. The crate provides the round mechanics under
//! both standard and negative fill semantics, emptier and filler strategy
//! libraries including the amplification-based lower-bound constructions,
//! online invariant monitors, and a deterministic Monte-Carlo harness.

pub mod config;
pub mod emptier;
pub mod engine;
pub mod error;
pub mod filler;
pub mod guarantee;
pub mod monitor;
pub mod moves;
pub mod num;
pub mod rng;
pub mod stats;
pub mod state;

pub use config::{FillSemantics, GameConfig};
pub use error::{CupId, GameError, Result};
pub use num::{rat, FillValue, Rat, F64};
pub use state::{CupState, Phase};
