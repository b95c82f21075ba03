//! Rate and strategy modeling for multiplexed heralded entanglement at
//! trapped-ion network nodes.

pub mod atomic;
pub mod bsm;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod montecarlo;
pub mod optimizer;
pub mod program;
pub mod report;
pub mod scheduler;
pub mod timing;
pub mod units;

pub use atomic::{AtomicParams, Level, PopulationVector, ShelfOrigin, ShelveDirection, TransitionMap};
pub use engine::{EmissionProfile, Strategy};
pub use error::{Error, Result};
pub use program::{Op, Primitive, PulseProgram};
