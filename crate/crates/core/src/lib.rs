//! Forward-backward-sweep optimal power flow (FBS-OPF) for radial
//! low-voltage grids.
//!
//! The crate linearizes the AC power-flow equations of a radial feeder
//! around a voltage state, solves the resulting linear program, and refines
//! the voltage state with a forward-backward sweep. On top of the single
//! period OPF it builds a multiperiod problem with battery storage and a
//! joint storage sizing and placement problem.

pub mod error;
pub mod grid;
pub mod linearize;
pub mod lp;
pub mod opf;
pub mod powerflow;
pub mod scenario;
pub mod storage;

pub use error::{Error, Result};
pub use grid::{build_bibc, validate_network, BibcMatrix, BusId, RadialNetwork};
