//! Trace-driven behavioral simulator for dual-mode augmented SRAM arrays.
//!
//! Three bit-cell technologies are modeled:
//!
//!   - `Std6T`: the conventional 6T SRAM cell, static storage only.
//!   - `Aug8T`: an 8T cell that, in Augmented mode, holds a static bit and a
//!     retention-limited dynamic bit at the same time.
//!   - `Aug7T`: a 7T cell with a header PMOS; in Augmented mode the supply is
//!     cut and the cell holds one dynamic ternary digit.
//!
//! The crate is layered bottom-up: [`cell`] holds per-cell state machines,
//! [`models`] the numeric parameter tables, [`array`] sub-array organisation
//! and access dispatch, [`controller`] command execution, refresh and
//! reporting, and [`workload`] the trace format and synthetic generators.

pub mod array;
pub mod cell;
pub mod controller;
pub mod models;
pub mod rng;
pub mod workload;

/// Simulation time in nanoseconds.
pub type SimTime = u64;

pub use array::{Address, ArraySpec, Capacity, CellOp, Plane, SubArray};
pub use cell::{CellError, CellEvent, CellEventKind, CellMode, CellPolicy, CellState, Payload, Technology, Trit};
pub use controller::{Command, Action, Controller, FiloPolicy, Policies, RefreshPolicy, SimConfig, SimReport};
pub use models::{BiasConfig, ModelParams, OpKind};
