//! Discrete Memory Model (DMM) simulator and bank-conflict-free algorithms.
//!
//! The machine has `w` processors and `w` memory banks; data of size
//! `n = w * m` sits in a `w x m` matrix with one row per bank. In each step
//! every processor makes at most one access and no bank may be accessed
//! twice. On top of the simulator this crate implements:
//!
//! * conflict-free layout primitives ([`layout`]): in-place square
//!   transpose and offline schedules for fixed permutations,
//! * comparison sorting for short-wide, square and tall matrices ([`sort`]),
//! * the `w`-way partition problem and integer sorting ([`partition`]),
//! * the randomized permutation pipeline ([`permute`]).
//!
//! Instrumentation for tests lives in [`marking`].
#![no_std]

extern crate alloc;

pub mod collective;
pub mod error;
pub mod layout;
pub mod local;
pub mod machine;
pub mod marking;
pub mod probe;
pub mod partition;
pub mod permute;
pub mod sort;

pub use error::{Error, Result};
pub use machine::{
    check_disjoint, verify_trace, AccessRequest, CostMeter, Machine, MachineConfig, Op, StepBatch, TraceEvent,
    TraceLog, View, Violation, Word, EMPTY,
};
