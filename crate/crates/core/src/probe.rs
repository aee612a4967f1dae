//! Observation hooks. Algorithms report their intermediate states here so
//! that tests can inspect snapshots; the hooks never influence execution.

use crate::machine::{Machine, View};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Short-wide sort, after the first alternating row sort and conversion
    /// to column-major.
    ShortWideFirstConvert,
    /// Short-wide sort, after the first full pass (back in row-major).
    ShortWideFirstPass,
    /// Integer sort: balancing finished for the subproblems at `depth`.
    Balanced { depth: u32 },
    /// Integer sort: subproblems at `depth` converted and split; the views
    /// passed are the new children.
    Divided { depth: u32 },
    /// Integer sort: recursion leaves sorted; views are the top-level ones.
    LeavesSorted,
    /// Integer sort: full-column sort done.
    ColumnsSorted,
    /// Integer sort: a pair of shifted square passes finished.
    Cleanup { retry: u32 },
    /// Permutation: synchronization finished for iteration `index`
    /// (1-based); no views are passed.
    Iteration { index: u32 },
    /// Permutation: leftovers packed; the view is the packed matrix.
    Packed,
}

pub trait Probe {
    fn observe(&mut self, _stage: Stage, _machine: &Machine, _views: &[View]) {}
}

/// Ignores everything.
pub struct NoProbe;

impl Probe for NoProbe {}

impl<F: FnMut(Stage, &Machine, &[View])> Probe for F {
    fn observe(&mut self, stage: Stage, machine: &Machine, views: &[View]) {
        self(stage, machine, views)
    }
}
