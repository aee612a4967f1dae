//! 0-1 markings of snapshots, for instrumented tests.
//!
//! A marking with value `i` gives mark 0 to the `i` smallest input words and
//! mark 1 to the rest. Algorithms never see marks; tests compute them on
//! snapshots taken between phases.

use alloc::vec::Vec;
use core::ops::Range;

use crate::machine::Word;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkingOracle {
    pub value: usize,
    /// Largest word carrying mark 0 (none when `value == 0`).
    threshold: Option<Word>,
    pub w0: usize,
    pub w1: usize,
}

impl MarkingOracle {
    /// Marking of `words` (the whole input) with value `i`. With repeated
    /// words the tie at the threshold is marked 0 throughout, so `w0` can
    /// exceed `i`.
    pub fn new(words: impl IntoIterator<Item = Word>, i: usize) -> Self {
        let mut sorted: Vec<Word> = words.into_iter().collect();
        sorted.sort_unstable();
        let i = i.min(sorted.len());
        let threshold = i.checked_sub(1).map(|k| sorted[k]);
        let w0 = threshold.map_or(0, |t| sorted.partition_point(|&x| x <= t));
        MarkingOracle { value: i, threshold, w0, w1: sorted.len() - w0 }
    }

    pub fn of_rows(rows: &[Vec<Word>], i: usize) -> Self {
        Self::new(rows.iter().flatten().copied(), i)
    }

    /// `false` is mark 0, `true` mark 1.
    pub fn mark(&self, x: Word) -> bool {
        self.threshold.is_none_or(|t| x > t)
    }

    pub fn marks(&self, rows: &[Vec<Word>]) -> Vec<Vec<bool>> {
        rows.iter().map(|r| r.iter().map(|&x| self.mark(x)).collect()).collect()
    }

    /// Rows holding both marks.
    pub fn dirty_rows(&self, rows: &[Vec<Word>]) -> Vec<usize> {
        (0..rows.len()).filter(|&r| mixed(rows[r].iter().map(|&x| self.mark(x)))).collect()
    }

    /// Columns holding both marks.
    pub fn dirty_columns(&self, rows: &[Vec<Word>]) -> Vec<usize> {
        let width = rows.first().map_or(0, Vec::len);
        (0..width).filter(|&c| mixed(rows.iter().map(|r| self.mark(r[c])))).collect()
    }

    /// Count of 0-marks in every row.
    pub fn zeros_per_row(&self, rows: &[Vec<Word>]) -> Vec<usize> {
        rows.iter().map(|r| r.iter().filter(|&&x| !self.mark(x)).count()).collect()
    }

    /// Whether the marks read `0..0 1..1` in row-major order.
    pub fn sorted_row_major(&self, rows: &[Vec<Word>]) -> bool {
        let flat: Vec<bool> = rows.iter().flatten().map(|&x| self.mark(x)).collect();
        flat.windows(2).all(|p| p[0] <= p[1])
    }
}

fn mixed(mut marks: impl Iterator<Item = bool>) -> bool {
    match marks.next() {
        Some(first) => marks.any(|b| b != first),
        None => false,
    }
}

/// Maximal runs of consecutive indices in an increasing list.
pub fn clusters(indices: &[usize]) -> Vec<Range<usize>> {
    let mut out: Vec<Range<usize>> = Vec::new();
    for &i in indices {
        match out.last_mut() {
            Some(r) if r.end == i => r.end += 1,
            _ => out.push(i..i + 1),
        }
    }
    out
}
