//! The `w`-way partition problem and integer sorting.
//!
//! Labels are words whose key (low 32 bits, see [`crate::local::key_of`])
//! is the destination row. Row sorts are base-`m` LSD radix sorts, so every
//! sub-sort costs `O(m log_m domain)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::collective::{broadcast, ceil_log2, tree_reduce_sum};
use crate::error::{Error, Result};
use crate::layout::{to_column_major, to_row_major};
use crate::local::{key_of, Direction};
use crate::machine::{check_disjoint, AccessRequest, Machine, View, Word};
use crate::probe::{NoProbe, Probe, Stage};
use crate::sort::{self, RowSorter, SortOrder};

/// Smallest `k` with `base^k >= x`.
pub fn ceil_log(base: usize, x: usize) -> u32 {
    let (base, x) = (base.max(2) as u128, x as u128);
    let (mut k, mut p) = (0, 1u128);
    while p < x {
        p = p.saturating_mul(base);
        k += 1;
    }
    k
}

/// Recursion parameters for one level of the general algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionParams {
    /// Dirty-column bound `2 log_m W`, rounded up to a divisor of `W / m`.
    pub d: usize,
    /// Balancing rounds, `ceil(log_m W)`.
    pub rounds: u32,
    /// Number of balance + divide levels before subproblems fit in `m` rows.
    pub depth: u32,
}

impl PartitionParams {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if cols < 2 {
            return Err(Error::ShapeViolation("partition needs m >= 2"));
        }
        let d = Self::dirty_bound(rows, cols)?;
        let mut depth = 0;
        let mut h = rows;
        while h > cols {
            let d = Self::dirty_bound(h, cols)?;
            h /= cols * d;
            depth += 1;
        }
        Ok(PartitionParams { d, rounds: ceil_log(cols, rows), depth })
    }

    fn dirty_bound(rows: usize, cols: usize) -> Result<usize> {
        if rows <= cols {
            return Ok(1);
        }
        if rows % cols != 0 {
            return Err(Error::DivisibilityViolation { rows, pieces: cols });
        }
        let pieces = rows / cols;
        // 2 log_m W rounded up: smallest k with m^k >= W^2
        let want = ceil_log(cols, rows.saturating_mul(rows)).max(1) as usize;
        Ok((want..=pieces).find(|k| pieces % k == 0).unwrap_or(pieces))
    }
}

/// What the general algorithm observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SortStats {
    /// Largest number of repeated cleanup pairs at any recursion level.
    pub cleanup_retries: u32,
    /// Largest number of repeated cleanup pairs at the top level.
    pub top_cleanup_retries: u32,
    /// Depth of the column-sort recursion.
    pub column_depth: u32,
}

fn shape(views: &[View]) -> Result<(usize, usize)> {
    let first = views.first().ok_or(Error::ShapeViolation("no views"))?;
    let s = (first.height(), first.width());
    if views.iter().any(|v| (v.height(), v.width()) != s || v.col() != first.col()) {
        return Err(Error::ShapeViolation("lockstep views must share shape and columns"));
    }
    Ok(s)
}

fn radix(domain: u64) -> RowSorter {
    RowSorter::Radix { domain }
}

/// Radix-sorts every row of the view ascending by key.
pub fn radix_sort_row(machine: &mut Machine, view: &View, domain: u64) -> Result<()> {
    sort::sort_rows(machine, core::slice::from_ref(view), SortOrder::Ascending, radix(domain))
}

/// Host-side precondition check: every key is in `[0, height)` and occurs
/// exactly `width` times.
pub fn validate_instance(machine: &Machine, view: &View) -> Result<()> {
    let (h, c) = (view.height(), view.width());
    let mut counts = vec![0usize; h];
    for row in machine.view_snapshot(view) {
        for x in row {
            match key_of(x) {
                Some(k) if (k as usize) < h => counts[k as usize] += 1,
                _ => return Err(Error::InvalidInstance("label outside [0, w)")),
            }
        }
    }
    if counts.iter().any(|&n| n != c) {
        return Err(Error::InvalidInstance("every label must occur exactly m times"));
    }
    Ok(())
}

/// Partition for `w^2 <= m`: the short-wide sort with radix row sorts.
pub fn partition_short_wide(machine: &mut Machine, view: &View) -> Result<()> {
    validate_instance(machine, view)?;
    let domain = view.height() as u64;
    sort::sort_short_wide(machine, core::slice::from_ref(view), radix(domain))
}

/// Partition for `w = m` with `m` a perfect square: the square sort with
/// radix row sorts.
pub fn partition_square(machine: &mut Machine, view: &View) -> Result<()> {
    validate_instance(machine, view)?;
    let domain = view.height() as u64;
    sort::sort_square(machine, core::slice::from_ref(view), radix(domain))
}

/// Balancing: in round `i` the rows are grouped into sub-matrices of `m^i`
/// rows, `m` contiguous sub-matrices form a group, and the `j`-th rows of a
/// group's sub-matrices form the `j`-th matrix to be sorted in column-major
/// order. A short last group yields short-wide matrices.
pub fn balance(machine: &mut Machine, view: &View, domain: u64) -> Result<()> {
    let (rows, cols) = (view.height(), view.width());
    if rows < cols || rows % cols != 0 {
        return Err(Error::ShapeViolation("balancing needs m | W and W >= m"));
    }
    balance_views(machine, core::slice::from_ref(view), radix(domain))
}

pub(crate) fn balance_views(machine: &mut Machine, views: &[View], sorter: RowSorter) -> Result<()> {
    let (rows, cols) = shape(views)?;
    let mut size = 1usize;
    while size < rows {
        // bucket by height, since a short last group gives shorter matrices
        let mut buckets: Vec<(usize, Vec<View>)> = Vec::new();
        for v in views {
            for start in (0..rows).step_by(size * cols) {
                for j in 0..size {
                    let picked: Vec<usize> =
                        (0..cols).map(|s| start + s * size + j).take_while(|&r| r < rows).collect();
                    if picked.is_empty() {
                        continue;
                    }
                    let sub = v.pick(picked);
                    match buckets.iter_mut().find(|(h, _)| *h == sub.height()) {
                        Some((_, b)) => b.push(sub),
                        None => buckets.push((sub.height(), vec![sub])),
                    }
                }
            }
        }
        for (_, b) in &buckets {
            let dirs = vec![Direction::Ascending; b.len()];
            sort::block(machine, b, &dirs, sorter)?;
            to_column_major(machine, b)?;
        }
        size = size.saturating_mul(cols);
    }
    Ok(())
}

/// Converts column-major to row-major and splits each view into `m * d`
/// bands of `W / (m d)` rows.
pub fn convert_and_divide(machine: &mut Machine, views: &[View], d: usize) -> Result<Vec<View>> {
    let (rows, cols) = shape(views)?;
    let pieces = cols * d.max(1);
    if rows % pieces != 0 {
        return Err(Error::DivisibilityViolation { rows, pieces });
    }
    to_row_major(machine, views)?;
    let h = rows / pieces;
    Ok(views.iter().flat_map(|v| (0..pieces).map(move |k| v.band(k * h, h))).collect())
}

/// Partition on a `w x m` view with `w >= m > 2 sqrt(log2 w)`.
pub fn partition_general(machine: &mut Machine, view: &View) -> Result<SortStats> {
    partition_general_probed(machine, view, &mut NoProbe)
}

pub fn partition_general_probed(machine: &mut Machine, view: &View, probe: &mut dyn Probe) -> Result<SortStats> {
    let (w, m) = (view.height(), view.width());
    if w < m {
        return Err(Error::ShapeViolation("general partition needs w >= m"));
    }
    if !wide_enough(w, m) {
        return Err(Error::ShapeViolation("general partition needs m > 2 sqrt(log2 w)"));
    }
    validate_instance(machine, view)?;
    integer_sort_probed(machine, core::slice::from_ref(view), w as u64, probe)
}

/// `m > 2 sqrt(log2 w)`, i.e. `2^(m^2) > w^4`.
pub fn wide_enough(w: usize, m: usize) -> bool {
    let sq = m * m;
    sq >= 128 || (1u128 << sq) > (w as u128).pow(4)
}

/// Sorts the views row-major by key (`key < domain`, `EMPTY` last) with the
/// balancing / convert-and-divide recursion, a recursive full-column sort
/// and shifted square cleanup passes. Views are processed in lockstep.
pub fn integer_sort_general(machine: &mut Machine, views: &[View], domain: u64) -> Result<SortStats> {
    integer_sort_probed(machine, views, domain, &mut NoProbe)
}

pub fn integer_sort_probed(
    machine: &mut Machine,
    views: &[View],
    domain: u64,
    probe: &mut dyn Probe,
) -> Result<SortStats> {
    if views.is_empty() {
        return Ok(SortStats::default());
    }
    let (_, cols) = shape(views)?;
    if cols < 2 {
        return Err(Error::ShapeViolation("integer sort needs m >= 2"));
    }
    check_disjoint(machine.w(), views)?;
    let mut stats = SortStats::default();
    sort_level(machine, views, radix(domain), probe, 0, &mut stats)?;
    Ok(stats)
}

fn sort_level(
    machine: &mut Machine,
    views: &[View],
    sorter: RowSorter,
    probe: &mut dyn Probe,
    depth: u32,
    stats: &mut SortStats,
) -> Result<()> {
    let (rows, cols) = shape(views)?;
    if rows <= cols {
        return sort::block(machine, views, &vec![Direction::Ascending; views.len()], sorter);
    }
    if rows % cols != 0 {
        return Err(Error::DivisibilityViolation { rows, pieces: cols });
    }
    stats.column_depth = stats.column_depth.max(depth + 1);
    let top = depth == 0;

    let mut cur = views.to_vec();
    let mut level = 0;
    while cur[0].height() > cols {
        balance_views(machine, &cur, sorter)?;
        if top {
            probe.observe(Stage::Balanced { depth: level }, machine, &cur);
        }
        let d = PartitionParams::dirty_bound(cur[0].height(), cols)?;
        cur = convert_and_divide(machine, &cur, d)?;
        if top {
            probe.observe(Stage::Divided { depth: level }, machine, &cur);
        }
        level += 1;
    }
    sort::block(machine, &cur, &vec![Direction::Ascending; cur.len()], sorter)?;
    if top {
        probe.observe(Stage::LeavesSorted, machine, views);
    }

    // each column becomes a (rows/m) x m band, is sorted, and is put back
    to_row_major(machine, views)?;
    let h = rows / cols;
    let bands: Vec<View> = views.iter().flat_map(|v| (0..cols).map(move |k| v.band(k * h, h))).collect();
    sort_level(machine, &bands, sorter, probe, depth + 1, stats)?;
    to_column_major(machine, views)?;
    if top {
        probe.observe(Stage::ColumnsSorted, machine, views);
    }

    let budget = ceil_log2(rows);
    for retry in 0..=budget {
        let aligned: Vec<View> =
            views.iter().flat_map(|v| (0..rows / cols).map(move |k| v.band(k * cols, cols))).collect();
        sort::block(machine, &aligned, &vec![Direction::Ascending; aligned.len()], sorter)?;
        let half = cols / 2;
        let shifted: Vec<View> =
            views.iter().flat_map(|v| (0..rows / cols - 1).map(move |k| v.band(half + k * cols, cols))).collect();
        if !shifted.is_empty() {
            sort::block(machine, &shifted, &vec![Direction::Ascending; shifted.len()], sorter)?;
        }
        if top {
            probe.observe(Stage::Cleanup { retry }, machine, views);
        }
        if sorted_scan(machine, views, sorter)? {
            stats.cleanup_retries = stats.cleanup_retries.max(retry);
            if top {
                stats.top_cleanup_retries = retry;
            }
            return Ok(());
        }
    }
    Err(Error::PostconditionFailed { retries: budget as usize })
}

/// Conflict-free check that every view is sorted row-major by rank. Each row
/// reads the first word of the next row, checks itself locally, and the
/// per-row flags are summed and the verdict broadcast to every row.
/// Costs `O(m + log w)` steps.
pub fn sorted_scan(machine: &mut Machine, views: &[View], sorter: RowSorter) -> Result<bool> {
    let (rows, cols) = shape(views)?;
    let w = machine.w();
    let col = views[0].col();
    let regions = machine.regions();
    let (flag, mailbox) = (regions.misc + 2, regions.misc + 3);
    regions.require(mailbox + 1)?;

    let mut batch = Vec::new();
    let mut next_first = Vec::new();
    for v in views {
        batch.extend((0..rows.saturating_sub(1)).map(|r| AccessRequest::read(v.bank(r), v.bank(r + 1), col)));
    }
    machine.step_into(&batch, &mut next_first)?;
    let mut successor: Vec<Option<Word>> = vec![None; w];
    let mut it = next_first.into_iter();
    for v in views {
        for r in 0..rows.saturating_sub(1) {
            successor[v.bank(r)] = it.next();
        }
    }
    let mut member = vec![false; w];
    for v in views {
        for &b in v.rows() {
            member[b] = true;
        }
    }
    machine.local_phase(&(0..w).collect::<Vec<_>>(), |b, ctx| {
        let mut bad = 0;
        if member[b] {
            let mut prev = sorter.rank(ctx.read(col));
            for c in 1..cols {
                let x = sorter.rank(ctx.read(col + c));
                if x < prev {
                    bad = 1;
                }
                prev = x;
            }
            if let Some(n) = successor[b] {
                if sorter.rank(n) < prev {
                    bad = 1;
                }
            }
        }
        ctx.write(flag, bad);
    })?;
    let total = tree_reduce_sum(machine, flag, mailbox)?;
    let mut sink = Vec::new();
    machine.step_into(&[AccessRequest::write(0, 0, flag, total)], &mut sink)?;
    broadcast(machine, flag, 1)?;
    Ok(total == 0)
}
