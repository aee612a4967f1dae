//! Comparison (and radix) sorting on the DMM.
//!
//! Every routine works on a set of equally shaped, bank-disjoint views and
//! drives them in lockstep, so independent subproblems share global steps.
//! Each view also carries a direction: a descending view runs the very same
//! program with every comparison inverted and ends up sorted descending in
//! row-major order.

use alloc::vec;
use alloc::vec::Vec;

use crate::collective::ceil_log2;
use crate::error::{Error, Result};
use crate::layout::{to_column_major, to_row_major, transpose_square};
use crate::local::{heapsort, key_of, radix_sort, Direction};
use crate::machine::{check_disjoint, AccessRequest, Machine, View, Word};
use crate::probe::{NoProbe, Probe, Stage};

/// Per-row sort direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortOrder {
    Ascending,
    Descending,
    /// Even-indexed rows get `start`, odd-indexed rows the opposite.
    Alternating(Direction),
}

impl SortOrder {
    pub fn direction(self, row: usize) -> Direction {
        match self {
            SortOrder::Ascending => Direction::Ascending,
            SortOrder::Descending => Direction::Descending,
            SortOrder::Alternating(d) if row % 2 == 0 => d,
            SortOrder::Alternating(d) => d.flip(),
        }
    }
}

/// How a row sorts its own bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSorter {
    /// Heapsort on whole words.
    Compare,
    /// LSD radix sort on the word's key, base = view width.
    Radix { domain: u64 },
}

fn orient(d: Direction, view_dir: Direction) -> Direction {
    if view_dir == Direction::Descending {
        d.flip()
    } else {
        d
    }
}

fn shape(views: &[View]) -> Result<(usize, usize)> {
    let first = views.first().ok_or(Error::ShapeViolation("no views"))?;
    let s = (first.height(), first.width());
    if views.iter().any(|v| (v.height(), v.width()) != s || v.col() != first.col()) {
        return Err(Error::ShapeViolation("lockstep views must share shape and columns"));
    }
    Ok(s)
}

pub(crate) fn is_perfect_square(x: usize) -> bool {
    let r = isqrt(x);
    r * r == x
}

pub(crate) fn isqrt(x: usize) -> usize {
    // Newton iteration from above
    if x < 2 {
        return x;
    }
    let mut r = x;
    let mut next = (r + x / r) / 2;
    while next < r {
        r = next;
        next = (r + x / r) / 2;
    }
    r
}

/// Sorts every row of every view in its own bank. Conflict-free because
/// each processor only touches its own bank.
pub fn sort_rows(machine: &mut Machine, views: &[View], order: SortOrder, sorter: RowSorter) -> Result<()> {
    let dirs = vec![Direction::Ascending; views.len()];
    sort_rows_dirs(machine, views, &dirs, order, sorter)
}

pub(crate) fn sort_rows_dirs(
    machine: &mut Machine,
    views: &[View],
    dirs: &[Direction],
    order: SortOrder,
    sorter: RowSorter,
) -> Result<()> {
    if views.is_empty() {
        return Ok(());
    }
    let (rows, cols) = shape(views)?;
    let col = views[0].col();
    let regions = machine.regions();
    if let RowSorter::Radix { .. } = sorter {
        regions.require(regions.counts + cols.max(2))?;
        if cols > machine.m() {
            return Err(Error::CapacityExceeded { needed: cols, available: machine.m() });
        }
    }
    let staging = regions.staging + col;
    let counts = regions.counts;
    let banks: Vec<usize> = views.iter().flat_map(|v| v.rows().iter().copied()).collect();
    let mut bad_key = None;
    machine.local_phase(&banks, |i, ctx| {
        let (n, r) = (i / rows, i % rows);
        let dir = orient(order.direction(r), dirs[n]);
        match sorter {
            RowSorter::Compare => heapsort(ctx, col, cols, dir),
            RowSorter::Radix { domain } => {
                if let Err(k) = radix_sort(ctx, col, cols, counts, staging, cols, domain, dir) {
                    bad_key.get_or_insert((k, domain));
                }
            }
        }
    })?;
    match bad_key {
        Some((key, domain)) => Err(Error::KeyOutOfRange { key, domain }),
        None => Ok(()),
    }
}

/// Comparator layers of Batcher's odd-even merge sort on `n` wires. Within
/// a layer comparators are disjoint; each pair is `(low, high)`.
pub fn batcher_layers(n: usize) -> Vec<Vec<(usize, usize)>> {
    let mut layers = Vec::new();
    let size = n.next_power_of_two();
    let mut p = 1;
    while p < size {
        let mut k = p;
        while k >= 1 {
            let mut layer = Vec::new();
            let mut j = k % p;
            while j + k < size {
                for i in 0..k {
                    let (a, b) = (i + j, i + j + k);
                    // wires past n are +infinity padding: such comparators never swap
                    if b < n && a / (2 * p) == b / (2 * p) {
                        layer.push((a, b));
                    }
                }
                j += 2 * k;
            }
            if !layer.is_empty() {
                layers.push(layer);
            }
            k /= 2;
        }
        p *= 2;
    }
    layers
}

/// Sorts every column with a Batcher network over the rows. Each comparator
/// is run by the processor of its low row: per column it reads both cells and
/// writes both back (4 steps); comparators of a layer use disjoint rows.
pub fn sort_columns_network(machine: &mut Machine, views: &[View]) -> Result<()> {
    let dirs = vec![Direction::Ascending; views.len()];
    sort_columns_dirs(machine, views, &dirs, RowSorter::Compare)
}

impl RowSorter {
    /// The order this sorter uses: whole words, or keys with `EMPTY` at the
    /// top of the domain (matching the radix row sort).
    pub(crate) fn rank(self, x: Word) -> u64 {
        match self {
            RowSorter::Compare => x,
            RowSorter::Radix { domain } => key_of(x).unwrap_or(domain.saturating_sub(1)),
        }
    }
}

pub(crate) fn sort_columns_dirs(
    machine: &mut Machine,
    views: &[View],
    dirs: &[Direction],
    sorter: RowSorter,
) -> Result<()> {
    if views.is_empty() {
        return Ok(());
    }
    let (rows, cols) = shape(views)?;
    check_disjoint(machine.w(), views)?;
    let col = views[0].col();
    let layers = batcher_layers(rows);
    let mut batch: Vec<AccessRequest> = Vec::new();
    let mut lo: Vec<Word> = Vec::new();
    let mut hi: Vec<Word> = Vec::new();
    let mut sink = Vec::new();
    for layer in &layers {
        for c in 0..cols {
            let off = col + c;
            batch.clear();
            lo.clear();
            for v in views {
                batch.extend(layer.iter().map(|&(a, _)| AccessRequest::read(v.bank(a), v.bank(a), off)));
            }
            machine.step_into(&batch, &mut lo)?;
            batch.clear();
            hi.clear();
            for v in views {
                batch.extend(layer.iter().map(|&(a, b)| AccessRequest::read(v.bank(a), v.bank(b), off)));
            }
            machine.step_into(&batch, &mut hi)?;
            for (n, _) in views.iter().enumerate() {
                for k in 0..layer.len() {
                    let i = n * layer.len() + k;
                    let swap = match dirs[n] {
                        Direction::Ascending => sorter.rank(lo[i]) > sorter.rank(hi[i]),
                        Direction::Descending => sorter.rank(lo[i]) < sorter.rank(hi[i]),
                    };
                    if swap {
                        core::mem::swap(&mut lo[i], &mut hi[i]);
                    }
                }
            }
            batch.clear();
            for (n, v) in views.iter().enumerate() {
                batch.extend(
                    layer.iter().enumerate().map(|(k, &(a, _))| {
                        AccessRequest::write(v.bank(a), v.bank(a), off, lo[n * layer.len() + k])
                    }),
                );
            }
            machine.step_into(&batch, &mut sink)?;
            batch.clear();
            for (n, v) in views.iter().enumerate() {
                batch.extend(
                    layer.iter().enumerate().map(|(k, &(a, b))| {
                        AccessRequest::write(v.bank(a), v.bank(b), off, hi[n * layer.len() + k])
                    }),
                );
            }
            machine.step_into(&batch, &mut sink)?;
        }
    }
    Ok(())
}

/// Sorts `R x C` views with `R^2 <= C` and `R | C` into row-major order: twice
/// {alternating row sort, to column-major, ascending row sort, to
/// row-major}, then a final ascending row sort.
pub fn sort_short_wide(machine: &mut Machine, views: &[View], sorter: RowSorter) -> Result<()> {
    let dirs = vec![Direction::Ascending; views.len()];
    short_wide(machine, views, &dirs, sorter, &mut NoProbe)
}

/// [`sort_short_wide`] reporting its intermediate states to `probe`.
pub fn sort_short_wide_probed(
    machine: &mut Machine,
    views: &[View],
    sorter: RowSorter,
    probe: &mut dyn Probe,
) -> Result<()> {
    let dirs = vec![Direction::Ascending; views.len()];
    short_wide(machine, views, &dirs, sorter, probe)
}

pub(crate) fn short_wide(
    machine: &mut Machine,
    views: &[View],
    dirs: &[Direction],
    sorter: RowSorter,
    probe: &mut dyn Probe,
) -> Result<()> {
    if views.is_empty() {
        return Ok(());
    }
    let (rows, cols) = shape(views)?;
    if rows * rows > cols || cols % rows != 0 {
        return Err(Error::ShapeViolation("short-wide sort needs w^2 <= m and w | m"));
    }
    check_disjoint(machine.w(), views)?;
    for pass in 0..2 {
        sort_rows_dirs(machine, views, dirs, SortOrder::Alternating(Direction::Ascending), sorter)?;
        to_column_major(machine, views)?;
        if pass == 0 {
            probe.observe(Stage::ShortWideFirstConvert, machine, views);
        }
        sort_rows_dirs(machine, views, dirs, SortOrder::Ascending, sorter)?;
        to_row_major(machine, views)?;
        if pass == 0 {
            probe.observe(Stage::ShortWideFirstPass, machine, views);
        }
    }
    sort_rows_dirs(machine, views, dirs, SortOrder::Ascending, sorter)
}

/// Sorts `m x m` views (`m` a perfect square) into row-major order using
/// super-rows of `sqrt(m)` rows.
pub fn sort_square(machine: &mut Machine, views: &[View], sorter: RowSorter) -> Result<()> {
    let dirs = vec![Direction::Ascending; views.len()];
    square(machine, views, &dirs, sorter)
}

pub(crate) fn square(machine: &mut Machine, views: &[View], dirs: &[Direction], sorter: RowSorter) -> Result<()> {
    if views.is_empty() {
        return Ok(());
    }
    let (rows, cols) = shape(views)?;
    if rows != cols || !is_perfect_square(cols) {
        return Err(Error::ShapeViolation("square sort needs an m x m view with m a perfect square"));
    }
    check_disjoint(machine.w(), views)?;
    let g = isqrt(cols);
    let supers = |alternate: bool| -> (Vec<View>, Vec<Direction>) {
        let mut vs = Vec::with_capacity(views.len() * g);
        let mut ds = Vec::with_capacity(views.len() * g);
        for (v, &d) in views.iter().zip(dirs) {
            for k in 0..g {
                vs.push(v.band(k * g, g));
                ds.push(if alternate && k % 2 == 1 { d.flip() } else { d });
            }
        }
        (vs, ds)
    };
    let (sv, sd) = supers(false);
    short_wide(machine, &sv, &sd, sorter, &mut NoProbe)?;
    sort_columns_by_transpose(machine, views, dirs, sorter)?;
    let (sv, sd) = supers(true);
    short_wide(machine, &sv, &sd, sorter, &mut NoProbe)?;
    sort_columns_by_transpose(machine, views, dirs, sorter)?;
    sort_rows_dirs(machine, views, dirs, SortOrder::Ascending, sorter)
}

fn sort_columns_by_transpose(
    machine: &mut Machine,
    views: &[View],
    dirs: &[Direction],
    sorter: RowSorter,
) -> Result<()> {
    transpose_square(machine, views)?;
    sort_rows_dirs(machine, views, dirs, SortOrder::Ascending, sorter)?;
    transpose_square(machine, views)
}

/// Shearsort: `ceil(log2 R) + 1` phases of alternating row sorts and network
/// column sorts, then an ascending row sort. Used for block shapes that are
/// neither short-wide nor perfect-square nor tall.
pub fn shearsort(machine: &mut Machine, views: &[View], sorter: RowSorter) -> Result<()> {
    let dirs = vec![Direction::Ascending; views.len()];
    shear(machine, views, &dirs, sorter)
}

pub(crate) fn shear(machine: &mut Machine, views: &[View], dirs: &[Direction], sorter: RowSorter) -> Result<()> {
    if views.is_empty() {
        return Ok(());
    }
    let (rows, _) = shape(views)?;
    for _ in 0..ceil_log2(rows) + 1 {
        sort_rows_dirs(machine, views, dirs, SortOrder::Alternating(Direction::Ascending), sorter)?;
        sort_columns_dirs(machine, views, dirs, sorter)?;
    }
    sort_rows_dirs(machine, views, dirs, SortOrder::Ascending, sorter)
}

/// Sorts `W x m` views with `W >= m`, `m | W`: row sort, network column
/// sort, column-major -> row-major, column sort, alternating `m x m` block
/// sorts, column sort, row sort.
pub fn sort_tall(machine: &mut Machine, views: &[View], sorter: RowSorter) -> Result<()> {
    let dirs = vec![Direction::Ascending; views.len()];
    tall(machine, views, &dirs, sorter)
}

pub(crate) fn tall(machine: &mut Machine, views: &[View], dirs: &[Direction], sorter: RowSorter) -> Result<()> {
    if views.is_empty() {
        return Ok(());
    }
    let (rows, cols) = shape(views)?;
    if rows < cols || rows % cols != 0 {
        return Err(Error::ShapeViolation("tall sort needs w >= m and m | w"));
    }
    check_disjoint(machine.w(), views)?;
    sort_rows_dirs(machine, views, dirs, SortOrder::Ascending, sorter)?;
    sort_columns_dirs(machine, views, dirs, sorter)?;
    to_row_major(machine, views)?;
    sort_columns_dirs(machine, views, dirs, sorter)?;
    let mut blocks = Vec::with_capacity(views.len() * rows / cols);
    let mut block_dirs = Vec::with_capacity(blocks.capacity());
    for (v, &d) in views.iter().zip(dirs) {
        for k in 0..rows / cols {
            blocks.push(v.band(k * cols, cols));
            block_dirs.push(if k % 2 == 1 { d.flip() } else { d });
        }
    }
    if is_perfect_square(cols) {
        square(machine, &blocks, &block_dirs, sorter)?;
    } else {
        shear(machine, &blocks, &block_dirs, sorter)?;
    }
    sort_columns_dirs(machine, views, dirs, sorter)?;
    sort_rows_dirs(machine, views, dirs, SortOrder::Ascending, sorter)
}

/// Row-major sort of any block shape, picking the cheapest applicable
/// routine: row sort, column network, short-wide, square, tall, or
/// shearsort as the catch-all.
pub fn sort_block(machine: &mut Machine, views: &[View], sorter: RowSorter) -> Result<()> {
    let dirs = vec![Direction::Ascending; views.len()];
    block(machine, views, &dirs, sorter)
}

pub(crate) fn block(machine: &mut Machine, views: &[View], dirs: &[Direction], sorter: RowSorter) -> Result<()> {
    if views.is_empty() {
        return Ok(());
    }
    let (rows, cols) = shape(views)?;
    if rows == 1 {
        sort_rows_dirs(machine, views, dirs, SortOrder::Ascending, sorter)
    } else if cols == 1 {
        sort_columns_dirs(machine, views, dirs, sorter)
    } else if rows * rows <= cols && cols % rows == 0 {
        short_wide(machine, views, dirs, sorter, &mut NoProbe)
    } else if rows == cols && is_perfect_square(cols) {
        square(machine, views, dirs, sorter)
    } else if rows > cols && rows % cols == 0 {
        tall(machine, views, dirs, sorter)
    } else {
        shear(machine, views, dirs, sorter)
    }
}
