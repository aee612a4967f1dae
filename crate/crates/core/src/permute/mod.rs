//! Randomized permutation: every word carries a label `(i, j)` (key
//! `i * m + j`) and must end at offset `j` of bank `i`'s output region.
//!
//! Pipeline: random per-row shifts and block transposes, then rounds of
//! {hash broadcast, colored communication, synchronization} until few labels
//! are left, then packing, an integer sort of the packed labels and a
//! three-phase delivery. If packing overflows or the iteration cap is hit,
//! the whole input region is sorted and delivered instead.

mod experiment;
mod finish;
mod hash;
mod pack;

pub use experiment::{heavy_tail_experiment, HeavyTailRow};
pub use finish::finish;
pub use hash::{color_of, draw_and_broadcast_hash, HashOracle};
pub use pack::{pack_leftovers, PackedMatrix};

use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, RngCore};

use crate::collective::{broadcast, tree_reduce_sum};
use crate::error::{Error, Result};
use crate::layout::transpose_square;
use crate::local::key_of;
use crate::machine::{AccessRequest, BankCtx, Machine, View, Word, EMPTY};
use crate::partition::SortStats;
use crate::probe::{NoProbe, Probe, Stage};

/// Fixed per-bank words used by the pipeline, relative to the misc region.
pub(crate) mod slot {
    /// Number of labels the row still holds.
    pub const COUNT: usize = 0;
    /// Mailbox for tree reductions.
    pub const MAILBOX: usize = 1;
    /// Broadcast target for global totals.
    pub const TOTAL: usize = 4;
    /// Hash representation word.
    pub const HASH: usize = 5;
    /// Packing: "already received a transfer" flag.
    pub const RECEIVED: usize = 6;
    /// Packing: current round offset.
    pub const OFFSET: usize = 7;
}

/// Encodes label `(i, j)` with an arbitrary payload.
pub fn label(i: usize, j: usize, m: usize, payload: u32) -> Word {
    crate::local::pack(payload, (i * m + j) as u32)
}

/// `(i, j)` of a label word.
pub fn destination(word: Word, m: usize) -> Option<(usize, usize)> {
    key_of(word).map(|k| (k as usize / m, k as usize % m))
}

/// `log_m w` as a real number.
pub fn log_base(w: usize, m: usize) -> f64 {
    libm::log2(w as f64) / libm::log2(m as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermuteParams {
    /// Communication passes per phase.
    pub alpha: usize,
    /// Stop iterating once at most this many labels are left.
    pub threshold: u64,
    /// Iteration cap before falling back.
    pub max_iterations: u32,
    /// Packing rounds.
    pub t: usize,
    /// Width of the packed matrix.
    pub packed_width: usize,
}

impl PermuteParams {
    /// Defaults: `alpha = 4`, `T = max(ceil(wm / L^3), w)` with
    /// `L = max(log_m w, 2)`, 64 iterations, `t = ceil(log2(w)^2)`.
    pub fn new(w: usize, m: usize) -> Self {
        Self::with_alpha(w, m, 4)
    }

    pub fn with_alpha(w: usize, m: usize, alpha: usize) -> Self {
        let l = log_base(w, m.max(2)).max(2.0);
        let threshold = libm::ceil((w * m) as f64 / (l * l * l)).max(w as f64) as u64;
        let lg = libm::log2(w.max(2) as f64);
        let t = (libm::ceil(lg * lg) as usize).max(1);
        let mut p =
            PermuteParams { alpha: alpha.max(1), threshold, max_iterations: 64, t, packed_width: m };
        p.packed_width = p.width_for(w, m);
        p
    }

    /// Per-round transfer size `ceil(2m / t)`.
    pub fn transfer(&self, m: usize) -> usize {
        (2 * m).div_ceil(self.t).max(1)
    }

    /// Load above which a row counts as heavy when `total` labels are left.
    pub fn heavy_load(&self, w: usize, total: u64) -> usize {
        (2 * total as usize).div_ceil(w) + self.alpha
    }

    /// A light row ends with at most `heavy_load(T) + transfer` labels;
    /// round up to a power of two (so the integer sort's shapes divide) that
    /// also satisfies the general partition precondition, capped at `m`.
    fn width_for(&self, w: usize, m: usize) -> usize {
        let need = self.heavy_load(w, self.threshold) + self.transfer(m);
        let mut width = need.next_power_of_two().max(2);
        while !crate::partition::wide_enough(w, width) {
            width *= 2;
        }
        width.min(m)
    }
}

/// Per-iteration leftover bookkeeping.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SyncState {
    /// Global leftover total after each iteration.
    pub totals: Vec<u64>,
    /// Per-row counts after the latest iteration.
    pub per_row: Vec<u32>,
}

impl SyncState {
    pub fn iteration(&self) -> usize {
        self.totals.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PermuteReport {
    pub iterations: u32,
    pub leftovers: Vec<u64>,
    pub fallback: bool,
    /// Why the fallback fired, if it did.
    pub fallback_reason: Option<Error>,
    pub random_words: u64,
    pub shifts: Vec<u32>,
    pub packed_width: usize,
    pub sort: SortStats,
}

fn check_shape(machine: &Machine) -> Result<()> {
    let (w, m) = (machine.w(), machine.m());
    if m < 2 || w % m != 0 {
        return Err(Error::ShapeViolation("permutation needs m >= 2 and m | w"));
    }
    if (w * m) as u64 >= u64::from(u32::MAX) {
        return Err(Error::ShapeViolation("labels must fit in 32 bits"));
    }
    Ok(())
}

/// Host-side loader: input rows at `[0, m)`, output region cleared to
/// `EMPTY`.
pub fn load_labels(machine: &mut Machine, rows: &[Vec<Word>]) -> Result<()> {
    machine.load_matrix(rows)?;
    let m = machine.m();
    let empty = vec![EMPTY; m];
    for b in 0..machine.w() {
        machine.load_row(b, m, &empty)?;
    }
    Ok(())
}

/// Each row shifts its labels cyclically by its own `r in [1, m]`
/// (`j -> (j + r) mod m`, via staging), then every aligned `m x m` block is
/// transposed. Returns the shifts.
pub fn preprocess_shuffle<R: RngCore + ?Sized>(machine: &mut Machine, rng: &mut R) -> Result<Vec<u32>> {
    check_shape(machine)?;
    let (w, m) = (machine.w(), machine.m());
    let shifts: Vec<u32> = (0..w).map(|_| rng.gen_range(1..=m as u32)).collect();
    let regions = machine.regions();
    let (staging, count) = (regions.staging, regions.misc + slot::COUNT);
    machine.local_phase(&(0..w).collect::<Vec<_>>(), |b, ctx| {
        let r = shifts[b] as usize;
        for j in 0..m {
            let x = ctx.read(j);
            ctx.write(staging + (j + r) % m, x);
        }
        for j in 0..m {
            let x = ctx.read(staging + j);
            ctx.write(j, x);
        }
        ctx.write(count, m as Word);
    })?;
    let full = machine.full_view();
    let blocks: Vec<View> = (0..w / m).map(|k| full.band(k * m, m)).collect();
    transpose_square(machine, &blocks)?;
    Ok(shifts)
}

/// Reorders a row's `k` labels for sending: stable bucket by color, then
/// stable bucket by `min(rank within color, alpha)`. Returns the boundaries
/// of the pass segments (`alpha + 1` entries, the last being the number of
/// labels sent in this phase). Uses the counts and staging regions.
fn order_for_sending(
    ctx: &mut BankCtx<'_>,
    k: usize,
    m: usize,
    alpha: usize,
    counts: usize,
    staging: usize,
    color: impl Fn(Word) -> usize,
) -> Vec<usize> {
    crate::local::counting_pass(ctx, 0, k, counts, staging, m, &color);
    let base = alpha.min(m - 1) + 1;
    // rank within a color run is recomputed on each scan
    let bucket = |ctx: &mut BankCtx<'_>, i: usize, prev: &mut (usize, usize)| -> (Word, usize) {
        let x = ctx.read(i);
        let c = color(x);
        let rank = if i > 0 && prev.0 == c { prev.1 + 1 } else { 0 };
        *prev = (c, rank);
        (x, rank.min(base - 1))
    };
    for b in 0..base {
        ctx.write(counts + b, 0);
    }
    let mut sizes = vec![0usize; base];
    let mut prev = (usize::MAX, 0);
    for i in 0..k {
        let (_, b) = bucket(ctx, i, &mut prev);
        let c = ctx.read(counts + b);
        ctx.write(counts + b, c + 1);
        sizes[b] += 1;
    }
    let mut acc = 0;
    for b in 0..base {
        let c = ctx.read(counts + b);
        ctx.write(counts + b, acc);
        acc += c;
    }
    let mut prev = (usize::MAX, 0);
    for i in 0..k {
        let (x, b) = bucket(ctx, i, &mut prev);
        let p = ctx.read(counts + b);
        ctx.write(counts + b, p + 1);
        ctx.write(staging + p as usize, x);
    }
    for i in 0..k {
        let x = ctx.read(staging + i);
        ctx.write(i, x);
    }
    let mut seg = vec![0usize; alpha + 1];
    let mut acc = 0;
    for p in 0..alpha {
        if p < base {
            acc += sizes[p];
        }
        seg[p + 1] = acc;
    }
    seg
}

/// One communication phase: `alpha` passes of `m` color steps. In color
/// step `k` of a pass every row sends one still-held label of color `k` to
/// offset `j` of bank `i`'s output region. A color step is two machine
/// steps (write the held label out, read the next one). Afterwards the
/// undelivered labels are compacted to the front of the row and the count
/// slot is updated. Returns the per-row leftover counts.
pub fn communication_phase(machine: &mut Machine, h: &HashOracle, alpha: usize) -> Result<Vec<u32>> {
    check_shape(machine)?;
    let (w, m) = (machine.w(), machine.m());
    let alpha = alpha.max(1);
    let regions = machine.regions();
    let (counts, staging, count_slot, out) = (regions.counts, regions.staging, regions.misc + slot::COUNT, regions.output);
    let color = |x: Word| match destination(x, m) {
        Some((i, j)) => color_of(i as u64, j as u64, h),
        None => 0,
    };

    let banks: Vec<usize> = (0..w).collect();
    let mut held = vec![0usize; w];
    let mut segs: Vec<Vec<usize>> = vec![Vec::new(); w];
    machine.local_phase(&banks, |b, ctx| {
        let k = ctx.read(count_slot) as usize;
        held[b] = k;
        segs[b] = order_for_sending(ctx, k, m, alpha, counts, staging, color);
    })?;

    let mut cursor = vec![0usize; w];
    let mut reg: Vec<Option<Word>> = vec![None; w];
    let mut batch = Vec::with_capacity(w);
    let mut vals = Vec::with_capacity(w);
    let mut sink = Vec::new();

    let mut load = |machine: &mut Machine, who: &[usize], cursor: &[usize], reg: &mut [Option<Word>]| -> Result<()> {
        batch.clear();
        vals.clear();
        batch.extend(who.iter().map(|&b| AccessRequest::read(b, b, cursor[b])));
        machine.step_into(&batch, &mut vals)?;
        for (&b, &v) in who.iter().zip(vals.iter()) {
            reg[b] = Some(v);
        }
        Ok(())
    };
    let first: Vec<usize> = (0..w).filter(|&b| segs[b][alpha] > 0).collect();
    load(machine, &first, &cursor, &mut reg)?;

    let mut senders = Vec::with_capacity(w);
    let mut writes = Vec::with_capacity(w);
    for pass in 0..alpha {
        for k in 0..m {
            senders.clear();
            writes.clear();
            for b in 0..w {
                if cursor[b] >= segs[b][pass + 1] {
                    continue;
                }
                let x = match reg[b] {
                    Some(x) => x,
                    None => continue,
                };
                if color(x) == k {
                    let (i, j) = destination(x, m).expect("held labels are never EMPTY");
                    writes.push(AccessRequest::write(b, i, out + j, x));
                    senders.push(b);
                }
            }
            machine.step_into(&writes, &mut sink)?;
            let mut next = Vec::with_capacity(senders.len());
            for &b in &senders {
                cursor[b] += 1;
                reg[b] = None;
                if cursor[b] < segs[b][alpha] {
                    next.push(b);
                }
            }
            load(machine, &next, &cursor, &mut reg)?;
        }
    }

    let mut left = vec![0u32; w];
    machine.local_phase(&banks, |b, ctx| {
        let (sent, k) = (segs[b][alpha], held[b]);
        for q in sent..k {
            let x = ctx.read(q);
            ctx.write(q - sent, x);
        }
        for q in k - sent..k {
            ctx.write(q, EMPTY);
        }
        ctx.write(count_slot, (k - sent) as Word);
        left[b] = (k - sent) as u32;
    })?;
    Ok(left)
}

/// Sums the per-row counts (count slot) with a tree, then broadcasts the
/// total to every row. Appends to `state` and returns the total.
pub fn synchronize(machine: &mut Machine, state: &mut SyncState) -> Result<u64> {
    let misc = machine.regions().misc;
    let total = tree_reduce_sum(machine, misc + slot::COUNT, misc + slot::MAILBOX)?;
    let mut sink = Vec::new();
    machine.step_into(&[AccessRequest::write(0, 0, misc + slot::TOTAL, total)], &mut sink)?;
    broadcast(machine, misc + slot::TOTAL, 1)?;
    state.per_row = (0..machine.w()).map(|b| machine.cell(b, misc + slot::COUNT) as u32).collect();
    state.totals.push(total);
    Ok(total)
}

/// Full pipeline on labels loaded with [`load_labels`].
pub fn permute<R: RngCore + ?Sized>(machine: &mut Machine, rng: &mut R, params: &PermuteParams) -> Result<PermuteReport> {
    permute_probed(machine, rng, params, &mut NoProbe)
}

pub fn permute_probed<R: RngCore + ?Sized>(
    machine: &mut Machine,
    rng: &mut R,
    params: &PermuteParams,
    probe: &mut dyn Probe,
) -> Result<PermuteReport> {
    check_shape(machine)?;
    let (w, m) = (machine.w(), machine.m());
    let mut report = PermuteReport { packed_width: params.packed_width, ..Default::default() };
    report.shifts = preprocess_shuffle(machine, rng)?;
    report.random_words += w as u64;

    let hash_slot = machine.regions().misc + slot::HASH;
    let mut state = SyncState::default();
    let mut total = (w * m) as u64;
    while total > params.threshold && report.iterations < params.max_iterations {
        let h = draw_and_broadcast_hash(machine, rng, hash_slot)?;
        report.random_words += h.words().len() as u64;
        communication_phase(machine, &h, params.alpha)?;
        total = synchronize(machine, &mut state)?;
        report.iterations += 1;
        probe.observe(Stage::Iteration { index: report.iterations }, machine, &[]);
    }
    report.leftovers = state.totals.clone();
    if total == 0 {
        return Ok(report);
    }

    let packed = if total > params.threshold {
        Err(Error::InvalidInstance("iteration cap reached above the threshold"))
    } else {
        pack_leftovers(machine, rng, params, total)
    };
    match packed {
        Ok(p) => {
            report.random_words += p.random_words;
            probe.observe(Stage::Packed, machine, core::slice::from_ref(&p.view));
            report.sort = finish(machine, &p.view)?;
        }
        Err(e) => {
            report.fallback = true;
            report.fallback_reason = Some(e);
            let full = machine.full_view();
            report.sort = finish(machine, &full)?;
        }
    }
    Ok(report)
}
