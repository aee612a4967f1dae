//! The DMM machine: `w` banks of words, `w` processors, lockstep steps.
//!
//! Every step is a batch of at most one access per processor. In strict mode a
//! batch that touches any bank twice is rejected before any state changes. In
//! permissive mode the batch is serialized: it costs as many steps as the
//! busiest bank's access count and every surplus access is counted as a
//! conflict.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::layout::ScheduleCache;

/// One machine word.
pub type Word = u64;

/// Marker for an unoccupied cell.
pub const EMPTY: Word = Word::MAX;

/// Extra words per bank beyond the four m-word regions.
pub const MISC_WORDS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineConfig {
    pub w: usize,
    pub m: usize,
    pub bank_capacity: usize,
    pub strict: bool,
    pub record_trace: bool,
}

impl MachineConfig {
    /// Strict, untraced machine with the default `4m + 8` words per bank.
    pub fn new(w: usize, m: usize) -> Result<Self> {
        let cfg = MachineConfig {
            w,
            m,
            bank_capacity: 4 * m + MISC_WORDS,
            strict: true,
            record_trace: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn permissive(mut self) -> Self {
        self.strict = false;
        self
    }

    pub fn traced(mut self) -> Self {
        self.record_trace = true;
        self
    }

    pub fn with_capacity(mut self, bank_capacity: usize) -> Result<Self> {
        self.bank_capacity = bank_capacity;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.w == 0 {
            return Err(Error::InvalidConfig("w must be positive"));
        }
        if self.m == 0 {
            return Err(Error::InvalidConfig("m must be positive"));
        }
        if self.bank_capacity < 2 * self.m + MISC_WORDS {
            return Err(Error::InvalidConfig("bank capacity below 2m + 8"));
        }
        if self.w > u32::MAX as usize || self.bank_capacity > u32::MAX as usize {
            return Err(Error::InvalidConfig("dimensions exceed 32 bits"));
        }
        Ok(())
    }

    /// Logical input size `n = w * m`.
    pub fn n(&self) -> usize {
        self.w * self.m
    }

    pub fn regions(&self) -> Regions {
        Regions {
            input: 0,
            output: self.m,
            staging: 2 * self.m,
            counts: 3 * self.m,
            misc: 4 * self.m,
            capacity: self.bank_capacity,
        }
    }
}

/// Offsets of the per-bank regions. Regions past the capacity are unusable
/// and the operations that need them report `CapacityExceeded`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Regions {
    pub input: usize,
    pub output: usize,
    pub staging: usize,
    pub counts: usize,
    pub misc: usize,
    pub capacity: usize,
}

impl Regions {
    pub fn require(&self, end: usize) -> Result<()> {
        if end > self.capacity {
            Err(Error::CapacityExceeded { needed: end, available: self.capacity })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Read,
    Write(Word),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessRequest {
    pub processor: usize,
    pub bank: usize,
    pub offset: usize,
    pub op: Op,
}

impl AccessRequest {
    pub fn read(processor: usize, bank: usize, offset: usize) -> Self {
        AccessRequest { processor, bank, offset, op: Op::Read }
    }

    pub fn write(processor: usize, bank: usize, offset: usize, value: Word) -> Self {
        AccessRequest { processor, bank, offset, op: Op::Write(value) }
    }
}

/// One parallel step's worth of requests.
pub type StepBatch = Vec<AccessRequest>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub step: u64,
    pub processor: u32,
    pub bank: u32,
    pub offset: u32,
    pub op: Op,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CostMeter {
    pub steps: u64,
    pub conflicts: u64,
}

impl CostMeter {
    pub fn work(&self, w: usize) -> u64 {
        self.steps * w as u64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceLog {
    pub meter: CostMeter,
    /// `None` when the machine ran without event recording.
    pub events: Option<Vec<TraceEvent>>,
}

/// A `(step, bank)` pair that was accessed more than once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Violation {
    pub step: u64,
    pub bank: u32,
    pub hits: u32,
}

/// Re-audits a recorded trace for CAC violations without trusting the
/// machine's own bookkeeping.
pub fn verify_trace(trace: &TraceLog) -> Result<Vec<Violation>> {
    let events = trace.events.as_ref().ok_or(Error::TraceIncomplete)?;
    let mut keys: Vec<(u64, u32)> = events.iter().map(|e| (e.step, e.bank)).collect();
    keys.sort_unstable();
    let mut out = Vec::new();
    let mut i = 0;
    while i < keys.len() {
        let mut j = i + 1;
        while j < keys.len() && keys[j] == keys[i] {
            j += 1;
        }
        if j - i > 1 {
            out.push(Violation { step: keys[i].0, bank: keys[i].1, hits: (j - i) as u32 });
        }
        i = j;
    }
    Ok(out)
}

/// A rectangular window: an injective list of banks (one per logical row)
/// and a column range inside every bank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct View {
    rows: Vec<usize>,
    col: usize,
    cols: usize,
}

impl View {
    pub(crate) fn from_parts(rows: Vec<usize>, col: usize, cols: usize) -> Self {
        View { rows, col, cols }
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    #[inline]
    pub fn bank(&self, row: usize) -> usize {
        self.rows[row]
    }

    pub fn height(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.cols
    }

    pub fn col(&self) -> usize {
        self.col
    }

    /// Contiguous band of rows `[start, start + len)`.
    pub fn band(&self, start: usize, len: usize) -> View {
        View { rows: self.rows[start..start + len].to_vec(), col: self.col, cols: self.cols }
    }

    /// Rows picked by index, in the given order.
    pub fn pick<I: IntoIterator<Item = usize>>(&self, idx: I) -> View {
        View { rows: idx.into_iter().map(|i| self.rows[i]).collect(), col: self.col, cols: self.cols }
    }

    /// Same rows, narrower column window (relative to this view's start).
    pub fn columns(&self, start: usize, len: usize) -> View {
        debug_assert!(start + len <= self.cols);
        View { rows: self.rows.clone(), col: self.col + start, cols: len }
    }
}

/// Errors with `OverlappingViews` if any bank appears in two views (or twice
/// in one). Lockstep algorithms call this on entry.
pub fn check_disjoint(w: usize, views: &[View]) -> Result<()> {
    let mut seen = vec![false; w];
    for v in views {
        for &b in v.rows() {
            if b >= w {
                return Err(Error::OutOfBounds { bank: b, offset: v.col });
            }
            if seen[b] {
                return Err(Error::OverlappingViews { bank: b });
            }
            seen[b] = true;
        }
    }
    Ok(())
}

/// Access to a single bank during a local phase. The owning processor is
/// the one with the bank's index; each access is one step for it.
pub struct BankCtx<'a> {
    cells: &'a mut [Word],
    bank: usize,
    base_step: u64,
    accesses: u64,
    trace: Option<&'a mut Vec<TraceEvent>>,
}

impl BankCtx<'_> {
    #[inline]
    pub fn read(&mut self, offset: usize) -> Word {
        let v = self.cells[offset];
        self.log(offset, Op::Read);
        v
    }

    #[inline]
    pub fn write(&mut self, offset: usize, value: Word) {
        self.cells[offset] = value;
        self.log(offset, Op::Write(value));
    }

    #[inline]
    fn log(&mut self, offset: usize, op: Op) {
        if let Some(t) = self.trace.as_deref_mut() {
            t.push(TraceEvent {
                step: self.base_step + self.accesses,
                processor: self.bank as u32,
                bank: self.bank as u32,
                offset: offset as u32,
                op,
            });
        }
        self.accesses += 1;
    }

    /// Skip `n` steps without touching memory (keeps lockstep alignment).
    pub fn idle(&mut self, n: u64) {
        self.accesses += n;
    }

    pub fn bank(&self) -> usize {
        self.bank
    }

    pub fn accesses(&self) -> u64 {
        self.accesses
    }
}

pub struct Machine {
    cfg: MachineConfig,
    cells: Vec<Word>,
    meter: CostMeter,
    trace: Option<Vec<TraceEvent>>,
    stamp: u64,
    bank_stamp: Vec<u64>,
    proc_stamp: Vec<u64>,
    bank_hits: Vec<u32>,
    pub(crate) schedules: ScheduleCache,
}

impl Machine {
    pub fn new(cfg: MachineConfig) -> Self {
        let cells = vec![EMPTY; cfg.w * cfg.bank_capacity];
        let trace = if cfg.record_trace { Some(Vec::new()) } else { None };
        Machine {
            bank_stamp: vec![0; cfg.w],
            proc_stamp: vec![0; cfg.w],
            bank_hits: vec![0; cfg.w],
            cells,
            meter: CostMeter::default(),
            trace,
            stamp: 0,
            schedules: ScheduleCache::default(),
            cfg,
        }
    }

    /// Conversion schedules known to this machine.
    pub fn schedule_cache(&self) -> ScheduleCache {
        self.schedules.clone()
    }

    /// Shares an existing schedule store (e.g. from an earlier machine).
    pub fn with_schedule_cache(mut self, cache: ScheduleCache) -> Self {
        self.schedules = cache;
        self
    }

    pub fn config(&self) -> &MachineConfig {
        &self.cfg
    }

    pub fn w(&self) -> usize {
        self.cfg.w
    }

    pub fn m(&self) -> usize {
        self.cfg.m
    }

    pub fn regions(&self) -> Regions {
        self.cfg.regions()
    }

    pub fn meter(&self) -> CostMeter {
        self.meter
    }

    pub fn steps(&self) -> u64 {
        self.meter.steps
    }

    pub fn work(&self) -> u64 {
        self.meter.work(self.cfg.w)
    }

    pub fn trace(&self) -> TraceLog {
        TraceLog { meter: self.meter, events: self.trace.clone() }
    }

    pub fn take_trace(&mut self) -> TraceLog {
        let events = self.trace.as_mut().map(core::mem::take);
        TraceLog { meter: self.meter, events }
    }

    /// Re-audit the machine's own event record.
    pub fn audit(&self) -> Result<Vec<Violation>> {
        let events = self.trace.as_ref().ok_or(Error::TraceIncomplete)?;
        // verify_trace only needs the events; avoid cloning them.
        let mut keys: Vec<(u64, u32)> = events.iter().map(|e| (e.step, e.bank)).collect();
        keys.sort_unstable();
        let mut out = Vec::new();
        for g in keys.chunk_by(|a, b| a == b) {
            if g.len() > 1 {
                out.push(Violation { step: g[0].0, bank: g[0].1, hits: g.len() as u32 });
            }
        }
        Ok(out)
    }

    /// Whole bank, all regions. Inspection only; costs nothing.
    pub fn bank(&self, bank: usize) -> &[Word] {
        let cap = self.cfg.bank_capacity;
        &self.cells[bank * cap..(bank + 1) * cap]
    }

    pub fn cell(&self, bank: usize, offset: usize) -> Word {
        self.bank(bank)[offset]
    }

    /// Initial placement of data; not a machine step.
    pub fn load_row(&mut self, bank: usize, offset: usize, words: &[Word]) -> Result<()> {
        let cap = self.cfg.bank_capacity;
        if bank >= self.cfg.w || offset + words.len() > cap {
            return Err(Error::OutOfBounds { bank, offset: offset + words.len() });
        }
        self.cells[bank * cap + offset..bank * cap + offset + words.len()].copy_from_slice(words);
        Ok(())
    }

    /// Loads a row-major `w x m` matrix into the input region.
    pub fn load_matrix(&mut self, rows: &[Vec<Word>]) -> Result<()> {
        if rows.len() != self.cfg.w || rows.iter().any(|r| r.len() != self.cfg.m) {
            return Err(Error::ShapeViolation("matrix must be w x m"));
        }
        for (b, r) in rows.iter().enumerate() {
            self.load_row(b, 0, r)?;
        }
        Ok(())
    }

    /// Snapshot of `cols` words starting at `col` in every bank.
    pub fn snapshot(&self, col: usize, cols: usize) -> Vec<Vec<Word>> {
        (0..self.cfg.w).map(|b| self.bank(b)[col..col + cols].to_vec()).collect()
    }

    /// Snapshot of a view, row by row.
    pub fn view_snapshot(&self, view: &View) -> Vec<Vec<Word>> {
        view.rows()
            .iter()
            .map(|&b| self.bank(b)[view.col()..view.col() + view.width()].to_vec())
            .collect()
    }

    pub fn view(&self, rows: &[usize], cols: core::ops::Range<usize>) -> Result<View> {
        if cols.end > self.cfg.bank_capacity || cols.start > cols.end {
            return Err(Error::OutOfBounds { bank: 0, offset: cols.end });
        }
        let v = View::from_parts(rows.to_vec(), cols.start, cols.end - cols.start);
        check_disjoint(self.cfg.w, core::slice::from_ref(&v))?;
        Ok(v)
    }

    /// The `w x m` input matrix.
    pub fn full_view(&self) -> View {
        View::from_parts((0..self.cfg.w).collect(), 0, self.cfg.m)
    }

    pub fn execute_step(&mut self, batch: &[AccessRequest]) -> Result<Vec<Word>> {
        let mut out = Vec::new();
        self.step_into(batch, &mut out)?;
        Ok(out)
    }

    /// Executes one batch, appending read results (in request order) to
    /// `reads`. Validation happens before any state changes.
    pub fn step_into(&mut self, batch: &[AccessRequest], reads: &mut Vec<Word>) -> Result<()> {
        let w = self.cfg.w;
        let cap = self.cfg.bank_capacity;
        self.stamp += 1;
        let stamp = self.stamp;
        let mut max_hits = 1u32;
        let mut extra = 0u64;
        for r in batch {
            if r.processor >= w {
                return Err(Error::DuplicateProcessor { processor: r.processor });
            }
            if r.bank >= w || r.offset >= cap {
                return Err(Error::OutOfBounds { bank: r.bank, offset: r.offset });
            }
            if self.proc_stamp[r.processor] == stamp {
                return Err(Error::DuplicateProcessor { processor: r.processor });
            }
            self.proc_stamp[r.processor] = stamp;
            if self.bank_stamp[r.bank] == stamp {
                if self.cfg.strict {
                    return Err(Error::ConflictViolation { step: self.meter.steps, bank: r.bank });
                }
                self.bank_hits[r.bank] += 1;
                max_hits = max_hits.max(self.bank_hits[r.bank]);
                extra += 1;
            } else {
                self.bank_stamp[r.bank] = stamp;
                self.bank_hits[r.bank] = 1;
            }
        }
        for r in batch {
            if r.op == Op::Read {
                reads.push(self.cells[r.bank * cap + r.offset]);
            }
        }
        for r in batch {
            if let Op::Write(v) = r.op {
                self.cells[r.bank * cap + r.offset] = v;
            }
        }
        if let Some(t) = self.trace.as_mut() {
            let step = self.meter.steps;
            t.extend(batch.iter().map(|r| TraceEvent {
                step,
                processor: r.processor as u32,
                bank: r.bank as u32,
                offset: r.offset as u32,
                op: r.op,
            }));
        }
        self.meter.steps += u64::from(max_hits);
        self.meter.conflicts += extra;
        Ok(())
    }

    /// Runs a bank-local program on each listed bank in lockstep. The phase
    /// costs as many steps as the busiest bank's access count; distinct
    /// banks make it conflict-free.
    pub fn local_phase<F>(&mut self, banks: &[usize], mut program: F) -> Result<u64>
    where
        F: FnMut(usize, &mut BankCtx<'_>),
    {
        let w = self.cfg.w;
        let cap = self.cfg.bank_capacity;
        self.stamp += 1;
        let stamp = self.stamp;
        for &b in banks {
            if b >= w {
                return Err(Error::OutOfBounds { bank: b, offset: 0 });
            }
            if self.bank_stamp[b] == stamp {
                return Err(Error::DuplicateProcessor { processor: b });
            }
            self.bank_stamp[b] = stamp;
        }
        let base = self.meter.steps;
        let mut longest = 0u64;
        for (i, &b) in banks.iter().enumerate() {
            let mut ctx = BankCtx {
                cells: &mut self.cells[b * cap..(b + 1) * cap],
                bank: b,
                base_step: base,
                accesses: 0,
                trace: self.trace.as_mut(),
            };
            program(i, &mut ctx);
            longest = longest.max(ctx.accesses);
        }
        self.meter.steps += longest;
        Ok(longest)
    }

    /// Charges `n` idle steps (e.g. lockstep padding).
    pub fn idle(&mut self, n: u64) {
        self.meter.steps += n;
    }
}

impl core::fmt::Display for CostMeter {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "steps={} conflicts={}", self.steps, self.conflicts)
    }
}
