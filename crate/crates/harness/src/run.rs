//! Running one algorithm on one instance and checking the result.

use std::fmt;
use std::str::FromStr;

use dmm_core::layout::ScheduleCache;
use dmm_core::partition::{integer_sort_general, partition_general, partition_short_wide, partition_square};
use dmm_core::permute::{label, load_labels, permute, PermuteParams};
use dmm_core::sort::{sort_block, sort_short_wide, sort_square, sort_tall, RowSorter};
use dmm_core::{Machine, MachineConfig, TraceLog, Word};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{HarnessError, Result};
use crate::instance::{Instance, Kind, SORT_WORD_BOUND};
use crate::verify;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    SortShortWide,
    SortSquare,
    SortTall,
    SortBlock,
    IntegerSort,
    PartitionShortWide,
    PartitionSquare,
    PartitionGeneral,
    Permute,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::SortShortWide,
        Algorithm::SortSquare,
        Algorithm::SortTall,
        Algorithm::SortBlock,
        Algorithm::IntegerSort,
        Algorithm::PartitionShortWide,
        Algorithm::PartitionSquare,
        Algorithm::PartitionGeneral,
        Algorithm::Permute,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::SortShortWide => "sort_short_wide",
            Algorithm::SortSquare => "sort_square",
            Algorithm::SortTall => "sort_tall",
            Algorithm::SortBlock => "sort_block",
            Algorithm::IntegerSort => "integer_sort",
            Algorithm::PartitionShortWide => "partition_short_wide",
            Algorithm::PartitionSquare => "partition_square",
            Algorithm::PartitionGeneral => "partition_general",
            Algorithm::Permute => "permute",
        }
    }

    /// Instance kind the algorithm consumes.
    pub fn kind(self) -> Kind {
        match self {
            Algorithm::SortShortWide
            | Algorithm::SortSquare
            | Algorithm::SortTall
            | Algorithm::SortBlock
            | Algorithm::IntegerSort => Kind::Sort,
            Algorithm::PartitionShortWide | Algorithm::PartitionSquare | Algorithm::PartitionGeneral => {
                Kind::Partition
            }
            Algorithm::Permute => Kind::Permute,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algorithm {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL.into_iter().find(|a| a.id() == s).ok_or_else(|| HarnessError::UnknownAlgorithm(s.into()))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunFlags {
    /// Serialize conflicting accesses and count them instead of failing.
    pub permissive: bool,
    pub trace: bool,
    /// Communication passes per permutation phase (default 4).
    pub alpha: Option<usize>,
    /// Seed of the algorithm's random stream; the instance seed if unset.
    pub rng_seed: Option<u64>,
    pub cache: Option<ScheduleCache>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub algorithm: Algorithm,
    pub w: usize,
    pub m: usize,
    pub seed: u64,
    pub steps: u64,
    pub work: u64,
    pub conflicts: u64,
    pub correct: bool,
    pub iterations: u32,
    pub fallback: bool,
    pub cleanup_retries: u32,
}

impl RunReport {
    pub const CSV_HEADER: [&'static str; 10] =
        ["algorithm", "w", "m", "seed", "steps", "work", "conflicts", "correct", "iterations", "fallback"];

    pub fn csv_record(&self) -> [String; 10] {
        [
            self.algorithm.id().to_string(),
            self.w.to_string(),
            self.m.to_string(),
            self.seed.to_string(),
            self.steps.to_string(),
            self.work.to_string(),
            self.conflicts.to_string(),
            self.correct.to_string(),
            self.iterations.to_string(),
            self.fallback.to_string(),
        ]
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} w={} m={} seed={} steps={} work={} conflicts={} correct={} iterations={} fallback={} cleanup_retries={}",
            self.algorithm,
            self.w,
            self.m,
            self.seed,
            self.steps,
            self.work,
            self.conflicts,
            self.correct,
            self.iterations,
            self.fallback,
            self.cleanup_retries
        )
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    /// Final `w x m` result region (the output region for permutations).
    pub result: Vec<Vec<Word>>,
    /// Why verification failed, if it did.
    pub mismatch: Option<String>,
    pub trace: Option<TraceLog>,
}

pub fn run(alg: Algorithm, inst: &Instance, flags: &RunFlags) -> Result<RunOutcome> {
    if alg.kind() != inst.kind {
        return Err(HarnessError::KindMismatch { alg: alg.id(), kind: inst.kind.name() });
    }
    let (w, m) = (inst.w, inst.m);
    let mut cfg = MachineConfig::new(w, m)?;
    if flags.permissive {
        cfg = cfg.permissive();
    }
    if flags.trace {
        cfg = cfg.traced();
    }
    let mut mc = Machine::new(cfg);
    if let Some(cache) = &flags.cache {
        mc = mc.with_schedule_cache(cache.clone());
    }
    let v = mc.full_view();
    let views = std::slice::from_ref(&v);
    let (mut iterations, mut fallback, mut cleanup_retries) = (0, false, 0);
    let mut result_col = 0;

    if alg.kind() == Kind::Permute {
        let rows: Vec<Vec<Word>> = inst
            .rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row.iter().enumerate().map(|(c, &k)| label(k as usize / m, k as usize % m, m, (r * m + c) as u32)).collect()
            })
            .collect();
        load_labels(&mut mc, &rows)?;
    } else {
        mc.load_matrix(&inst.rows)?;
    }

    match alg {
        Algorithm::SortShortWide => sort_short_wide(&mut mc, views, RowSorter::Compare)?,
        Algorithm::SortSquare => sort_square(&mut mc, views, RowSorter::Compare)?,
        Algorithm::SortTall => sort_tall(&mut mc, views, RowSorter::Compare)?,
        Algorithm::SortBlock => sort_block(&mut mc, views, RowSorter::Compare)?,
        Algorithm::IntegerSort => {
            cleanup_retries = integer_sort_general(&mut mc, views, SORT_WORD_BOUND)?.cleanup_retries;
        }
        Algorithm::PartitionShortWide => partition_short_wide(&mut mc, &v)?,
        Algorithm::PartitionSquare => partition_square(&mut mc, &v)?,
        Algorithm::PartitionGeneral => cleanup_retries = partition_general(&mut mc, &v)?.cleanup_retries,
        Algorithm::Permute => {
            let params = match flags.alpha {
                Some(a) => PermuteParams::with_alpha(w, m, a),
                None => PermuteParams::new(w, m),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(flags.rng_seed.unwrap_or(inst.seed));
            let rep = permute(&mut mc, &mut rng, &params)?;
            iterations = rep.iterations;
            fallback = rep.fallback;
            cleanup_retries = rep.sort.cleanup_retries;
            result_col = m;
        }
    }

    let result = mc.snapshot(result_col, m);
    let mismatch = verify::check(inst, &result).err();
    let meter = mc.trace().meter;
    let report = RunReport {
        algorithm: alg,
        w,
        m,
        seed: inst.seed,
        steps: meter.steps,
        work: meter.work(w),
        conflicts: meter.conflicts,
        correct: mismatch.is_none(),
        iterations,
        fallback,
        cleanup_retries,
    };
    let trace = flags.trace.then(|| mc.take_trace());
    Ok(RunOutcome { report, result, mismatch, trace })
}
