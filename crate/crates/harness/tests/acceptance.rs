//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Independent runs execute in parallel.

use std::sync::atomic::{AtomicU64, Ordering::Relaxed};
use std::time::Instant;

use dmm_core::layout::{apply_schedule, offline_schedule, to_column_major, to_row_major, transpose_square, ScheduleCache};
use dmm_core::marking::{clusters, MarkingOracle};
use dmm_core::permute::heavy_tail_experiment;
use dmm_core::probe::Stage;
use dmm_core::sort::{sort_short_wide, sort_short_wide_probed, RowSorter};
use dmm_core::{verify_trace, Error, Machine, MachineConfig, View, Word};
use dmm_harness::{run, Algorithm, HarnessError, Instance, RunFlags, RunReport};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

thread_local! {
    static CACHE: ScheduleCache = ScheduleCache::default();
}

/// Conflict bookkeeping shared by every criterion.
#[derive(Default)]
struct Tally {
    strict_runs: AtomicU64,
    conflict_errors: AtomicU64,
    traced_runs: AtomicU64,
    dirty_traces: AtomicU64,
}

impl Tally {
    fn machine(&self, mc: &Machine) -> bool {
        self.strict_runs.fetch_add(1, Relaxed);
        match mc.audit() {
            Ok(v) => {
                self.traced_runs.fetch_add(1, Relaxed);
                if !v.is_empty() {
                    self.dirty_traces.fetch_add(1, Relaxed);
                }
                v.is_empty()
            }
            Err(_) => true,
        }
    }

    fn error(&self, e: &Error) {
        if matches!(e, Error::ConflictViolation { .. }) {
            self.conflict_errors.fetch_add(1, Relaxed);
        }
    }
}

/// Result of one harness run, trace already audited and dropped.
struct Run {
    report: Option<RunReport>,
    error: Option<String>,
}

impl Run {
    fn correct(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.correct && r.conflicts == 0)
    }
}

fn run_all(tally: &Tally, alg: Algorithm, jobs: &[(usize, usize, u64)], traced: bool) -> Vec<Run> {
    jobs.par_iter()
        .map(|&(w, m, seed)| {
            let inst = Instance::generate(alg.kind(), w, m, seed).expect("valid shape");
            let flags = RunFlags { trace: traced, cache: Some(CACHE.with(Clone::clone)), ..Default::default() };
            tally.strict_runs.fetch_add(1, Relaxed);
            match run(alg, &inst, &flags) {
                Ok(out) => {
                    if let Some(t) = &out.trace {
                        tally.traced_runs.fetch_add(1, Relaxed);
                        if !verify_trace(t).map(|v| v.is_empty()).unwrap_or(false) {
                            tally.dirty_traces.fetch_add(1, Relaxed);
                        }
                    }
                    Run { report: Some(out.report), error: None }
                }
                Err(e) => {
                    if let HarnessError::Machine(e) = &e {
                        tally.error(e);
                    }
                    Run { report: None, error: Some(format!("{alg} {w}x{m} seed {seed}: {e}")) }
                }
            }
        })
        .collect()
}

fn jobs(shapes: &[(usize, usize)], seeds: u64, base: u64) -> Vec<(usize, usize, u64)> {
    shapes.iter().flat_map(|&(w, m)| (0..seeds).map(move |s| (w, m, base + s))).collect()
}

fn first_error(runs: &[Run]) -> String {
    runs.iter().find_map(|r| r.error.clone()).map(|e| format!("; first error: {e}")).unwrap_or_default()
}

struct Verdicts(Vec<bool>);

impl Verdicts {
    fn report(&mut self, id: u32, name: &str, pass: bool, detail: String, started: Instant) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("{tag} [{id}] {name}: {detail} ({:.1}s)", started.elapsed().as_secs_f64());
        self.0.push(pass);
    }
}

fn criterion_2(t: &Tally, v: &mut Verdicts) {
    let start = Instant::now();
    // every 0-1 matrix of shape 2x4
    let mut exhaustive_ok = 0;
    for bits in 0u32..256 {
        let words: Vec<Word> = (0..8).map(|k| u64::from(bits >> k & 1)).collect();
        let rows: Vec<Vec<Word>> = words.chunks(4).map(<[Word]>::to_vec).collect();
        let mut mc = Machine::new(MachineConfig::new(2, 4).unwrap().traced());
        mc.load_matrix(&rows).unwrap();
        let view = mc.full_view();
        let res = sort_short_wide(&mut mc, &[view], RowSorter::Compare);
        let mut want = words.clone();
        want.sort_unstable();
        if res.is_ok() && t.machine(&mc) && mc.snapshot(0, 4).concat() == want {
            exhaustive_ok += 1;
        }
    }
    let square = run_all(t, Algorithm::SortSquare, &jobs(&[(16, 16), (64, 64)], 500, 20_000), false);
    let tall = run_all(t, Algorithm::SortTall, &jobs(&[(64, 8), (256, 16), (4096, 64)], 500, 30_000), false);
    let sq_ok = square.iter().filter(|r| r.correct()).count();
    let tall_ok = tall.iter().filter(|r| r.correct()).count();
    v.report(
        2,
        "sorting correctness",
        exhaustive_ok == 256 && sq_ok == square.len() && tall_ok == tall.len(),
        format!(
            "short-wide 2x4 zero-one {exhaustive_ok}/256, square {sq_ok}/{}, tall {tall_ok}/{}{}{}",
            square.len(),
            tall.len(),
            first_error(&square),
            first_error(&tall)
        ),
        start,
    );
}

fn criterion_3(t: &Tally, v: &mut Verdicts) {
    let start = Instant::now();
    let shapes = [(2usize, 4usize), (4, 16), (8, 64), (16, 256)];
    let results: Vec<Result<(), String>> = (0..100u64)
        .into_par_iter()
        .map(|k| {
            let (w, m) = shapes[k as usize % shapes.len()];
            let mut rng = ChaCha8Rng::seed_from_u64(40_000 + k);
            let mut words: Vec<Word> = (0..(w * m) as Word).collect();
            words.shuffle(&mut rng);
            let rows: Vec<Vec<Word>> = words.chunks(m).map(<[Word]>::to_vec).collect();
            let mut mc = Machine::new(MachineConfig::new(w, m).unwrap().traced());
            mc.load_matrix(&rows).unwrap();
            let view = mc.full_view();
            let mut snaps = Vec::new();
            let mut probe = |_: Stage, mc: &Machine, views: &[View]| snaps.push(mc.view_snapshot(&views[0]));
            sort_short_wide_probed(&mut mc, &[view], RowSorter::Compare, &mut probe).map_err(|e| {
                t.error(&e);
                e.to_string()
            })?;
            if !t.machine(&mc) {
                return Err(format!("{w}x{m}: trace audit failed"));
            }
            for i in [1, w * m / 4, w * m / 2, w * m] {
                let mk = MarkingOracle::of_rows(&rows, i);
                let cols = mk.dirty_columns(&snaps[0]).len();
                let dirty = mk.dirty_rows(&snaps[1]);
                if cols > w || dirty.len() > 2 || clusters(&dirty).len() > 1 {
                    return Err(format!("{w}x{m} i={i}: {cols} dirty columns, dirty rows {dirty:?}"));
                }
            }
            Ok(())
        })
        .collect();
    let ok = results.iter().filter(|r| r.is_ok()).count();
    let err = results.iter().find_map(|r| r.clone().err()).map(|e| format!("; first failure: {e}")).unwrap_or_default();
    v.report(3, "short-wide dirty rows/columns", ok == 100, format!("{ok}/100 instances within bounds{err}"), start);
}

fn spread(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(f64::MIN, f64::max);
    let lo = xs.iter().copied().fold(f64::MAX, f64::min);
    hi / lo
}

fn mean_steps(runs: &[Run]) -> f64 {
    let steps: Vec<f64> = runs.iter().filter_map(|r| r.report.as_ref()).map(|r| r.steps as f64).collect();
    steps.iter().sum::<f64>() / steps.len().max(1) as f64
}

fn criterion_4(t: &Tally, v: &mut Verdicts) {
    let start = Instant::now();
    let sizes = [16usize, 64, 256];
    let mut square_ok = true;
    let mut ratios = Vec::new();
    for &m in &sizes {
        let runs = run_all(t, Algorithm::PartitionSquare, &jobs(&[(m, m)], 100, 50_000), false);
        square_ok &= runs.iter().all(Run::correct);
        ratios.push(mean_steps(&runs) / m as f64);
    }
    let shapes = [(4096usize, 64usize, 100u64), (32768, 64, 10)];
    let mut general_ok = true;
    let mut general_ratios = Vec::new();
    let mut retries_ok = 0;
    let mut errors = String::new();
    for &(w, m, seeds) in &shapes {
        let runs = run_all(t, Algorithm::PartitionGeneral, &jobs(&[(w, m)], seeds, 60_000), false);
        general_ok &= runs.iter().all(Run::correct);
        errors += &first_error(&runs);
        let l = (w as f64).ln() / (m as f64).ln();
        general_ratios.push(mean_steps(&runs) / (m as f64 * l.powi(3)));
        if w == 4096 {
            retries_ok = runs.iter().filter_map(|r| r.report.as_ref()).filter(|r| r.cleanup_retries <= 2).count();
        }
    }
    let pass = square_ok
        && spread(&ratios) < 2.0
        && general_ok
        && spread(&general_ratios) < 2.0
        && retries_ok >= 95;
    v.report(
        4,
        "partition validity and linearity",
        pass,
        format!(
            "square valid={square_ok}, steps/m {:?} (spread {:.2}); general valid={general_ok}, steps/(m log_m^3 w) {:?} (spread {:.2}); cleanup retries <= 2 on {retries_ok}/100{errors}",
            ratios.iter().map(|r| r.round()).collect::<Vec<_>>(),
            spread(&ratios),
            general_ratios.iter().map(|r| r.round()).collect::<Vec<_>>(),
            spread(&general_ratios),
        ),
        start,
    );
}

fn criterion_5(t: &Tally, v: &mut Verdicts) {
    let start = Instant::now();
    let runs = run_all(t, Algorithm::Permute, &jobs(&[(4096, 64)], 100, 70_000), false);
    let exact = runs.iter().filter(|r| r.correct()).count();
    let reports: Vec<&RunReport> = runs.iter().filter_map(|r| r.report.as_ref()).collect();
    let few_iters = reports.iter().filter(|r| r.iterations <= 6).count();
    let fallbacks = reports.iter().filter(|r| r.fallback).count();
    let mean_iters = reports.iter().map(|r| f64::from(r.iterations)).sum::<f64>() / reports.len().max(1) as f64;
    v.report(
        5,
        "permutation pipeline",
        exact == 100 && few_iters >= 95 && fallbacks <= 5,
        format!(
            "exact {exact}/100, iterations <= 6 on {few_iters}/100 (mean {mean_iters:.2}), fallback {fallbacks}/100{}",
            first_error(&runs)
        ),
        start,
    );
}

fn criterion_6(t: &Tally, v: &mut Verdicts) {
    let start = Instant::now();
    let (w, m, alpha) = (4096, 64, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(80_000);
    t.strict_runs.fetch_add(1, Relaxed);
    let (pass, detail) = match heavy_tail_experiment(w, m, alpha, &[m], 1, &mut rng) {
        Ok(rows) => {
            let r = &rows[0];
            (
                r.rows >= 1000 && r.mean_leftover <= 4.5,
                format!(
                    "{} rows, mean leftover {:.3}, mean heavy {:.3}, envelope {:.3}",
                    r.rows, r.mean_leftover, r.mean_heavy, r.envelope
                ),
            )
        }
        Err(e) => {
            t.error(&e);
            (false, e.to_string())
        }
    };
    v.report(6, "heavy-tail envelope", pass, detail, start);
}

fn criterion_7(t: &Tally, v: &mut Verdicts) {
    let start = Instant::now();
    let results: Vec<Result<(), String>> = (0..200u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(90_000 + k);
            let (w, m) = (rng.gen_range(1..=64usize), rng.gen_range(1..=64usize));
            let mut perm: Vec<usize> = (0..w * m).collect();
            perm.shuffle(&mut rng);
            let s = offline_schedule(w, m, &perm).map_err(|e| e.to_string())?;
            if s.rounds().len() > m {
                return Err(format!("{w}x{m}: {} rounds", s.rounds().len()));
            }
            let words: Vec<Word> = (0..(w * m) as Word).map(|x| x * 3 + 1).collect();
            let mut mc = Machine::new(MachineConfig::new(w, m).unwrap().traced());
            mc.load_matrix(&words.chunks(m).map(<[Word]>::to_vec).collect::<Vec<_>>()).unwrap();
            let view = mc.full_view();
            apply_schedule(&mut mc, &[view], &s, m).map_err(|e| {
                t.error(&e);
                e.to_string()
            })?;
            if !t.machine(&mc) || mc.steps() > 2 * m as u64 {
                return Err(format!("{w}x{m}: {} steps or trace conflict", mc.steps()));
            }
            let mut direct = vec![0; w * m];
            for (src, &dst) in perm.iter().enumerate() {
                direct[dst] = words[src];
            }
            if mc.snapshot(m, m).concat() != direct {
                return Err(format!("{w}x{m}: result differs from direct application"));
            }
            Ok(())
        })
        .collect();
    let ok = results.iter().filter(|r| r.is_ok()).count();
    let err = results.iter().find_map(|r| r.clone().err()).map(|e| format!("; first failure: {e}")).unwrap_or_default();
    v.report(7, "offline schedules", ok == 200, format!("{ok}/200 bijections, <= m rounds and exact{err}"), start);
}

fn criterion_8(t: &Tally, v: &mut Verdicts) {
    let start = Instant::now();
    let results: Vec<Result<(), String>> = (0..500u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(100_000 + k);
            let (w, m) = (rng.gen_range(1..=64usize), rng.gen_range(1..=64usize));
            let n = rng.gen_range(1..=64usize);
            let rows: Vec<Vec<Word>> = (0..w).map(|_| (0..m).map(|_| rng.gen()).collect()).collect();
            let mut mc = Machine::new(MachineConfig::new(w, m).unwrap().traced());
            mc.load_matrix(&rows).unwrap();
            let view = mc.full_view();
            let r1 = to_column_major(&mut mc, &[view.clone()]).and_then(|()| to_row_major(&mut mc, &[view]));
            let round_trip = r1.is_ok() && mc.snapshot(0, m) == rows;
            let clean1 = t.machine(&mc);

            let sq: Vec<Vec<Word>> = (0..n).map(|_| (0..n).map(|_| rng.gen()).collect()).collect();
            let mut mc = Machine::new(MachineConfig::new(n, n).unwrap().traced());
            mc.load_matrix(&sq).unwrap();
            let view = mc.full_view();
            let once = transpose_square(&mut mc, &[view.clone()]).is_ok()
                && (0..n).all(|r| (0..n).all(|c| mc.cell(r, c) == sq[c][r]));
            let twice = transpose_square(&mut mc, &[view]).is_ok() && mc.snapshot(0, n) == sq;
            let clean2 = t.machine(&mc);
            if round_trip && once && twice && clean1 && clean2 {
                Ok(())
            } else {
                Err(format!("matrix {w}x{m} / square {n}"))
            }
        })
        .collect();
    let ok = results.iter().filter(|r| r.is_ok()).count();
    let err = results.iter().find_map(|r| r.clone().err()).map(|e| format!("; first failure: {e}")).unwrap_or_default();
    v.report(8, "transpose/conversion algebra", ok == 500, format!("{ok}/500 matrices{err}"), start);
}

/// Traced sweep over every algorithm on shapes small enough to record full
/// traces; large shapes run in strict mode inside the other criteria.
fn traced_sweep(t: &Tally) -> Vec<Run> {
    let plan: [(Algorithm, &[(usize, usize)]); 9] = [
        (Algorithm::SortShortWide, &[(2, 4), (4, 16), (8, 64)]),
        (Algorithm::SortSquare, &[(16, 16), (64, 64)]),
        (Algorithm::SortTall, &[(64, 8), (256, 16)]),
        (Algorithm::SortBlock, &[(12, 3), (6, 4), (5, 7)]),
        (Algorithm::IntegerSort, &[(64, 8)]),
        (Algorithm::PartitionShortWide, &[(3, 9), (4, 16)]),
        (Algorithm::PartitionSquare, &[(16, 16), (64, 64)]),
        (Algorithm::PartitionGeneral, &[(64, 8), (128, 8)]),
        (Algorithm::Permute, &[(64, 8), (256, 16)]),
    ];
    plan.iter().flat_map(|&(alg, shapes)| run_all(t, alg, &jobs(shapes, 60, 10_000), true)).collect()
}

fn main() {
    let tally = Tally::default();
    let mut v = Verdicts(Vec::new());
    let start = Instant::now();
    let sweep = traced_sweep(&tally);
    let sweep_ok = sweep.iter().all(Run::correct);
    let sweep_err = first_error(&sweep);

    criterion_2(&tally, &mut v);
    criterion_3(&tally, &mut v);
    criterion_4(&tally, &mut v);
    criterion_5(&tally, &mut v);
    criterion_6(&tally, &mut v);
    criterion_7(&tally, &mut v);
    criterion_8(&tally, &mut v);

    let runs = tally.strict_runs.load(Relaxed);
    let conflicts = tally.conflict_errors.load(Relaxed);
    let traced = tally.traced_runs.load(Relaxed);
    let dirty = tally.dirty_traces.load(Relaxed);
    v.report(
        1,
        "conflict-freeness",
        runs >= 1000 && conflicts == 0 && dirty == 0 && sweep_ok,
        format!(
            "{runs} strict runs, {conflicts} conflict violations; {traced} traced runs, {dirty} with audit findings; traced sweep correct={sweep_ok}{sweep_err}"
        ),
        start,
    );
    let failed = v.0.iter().filter(|&&p| !p).count();
    println!("{} criteria, {failed} failed", v.0.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
