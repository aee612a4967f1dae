//! Scaling benchmarks over shapes and seeds, reported as CSV.

use std::io::Write;

use crate::error::{HarnessError, Result};
use crate::instance::Instance;
use crate::run::{run, Algorithm, RunFlags, RunReport};

/// Per-shape averages over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSummary {
    pub w: usize,
    pub m: usize,
    pub runs: usize,
    pub steps: f64,
    pub work: f64,
    pub conflicts: f64,
    pub correct: f64,
    pub iterations: f64,
    pub fallback: f64,
}

impl ShapeSummary {
    fn of(reports: &[RunReport]) -> Self {
        let n = reports.len().max(1) as f64;
        let mean = |f: &dyn Fn(&RunReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        ShapeSummary {
            w: reports[0].w,
            m: reports[0].m,
            runs: reports.len(),
            steps: mean(&|r| r.steps as f64),
            work: mean(&|r| r.work as f64),
            conflicts: mean(&|r| r.conflicts as f64),
            correct: mean(&|r| f64::from(u8::from(r.correct))),
            iterations: mean(&|r| f64::from(r.iterations)),
            fallback: mean(&|r| f64::from(u8::from(r.fallback))),
        }
    }
}

/// Runs `alg` on `seeds` generated instances of every shape. Seeds are
/// `0..seeds`; one schedule cache is shared per shape.
pub fn bench(alg: Algorithm, shapes: &[(usize, usize)], seeds: u64, flags: &RunFlags) -> Result<(Vec<RunReport>, Vec<ShapeSummary>)> {
    let mut all = Vec::new();
    let mut summaries = Vec::new();
    for &(w, m) in shapes {
        let flags = RunFlags { cache: Some(flags.cache.clone().unwrap_or_default()), ..flags.clone() };
        let mut reports = Vec::with_capacity(seeds as usize);
        for seed in 0..seeds {
            let inst = Instance::generate(alg.kind(), w, m, seed)?;
            reports.push(run(alg, &inst, &flags)?.report);
        }
        if !reports.is_empty() {
            summaries.push(ShapeSummary::of(&reports));
        }
        all.extend(reports);
    }
    Ok((all, summaries))
}

/// Writes one row per run, then one `mean` row per shape whose seed column
/// reads `mean` and whose `correct` and `fallback` columns are fractions.
pub fn write_csv(out: impl Write, alg: Algorithm, reports: &[RunReport], summaries: &[ShapeSummary]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    wr.write_record(RunReport::CSV_HEADER)?;
    for r in reports {
        wr.write_record(r.csv_record())?;
    }
    for s in summaries {
        wr.write_record([
            alg.id().to_string(),
            s.w.to_string(),
            s.m.to_string(),
            "mean".to_string(),
            format!("{:.2}", s.steps),
            format!("{:.2}", s.work),
            format!("{:.2}", s.conflicts),
            format!("{:.4}", s.correct),
            format!("{:.4}", s.iterations),
            format!("{:.4}", s.fallback),
        ])?;
    }
    wr.flush().map_err(HarnessError::from)
}

/// Parses `16x16,64x8` into shapes.
pub fn parse_shapes(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .map(|p| {
            let (w, m) = p.trim().split_once('x').ok_or_else(|| HarnessError::Shape(format!("`{p}` is not WxM")))?;
            let n = |t: &str| t.parse::<usize>().map_err(|_| HarnessError::Shape(format!("`{p}` is not WxM")));
            Ok((n(w)?, n(m)?))
        })
        .collect()
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_parse() {
        assert_eq!(parse_shapes("16x16, 64x8").unwrap(), vec![(16, 16), (64, 8)]);
        assert!(parse_shapes("16").is_err());
    }

    #[test]
    fn csv_has_runs_and_means() {
        let (reports, summaries) = bench(Algorithm::PartitionSquare, &[(16, 16)], 3, &RunFlags::default()).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, Algorithm::PartitionSquare, &reports, &summaries).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "algorithm,w,m,seed,steps,work,conflicts,correct,iterations,fallback");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("partition_square,16,16,mean,"));
        assert!(reports.iter().all(|r| r.correct && r.conflicts == 0));
    }
}
