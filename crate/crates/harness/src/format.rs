//! Text formats: trace dumps, meter summaries and offline schedules.

use std::io::{BufRead, Write};

use dmm_core::layout::{Move, Schedule};
use dmm_core::{CostMeter, Op, TraceEvent, TraceLog};

use crate::error::{HarnessError, Result};

/// One line per event: `step processor bank offset op [value]`, with `op`
/// either `R` or `W` and the value present for writes only.
pub fn write_trace(out: &mut impl Write, events: &[TraceEvent]) -> Result<()> {
    for e in events {
        match e.op {
            Op::Read => writeln!(out, "{} {} {} {} R", e.step, e.processor, e.bank, e.offset)?,
            Op::Write(v) => writeln!(out, "{} {} {} {} W {v}", e.step, e.processor, e.bank, e.offset)?,
        }
    }
    Ok(())
}

pub fn read_trace(input: impl BufRead) -> Result<TraceLog> {
    let mut events = Vec::new();
    let mut last_step = None;
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| HarnessError::Parse { line: idx + 1, msg: msg.to_string() };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < 5 {
            return Err(bad("expected `step processor bank offset op [value]`"));
        }
        let num = |s: &str| s.parse::<u64>().map_err(|_| bad("not a number"));
        let narrow = |s: &str| num(s).and_then(|v| u32::try_from(v).map_err(|_| bad("field exceeds 32 bits")));
        let op = match (f[4], f.get(5)) {
            ("R", None) => Op::Read,
            ("W", Some(v)) => Op::Write(num(v)?),
            _ => return Err(bad("op must be `R` or `W value`")),
        };
        let step = num(f[0])?;
        last_step = Some(step);
        events.push(TraceEvent { step, processor: narrow(f[1])?, bank: narrow(f[2])?, offset: narrow(f[3])?, op });
    }
    let steps = last_step.map_or(0, |s| s + 1);
    Ok(TraceLog { meter: CostMeter { steps, conflicts: 0 }, events: Some(events) })
}

/// `steps=<k> work=<k*w> conflicts=<c>`.
pub fn meter_line(meter: &CostMeter, w: usize) -> String {
    format!("steps={} work={} conflicts={}", meter.steps, meter.work(w), meter.conflicts)
}

/// Header `rows cols`, then one `src_row src_col dst_row dst_col` line per
/// move, rounds separated by a blank line.
pub fn write_schedule(out: &mut impl Write, s: &Schedule) -> Result<()> {
    writeln!(out, "{} {}", s.rows(), s.cols())?;
    for (k, round) in s.rounds().iter().enumerate() {
        if k > 0 {
            writeln!(out)?;
        }
        for mv in round {
            writeln!(out, "{} {} {} {}", mv.src_row, mv.src_col, mv.dst_row, mv.dst_col)?;
        }
    }
    Ok(())
}

pub fn read_schedule(input: impl BufRead) -> Result<Schedule> {
    let mut lines = input.lines().enumerate();
    let (_, header) = lines.next().ok_or(HarnessError::Parse { line: 1, msg: "empty file".into() })?;
    let dims: Vec<usize> = header?.split_whitespace().filter_map(|t| t.parse().ok()).collect();
    let [rows, cols] = dims[..] else {
        return Err(HarnessError::Parse { line: 1, msg: "header must be `rows cols`".into() });
    };
    let mut rounds: Vec<Vec<Move>> = vec![Vec::new()];
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            rounds.push(Vec::new());
            continue;
        }
        let f: Vec<u32> = line.split_whitespace().filter_map(|t| t.parse().ok()).collect();
        let [src_row, src_col, dst_row, dst_col] = f[..] else {
            return Err(HarnessError::Parse { line: idx + 1, msg: "expected four indices".into() });
        };
        rounds.last_mut().expect("never empty").push(Move { src_row, src_col, dst_row, dst_col });
    }
    rounds.retain(|r| !r.is_empty());
    Ok(Schedule::from_rounds(rows, cols, rounds)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dmm_core::layout::offline_schedule;

    #[test]
    fn trace_round_trip() {
        let events = vec![
            TraceEvent { step: 0, processor: 1, bank: 2, offset: 3, op: Op::Read },
            TraceEvent { step: 1, processor: 0, bank: 2, offset: 4, op: Op::Write(99) },
        ];
        let mut buf = Vec::new();
        write_trace(&mut buf, &events).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf), "0 1 2 3 R\n1 0 2 4 W 99\n");
        let log = read_trace(&buf[..]).unwrap();
        assert_eq!(log.events.unwrap(), events);
        assert_eq!(log.meter.steps, 2);
    }

    #[test]
    fn malformed_trace_line() {
        assert!(read_trace("0 1 2 3 X\n".as_bytes()).is_err());
        assert!(read_trace("0 1 2 3 W\n".as_bytes()).is_err());
    }

    #[test]
    fn meter_summary() {
        assert_eq!(meter_line(&CostMeter { steps: 5, conflicts: 1 }, 4), "steps=5 work=20 conflicts=1");
    }

    #[test]
    fn schedule_round_trip() {
        let perm: Vec<usize> = (0..12).map(|k| (k * 5) % 12).collect();
        let s = offline_schedule(3, 4, &perm).unwrap();
        let mut buf = Vec::new();
        write_schedule(&mut buf, &s).unwrap();
        let text = String::from_utf8_lossy(&buf);
        assert_eq!(text.matches("\n\n").count(), s.rounds().len() - 1);
        assert_eq!(read_schedule(&buf[..]).unwrap(), s);
    }
}
