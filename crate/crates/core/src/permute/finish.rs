//! Sorting the remaining labels and delivering them in three phases.

use alloc::vec;
use alloc::vec::Vec;

use super::destination;
use crate::error::Result;
use crate::machine::{AccessRequest, Machine, View, Word, EMPTY};
use crate::partition::{integer_sort_general, SortStats};

/// Per-row split of a sorted row: `[0, a)` first group, `[a, b)` middle,
/// `[b, n)` last group, `n` labels in total.
#[derive(Debug, Clone, Copy, Default)]
struct Groups {
    a: usize,
    b: usize,
    n: usize,
}

/// Sorts the labels in `view` (a `w x m'` view over the input region, rows
/// on every bank) by `(i, j)` and delivers them:
/// middle labels (destination rows owned by this row alone) one per step,
/// then the first group with label `(i, j)` sent in slot `j`, then the last
/// group the same way. A row whose labels share one destination row counts
/// them all as first group. Source cells are cleared afterwards.
pub fn finish(machine: &mut Machine, view: &View) -> Result<SortStats> {
    let (w, m) = (machine.w(), machine.m());
    let width = view.width();
    let col = view.col();
    let out = machine.regions().output;
    let domain = (w * m) as u64 + 1;
    let stats = integer_sort_general(machine, core::slice::from_ref(view), domain)?;

    let rows: Vec<usize> = view.rows().to_vec();
    let mut groups = vec![Groups::default(); rows.len()];
    machine.local_phase(&rows, |r, ctx| {
        let mut first = None;
        let mut last = None;
        let (mut a, mut b, mut n) = (0, 0, 0);
        for c in 0..width {
            let x = ctx.read(col + c);
            if let Some((i, _)) = destination(x, m) {
                if first.is_none() {
                    first = Some(i);
                }
                if first == Some(i) {
                    a = c + 1;
                }
                if last != Some(i) {
                    b = c;
                    last = Some(i);
                }
                n = c + 1;
            }
        }
        if first == last {
            b = n;
        }
        groups[r] = Groups { a, b, n };
    })?;

    let mut batch = Vec::with_capacity(rows.len());
    let mut vals: Vec<Word> = Vec::with_capacity(rows.len());
    let mut sink = Vec::new();

    // middle labels: exclusive destination rows, so any order is safe
    for s in 0..width {
        let active: Vec<usize> = (0..rows.len()).filter(|&r| groups[r].a + s < groups[r].b).collect();
        batch.clear();
        vals.clear();
        batch.extend(active.iter().map(|&r| AccessRequest::read(rows[r], rows[r], col + groups[r].a + s)));
        machine.step_into(&batch, &mut vals)?;
        batch.clear();
        for (&r, &x) in active.iter().zip(vals.iter()) {
            let (i, j) = destination(x, m).expect("middle cells hold labels");
            batch.push(AccessRequest::write(rows[r], i, out + j, x));
        }
        machine.step_into(&batch, &mut sink)?;
    }

    // first group, then last group: label (i, j) goes out in slot j
    for phase in 0..2 {
        let span = |g: &Groups| if phase == 0 { (0, g.a) } else { (g.b, g.n) };
        let hi = |g: &Groups| span(g).1;
        let mut cursor: Vec<usize> = groups.iter().map(|g| span(g).0).collect();
        let mut reg: Vec<Option<Word>> = vec![None; rows.len()];
        let mut fetch = |machine: &mut Machine, who: &[usize], cursor: &[usize], reg: &mut [Option<Word>]| -> Result<()> {
            batch.clear();
            vals.clear();
            batch.extend(who.iter().map(|&r| AccessRequest::read(rows[r], rows[r], col + cursor[r])));
            machine.step_into(&batch, &mut vals)?;
            for (&r, &x) in who.iter().zip(vals.iter()) {
                reg[r] = Some(x);
            }
            Ok(())
        };
        let start: Vec<usize> = (0..rows.len()).filter(|&r| cursor[r] < hi(&groups[r])).collect();
        fetch(machine, &start, &cursor, &mut reg)?;
        for jj in 0..m {
            let mut writes = Vec::new();
            let mut sent = Vec::new();
            for r in 0..rows.len() {
                if let Some(x) = reg[r] {
                    let (i, j) = destination(x, m).expect("group cells hold labels");
                    if j == jj {
                        writes.push(AccessRequest::write(rows[r], i, out + j, x));
                        sent.push(r);
                    }
                }
            }
            machine.step_into(&writes, &mut sink)?;
            let mut next = Vec::new();
            for &r in &sent {
                reg[r] = None;
                cursor[r] += 1;
                if cursor[r] < hi(&groups[r]) {
                    next.push(r);
                }
            }
            fetch(machine, &next, &cursor, &mut reg)?;
        }
    }

    machine.local_phase(&rows, |r, ctx| {
        for c in 0..groups[r].n {
            ctx.write(col + c, EMPTY);
        }
    })?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::MachineConfig;
    use crate::permute::{label, load_labels};

    fn delivered(mc: &Machine) -> bool {
        let (w, m) = (mc.w(), mc.m());
        (0..w).all(|i| (0..m).all(|j| crate::local::key_of(mc.cell(i, m + j)) == Some((i * m + j) as u64)))
    }

    #[test]
    fn one_label_per_row() {
        let (w, m) = (8, 2);
        let mut rows = vec![vec![EMPTY; m]; w];
        // 16 labels but each row holds two; spread them in reverse
        for k in 0..w * m {
            let r = (w * m - 1 - k) / m;
            rows[r][k % m] = label(k / m, k % m, m, 0);
        }
        let mut mc = Machine::new(MachineConfig::new(w, m).unwrap().traced());
        load_labels(&mut mc, &rows).unwrap();
        let v = mc.full_view();
        finish(&mut mc, &v).unwrap();
        assert!(delivered(&mc));
        assert!(mc.audit().unwrap().is_empty());
    }

    #[test]
    fn reversed_full_matrix() {
        let (w, m) = (4, 4);
        let rows: Vec<Vec<Word>> = (0..w)
            .map(|r| (0..m).map(|c| {
                let k = w * m - 1 - (r * m + c);
                label(k / m, k % m, m, 0)
            }).collect())
            .collect();
        let mut mc = Machine::new(MachineConfig::new(w, m).unwrap().traced());
        load_labels(&mut mc, &rows).unwrap();
        let v = mc.full_view();
        finish(&mut mc, &v).unwrap();
        assert!(delivered(&mc));
        assert!(mc.audit().unwrap().is_empty());
        assert!(mc.snapshot(0, m).concat().iter().all(|&x| x == EMPTY));
    }

    #[test]
    fn groups_straddle_row_boundaries() {
        // labels 2..34 in a 8x4 view: after sorting, row 1 holds (0,6),(0,7)
        // then (1,0),(1,1), so destination rows are shared between rows
        let (w, m, width) = (8, 8, 4);
        let mut rows = vec![vec![EMPTY; m]; w];
        for (pos, k) in (2..34).rev().enumerate() {
            rows[pos / width][pos % width] = label(k / m, k % m, m, 0);
        }
        let mut mc = Machine::new(MachineConfig::new(w, m).unwrap().traced());
        load_labels(&mut mc, &rows).unwrap();
        for k in (0..2).chain(34..w * m) {
            mc.load_row(k / m, m + k % m, &[label(k / m, k % m, m, 0)]).unwrap();
        }
        let v = mc.view(&(0..w).collect::<Vec<_>>(), 0..width).unwrap();
        finish(&mut mc, &v).unwrap();
        assert!(delivered(&mc));
        assert!(mc.audit().unwrap().is_empty());
    }
}
