//! Conflict-free data movement: the paired-diagonal square transpose, and
//! offline schedules for fixed permutations (row-major <-> column-major
//! conversion in particular).
//!
//! An offline schedule splits a permutation of an `R x C` region into rounds
//! in which every source row and every destination row appears at most once.
//! The transfer multigraph (source row -> destination row, one edge per cell)
//! is C-regular and bipartite, so it decomposes into exactly C perfect
//! matchings: Euler splitting halves the degree whenever it is even, and a
//! Hopcroft-Karp matching peels off one round whenever it is odd.

use alloc::collections::BTreeMap;
use core::cell::RefCell;
use alloc::collections::VecDeque;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::machine::{check_disjoint, AccessRequest, Machine, View, Word};

/// One word moved from `(src_row, src_col)` to `(dst_row, dst_col)`, in the
/// region's local coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Move {
    pub src_row: u32,
    pub src_col: u32,
    pub dst_row: u32,
    pub dst_col: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    rows: usize,
    cols: usize,
    rounds: Vec<Vec<Move>>,
}

impl Schedule {
    pub fn from_rounds(rows: usize, cols: usize, rounds: Vec<Vec<Move>>) -> Result<Self> {
        let s = Schedule { rows, cols, rounds };
        s.validate()?;
        Ok(s)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rounds(&self) -> &[Vec<Move>] {
        &self.rounds
    }

    /// Every round has pairwise distinct source rows and destination rows,
    /// and all coordinates lie inside the region.
    pub fn validate(&self) -> Result<()> {
        let mut src_seen = vec![usize::MAX; self.rows];
        let mut dst_seen = vec![usize::MAX; self.rows];
        for (k, round) in self.rounds.iter().enumerate() {
            for mv in round {
                let (sr, dr) = (mv.src_row as usize, mv.dst_row as usize);
                if sr >= self.rows || dr >= self.rows {
                    return Err(Error::InvalidSchedule("row out of range"));
                }
                if mv.src_col as usize >= self.cols || mv.dst_col as usize >= self.cols {
                    return Err(Error::InvalidSchedule("column out of range"));
                }
                if src_seen[sr] == k {
                    return Err(Error::InvalidSchedule("source row used twice in a round"));
                }
                if dst_seen[dr] == k {
                    return Err(Error::InvalidSchedule("destination row used twice in a round"));
                }
                src_seen[sr] = k;
                dst_seen[dr] = k;
            }
        }
        Ok(())
    }
}

/// Linear index map of the row-major -> column-major conversion on an
/// `rows x cols` region: the cell with row-major index `v` moves to
/// `(v mod rows, v / rows)`.
pub fn column_major_perm(rows: usize, cols: usize) -> Vec<usize> {
    (0..rows * cols).map(|v| (v % rows) * cols + v / rows).collect()
}

/// Inverse of [`column_major_perm`].
pub fn row_major_perm(rows: usize, cols: usize) -> Vec<usize> {
    let fwd = column_major_perm(rows, cols);
    let mut inv = vec![0; fwd.len()];
    for (v, &d) in fwd.iter().enumerate() {
        inv[d] = v;
    }
    inv
}

/// Builds a schedule realizing `perm`, where `perm[src] = dst` over
/// row-major linear indices of an `rows x cols` region.
pub fn offline_schedule(rows: usize, cols: usize, perm: &[usize]) -> Result<Schedule> {
    let n = rows * cols;
    if perm.len() != n {
        return Err(Error::NotBijective);
    }
    let mut hit = vec![false; n];
    for &d in perm {
        if d >= n || hit[d] {
            return Err(Error::NotBijective);
        }
        hit[d] = true;
    }
    if n == 0 {
        return Ok(Schedule { rows, cols, rounds: Vec::new() });
    }
    // edge e = source cell e; left node = source row, right node = destination row
    let edges: Vec<(u32, u32)> =
        (0..n).map(|e| ((e / cols) as u32, (perm[e] / cols) as u32)).collect();
    let all: Vec<u32> = (0..n as u32).collect();
    let mut matchings = Vec::with_capacity(cols);
    decompose(rows, &edges, all, cols, &mut matchings);
    let rounds = matchings
        .into_iter()
        .map(|ids| {
            ids.into_iter()
                .map(|e| {
                    let e = e as usize;
                    Move {
                        src_row: (e / cols) as u32,
                        src_col: (e % cols) as u32,
                        dst_row: (perm[e] / cols) as u32,
                        dst_col: (perm[e] % cols) as u32,
                    }
                })
                .collect()
        })
        .collect();
    let s = Schedule { rows, cols, rounds };
    debug_assert!(s.validate().is_ok());
    Ok(s)
}

fn decompose(nodes: usize, edges: &[(u32, u32)], ids: Vec<u32>, degree: usize, out: &mut Vec<Vec<u32>>) {
    match degree {
        0 => {}
        1 => out.push(ids),
        d if d % 2 == 1 => {
            let matching = perfect_matching(nodes, edges, &ids);
            let mut taken = vec![false; ids.len()];
            for &k in &matching {
                taken[k] = true;
            }
            let rest: Vec<u32> = ids.iter().zip(&taken).filter(|(_, &t)| !t).map(|(&e, _)| e).collect();
            out.push(matching.into_iter().map(|k| ids[k]).collect());
            decompose(nodes, edges, rest, d - 1, out);
        }
        d => {
            let (a, b) = euler_split(nodes, edges, &ids);
            decompose(nodes, edges, a, d / 2, out);
            decompose(nodes, edges, b, d / 2, out);
        }
    }
}

/// Splits an even-regular bipartite multigraph into two halves of half the
/// degree by 2-coloring the edges of Euler circuits alternately.
fn euler_split(nodes: usize, edges: &[(u32, u32)], ids: &[u32]) -> (Vec<u32>, Vec<u32>) {
    // vertices: left rows are [0, nodes), right rows are [nodes, 2 nodes)
    let nv = 2 * nodes;
    let mut start = vec![0usize; nv + 1];
    for &e in ids {
        let (u, v) = edges[e as usize];
        start[u as usize + 1] += 1;
        start[nodes + v as usize + 1] += 1;
    }
    for i in 0..nv {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    // adjacency entries: (other endpoint, local edge index)
    let mut adj = vec![(0u32, 0u32); 2 * ids.len()];
    for (k, &e) in ids.iter().enumerate() {
        let (u, v) = edges[e as usize];
        let (u, v) = (u as usize, nodes + v as usize);
        adj[fill[u]] = (v as u32, k as u32);
        fill[u] += 1;
        adj[fill[v]] = (u as u32, k as u32);
        fill[v] += 1;
    }
    let mut used = vec![false; ids.len()];
    let mut ptr: Vec<usize> = start[..nv].to_vec();
    let mut a = Vec::with_capacity(ids.len() / 2);
    let mut b = Vec::with_capacity(ids.len() / 2);
    let mut stack: Vec<(usize, u32)> = Vec::new();
    let mut circuit: Vec<u32> = Vec::new();
    for root in 0..nv {
        loop {
            while ptr[root] < start[root + 1] && used[adj[ptr[root]].1 as usize] {
                ptr[root] += 1;
            }
            if ptr[root] == start[root + 1] {
                break;
            }
            stack.clear();
            circuit.clear();
            stack.push((root, u32::MAX));
            while let Some(&(v, e_in)) = stack.last() {
                while ptr[v] < start[v + 1] && used[adj[ptr[v]].1 as usize] {
                    ptr[v] += 1;
                }
                if ptr[v] < start[v + 1] {
                    let (u, k) = adj[ptr[v]];
                    used[k as usize] = true;
                    stack.push((u as usize, k));
                } else {
                    stack.pop();
                    if e_in != u32::MAX {
                        circuit.push(e_in);
                    }
                }
            }
            for (i, &k) in circuit.iter().enumerate() {
                if i % 2 == 0 {
                    a.push(ids[k as usize]);
                } else {
                    b.push(ids[k as usize]);
                }
            }
        }
    }
    (a, b)
}

/// Hopcroft-Karp on a regular bipartite multigraph; returns positions into
/// `ids` forming a perfect matching.
fn perfect_matching(nodes: usize, edges: &[(u32, u32)], ids: &[u32]) -> Vec<usize> {
    const NONE: usize = usize::MAX;
    let mut start = vec![0usize; nodes + 1];
    for &e in ids {
        start[edges[e as usize].0 as usize + 1] += 1;
    }
    for i in 0..nodes {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    let mut adj = vec![(0usize, 0usize); ids.len()];
    for (k, &e) in ids.iter().enumerate() {
        let (u, v) = edges[e as usize];
        adj[fill[u as usize]] = (v as usize, k);
        fill[u as usize] += 1;
    }
    let mut match_left = vec![NONE; nodes]; // local edge index
    let mut match_right = vec![NONE; nodes]; // left node
    let mut dist = vec![0usize; nodes];
    let mut it = vec![0usize; nodes];
    loop {
        // BFS layering from free left nodes
        let mut queue = VecDeque::new();
        for u in 0..nodes {
            if match_left[u] == NONE {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = NONE;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[start[u]..start[u + 1]] {
                let w = match_right[v];
                if w == NONE {
                    found = true;
                } else if dist[w] == NONE {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        if !found {
            break;
        }
        it.copy_from_slice(&start[..nodes]);
        for u in 0..nodes {
            if match_left[u] == NONE {
                augment(u, &start, &adj, &mut match_left, &mut match_right, &mut dist, &mut it);
            }
        }
    }
    debug_assert!(match_left.iter().all(|&k| k != NONE));
    match_left
}

fn augment(
    root: usize,
    start: &[usize],
    adj: &[(usize, usize)],
    match_left: &mut [usize],
    match_right: &mut [usize],
    dist: &mut [usize],
    it: &mut [usize],
) -> bool {
    const NONE: usize = usize::MAX;
    // iterative DFS along the BFS layers
    let mut path: Vec<(usize, usize)> = Vec::new(); // (left node, edge slot)
    let mut u = root;
    loop {
        if it[u] == start[u + 1] {
            dist[u] = NONE;
            match path.pop() {
                Some((prev, _)) => {
                    it[prev] += 1;
                    u = prev;
                    continue;
                }
                None => return false,
            }
        }
        let (v, _) = adj[it[u]];
        let w = match_right[v];
        if w == NONE {
            path.push((u, it[u]));
            for &(l, slot) in &path {
                let (rv, k) = adj[slot];
                match_left[l] = k;
                match_right[rv] = l;
            }
            for &(l, _) in &path {
                it[l] += 1;
            }
            return true;
        }
        if dist[w] != NONE && dist[w] == dist[u] + 1 {
            path.push((u, it[u]));
            u = w;
        } else {
            it[u] += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum ConversionKind {
    ToColumnMajor,
    ToRowMajor,
}

/// Schedules for fixed conversions, computed once per shape. Clones share
/// the same store, so machines of one shape can reuse each other's work.
#[derive(Default, Clone)]
pub struct ScheduleCache {
    map: Rc<RefCell<BTreeMap<(ConversionKind, usize, usize), Rc<Schedule>>>>,
}

impl core::fmt::Debug for ScheduleCache {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ScheduleCache").field("schedules", &self.len()).finish()
    }
}

impl ScheduleCache {
    pub(crate) fn get(&self, kind: ConversionKind, rows: usize, cols: usize) -> Rc<Schedule> {
        self.map
            .borrow_mut()
            .entry((kind, rows, cols))
            .or_insert_with(|| {
                let perm = match kind {
                    ConversionKind::ToColumnMajor => column_major_perm(rows, cols),
                    ConversionKind::ToRowMajor => row_major_perm(rows, cols),
                };
                Rc::new(offline_schedule(rows, cols, &perm).expect("conversion maps are bijections"))
            })
            .clone()
    }

    /// Number of cached schedules.
    pub fn len(&self) -> usize {
        self.map.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn same_shape(views: &[View]) -> Result<(usize, usize)> {
    let first = views.first().ok_or(Error::ShapeViolation("no views"))?;
    let shape = (first.height(), first.width());
    if views.iter().any(|v| (v.height(), v.width()) != shape || v.col() != first.col()) {
        return Err(Error::ShapeViolation("lockstep views must share shape and columns"));
    }
    Ok(shape)
}

/// Runs a schedule on every view in lockstep: per round one batch of reads
/// from the view's cells and one batch of writes to `dst_offset + col` of
/// the destination banks. Costs `2 * rounds` steps.
pub fn apply_schedule(machine: &mut Machine, views: &[View], schedule: &Schedule, dst_offset: usize) -> Result<()> {
    if views.is_empty() {
        return Ok(());
    }
    let (rows, cols) = same_shape(views)?;
    if (rows, cols) != (schedule.rows, schedule.cols) {
        return Err(Error::ShapeViolation("schedule shape differs from view shape"));
    }
    machine.regions().require(dst_offset + cols)?;
    let col = views[0].col();
    let mut batch = Vec::new();
    let mut vals: Vec<Word> = Vec::new();
    let mut sink = Vec::new();
    for round in &schedule.rounds {
        batch.clear();
        vals.clear();
        for v in views {
            batch.extend(round.iter().map(|mv| {
                let b = v.bank(mv.src_row as usize);
                AccessRequest::read(b, b, col + mv.src_col as usize)
            }));
        }
        machine.step_into(&batch, &mut vals)?;
        batch.clear();
        let mut it = vals.iter();
        for v in views {
            for mv in round {
                let p = v.bank(mv.src_row as usize);
                let value = *it.next().expect("one read per move");
                batch.push(AccessRequest::write(p, v.bank(mv.dst_row as usize), dst_offset + mv.dst_col as usize, value));
            }
        }
        machine.step_into(&batch, &mut sink)?;
    }
    Ok(())
}

/// Applies a fixed permutation out of place through the staging region and
/// copies the result back (`2 * rounds + 2 * cols` steps).
pub fn apply_staged(machine: &mut Machine, views: &[View], schedule: &Schedule) -> Result<()> {
    if views.is_empty() {
        return Ok(());
    }
    check_disjoint(machine.w(), views)?;
    let (_, cols) = same_shape(views)?;
    let col = views[0].col();
    let staging = machine.regions().staging + col;
    apply_schedule(machine, views, schedule, staging)?;
    let banks: Vec<usize> = views.iter().flat_map(|v| v.rows().iter().copied()).collect();
    machine.local_phase(&banks, |_, ctx| {
        for c in 0..cols {
            let x = ctx.read(staging + c);
            ctx.write(col + c, x);
        }
    })?;
    Ok(())
}

/// In-place transpose of square views using the paired-diagonal schedule:
/// diagonals `k` and `s - k` are read into registers and written back
/// swapped, at most four steps per pair, `<= 2s` steps in total.
pub fn transpose_square(machine: &mut Machine, views: &[View]) -> Result<()> {
    if views.is_empty() {
        return Ok(());
    }
    let (s, cols) = same_shape(views)?;
    if s != cols {
        return Err(Error::NotSquare { rows: s, cols });
    }
    check_disjoint(machine.w(), views)?;
    let col = views[0].col();
    let mut batch = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut sink = Vec::new();
    for k in 1..=s / 2 {
        let paired = 2 * k != s;
        batch.clear();
        x.clear();
        for v in views {
            batch.extend((0..s).map(|i| AccessRequest::read(v.bank(i), v.bank(i), col + (i + k) % s)));
        }
        machine.step_into(&batch, &mut x)?;
        if paired {
            batch.clear();
            y.clear();
            for v in views {
                batch.extend((0..s).map(|i| AccessRequest::read(v.bank(i), v.bank(i), col + (i + s - k) % s)));
            }
            machine.step_into(&batch, &mut y)?;
        }
        batch.clear();
        for (n, v) in views.iter().enumerate() {
            batch.extend((0..s).map(|i| AccessRequest::write(v.bank(i), v.bank((i + k) % s), col + i, x[n * s + i])));
        }
        machine.step_into(&batch, &mut sink)?;
        if paired {
            batch.clear();
            for (n, v) in views.iter().enumerate() {
                batch.extend(
                    (0..s).map(|i| AccessRequest::write(v.bank(i), v.bank((i + s - k) % s), col + i, y[n * s + i])),
                );
            }
            machine.step_into(&batch, &mut sink)?;
        }
    }
    Ok(())
}

/// Row-major -> column-major conversion of every view (the value at linear
/// index `v` lands at `(v mod rows, v / rows)`).
pub fn to_column_major(machine: &mut Machine, views: &[View]) -> Result<()> {
    convert(machine, views, ConversionKind::ToColumnMajor)
}

/// Column-major -> row-major conversion; inverse of [`to_column_major`].
pub fn to_row_major(machine: &mut Machine, views: &[View]) -> Result<()> {
    convert(machine, views, ConversionKind::ToRowMajor)
}

fn convert(machine: &mut Machine, views: &[View], kind: ConversionKind) -> Result<()> {
    if views.is_empty() {
        return Ok(());
    }
    let (rows, cols) = same_shape(views)?;
    if rows == 1 || cols == 1 {
        // both layouts coincide
        return Ok(());
    }
    if rows == cols {
        return transpose_square(machine, views);
    }
    let schedule = machine.schedules.get(kind, rows, cols);
    apply_staged(machine, views, &schedule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::MachineConfig;

    fn loaded(w: usize, m: usize) -> Machine {
        let mut mc = Machine::new(MachineConfig::new(w, m).unwrap().traced());
        let rows: Vec<Vec<Word>> = (0..w).map(|i| (0..m).map(|j| (i * m + j) as Word).collect()).collect();
        mc.load_matrix(&rows).unwrap();
        mc
    }

    #[test]
    fn one_by_one_transpose_is_free() {
        let mut mc = loaded(1, 1);
        let v = mc.full_view();
        transpose_square(&mut mc, &[v]).unwrap();
        assert_eq!(mc.steps(), 0);
        assert_eq!(mc.cell(0, 0), 0);
    }

    #[test]
    fn two_by_two_transpose() {
        let mut mc = loaded(2, 2);
        let v = mc.full_view();
        transpose_square(&mut mc, &[v]).unwrap();
        assert_eq!(mc.snapshot(0, 2), vec![vec![0, 2], vec![1, 3]]);
        assert!(mc.audit().unwrap().is_empty());
    }

    #[test]
    fn transpose_cost_bound() {
        for s in [3usize, 4, 7, 16] {
            let mut mc = loaded(s, s);
            let v = mc.full_view();
            transpose_square(&mut mc, &[v]).unwrap();
            assert!(mc.steps() <= 2 * s as u64, "s={s}: {}", mc.steps());
            let snap = mc.snapshot(0, s);
            for i in 0..s {
                for j in 0..s {
                    assert_eq!(snap[i][j], (j * s + i) as Word);
                }
            }
        }
    }

    #[test]
    fn not_square() {
        let mut mc = loaded(2, 4);
        let v = mc.full_view();
        assert_eq!(transpose_square(&mut mc, &[v]), Err(Error::NotSquare { rows: 2, cols: 4 }));
    }

    #[test]
    fn column_major_example() {
        let mut mc = loaded(2, 4);
        let v = mc.full_view();
        to_column_major(&mut mc, &[v.clone()]).unwrap();
        // [a,b,c,d],[e,f,g,h] -> [a,c,e,g],[b,d,f,h]
        assert_eq!(mc.snapshot(0, 4), vec![vec![0, 2, 4, 6], vec![1, 3, 5, 7]]);
        assert!(mc.steps() <= 4 * 4);
        to_row_major(&mut mc, &[v]).unwrap();
        assert_eq!(mc.snapshot(0, 4), vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7]]);
        assert!(mc.audit().unwrap().is_empty());
    }

    #[test]
    fn identity_schedule_is_same_bank_moves() {
        let perm: Vec<usize> = (0..12).collect();
        let s = offline_schedule(3, 4, &perm).unwrap();
        assert_eq!(s.rounds().len(), 4);
        for round in s.rounds() {
            assert!(round.iter().all(|mv| mv.src_row == mv.dst_row));
        }
    }

    #[test]
    fn non_bijection_is_rejected() {
        assert_eq!(offline_schedule(2, 2, &[0, 0, 1, 2]), Err(Error::NotBijective));
        assert_eq!(offline_schedule(2, 2, &[0, 1, 2]), Err(Error::NotBijective));
        assert_eq!(offline_schedule(2, 2, &[0, 1, 2, 4]), Err(Error::NotBijective));
    }

    #[test]
    fn odd_degree_decomposition() {
        // degree 3 and 6 exercise the matching path and the mixed path
        for (r, c) in [(5usize, 3usize), (4, 6), (7, 9)] {
            let perm = column_major_perm(r, c);
            let s = offline_schedule(r, c, &perm).unwrap();
            assert_eq!(s.rounds().len(), c);
            s.validate().unwrap();
            assert_eq!(s.rounds().iter().map(Vec::len).sum::<usize>(), r * c);
        }
    }

    #[test]
    fn empty_schedule_costs_nothing() {
        let mut mc = loaded(2, 2);
        let v = mc.full_view();
        let s = Schedule::from_rounds(2, 2, Vec::new()).unwrap();
        apply_schedule(&mut mc, &[v], &s, 4).unwrap();
        assert_eq!(mc.steps(), 0);
    }

    #[test]
    fn one_round_is_two_steps() {
        let mut mc = loaded(4, 4);
        let v = mc.full_view();
        let round = (0..4u32).map(|i| Move { src_row: i, src_col: 0, dst_row: (i + 1) % 4, dst_col: 0 }).collect();
        let s = Schedule::from_rounds(4, 4, vec![round]).unwrap();
        let staging = mc.regions().staging;
        apply_schedule(&mut mc, &[v], &s, staging).unwrap();
        assert_eq!(mc.steps(), 2);
        assert_eq!(mc.cell(1, staging), 0);
        assert_eq!(mc.cell(0, staging), 12);
    }

    #[test]
    fn invalid_round_is_rejected() {
        let round = vec![
            Move { src_row: 0, src_col: 0, dst_row: 1, dst_col: 0 },
            Move { src_row: 1, src_col: 0, dst_row: 1, dst_col: 1 },
        ];
        assert!(matches!(Schedule::from_rounds(2, 2, vec![round]), Err(Error::InvalidSchedule(_))));
    }
}
