//! Machine-wide reduction and broadcast over one word per row.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::machine::{AccessRequest, Machine, Word};

pub(crate) fn ceil_log2(x: usize) -> u32 {
    if x <= 1 {
        0
    } else {
        usize::BITS - (x - 1).leading_zeros()
    }
}

/// Sums the word at `slot` of every bank with a binary tree. The total ends
/// up in processor 0's register and is returned; `mailbox` is a scratch
/// offset used from the second round on. Costs `2 * ceil(log2 w)` steps.
pub fn tree_reduce_sum(machine: &mut Machine, slot: usize, mailbox: usize) -> Result<Word> {
    let w = machine.w();
    machine.regions().require(slot.max(mailbox) + 1)?;
    if w == 1 {
        return Ok(machine.cell(0, slot));
    }
    let mut regs: Vec<Word> = vec![0; w];
    let mut batch = Vec::with_capacity(w / 2 + 1);
    let mut out = Vec::with_capacity(w / 2 + 1);

    // first round: receivers read the partner, then their own slot
    let receivers: Vec<usize> = (0..w).step_by(2).collect();
    batch.extend(receivers.iter().filter(|&&r| r + 1 < w).map(|&r| AccessRequest::read(r, r + 1, slot)));
    machine.step_into(&batch, &mut out)?;
    let mut it = out.drain(..);
    for &r in &receivers {
        if r + 1 < w {
            regs[r] = it.next().unwrap_or(0);
        }
    }
    drop(it);
    batch.clear();
    batch.extend(receivers.iter().map(|&r| AccessRequest::read(r, r, slot)));
    machine.step_into(&batch, &mut out)?;
    for (&r, v) in receivers.iter().zip(out.drain(..)) {
        regs[r] = regs[r].wrapping_add(v);
    }

    let mut stride = 2;
    while stride < w {
        let pairs: Vec<(usize, usize)> =
            (0..w).step_by(2 * stride).filter(|r| r + stride < w).map(|r| (r, r + stride)).collect();
        batch.clear();
        batch.extend(pairs.iter().map(|&(r, s)| AccessRequest::write(s, r, mailbox, regs[s])));
        machine.step_into(&batch, &mut out)?;
        batch.clear();
        batch.extend(pairs.iter().map(|&(r, _)| AccessRequest::read(r, r, mailbox)));
        machine.step_into(&batch, &mut out)?;
        for (&(r, _), v) in pairs.iter().zip(out.drain(..)) {
            regs[r] = regs[r].wrapping_add(v);
        }
        stride *= 2;
    }
    Ok(regs[0])
}

/// Copies the word at `offset` of rows `[0, holders)` to every other row,
/// doubling the holder set each round (read, then write: 2 steps a round).
/// Row `j` ends up with the word of row `j mod holders`.
pub fn replicate_by_doubling(machine: &mut Machine, offset: usize, holders: usize) -> Result<()> {
    let w = machine.w();
    if holders == 0 {
        return Err(Error::InvalidConfig("doubling needs at least one holder"));
    }
    let mut c = holders;
    let mut batch = Vec::new();
    let mut out = Vec::new();
    while c < w {
        let targets: Vec<(usize, usize)> = (0..c).filter(|r| r + c < w).map(|r| (r, r + c)).collect();
        batch.clear();
        batch.extend(targets.iter().map(|&(src, dst)| AccessRequest::read(dst, src, offset)));
        machine.step_into(&batch, &mut out)?;
        batch.clear();
        batch.extend(targets.iter().zip(out.drain(..)).map(|(&(_, dst), v)| AccessRequest::write(dst, dst, offset, v)));
        machine.step_into(&batch, &mut out)?;
        c *= 2;
    }
    Ok(())
}

/// Broadcasts the `len` words stored in bank 0 at `[offset, offset + len)`.
/// Row `j` receives word `j mod len` at `offset`: the first `len` rows pull
/// their word from bank 0 in a pipelined `len`-step phase, then the rest is
/// replicated by doubling. Total cost `len + 2 * ceil(log2(w / len))`.
pub fn broadcast(machine: &mut Machine, offset: usize, len: usize) -> Result<()> {
    let regions = machine.regions();
    if len == 0 {
        return Ok(());
    }
    regions.require(offset + len)?;
    let w = machine.w();
    let len = len.min(w);
    let mut batch = Vec::with_capacity(2);
    let mut out = Vec::with_capacity(1);
    // step t: processor t+1 reads its word from bank 0, processor t writes
    // the word it read in the previous step
    let mut held: Option<(usize, Word)> = None;
    for t in 0..len {
        batch.clear();
        if t + 1 < len {
            batch.push(AccessRequest::read(t + 1, 0, offset + t + 1));
        }
        if let Some((p, v)) = held {
            batch.push(AccessRequest::write(p, p, offset, v));
        }
        if batch.is_empty() {
            break;
        }
        machine.step_into(&batch, &mut out)?;
        held = if t + 1 < len { Some((t + 1, out.pop().unwrap_or(0))) } else { None };
    }
    replicate_by_doubling(machine, offset, len)
}
