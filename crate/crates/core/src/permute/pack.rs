//! Packing leftovers into a narrow `w x m'` matrix.

use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, RngCore};

use super::{slot, PermuteParams};
use crate::collective::{broadcast, tree_reduce_sum};
use crate::error::{Error, Result};
use crate::machine::{AccessRequest, Machine, View, Word, EMPTY};

/// The leftover labels, compacted at the front of the input region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedMatrix {
    /// `w x m'` view over offsets `[0, m')` of every bank.
    pub view: View,
    pub random_words: u64,
    /// Number of heavy-to-light transfers that took place.
    pub transfers: u64,
}

/// `t` matching rounds. In round `i` a random offset `t_i` is broadcast and
/// row `j` looks at row `j + t_i (mod w)`: if `j` is heavy (load above
/// `2 * total / w + alpha`) and the partner is light and has not received
/// anything yet, `j` hands its last `ceil(2m / t)` labels over. Rows keep
/// their labels compacted at the front throughout; a final reduction checks
/// that every row fits in `m'` words.
pub fn pack_leftovers<R: RngCore + ?Sized>(
    machine: &mut Machine,
    rng: &mut R,
    params: &PermuteParams,
    total: u64,
) -> Result<PackedMatrix> {
    let (w, m) = (machine.w(), machine.m());
    let width = params.packed_width.min(m);
    let misc = machine.regions().misc;
    let (count_at, received_at, offset_at) = (misc + slot::COUNT, misc + slot::RECEIVED, misc + slot::OFFSET);
    let theta = params.heavy_load(w, total);
    let q = params.transfer(m);
    let banks: Vec<usize> = (0..w).collect();

    let mut count = vec![0usize; w];
    machine.local_phase(&banks, |b, ctx| {
        count[b] = ctx.read(count_at) as usize;
        ctx.write(received_at, 0);
    })?;

    let mut packed = PackedMatrix { view: machine.view(&banks, 0..width)?, random_words: 0, transfers: 0 };
    let mut batch = Vec::with_capacity(w);
    let mut vals = Vec::with_capacity(w);
    let mut sink = Vec::new();
    for _ in 0..params.t {
        let off = rng.gen_range(1..=w);
        packed.random_words += 1;
        machine.step_into(&[AccessRequest::write(0, 0, offset_at, off as Word)], &mut sink)?;
        broadcast(machine, offset_at, 1)?;
        machine.local_phase(&banks, |_, ctx| {
            ctx.read(offset_at);
        })?;
        if off % w == 0 {
            continue;
        }
        let heavy: Vec<usize> = (0..w).filter(|&b| count[b] > theta).collect();
        let partner = |b: usize| (b + off) % w;

        batch.clear();
        vals.clear();
        batch.extend(heavy.iter().map(|&b| AccessRequest::read(b, partner(b), count_at)));
        machine.step_into(&batch, &mut vals)?;
        let partner_count: Vec<usize> = vals.iter().map(|&v| v as usize).collect();
        batch.clear();
        vals.clear();
        batch.extend(heavy.iter().map(|&b| AccessRequest::read(b, partner(b), received_at)));
        machine.step_into(&batch, &mut vals)?;

        // (giver, receiver, receiver's count, labels moved)
        let moves: Vec<(usize, usize, usize, usize)> = heavy
            .iter()
            .zip(partner_count.iter().zip(vals.iter()))
            .filter(|&(_, (&pc, &rcv))| pc <= theta && rcv == 0 && pc + q <= m)
            .map(|(&b, (&pc, _))| (b, partner(b), pc, q.min(count[b])))
            .collect();

        for s in 0..q {
            batch.clear();
            vals.clear();
            let active: Vec<&(usize, usize, usize, usize)> = moves.iter().filter(|mv| s < mv.3).collect();
            batch.extend(active.iter().map(|&&(b, _, _, _)| AccessRequest::read(b, b, count[b] - 1 - s)));
            machine.step_into(&batch, &mut vals)?;
            batch.clear();
            batch.extend(active.iter().zip(vals.iter()).map(|(&&(b, p, pc, _), &x)| AccessRequest::write(b, p, pc + s, x)));
            machine.step_into(&batch, &mut sink)?;
            batch.clear();
            batch.extend(active.iter().map(|&&(b, _, _, _)| AccessRequest::write(b, b, count[b] - 1 - s, EMPTY)));
            machine.step_into(&batch, &mut sink)?;
        }
        batch.clear();
        batch.extend(moves.iter().map(|&(b, p, pc, n)| AccessRequest::write(b, p, count_at, (pc + n) as Word)));
        machine.step_into(&batch, &mut sink)?;
        batch.clear();
        batch.extend(moves.iter().map(|&(b, p, _, _)| AccessRequest::write(b, p, received_at, 1)));
        machine.step_into(&batch, &mut sink)?;
        batch.clear();
        batch.extend(moves.iter().map(|&(b, _, _, n)| AccessRequest::write(b, b, count_at, (count[b] - n) as Word)));
        machine.step_into(&batch, &mut sink)?;
        for &(b, p, pc, n) in &moves {
            count[b] -= n;
            count[p] = pc + n;
        }
        packed.transfers += moves.len() as u64;
    }

    // every row reports whether it overflows; the verdict reaches all rows
    let flag = misc + 2;
    machine.local_phase(&banks, |b, ctx| ctx.write(flag, u64::from(count[b] > width)))?;
    let over = tree_reduce_sum(machine, flag, misc + slot::MAILBOX)?;
    machine.step_into(&[AccessRequest::write(0, 0, flag, over)], &mut sink)?;
    broadcast(machine, flag, 1)?;
    if over > 0 {
        let row = (0..w).find(|&b| count[b] > width).unwrap_or(0);
        return Err(Error::PackingOverflow { row, load: count[row], capacity: width });
    }
    Ok(packed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::MachineConfig;
    use crate::permute::{label, load_labels};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(w: usize, m: usize, loads: &[usize]) -> Machine {
        let mut mc = Machine::new(MachineConfig::new(w, m).unwrap().traced());
        let mut next = 0;
        let rows: Vec<Vec<Word>> = loads
            .iter()
            .map(|&k| {
                (0..m)
                    .map(|c| {
                        if c < k {
                            next += 1;
                            label((next - 1) / m, (next - 1) % m, m, 0)
                        } else {
                            EMPTY
                        }
                    })
                    .collect()
            })
            .collect();
        load_labels(&mut mc, &rows).unwrap();
        let misc = mc.regions().misc;
        for (b, &k) in loads.iter().enumerate() {
            mc.load_row(b, misc + slot::COUNT, &[k as Word]).unwrap();
        }
        mc
    }

    fn labels_in(mc: &Machine, width: usize) -> Vec<Word> {
        let mut v: Vec<Word> = mc.snapshot(0, width).concat().into_iter().filter(|&x| x != EMPTY).collect();
        v.sort_unstable();
        v
    }

    #[test]
    fn narrow_rows_only_compact() {
        let (w, m) = (64, 8);
        let loads: Vec<usize> = (0..w).map(|b| b % 3).collect();
        let mut mc = setup(w, m, &loads);
        let before = labels_in(&mc, m);
        let params = PermuteParams::new(w, m);
        let total = loads.iter().sum::<usize>() as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = pack_leftovers(&mut mc, &mut rng, &params, total).unwrap();
        assert_eq!(p.transfers, 0);
        assert_eq!(labels_in(&mc, m), before);
        assert!(mc.audit().unwrap().is_empty());
    }

    #[test]
    fn one_heavy_row_drains() {
        let (w, m) = (4096, 64);
        let params = PermuteParams::new(w, m);
        let width = params.packed_width;
        let mut loads = vec![0; w];
        loads[17] = 2 * width;
        let mut mc = setup(w, m, &loads);
        let before = labels_in(&mc, m);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = pack_leftovers(&mut mc, &mut rng, &params, (2 * width) as u64).unwrap();
        assert!(p.transfers > 0);
        assert_eq!(labels_in(&mc, width), before);
        assert!((0..w).all(|b| mc.cell(b, mc.regions().misc + slot::COUNT) as usize <= width));
        assert!(mc.audit().unwrap().is_empty());
    }
}
