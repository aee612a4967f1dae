//! Sequential oracles. They look only at the instance and the final
//! snapshot and share no code with the algorithms under test.

use dmm_core::Word;

use crate::instance::{Instance, Kind};

/// Sorted row-major: the snapshot equals the instance's words sorted and
/// reshaped.
pub fn check_sorted(inst: &Instance, out: &[Vec<Word>]) -> Result<(), String> {
    check_shape(inst, out)?;
    let mut want: Vec<Word> = inst.rows.concat();
    want.sort_unstable();
    let got: Vec<Word> = out.concat();
    match want.iter().zip(&got).position(|(a, b)| a != b) {
        None => Ok(()),
        Some(k) => Err(format!("cell ({}, {}): expected {}, found {}", k / inst.m, k % inst.m, want[k], got[k])),
    }
}

/// Row `i` holds exactly `m` copies of label `i`.
pub fn check_partitioned(inst: &Instance, out: &[Vec<Word>]) -> Result<(), String> {
    check_shape(inst, out)?;
    for (i, row) in out.iter().enumerate() {
        if let Some(c) = row.iter().position(|&x| x != i as Word) {
            return Err(format!("row {i}, column {c} holds {}", row[c]));
        }
    }
    Ok(())
}

/// Cell `(i, j)` of the output holds the label keyed `i*m + j` (low 32
/// bits), carrying the row-major source position of that key in the
/// instance as payload (high 32 bits).
pub fn check_permuted(inst: &Instance, out: &[Vec<Word>]) -> Result<(), String> {
    check_shape(inst, out)?;
    let m = inst.m;
    let mut source = vec![usize::MAX; inst.w * m];
    for (pos, &k) in inst.rows.iter().flatten().enumerate() {
        source[k as usize] = pos;
    }
    for (i, row) in out.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            let key = (x & 0xFFFF_FFFF) as usize;
            let payload = (x >> 32) as usize;
            if key != i * m + j || payload != source[key] {
                return Err(format!("cell ({i}, {j}) holds key {key} from position {payload}"));
            }
        }
    }
    Ok(())
}

pub fn check(inst: &Instance, out: &[Vec<Word>]) -> Result<(), String> {
    match inst.kind {
        Kind::Sort => check_sorted(inst, out),
        Kind::Partition => check_partitioned(inst, out),
        Kind::Permute => check_permuted(inst, out),
    }
}

fn check_shape(inst: &Instance, out: &[Vec<Word>]) -> Result<(), String> {
    if out.len() != inst.w || out.iter().any(|r| r.len() != inst.m) {
        return Err(format!("result is not {} x {}", inst.w, inst.m));
    }
    Ok(())
}
