//! Empirical companion to the heavy-color bound: how many labels survive
//! one communication phase when each row starts with `k` labels.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;
use rand::seq::SliceRandom;
use rand::RngCore;

use super::{color_of, communication_phase, destination, draw_and_broadcast_hash, label, load_labels, slot};
use super::{preprocess_shuffle, HashOracle};
use crate::error::Result;
use crate::machine::{Machine, MachineConfig, Word, EMPTY};

#[derive(Debug, Clone, PartialEq)]
pub struct HeavyTailRow {
    pub k: usize,
    pub rows: u64,
    /// Mean number of labels left in a row after the phase.
    pub mean_leftover: f64,
    /// Mean number of labels whose color occurs more than `alpha` times.
    pub mean_heavy: f64,
    /// `m (k / 2m)^alpha`.
    pub envelope: f64,
}

fn heavy_labels(row: &[Word], m: usize, alpha: usize, h: &HashOracle) -> usize {
    let mut per_color = alloc::vec![0usize; m];
    for &x in row {
        if let Some((i, j)) = destination(x, m) {
            per_color[color_of(i as u64, j as u64, h)] += 1;
        }
    }
    per_color.iter().filter(|&&c| c > alpha).sum()
}

/// For each `k`: `runs` machines of shape `w x m` get a random permutation,
/// the preprocessing shuffle, and are cut down to the first `k` labels per
/// row; then one hash is drawn and one communication phase runs.
pub fn heavy_tail_experiment<R: RngCore + ?Sized>(
    w: usize,
    m: usize,
    alpha: usize,
    ks: &[usize],
    runs: usize,
    rng: &mut R,
) -> Result<Vec<HeavyTailRow>> {
    let cfg = MachineConfig::new(w, m)?;
    let mut out = Vec::with_capacity(ks.len());
    let mut keys: Vec<usize> = (0..w * m).collect();
    for &k in ks {
        let k = k.min(m);
        let (mut left, mut heavy, mut rows) = (0u64, 0u64, 0u64);
        for _ in 0..runs {
            keys.shuffle(rng);
            let matrix: Vec<Vec<Word>> =
                keys.chunks(m).map(|c| c.iter().map(|&x| label(x / m, x % m, m, 0)).collect()).collect();
            let mut mc = Machine::new(cfg.clone());
            load_labels(&mut mc, &matrix)?;
            preprocess_shuffle(&mut mc, rng)?;
            let misc = mc.regions().misc;
            for b in 0..w {
                let mut row = mc.bank(b)[..m].to_vec();
                row[k..].fill(EMPTY);
                mc.load_row(b, 0, &row)?;
                mc.load_row(b, misc + slot::COUNT, &[k as Word])?;
            }
            let h = draw_and_broadcast_hash(&mut mc, rng, misc + slot::HASH)?;
            for b in 0..w {
                heavy += heavy_labels(&mc.bank(b)[..k], m, alpha, &h) as u64;
            }
            let counts = communication_phase(&mut mc, &h, alpha)?;
            left += counts.iter().map(|&c| u64::from(c)).sum::<u64>();
            rows += w as u64;
        }
        let envelope = m as f64 * libm::pow(k as f64 / (2 * m) as f64, alpha as f64);
        out.push(HeavyTailRow {
            k,
            rows,
            mean_leftover: left as f64 / rows.max(1) as f64,
            mean_heavy: heavy as f64 / rows.max(1) as f64,
            envelope,
        });
    }
    Ok(out)
}

impl HeavyTailRow {
    pub const CSV_HEADER: &'static str = "k,rows,mean_leftover,mean_heavy,envelope";

    pub fn csv(rows: &[HeavyTailRow]) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in rows {
            let _ = writeln!(s, "{},{},{:.6},{:.6},{:.6}", r.k, r.rows, r.mean_leftover, r.mean_heavy, r.envelope);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn empty_rows_leave_nothing() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let r = heavy_tail_experiment(64, 8, 4, &[0], 2, &mut rng).unwrap();
        assert_eq!(r[0].mean_leftover, 0.0);
        assert_eq!(r[0].rows, 128);
    }

    #[test]
    fn csv_layout() {
        let row = HeavyTailRow { k: 4, rows: 10, mean_leftover: 0.5, mean_heavy: 1.0, envelope: 0.25 };
        let csv = HeavyTailRow::csv(&[row]);
        assert_eq!(csv.lines().nth(1), Some("4,10,0.500000,1.000000,0.250000"));
    }
}
