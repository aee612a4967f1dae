//! Instance files: a header line `kind w m seed`, then `w` lines of `m`
//! space-separated decimal words.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use dmm_core::Word;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Sort,
    Partition,
    Permute,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Sort => "sort",
            Kind::Partition => "partition",
            Kind::Permute => "permute",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sort" => Ok(Kind::Sort),
            "partition" => Ok(Kind::Partition),
            "permute" => Ok(Kind::Permute),
            _ => Err(format!("unknown instance kind `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub kind: Kind,
    pub w: usize,
    pub m: usize,
    pub seed: u64,
    pub rows: Vec<Vec<Word>>,
}

/// Sort words are drawn below this bound so files stay readable.
pub const SORT_WORD_BOUND: Word = 1 << 32;

impl Instance {
    /// Deterministic instance for `seed`:
    /// sort words uniform in `[0, 2^32)`, partition labels a random
    /// arrangement of `m` copies of each `i < w`, permute keys a uniform
    /// random bijection of `[0, wm)` (key `i*m + j` names destination
    /// row `i`, column `j`).
    pub fn generate(kind: Kind, w: usize, m: usize, seed: u64) -> Result<Self> {
        if w == 0 || m == 0 {
            return Err(HarnessError::Shape("w and m must be positive".into()));
        }
        if (w * m) as u64 >= u64::from(u32::MAX) {
            return Err(HarnessError::Shape("w * m must fit in 32 bits".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flat: Vec<Word> = match kind {
            Kind::Sort => (0..w * m).map(|_| rng.gen_range(0..SORT_WORD_BOUND)).collect(),
            Kind::Partition => {
                let mut v: Vec<Word> = (0..w * m).map(|k| (k / m) as Word).collect();
                v.shuffle(&mut rng);
                v
            }
            Kind::Permute => {
                let mut v: Vec<Word> = (0..(w * m) as Word).collect();
                v.shuffle(&mut rng);
                v
            }
        };
        let rows = flat.chunks(m).map(<[Word]>::to_vec).collect();
        Ok(Instance { kind, w, m, seed, rows })
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "{} {} {} {}", self.kind, self.w, self.m, self.seed)?;
        write_rows(&mut out, &self.rows)
    }

    pub fn read_from(input: impl BufRead) -> Result<Self> {
        let mut lines = input.lines().enumerate().filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
        let (_, header) = lines.next().ok_or(HarnessError::Parse { line: 1, msg: "empty file".into() })?;
        let header = header?;
        let f: Vec<&str> = header.split_whitespace().collect();
        if f.len() != 4 {
            return Err(HarnessError::Parse { line: 1, msg: "header must be `kind w m seed`".into() });
        }
        let bad = |msg: String| HarnessError::Parse { line: 1, msg };
        let kind: Kind = f[0].parse().map_err(bad)?;
        let num = |s: &str| s.parse::<u64>().map_err(|e| HarnessError::Parse { line: 1, msg: format!("`{s}`: {e}") });
        let (w, m, seed) = (num(f[1])? as usize, num(f[2])? as usize, num(f[3])?);
        let rows = read_rows(lines, w, m)?;
        Ok(Instance { kind, w, m, seed, rows })
    }
}

pub fn write_rows(out: &mut impl Write, rows: &[Vec<Word>]) -> Result<()> {
    for r in rows {
        let line: Vec<String> = r.iter().map(Word::to_string).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Reads exactly `w` rows of `m` words from numbered lines.
pub fn read_rows(
    lines: impl Iterator<Item = (usize, std::io::Result<String>)>,
    w: usize,
    m: usize,
) -> Result<Vec<Vec<Word>>> {
    let mut rows = Vec::with_capacity(w);
    for (idx, line) in lines {
        let line = line?;
        let row: Vec<Word> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|e| HarnessError::Parse { line: idx + 1, msg: format!("`{t}`: {e}") }))
            .collect::<Result<_>>()?;
        if row.len() != m {
            return Err(HarnessError::Parse { line: idx + 1, msg: format!("expected {m} words, found {}", row.len()) });
        }
        rows.push(row);
    }
    if rows.len() != w {
        return Err(HarnessError::Parse { line: 0, msg: format!("expected {w} rows, found {}", rows.len()) });
    }
    Ok(rows)
}

/// Reads a bare matrix file (no header) of shape `w x m`.
pub fn read_matrix(input: impl BufRead, w: usize, m: usize) -> Result<Vec<Vec<Word>>> {
    let lines = input.lines().enumerate().filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    read_rows(lines, w, m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let inst = Instance::generate(Kind::Sort, 3, 4, 9).unwrap();
        let mut buf = Vec::new();
        inst.write_to(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("sort 3 4 9\n"));
        assert_eq!(Instance::read_from(&buf[..]).unwrap(), inst);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = Instance::generate(Kind::Partition, 4, 16, 7).unwrap();
        assert_eq!(a, Instance::generate(Kind::Partition, 4, 16, 7).unwrap());
        assert_ne!(a.rows, Instance::generate(Kind::Partition, 4, 16, 8).unwrap().rows);
    }

    #[test]
    fn partition_has_m_copies() {
        let inst = Instance::generate(Kind::Partition, 8, 5, 1).unwrap();
        let mut count = [0; 8];
        inst.rows.iter().flatten().for_each(|&x| count[x as usize] += 1);
        assert!(count.iter().all(|&c| c == 5));
    }

    #[test]
    fn permute_is_a_bijection() {
        let inst = Instance::generate(Kind::Permute, 8, 4, 3).unwrap();
        let mut keys: Vec<Word> = inst.rows.concat();
        keys.sort_unstable();
        assert_eq!(keys, (0..32).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_ragged_rows() {
        let err = Instance::read_from("sort 2 2 0\n1 2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, HarnessError::Parse { line: 3, .. }));
    }
}
