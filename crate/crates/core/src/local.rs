//! Bank-local kernels. Every access goes through [`BankCtx`], so a kernel's
//! step cost is exactly the number of words it touches in its own bank.

use core::cell::Cell;

use crate::machine::{BankCtx, Word, EMPTY};

/// Low half of a word carries the key (label); the high half is payload.
pub const KEY_MASK: Word = 0xFFFF_FFFF;

/// Packs a payload and a key into one word.
pub fn pack(payload: u32, key: u32) -> Word {
    (u64::from(payload) << 32) | u64::from(key)
}

/// Key of a labeled word; `EMPTY` maps to `None`.
#[inline]
pub fn key_of(word: Word) -> Option<u64> {
    if word == EMPTY {
        None
    } else {
        Some(word & KEY_MASK)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascending,
    Descending,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::Ascending => Direction::Descending,
            Direction::Descending => Direction::Ascending,
        }
    }
}

/// In-place heapsort of `len` words at `lo`.
pub fn heapsort(ctx: &mut BankCtx<'_>, lo: usize, len: usize, dir: Direction) {
    let less = |a: Word, b: Word| match dir {
        Direction::Ascending => a < b,
        Direction::Descending => a > b,
    };
    if len < 2 {
        return;
    }
    for root in (0..len / 2).rev() {
        sift_down(ctx, lo, root, len, &less);
    }
    for end in (1..len).rev() {
        let top = ctx.read(lo);
        let last = ctx.read(lo + end);
        ctx.write(lo + end, top);
        ctx.write(lo, last);
        sift_down(ctx, lo, 0, end, &less);
    }
}

fn sift_down(ctx: &mut BankCtx<'_>, lo: usize, mut root: usize, end: usize, less: &impl Fn(Word, Word) -> bool) {
    let x = ctx.read(lo + root);
    let start = root;
    loop {
        let mut child = 2 * root + 1;
        if child >= end {
            break;
        }
        let mut c = ctx.read(lo + child);
        if child + 1 < end {
            let d = ctx.read(lo + child + 1);
            if less(c, d) {
                child += 1;
                c = d;
            }
        }
        if !less(x, c) {
            break;
        }
        ctx.write(lo + root, c);
        root = child;
    }
    if root != start {
        ctx.write(lo + root, x);
    }
}

/// One stable counting-sort pass on `digit(word) in [0, base)`, using
/// `base` counter words at `counts` and `len` staging words at `staging`.
pub fn counting_pass(
    ctx: &mut BankCtx<'_>,
    lo: usize,
    len: usize,
    counts: usize,
    staging: usize,
    base: usize,
    digit: impl Fn(Word) -> usize,
) {
    for b in 0..base {
        ctx.write(counts + b, 0);
    }
    for i in 0..len {
        let d = digit(ctx.read(lo + i));
        let c = ctx.read(counts + d);
        ctx.write(counts + d, c + 1);
    }
    let mut acc = 0;
    for b in 0..base {
        let c = ctx.read(counts + b);
        ctx.write(counts + b, acc);
        acc += c;
    }
    for i in 0..len {
        let x = ctx.read(lo + i);
        let d = digit(x);
        let p = ctx.read(counts + d);
        ctx.write(counts + d, p + 1);
        ctx.write(staging + p as usize, x);
    }
    for i in 0..len {
        let x = ctx.read(staging + i);
        ctx.write(lo + i, x);
    }
}

/// Number of base-`base` digits needed for keys in `[0, domain)`.
pub fn radix_passes(domain: u64, base: usize) -> u32 {
    let base = base.max(2) as u64;
    let mut passes = 1;
    let mut span = base;
    while span < domain {
        span = span.saturating_mul(base);
        passes += 1;
    }
    passes
}

/// LSD radix sort by `key_of` (EMPTY sorts last as key `domain - 1`).
/// Keys are range-checked as the first pass reads them; on an out-of-range
/// key the first offender is returned and the row order is unspecified.
#[allow(clippy::too_many_arguments)]
pub fn radix_sort(
    ctx: &mut BankCtx<'_>,
    lo: usize,
    len: usize,
    counts: usize,
    staging: usize,
    base: usize,
    domain: u64,
    dir: Direction,
) -> Result<(), u64> {
    let top = domain.saturating_sub(1);
    let bad = Cell::new(None);
    let key = |x: Word| -> u64 {
        let k = match key_of(x) {
            Some(k) if k >= domain => {
                if bad.get().is_none() {
                    bad.set(Some(k));
                }
                top
            }
            Some(k) => k,
            None => top,
        };
        match dir {
            Direction::Ascending => k,
            Direction::Descending => top - k,
        }
    };
    let base = base.max(2);
    if base.is_power_of_two() {
        let (bits, mask) = (base.trailing_zeros(), base as u64 - 1);
        for pass in 0..radix_passes(domain, base) {
            let shift = (pass * bits).min(63);
            counting_pass(ctx, lo, len, counts, staging, base, |x| ((key(x) >> shift) & mask) as usize);
        }
    } else {
        let mut div = 1u64;
        for _ in 0..radix_passes(domain, base) {
            let d = div;
            counting_pass(ctx, lo, len, counts, staging, base, |x| ((key(x) / d) % base as u64) as usize);
            div = div.saturating_mul(base as u64);
        }
    }
    match bad.get() {
        Some(k) => Err(k),
        None => Ok(()),
    }
}
