use core::fmt;

/// Everything that can go wrong while driving the machine or one of the
/// algorithms built on top of it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Two accesses of one strict-mode step hit the same bank.
    ConflictViolation { step: u64, bank: usize },
    OutOfBounds { bank: usize, offset: usize },
    DuplicateProcessor { processor: usize },
    /// Lockstep views handed to one algorithm share a bank.
    OverlappingViews { bank: usize },
    InvalidConfig(&'static str),
    CapacityExceeded { needed: usize, available: usize },
    TraceIncomplete,
    NotSquare { rows: usize, cols: usize },
    NotBijective,
    InvalidSchedule(&'static str),
    ShapeViolation(&'static str),
    KeyOutOfRange { key: u64, domain: u64 },
    InvalidInstance(&'static str),
    DivisibilityViolation { rows: usize, pieces: usize },
    PostconditionFailed { retries: usize },
    PackingOverflow { row: usize, load: usize, capacity: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ConflictViolation { step, bank } => {
                write!(f, "bank conflict on bank {bank} at step {step}")
            }
            Error::OutOfBounds { bank, offset } => {
                write!(f, "access out of bounds: bank {bank}, offset {offset}")
            }
            Error::DuplicateProcessor { processor } => {
                write!(f, "processor {processor} issued more than one access in a step")
            }
            Error::OverlappingViews { bank } => write!(f, "sibling views share bank {bank}"),
            Error::InvalidConfig(why) => write!(f, "invalid machine config: {why}"),
            Error::CapacityExceeded { needed, available } => {
                write!(f, "needs {needed} words of scratch, only {available} available")
            }
            Error::TraceIncomplete => write!(f, "trace recording was not enabled"),
            Error::NotSquare { rows, cols } => write!(f, "region is {rows}x{cols}, not square"),
            Error::NotBijective => write!(f, "mapping is not a bijection"),
            Error::InvalidSchedule(why) => write!(f, "invalid schedule: {why}"),
            Error::ShapeViolation(why) => write!(f, "shape violation: {why}"),
            Error::KeyOutOfRange { key, domain } => {
                write!(f, "key {key} outside domain [0, {domain})")
            }
            Error::InvalidInstance(why) => write!(f, "invalid instance: {why}"),
            Error::DivisibilityViolation { rows, pieces } => {
                write!(f, "{rows} rows cannot be split into {pieces} equal pieces")
            }
            Error::PostconditionFailed { retries } => {
                write!(f, "output still unsorted after {retries} cleanup retries")
            }
            Error::PackingOverflow { row, load, capacity } => {
                write!(f, "row {row} holds {load} leftovers, packed capacity is {capacity}")
            }
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;

impl core::error::Error for Error {}
