use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum RdError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("codebook size overflow: nR = {requested:.3} bits exceeds the index type; max feasible nR is {max_feasible} bits")]
    SizeOverflow { requested: f64, max_feasible: u32 },

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("undefined reverse-channel row for output symbol {0}")]
    UndefinedRow(usize),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RdError>;

/// Enumeration and materialization limits.
///
/// `RDLAB_BUDGET` (a state count) overrides the enumeration budgets at load
/// time; the per-run config can override individual fields.
#[derive(Debug, Clone, Copy)]
pub struct Budget {
    /// Max number of enumerated joint states (e.g. |X|^n) for exact sweeps.
    pub enum_states: u64,
    /// Max number of materialized codeword symbols (words * n).
    pub codebook_symbols: u64,
    /// Max number of enumerated sequences |Y|^n for a binning codebook.
    pub binning_states: u64,
    /// Max number of conditional type classes in the collapsed sampler.
    pub type_classes: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            enum_states: 1 << 22,
            codebook_symbols: 1 << 24,
            binning_states: 1 << 20,
            type_classes: 4_000_000,
        }
    }
}

impl Budget {
    /// Default budget with the `RDLAB_BUDGET` env override applied.
    pub fn from_env() -> Self {
        let mut b = Budget::default();
        if let Ok(s) = std::env::var("RDLAB_BUDGET") {
            if let Ok(v) = s.trim().parse::<u64>() {
                b.enum_states = v;
                b.binning_states = v;
            }
        }
        b
    }
}
