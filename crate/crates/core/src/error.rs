use alloc::string::String;

/// Errors reported by the numerical routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} outside {expected}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("domain violation: {0}")]
    Domain(String),
    #[error("unsupported mollifier (p = {p}, q = {q}): closed-form kernel needs q = 2 and an even integer p")]
    UnsupportedKernel { p: f64, q: f64 },
    #[error("kernel tail {tail:e} exceeds {eps:e} outside the window; smallest adequate theta is {min_theta}")]
    KernelTail { tail: f64, eps: f64, min_theta: f64 },
    #[error("mesh mismatch: path delta {path}, kernel delta {kernel}")]
    MeshMismatch { path: f64, kernel: f64 },
    #[error("insufficient length: {len} samples, need at least {required}")]
    InsufficientLength { len: usize, required: usize },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("peak capacity exceeded: {requested} peaks with {exclusion} exclusion bins need {needed} bins, only {available} available")]
    Capacity {
        requested: usize,
        exclusion: usize,
        needed: usize,
        available: usize,
    },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("estimation infeasible: {0}")]
    Infeasible(String),
    #[error("regression design is rank deficient: {0}")]
    RankDeficient(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_range(
    name: &'static str,
    value: f64,
    ok: bool,
    expected: &'static str,
) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            expected,
        })
    }
}
