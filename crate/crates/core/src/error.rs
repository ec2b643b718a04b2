use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor shapes or signal lengths do not line up.
    Dimension(String),
    /// A waveform or model parameter is out of its valid range.
    Parameter(String),
    /// A corruption recipe cannot produce a disturbance.
    Recipe(String),
    /// An API contract was violated (e.g. backward from a non-scalar).
    Contract(String),
    /// A loss or activation became NaN/Inf during training.
    NonFinite(NonFiniteSnapshot),
    /// A persisted artifact is inconsistent with what it claims to hold.
    Integrity(String),
}

/// Where training stopped when a loss went non-finite.
#[derive(Debug, Clone, PartialEq)]
pub struct NonFiniteSnapshot {
    pub pass_index: usize,
    pub epoch: usize,
    pub batch: usize,
    pub loss_apprentice: f64,
    pub loss_fidelity: f64,
    pub loss_time: f64,
    pub loss_freq: f64,
    pub loss_master: f64,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(msg) => write!(f, "dimension error: {msg}"),
            Error::Parameter(msg) => write!(f, "parameter error: {msg}"),
            Error::Recipe(msg) => write!(f, "recipe error: {msg}"),
            Error::Contract(msg) => write!(f, "contract error: {msg}"),
            Error::NonFinite(s) => write!(
                f,
                "non-finite loss at pass {} epoch {} batch {} \
                 (L_A={}, L_fid={}, L_time={}, L_freq={}, L_M={})",
                s.pass_index,
                s.epoch,
                s.batch,
                s.loss_apprentice,
                s.loss_fidelity,
                s.loss_time,
                s.loss_freq,
                s.loss_master
            ),
            Error::Integrity(msg) => write!(f, "integrity error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

macro_rules! dim_err {
    ($($arg:tt)*) => { $crate::Error::Dimension(alloc::format!($($arg)*)) };
}
pub(crate) use dim_err;
