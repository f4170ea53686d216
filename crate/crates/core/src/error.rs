use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the core models and analysis routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter or input violates its documented domain.
    InvalidParameter { name: &'static str, reason: &'static str },
    /// Arc length outside `[0, total_length]`.
    OutOfRange { s: f64, total_length: f64 },
    /// The queried point is farther from the centerline than the corridor allows.
    OffCourse { distance: f64 },
    /// The simulated vehicle left the course corridor.
    CorridorExit { t: f64, distance: f64 },
    /// |beta| reached pi/2; the linear tire model is no longer meaningful.
    LinearModelViolation { t: f64, beta: f64 },
    /// A series is shorter than the operation requires.
    SeriesTooShort { needed: usize, got: usize },
    /// Series that must be aligned have different lengths.
    LengthMismatch { expected: usize, got: usize },
    /// A threshold crossing that was required never happened.
    NoCrossing,
    /// Division by a zero reference quantity.
    ZeroBaseline,
    /// Measured outputs carry no variation.
    DegenerateData,
    /// The identification loss became non-finite.
    Diverged,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter { name, reason } => write!(f, "invalid parameter `{name}`: {reason}"),
            Error::OutOfRange { s, total_length } => {
                write!(f, "arc length {s} outside course [0, {total_length}]")
            }
            Error::OffCourse { distance } => write!(f, "point is {distance:.3} m from the centerline"),
            Error::CorridorExit { t, distance } => {
                write!(f, "vehicle left the course corridor at t = {t:.3} s ({distance:.2} m from the centerline)")
            }
            Error::LinearModelViolation { t, beta } => {
                write!(f, "side-slip |beta| = {:.4} rad reached pi/2 at t = {t:.3} s", libm::fabs(*beta))
            }
            Error::SeriesTooShort { needed, got } => write!(f, "series too short: need {needed}, got {got}"),
            Error::LengthMismatch { expected, got } => {
                write!(f, "series length mismatch: expected {expected}, got {got}")
            }
            Error::NoCrossing => f.write_str("no crossing found"),
            Error::ZeroBaseline => f.write_str("zero baseline"),
            Error::DegenerateData => f.write_str("degenerate data"),
            Error::Diverged => f.write_str("loss is not finite (diverged model)"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn require(cond: bool, name: &'static str, reason: &'static str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, reason })
    }
}
