use thiserror::Error;

/// Errors raised by the numerical layers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step budget of {max_steps} steps exceeded at t = {t}")]
    MaxStepsExceeded { max_steps: usize, t: f64 },

    #[error("step size underflow (h = {h:e}) at t = {t}: stiffness or singularity")]
    StepUnderflow { h: f64, t: f64 },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("time {t} outside segment [{t_start}, {t_end}]")]
    OutOfRange { t: f64, t_start: f64, t_end: f64 },

    #[error("crossing refinement did not converge (|H| = {residual:e})")]
    RefinementFailed { residual: f64 },

    #[error("vanishing guard gradient at {at:?}")]
    DegenerateGuard { at: Vec<f64> },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("state {at:?} is not on the impact surface (|H| = {residual:e})")]
    NotOnSection { at: Vec<f64>, residual: f64 },

    #[error("no impact within horizon {horizon}")]
    NoImpact { horizon: f64 },

    #[error("trajectory left the state domain at t = {t}")]
    LeftDomain { t: f64 },

    #[error("Zeno behaviour suspected after {impacts} impacts at t = {t}")]
    ZenoSuspected { impacts: usize, t: f64 },

    #[error("fixed-point iteration did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },

    #[error("not a fixed point of the return map (residual {residual:e})")]
    NotFixedPoint { residual: f64 },

    #[error("crossing angle degenerate (|sin| = {sine:e})")]
    DegenerateAngle { sine: f64 },

    #[error("finite impact set: image {image} is not within {radius} of any member")]
    SnapFailure { image: f64, radius: f64 },

    #[error("orbit approaches a fixed point of the field (distance {distance:e})")]
    ApproachesFixedPoint { distance: f64 },

    #[error("unknown model '{0}'")]
    UnknownModel(String),
}

impl Error {
    /// Violations of the model hypotheses, as opposed to plain numerical failures.
    pub fn is_hypothesis_violation(&self) -> bool {
        matches!(
            self,
            Error::DegenerateGuard { .. }
                | Error::DegenerateAngle { .. }
                | Error::ZenoSuspected { .. }
                | Error::SnapFailure { .. }
                | Error::ApproachesFixedPoint { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
