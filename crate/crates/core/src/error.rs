use thiserror::Error;

/// Errors produced by the beam model, the information calculators and the
/// estimators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason} (got {value})")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("quadrature did not converge: error estimate {achieved:e} exceeds tolerance {requested:e} after {subdivisions} subdivisions")]
    QuadratureNonConvergence {
        achieved: f64,
        requested: f64,
        subdivisions: usize,
    },

    #[error("negative probability density {value:e} at r = {r:e} m")]
    NegativeDensity { r: f64, value: f64 },

    #[error("state normalization drifted by {drift:e} after renormalization")]
    NormalizationDrift { drift: f64 },

    #[error("optimal-plane closed form is degenerate (alpha = {alpha})")]
    DegenerateAlpha { alpha: f64 },

    #[error("object at the front focal plane has no finite geometric image")]
    NoGeometricImage,

    #[error("detection plane carries no axial information (|slope| = {slope:e} 1/m)")]
    Uninformative { slope: f64 },

    #[error("fraction estimate undefined: {outside} of {total} detections outside the boundary")]
    Saturated { outside: u64, total: u64 },

    #[error("empty sample")]
    EmptySample,

    #[error("width is not invertible at the nominal plane (beam waist)")]
    BranchAmbiguous,

    #[error("requested branch {requested:?} does not match the response at the nominal plane")]
    BranchMismatch { requested: crate::estimators::Branch },

    #[error("malformed sample dump: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be positive and finite",
        })
    }
}

pub(crate) fn non_negative(name: &'static str, value: f64) -> Result<f64> {
    if value >= 0.0 && !value.is_nan() {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be non-negative",
        })
    }
}

pub(crate) fn finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite",
        })
    }
}
