use thiserror::Error;

use crate::field::FieldRole;

/// Errors produced by the geometric and evaluation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid depth {0}: must be finite and positive")]
    InvalidDepth(f64),

    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),

    #[error("field role mismatch: expected {expected:?}, found {found:?}")]
    RoleError { expected: FieldRole, found: FieldRole },

    #[error("shape mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    ShapeError {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("translation z-component is zero; residual parallax is undefined")]
    DegenerateTranslation,

    #[error("plane passes through the camera center")]
    DegeneratePlane,

    #[error("insufficient points: need at least 3, found {0}")]
    InsufficientPoints(usize),

    #[error("all sampled point triples were collinear")]
    DegenerateGeometry,

    #[error("input contains no valid pixels")]
    EmptyInput,

    #[error("no valid pixels remain after masking")]
    EmptyEvaluation,

    #[error("median of the prediction is not positive ({0})")]
    DegenerateScale(f64),

    #[error("no scene geometry is visible in the camera frustum")]
    EmptyScene,
}

impl Error {
    /// `true` for failures caused by degenerate geometry rather than bad input data.
    pub fn is_numeric_degeneracy(&self) -> bool {
        matches!(
            self,
            Error::DegenerateTranslation
                | Error::DegeneratePlane
                | Error::DegenerateGeometry
                | Error::DegenerateScale(_)
                | Error::InsufficientPoints(_)
                | Error::EmptyEvaluation
        )
    }

    pub(crate) fn shape(a: (usize, usize), b: (usize, usize)) -> Self {
        Error::ShapeError {
            left_w: a.0,
            left_h: a.1,
            right_w: b.0,
            right_h: b.1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
