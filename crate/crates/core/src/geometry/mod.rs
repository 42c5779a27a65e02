//! Binary-mask post-processing: largest component, border tracing,
//! discrete curvature and curvature-based outlier rejection.

mod contour;
mod curvature;
mod mask;

pub use contour::{trace_contour, Contour};
pub use curvature::{
    curvature, filter_by_curvature, menger, CurvatureFilter, CurvatureProfile, CurvatureScale,
    reject_outliers, FilterMode,
};
pub use mask::{largest_component, BinaryMask, Connectivity};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("mask has no foreground pixel")]
    EmptyMask,
    #[error("mask has {0} connected components, expected one")]
    MultipleComponents(usize),
    #[error("invalid mask dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("contour of {len} points is too short for neighbor spacing {spacing}")]
    ContourTooShort { len: usize, spacing: usize },
    #[error("curvature profile length {profile} does not match {points} points")]
    ProfileMismatch { points: usize, profile: usize },
    #[error("curvature filter rejected every point")]
    AllPointsRejected,
}
