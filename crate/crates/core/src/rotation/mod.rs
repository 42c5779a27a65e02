//! Eye rotation between a frame and its phase reference.
//!
//! An annulus around the fitted limbus is resampled onto a (radius × angle)
//! grid, which turns rotation about the ellipse center into a cyclic shift
//! along the angular axis. The shift is found by zero-mean normalized
//! cross-correlation over all angular shifts and a small radial range.

mod ncc;
mod polar;

pub use ncc::{estimate_rotation, ncc_score, NccMethod, RotationConfig, RotationEstimate};
pub use polar::{polar_unwrap, PolarPatch};

use crate::ellipse::EllipseParams;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RotationError {
    #[error("invalid frame dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("frame has {expected} pixels but {got} intensities were given")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite intensity at index {0}")]
    NonFinite(usize),
    #[error("annulus scale factors must be positive and finite")]
    InvalidScale,
    #[error("annulus band {0:.3} px is thinner than one pixel")]
    DegenerateAnnulus(f64),
    #[error("need at least one radial and one angular bin")]
    InvalidBins,
    #[error("patch grids differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("patch has zero variance over its valid cells")]
    ZeroVariance,
}

/// Row-major grayscale frame. Pixel `(x, y)` has its center at integer
/// coordinates, matching the mask and contour convention.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, RotationError> {
        if width == 0 || height == 0 {
            return Err(RotationError::InvalidDimensions { width, height });
        }
        if data.len() != width * height {
            return Err(RotationError::LengthMismatch { expected: width * height, got: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(RotationError::NonFinite(i));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> f64,
    ) -> Result<Self, RotationError> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Bilinear sample, or `None` outside `[0, w−1] × [0, h−1]`.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        let (wm, hm) = ((self.width - 1) as f64, (self.height - 1) as f64);
        if !(x >= 0.0 && y >= 0.0 && x <= wm && y <= hm) {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bot = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        Some(top * (1.0 - fy) + bot * fy)
    }
}

/// Circular band around the ellipse center:
/// `−d_in ≤ |p − o| − mean_radius ≤ d_out` with `d = mean_radius / λ`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AnnulusSpec {
    pub ellipse: EllipseParams,
    pub lambda_in: f64,
    pub lambda_out: f64,
}

impl AnnulusSpec {
    pub fn new(ellipse: EllipseParams, lambda_in: f64, lambda_out: f64) -> Result<Self, RotationError> {
        let ok = |l: f64| l.is_finite() && l > 0.0;
        if !ok(lambda_in) || !ok(lambda_out) {
            return Err(RotationError::InvalidScale);
        }
        Ok(Self { ellipse, lambda_in, lambda_out })
    }

    pub fn mean_radius(&self) -> f64 {
        self.ellipse.mean_radius()
    }

    pub fn d_in(&self) -> f64 {
        self.mean_radius() / self.lambda_in
    }

    pub fn d_out(&self) -> f64 {
        self.mean_radius() / self.lambda_out
    }

    /// Inner and outer band radii.
    pub fn radii(&self) -> (f64, f64) {
        (self.mean_radius() - self.d_in(), self.mean_radius() + self.d_out())
    }

    /// Default radial grid: one bin per pixel of band width, at least 8.
    pub fn default_radial_bins(&self) -> usize {
        ((self.d_in() + self.d_out()).round() as usize).max(8)
    }
}

pub fn annulus_membership(spec: &AnnulusSpec, point: [f64; 2]) -> bool {
    let e = &spec.ellipse;
    let off = (point[0] - e.ox).hypot(point[1] - e.oy) - spec.mean_radius();
    -spec.d_in() <= off && off <= spec.d_out()
}

/// Wrap degrees into `(−180, 180]`.
pub fn wrap_degrees(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    if w > 180.0 {
        w - 360.0
    } else {
        w
    }
}
