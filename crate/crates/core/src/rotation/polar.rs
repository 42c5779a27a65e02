use std::f64::consts::TAU;

use super::{AnnulusSpec, GrayFrame, RotationError};

/// Annulus resampled on a `radial_bins × angular_bins` grid (row = radius).
/// Cells whose sample point fell outside the frame hold 0 and are invalid.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarPatch {
    radial_bins: usize,
    angular_bins: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
    mean: f64,
    std: f64,
}

impl PolarPatch {
    /// Build from raw cells; mean and standard deviation are cached over
    /// valid cells.
    pub fn from_parts(
        radial_bins: usize,
        angular_bins: usize,
        values: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self, RotationError> {
        let n = radial_bins * angular_bins;
        if n == 0 {
            return Err(RotationError::InvalidBins);
        }
        if values.len() != n || valid.len() != n {
            return Err(RotationError::LengthMismatch { expected: n, got: values.len().min(valid.len()) });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(RotationError::NonFinite(i));
        }
        let (mean, std) = masked_stats(&values, &valid);
        Ok(Self { radial_bins, angular_bins, values, valid, mean, std })
    }

    pub fn radial_bins(&self) -> usize {
        self.radial_bins
    }

    pub fn angular_bins(&self) -> usize {
        self.angular_bins
    }

    pub fn deg_per_bin(&self) -> f64 {
        360.0 / self.angular_bins as f64
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.radial_bins, self.angular_bins)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn value(&self, r: usize, a: usize) -> f64 {
        self.values[r * self.angular_bins + a]
    }

    pub fn is_valid(&self, r: usize, a: usize) -> bool {
        self.valid[r * self.angular_bins + a]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Mean over valid cells.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population standard deviation over valid cells.
    pub fn std(&self) -> f64 {
        self.std
    }

    /// Copy shifted by `u` angular bins: `out(r, a) = self(r, a − u)`.
    pub fn circular_shift(&self, u: isize) -> Self {
        let n = self.angular_bins;
        let mut values = vec![0.0; self.values.len()];
        let mut valid = vec![false; self.valid.len()];
        for r in 0..self.radial_bins {
            for a in 0..n {
                let src = (a as isize - u).rem_euclid(n as isize) as usize;
                values[r * n + a] = self.value(r, src);
                valid[r * n + a] = self.is_valid(r, src);
            }
        }
        Self { values, valid, ..self.clone() }
    }

    /// Per-cell affine intensity map `s·v + o` (invalid cells stay 0).
    pub fn map_affine(&self, scale: f64, offset: f64) -> Self {
        let values: Vec<f64> = self
            .values
            .iter()
            .zip(&self.valid)
            .map(|(v, ok)| if *ok { scale * v + offset } else { 0.0 })
            .collect();
        Self::from_parts(self.radial_bins, self.angular_bins, values, self.valid.clone())
            .expect("affine image of a valid patch")
    }
}

fn masked_stats(values: &[f64], valid: &[bool]) -> (f64, f64) {
    let mut n = 0usize;
    let mut sum = 0.0;
    for (v, ok) in values.iter().zip(valid) {
        if *ok {
            n += 1;
            sum += v;
        }
    }
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / n as f64;
    let var = values
        .iter()
        .zip(valid)
        .filter(|(_, ok)| **ok)
        .map(|(v, _)| (v - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    (mean, var.sqrt())
}

/// Resample the annulus of `spec` from `frame`.
///
/// Cell `(r, a)` sits at radius `mean_radius − d_in + (r + ½)·(d_in + d_out)/m`
/// and angle `(a + ½)·360°/n` about the ellipse center.
pub fn polar_unwrap(
    frame: &GrayFrame,
    spec: &AnnulusSpec,
    angular_bins: usize,
    radial_bins: usize,
) -> Result<PolarPatch, RotationError> {
    if angular_bins == 0 || radial_bins == 0 {
        return Err(RotationError::InvalidBins);
    }
    let band = spec.d_in() + spec.d_out();
    if !(band >= 1.0) {
        return Err(RotationError::DegenerateAnnulus(band));
    }
    let (inner, _) = spec.radii();
    let dr = band / radial_bins as f64;
    let (cx, cy) = (spec.ellipse.ox, spec.ellipse.oy);
    let dirs: Vec<(f64, f64)> = (0..angular_bins)
        .map(|a| {
            let (s, c) = (TAU * (a as f64 + 0.5) / angular_bins as f64).sin_cos();
            (c, s)
        })
        .collect();
    let n = radial_bins * angular_bins;
    let mut values = vec![0.0; n];
    let mut valid = vec![false; n];
    for r in 0..radial_bins {
        let rho = inner + (r as f64 + 0.5) * dr;
        for (a, (c, s)) in dirs.iter().enumerate() {
            if let Some(v) = frame.sample(cx + rho * c, cy + rho * s) {
                values[r * angular_bins + a] = v;
                valid[r * angular_bins + a] = true;
            }
        }
    }
    PolarPatch::from_parts(radial_bins, angular_bins, values, valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ellipse::EllipseParams;
    use std::f64::consts::PI;

    fn spokes(cx: f64, cy: f64, rot_deg: f64) -> impl Fn(usize, usize) -> f64 {
        let rot = rot_deg.to_radians();
        move |x, y| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let ang = dy.atan2(dx) - rot;
            0.5 + 0.25 * (6.0 * ang).sin() + 0.15 * (11.0 * ang + 0.7).cos()
        }
    }

    fn spec(c: f64, r: f64) -> AnnulusSpec {
        AnnulusSpec::new(EllipseParams::circle(c, c, r), 3.0, 3.0).unwrap()
    }

    #[test]
    fn constant_frame_constant_patch() {
        let f = GrayFrame::from_fn(64, 64, |_, _| 0.3).unwrap();
        let p = polar_unwrap(&f, &spec(32.0, 20.0), 90, 8).unwrap();
        assert!(p.values().iter().all(|v| (v - 0.3).abs() < 1e-12));
        assert_eq!(p.valid_count(), 720);
        assert!(p.std() < 1e-12);
    }

    #[test]
    fn deg_per_bin() {
        let f = GrayFrame::from_fn(64, 64, |_, _| 0.3).unwrap();
        let p = polar_unwrap(&f, &spec(32.0, 20.0), 360, 8).unwrap();
        assert_eq!(p.deg_per_bin(), 1.0);
        assert_eq!(p.deg_per_bin() * p.angular_bins() as f64, 360.0);
    }

    #[test]
    fn rotated_texture_is_circular_shift() {
        let (c, n) = (128.0, 360);
        let s = spec(c, 90.0);
        let m = s.default_radial_bins();
        let f0 = GrayFrame::from_fn(256, 256, spokes(c, c, 0.0)).unwrap();
        let f10 = GrayFrame::from_fn(256, 256, spokes(c, c, 10.0)).unwrap();
        let p0 = polar_unwrap(&f0, &s, n, m).unwrap();
        let p10 = polar_unwrap(&f10, &s, n, m).unwrap();
        let shifted = p0.circular_shift(10);
        let mut se = 0.0;
        let mut cnt = 0;
        for r in 0..m {
            for a in 0..n {
                if p10.is_valid(r, a) && shifted.is_valid(r, a) {
                    se += (p10.value(r, a) - shifted.value(r, a)).powi(2);
                    cnt += 1;
                }
            }
        }
        let rms = (se / cnt as f64).sqrt();
        assert!(rms <= 0.02, "rms {rms}");
    }

    #[test]
    fn clipped_cells_invalid_and_zero() {
        // band reaches radius 120 around (128,128): corners stay inside, but
        // shift the center so the band leaves the frame
        let s = AnnulusSpec::new(EllipseParams::circle(40.0, 128.0, 90.0), 3.0, 3.0).unwrap();
        let f = GrayFrame::from_fn(256, 256, |_, _| 1.0).unwrap();
        let p = polar_unwrap(&f, &s, 360, 16).unwrap();
        let invalid = p.validity().iter().filter(|v| !**v).count();
        assert!(invalid > 0);
        for (v, ok) in p.values().iter().zip(p.validity()) {
            assert_eq!(*v, if *ok { 1.0 } else { 0.0 });
        }
        // leftmost direction (angle π) at the outer radius lies at x < 0
        let a = 180;
        assert!(!p.is_valid(15, a));
        assert!((TAU * (a as f64 + 0.5) / 360.0 - PI).abs() < 0.01);
    }

    #[test]
    fn degenerate_band() {
        let s = AnnulusSpec::new(EllipseParams::circle(10.0, 10.0, 1.0), 3.0, 3.0).unwrap();
        let f = GrayFrame::from_fn(20, 20, |_, _| 0.0).unwrap();
        assert!(matches!(polar_unwrap(&f, &s, 36, 8), Err(RotationError::DegenerateAnnulus(_))));
    }

    #[test]
    fn cached_stats_match_recomputation() {
        let f = GrayFrame::from_fn(100, 100, spokes(50.0, 50.0, 3.0)).unwrap();
        let p = polar_unwrap(&f, &spec(50.0, 40.0), 180, 12).unwrap();
        let vals: Vec<f64> = p
            .values()
            .iter()
            .zip(p.validity())
            .filter(|(_, ok)| **ok)
            .map(|(v, _)| *v)
            .collect();
        assert!(vals.len() < p.values().len());
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        assert!((p.mean() - mean).abs() < 1e-9);
        assert!((p.std() - sd).abs() < 1e-9);
    }
}
