//! Limbus ellipse model and its orthogonal-distance least-squares fit.
//!
//! The ellipse is parameterized by center `(ox, oy)`, semi-axes
//! `l_major ≥ l_minor > 0` and tilt `phi ∈ [0, π)`:
//!
//! ```text
//! x = ox + l_major·cos t·cos phi − l_minor·sin t·sin phi
//! y = oy + l_major·cos t·sin phi + l_minor·sin t·cos phi
//! ```
//!
//! The fit minimizes the sum of squared orthogonal distances from the data
//! points to the curve. Each point's nearest curve parameter is solved as a
//! nested 1-D problem, so the outer Levenberg–Marquardt problem stays at five
//! unknowns.

mod distance;
mod lm;

use std::f64::consts::{PI, TAU};

pub use distance::point_residual;
pub(crate) use distance::NearestPointSolver;
pub use lm::{fit_ellipse, fit_lm, orthogonal_cost, FitConfig, Initializer, LmConfig};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EllipseParams {
    pub ox: f64,
    pub oy: f64,
    pub l_major: f64,
    pub l_minor: f64,
    pub phi: f64,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitDiagnostics {
    /// Sum of squared orthogonal residuals, px².
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub rms_residual: f64,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
    /// True when the primary initializer failed and the fallback was used.
    pub used_fallback_init: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EllipseError {
    #[error("need at least 5 points, got {0}")]
    TooFewPoints(usize),
    #[error("points are degenerate (collinear or coincident)")]
    DegenerateGeometry,
    #[error("invalid ellipse parameters")]
    InvalidParams,
    #[error("Levenberg-Marquardt damping exceeded {0:e} without an accepted step")]
    NumericalFailure(f64),
}

impl EllipseParams {
    pub fn new(ox: f64, oy: f64, l_major: f64, l_minor: f64, phi: f64) -> Self {
        Self { ox, oy, l_major, l_minor, phi }
    }

    pub fn circle(ox: f64, oy: f64, r: f64) -> Self {
        Self::new(ox, oy, r, r, 0.0)
    }

    pub fn center(&self) -> [f64; 2] {
        [self.ox, self.oy]
    }

    /// `(l_major + l_minor) / 2`.
    pub fn mean_radius(&self) -> f64 {
        0.5 * (self.l_major + self.l_minor)
    }

    pub fn is_valid(&self) -> bool {
        self.ox.is_finite()
            && self.oy.is_finite()
            && self.l_minor.is_finite()
            && self.l_major.is_finite()
            && self.l_minor > 0.0
            && self.l_major >= self.l_minor
            && (0.0..PI).contains(&self.phi)
    }

    /// Point on the curve at parameter `t`.
    pub fn point_at(&self, t: f64) -> [f64; 2] {
        let (st, ct) = t.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [
            self.ox + self.l_major * ct * cp - self.l_minor * st * sp,
            self.oy + self.l_major * ct * sp + self.l_minor * st * cp,
        ]
    }

    /// Implicit form `(u/a)² + (v/b)² − 1` in the ellipse frame; zero on the curve.
    pub fn implicit(&self, p: [f64; 2]) -> f64 {
        let (sp, cp) = self.phi.sin_cos();
        let (dx, dy) = (p[0] - self.ox, p[1] - self.oy);
        let u = cp * dx + sp * dy;
        let v = -sp * dx + cp * dy;
        (u / self.l_major).powi(2) + (v / self.l_minor).powi(2) - 1.0
    }

    /// Curve parameter where the ray from the center at pixel-frame angle
    /// `angle` crosses the ellipse.
    pub fn param_at_direction(&self, angle: f64) -> f64 {
        let rel = angle - self.phi;
        (self.l_major * rel.sin())
            .atan2(self.l_minor * rel.cos())
            .rem_euclid(TAU)
    }

    /// Swap axes if needed so `l_major ≥ l_minor` and wrap `phi` into `[0, π)`.
    pub fn normalized(mut self) -> Self {
        self.l_major = self.l_major.abs();
        self.l_minor = self.l_minor.abs();
        if self.l_minor > self.l_major {
            std::mem::swap(&mut self.l_major, &mut self.l_minor);
            self.phi += PI / 2.0;
        }
        self.phi = self.phi.rem_euclid(PI);
        if self.phi >= PI {
            self.phi = 0.0;
        }
        self
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self { ox: self.ox + dx, oy: self.oy + dy, ..*self }
    }

    /// Arc length of the curve between parameters `t0 ≤ t1`.
    pub fn arc_length(&self, t0: f64, t1: f64) -> f64 {
        // Composite 8-point Gauss-Legendre; the integrand is smooth and
        // periodic so 64 panels per turn is far below 1e-12 relative error.
        const X: [f64; 4] = [
            0.183_434_642_495_649_8,
            0.525_532_409_916_329,
            0.796_666_477_413_626_7,
            0.960_289_856_497_536_3,
        ];
        const W: [f64; 4] = [
            0.362_683_783_378_362,
            0.313_706_645_877_887_3,
            0.222_381_034_453_374_5,
            0.101_228_536_290_376_3,
        ];
        let (a, b) = (self.l_major, self.l_minor);
        let speed = |t: f64| {
            let (s, c) = t.sin_cos();
            (a * a * s * s + b * b * c * c).sqrt()
        };
        let span = t1 - t0;
        if span == 0.0 {
            return 0.0;
        }
        let panels = ((span.abs() / TAU) * 64.0).ceil().max(1.0) as usize;
        let h = span / panels as f64;
        let mut total = 0.0;
        for k in 0..panels {
            let mid = t0 + (k as f64 + 0.5) * h;
            let half = 0.5 * h;
            for i in 0..4 {
                total += W[i] * (speed(mid + half * X[i]) + speed(mid - half * X[i]));
            }
        }
        total * 0.5 * h
    }

    pub fn perimeter(&self) -> f64 {
        self.arc_length(0.0, TAU)
    }
}

/// Initial estimate: center at the centroid, both semi-axes at half the
/// mean distance from the centroid, tilt 0.
pub fn init_guess(points: &[[f64; 2]]) -> Result<EllipseParams, EllipseError> {
    let (cx, cy) = check_points(points)?;
    let mean_dist = points
        .iter()
        .map(|p| (p[0] - cx).hypot(p[1] - cy))
        .sum::<f64>()
        / points.len() as f64;
    let half = 0.5 * mean_dist;
    Ok(EllipseParams::new(cx, cy, half, half, 0.0))
}

/// Second-moment estimate: for points spread along an ellipse boundary the
/// covariance in the ellipse frame is `diag(a²/2, b²/2)`.
pub fn moment_guess(points: &[[f64; 2]]) -> Result<EllipseParams, EllipseError> {
    let (cx, cy) = check_points(points)?;
    let (sxx, syy, sxy) = second_moments(points, cx, cy);
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    let l1 = 0.5 * tr + disc;
    let l2 = (0.5 * tr - disc).max(0.0);
    let phi = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let a = (2.0 * l1).sqrt();
    let b = (2.0 * l2).sqrt().max(1e-3 * a);
    Ok(EllipseParams::new(cx, cy, a, b, phi).normalized())
}

fn second_moments(points: &[[f64; 2]], cx: f64, cy: f64) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - cx, p[1] - cy);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    (sxx / n, syy / n, sxy / n)
}

/// Validates count and spread; returns the centroid.
fn check_points(points: &[[f64; 2]]) -> Result<(f64, f64), EllipseError> {
    if points.len() < 5 {
        return Err(EllipseError::TooFewPoints(points.len()));
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(EllipseError::DegenerateGeometry);
    }
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let (sxx, syy, sxy) = second_moments(points, cx, cy);
    let tr = sxx + syy;
    // Scale-free determinant test: det / trace² ≤ 1e-9.
    if tr <= 0.0 || (sxx * syy - sxy * sxy) <= 1e-9 * tr * tr {
        return Err(EllipseError::DegenerateGeometry);
    }
    Ok((cx, cy))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_guess_on_circle() {
        let pts: Vec<[f64; 2]> = (0..360)
            .map(|i| {
                let t = (i as f64).to_radians();
                [100.0 + 40.0 * t.cos(), 100.0 + 40.0 * t.sin()]
            })
            .collect();
        let g = init_guess(&pts).unwrap();
        assert!((g.ox - 100.0).abs() < 1e-9 && (g.oy - 100.0).abs() < 1e-9);
        assert!((g.l_major - 20.0).abs() < 1e-9 && (g.l_minor - 20.0).abs() < 1e-9);
        assert_eq!(g.phi, 0.0);
    }

    #[test]
    fn init_guess_errors() {
        let four = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        assert_eq!(init_guess(&four), Err(EllipseError::TooFewPoints(4)));
        let same = vec![[3.0, 3.0]; 10];
        assert_eq!(init_guess(&same), Err(EllipseError::DegenerateGeometry));
        let line: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, 2.0 * i as f64 + 1.0]).collect();
        assert_eq!(init_guess(&line), Err(EllipseError::DegenerateGeometry));
    }

    #[test]
    fn moment_guess_recovers_shape() {
        let e = EllipseParams::new(50.0, 40.0, 30.0, 18.0, 0.6);
        let pts: Vec<[f64; 2]> = (0..720).map(|i| e.point_at(TAU * i as f64 / 720.0)).collect();
        let g = moment_guess(&pts).unwrap();
        assert!((g.l_major - 30.0).abs() < 1e-6);
        assert!((g.l_minor - 18.0).abs() < 1e-6);
        assert!((g.phi - 0.6).abs() < 1e-9);
    }

    #[test]
    fn normalization_swaps_axes() {
        let e = EllipseParams::new(0.0, 0.0, 10.0, 20.0, 0.2).normalized();
        assert_eq!(e.l_major, 20.0);
        assert_eq!(e.l_minor, 10.0);
        assert!((e.phi - (0.2 + PI / 2.0)).abs() < 1e-12);
        let e = EllipseParams::new(0.0, 0.0, 20.0, 10.0, -0.5).normalized();
        assert!((e.phi - (PI - 0.5)).abs() < 1e-12);
        assert!(e.is_valid());
    }

    #[test]
    fn circle_arc_length() {
        let c = EllipseParams::circle(0.0, 0.0, 100.0);
        assert!((c.arc_length(0.3, 0.7) - 40.0).abs() < 1e-9);
        assert!((c.perimeter() - TAU * 100.0).abs() < 1e-9);
    }

    #[test]
    fn direction_parameter_lies_on_ray() {
        let e = EllipseParams::new(10.0, 20.0, 100.0, 60.0, 0.4);
        for k in 0..24 {
            let ang = k as f64 * 0.27;
            let p = e.point_at(e.param_at_direction(ang));
            let got = (p[1] - e.oy).atan2(p[0] - e.ox);
            let diff = (got - ang).rem_euclid(TAU);
            assert!(diff < 1e-9 || TAU - diff < 1e-9, "{ang} {got}");
        }
    }
}
