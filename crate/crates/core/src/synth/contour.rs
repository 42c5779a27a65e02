use std::f64::consts::{PI, TAU};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{rng_for, stream};
use crate::ellipse::EllipseParams;

/// Ordered noisy boundary samples of a random ellipse.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ContourSpec {
    pub points: usize,
    /// Range of the major semi-axis, px.
    pub major: (f64, f64),
    /// Range of `l_minor / l_major`.
    pub aspect: (f64, f64),
    pub noise_sigma: f64,
    /// Fraction of points pushed radially outward.
    pub outlier_fraction: f64,
    pub outlier_len: (f64, f64),
}

impl Default for ContourSpec {
    fn default() -> Self {
        Self {
            points: 200,
            major: (60.0, 140.0),
            aspect: (0.75, 0.95),
            noise_sigma: 1.0,
            outlier_fraction: 0.0,
            outlier_len: (15.0, 30.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContourSample {
    pub truth: EllipseParams,
    pub points: Vec<[f64; 2]>,
    pub outlier: Vec<bool>,
}

/// Instance `index` of the family seeded by `seed`.
pub fn gen_contour(spec: &ContourSpec, seed: u64, index: u64) -> ContourSample {
    let mut rng = rng_for(seed, stream::CONTOUR, index);
    let a = rng.random_range(spec.major.0..=spec.major.1);
    let b = a * rng.random_range(spec.aspect.0..=spec.aspect.1);
    let truth = EllipseParams::new(
        rng.random_range(270.0..370.0),
        rng.random_range(190.0..290.0),
        a,
        b.max(1e-3),
        rng.random_range(0.0..PI),
    );
    let n = spec.points;
    let phase = rng.random_range(0.0..TAU);
    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).expect("valid sigma");
    let mut points: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let p = truth.point_at(phase + TAU * i as f64 / n as f64);
            [p[0] + noise.sample(&mut rng), p[1] + noise.sample(&mut rng)]
        })
        .collect();

    // isolated outliers: no two on neighboring indices
    let want = (spec.outlier_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut outlier = vec![false; n];
    let mut placed = 0;
    for i in order {
        if placed == want {
            break;
        }
        if n > 2 && (outlier[(i + n - 1) % n] || outlier[(i + 1) % n]) {
            continue;
        }
        outlier[i] = true;
        placed += 1;
        let t = phase + TAU * i as f64 / n as f64;
        let len = rng.random_range(spec.outlier_len.0..=spec.outlier_len.1);
        let (s, c) = t.sin_cos();
        let (nx, ny) = (truth.l_minor * c, truth.l_major * s);
        let (sp, cp) = truth.phi.sin_cos();
        let (wx, wy) = (cp * nx - sp * ny, sp * nx + cp * ny);
        let norm = wx.hypot(wy);
        points[i][0] += len * wx / norm;
        points[i][1] += len * wy / norm;
    }
    ContourSample { truth, points, outlier }
}
