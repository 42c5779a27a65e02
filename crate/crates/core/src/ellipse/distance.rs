//! Orthogonal point-to-ellipse distance by 1-D minimization over the
//! ellipse parameter.

use std::f64::consts::TAU;

use super::EllipseParams;

const COARSE_SAMPLES: usize = 64;
const GOLDEN_TOL: f64 = 1e-7;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Precomputed coarse-scan table for one parameter set.
pub(crate) struct NearestPointSolver {
    ox: f64,
    oy: f64,
    a: f64,
    b: f64,
    cos_phi: f64,
    sin_phi: f64,
    // local-frame ellipse points at t_j = 2πj/64
    coarse: [[f64; 2]; COARSE_SAMPLES],
}

/// Nearest ellipse point of one data point, in the ellipse's local frame.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Nearest {
    pub t: f64,
    /// data point in the local frame
    pub q: [f64; 2],
}

impl NearestPointSolver {
    pub fn new(e: &EllipseParams) -> Self {
        let (sin_phi, cos_phi) = e.phi.sin_cos();
        let mut coarse = [[0.0; 2]; COARSE_SAMPLES];
        for (j, c) in coarse.iter_mut().enumerate() {
            let (s, co) = (TAU * j as f64 / COARSE_SAMPLES as f64).sin_cos();
            *c = [e.l_major * co, e.l_minor * s];
        }
        Self {
            ox: e.ox,
            oy: e.oy,
            a: e.l_major,
            b: e.l_minor,
            cos_phi,
            sin_phi,
            coarse,
        }
    }

    pub fn to_local(&self, p: [f64; 2]) -> [f64; 2] {
        let (dx, dy) = (p[0] - self.ox, p[1] - self.oy);
        [
            self.cos_phi * dx + self.sin_phi * dy,
            -self.sin_phi * dx + self.cos_phi * dy,
        ]
    }

    #[inline]
    fn dist2(&self, q: [f64; 2], t: f64) -> f64 {
        let (s, c) = t.sin_cos();
        let (ex, ey) = (self.a * c, self.b * s);
        (q[0] - ex).powi(2) + (q[1] - ey).powi(2)
    }

    /// Coarse 64-sample scan, golden-section refinement of the bracketing
    /// interval, then a guarded Newton polish on the stationarity condition.
    pub fn nearest(&self, p: [f64; 2]) -> Nearest {
        let q = self.to_local(p);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (j, c) in self.coarse.iter().enumerate() {
            let d = (q[0] - c[0]).powi(2) + (q[1] - c[1]).powi(2);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        let step = TAU / COARSE_SAMPLES as f64;
        let mut lo = (best as f64 - 1.0) * step;
        let mut hi = (best as f64 + 1.0) * step;

        let mut x1 = hi - INV_PHI * (hi - lo);
        let mut x2 = lo + INV_PHI * (hi - lo);
        let mut f1 = self.dist2(q, x1);
        let mut f2 = self.dist2(q, x2);
        while hi - lo > GOLDEN_TOL {
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - INV_PHI * (hi - lo);
                f1 = self.dist2(q, x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + INV_PHI * (hi - lo);
                f2 = self.dist2(q, x2);
            }
        }
        let mut t = 0.5 * (lo + hi);
        let mut ft = self.dist2(q, t);
        let (a, b) = (self.a, self.b);
        for _ in 0..4 {
            let (s, c) = t.sin_cos();
            let g1 = a * q[0] * s - b * q[1] * c + (b * b - a * a) * s * c;
            let g2 = a * q[0] * c + b * q[1] * s + (b * b - a * a) * (c * c - s * s);
            if g2 <= 0.0 {
                break;
            }
            let cand = t - g1 / g2;
            if !(lo - GOLDEN_TOL..=hi + GOLDEN_TOL).contains(&cand) {
                break;
            }
            let fc = self.dist2(q, cand);
            if fc > ft {
                break;
            }
            let done = (cand - t).abs() < 1e-15;
            t = cand;
            ft = fc;
            if done {
                break;
            }
        }
        Nearest { t: t.rem_euclid(TAU), q }
    }

    /// Signed orthogonal residual (positive outside) and its gradient with
    /// respect to `(ox, oy, l_major, l_minor, phi)`.
    ///
    /// At the nearest point the data offset is parallel to the normal, so
    /// the derivative through the inner minimization vanishes and the
    /// gradient is `-n · ∂e/∂θ` at fixed `t`.
    pub fn residual_and_gradient(&self, p: [f64; 2]) -> (f64, [f64; 5]) {
        let Nearest { t, q } = self.nearest(p);
        let (s, c) = t.sin_cos();
        let (a, b) = (self.a, self.b);
        let (ex, ey) = (a * c, b * s);
        let (mut nx, mut ny) = (b * c, a * s);
        let norm = nx.hypot(ny);
        if norm > 0.0 {
            nx /= norm;
            ny /= norm;
        }
        let r = nx * (q[0] - ex) + ny * (q[1] - ey);
        // world-frame normal
        let nwx = self.cos_phi * nx - self.sin_phi * ny;
        let nwy = self.sin_phi * nx + self.cos_phi * ny;
        let grad = [-nwx, -nwy, -nx * c, -ny * s, nx * b * s - ny * a * c];
        (r, grad)
    }
}

/// Euclidean distance from `point` to the nearest point of the ellipse.
pub fn point_residual(params: &EllipseParams, point: [f64; 2]) -> f64 {
    let solver = NearestPointSolver::new(params);
    let n = solver.nearest(point);
    solver.dist2(n.q, n.t).max(0.0).sqrt()
}
