//! Brute-force references. Nothing here calls the fitting, distance, polar
//! or NCC code it is used to check.

use crate::ellipse::EllipseParams;
use crate::par::Exec;
use crate::rotation::GrayFrame;

/// Distance from `(y0, y1)` to the axis-aligned ellipse with semi-axes
/// `e0 ≥ e1`, after Eberly's bisection on the Lagrange multiplier.
/// Any quadrant; the point is reflected into the first.
pub fn eberly_distance(e0: f64, e1: f64, y0: f64, y1: f64) -> f64 {
    let (e0, e1, y0, y1) = if e0 >= e1 { (e0, e1, y0.abs(), y1.abs()) } else { (e1, e0, y1.abs(), y0.abs()) };
    if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g == 0.0 {
                return 0.0;
            }
            let r0 = (e0 / e1).powi(2);
            let s = root(r0, z0, z1, g);
            let x0 = r0 * y0 / (s + r0);
            let x1 = y1 / (s + 1.0);
            (x0 - y0).hypot(x1 - y1)
        } else {
            (y1 - e1).abs()
        }
    } else {
        let numer0 = e0 * y0;
        let denom0 = e0 * e0 - e1 * e1;
        if numer0 < denom0 {
            let xde0 = numer0 / denom0;
            let x0 = e0 * xde0;
            let x1 = e1 * (1.0 - xde0 * xde0).max(0.0).sqrt();
            (x0 - y0).hypot(x1)
        } else {
            (y0 - e0).abs()
        }
    }
}

fn root(r0: f64, z0: f64, z1: f64, g: f64) -> f64 {
    let n0 = r0 * z0;
    let mut s0 = z1 - 1.0;
    let mut s1 = if g < 0.0 { 0.0 } else { n0.hypot(z1) - 1.0 };
    let mut s = 0.0;
    for _ in 0..200 {
        s = 0.5 * (s0 + s1);
        if s == s0 || s == s1 || s1 - s0 <= 1e-13 * (1.0 + s.abs()) {
            break;
        }
        let g = (n0 / (s + r0)).powi(2) + (z1 / (s + 1.0)).powi(2) - 1.0;
        if g > 0.0 {
            s0 = s;
        } else if g < 0.0 {
            s1 = s;
        } else {
            break;
        }
    }
    s
}

fn oracle_cost(points: &[[f64; 2]], p: &[f64; 5]) -> f64 {
    let [ox, oy, a, b, phi] = *p;
    if !(a > 0.0 && b > 0.0) {
        return f64::INFINITY;
    }
    let (s, c) = phi.sin_cos();
    points
        .iter()
        .map(|q| {
            let (dx, dy) = (q[0] - ox, q[1] - oy);
            eberly_distance(a, b, c * dx + s * dy, -s * dx + c * dy).powi(2)
        })
        .sum()
}

/// Search box for `(ox, oy, l_major, l_minor, phi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleBounds {
    pub lo: [f64; 5],
    pub hi: [f64; 5],
}

impl OracleBounds {
    /// Box of half-widths `half` around `center`.
    pub fn around(center: &EllipseParams, half: [f64; 5]) -> Self {
        let c = [center.ox, center.oy, center.l_major, center.l_minor, center.phi];
        Self {
            lo: std::array::from_fn(|i| c[i] - half[i]),
            hi: std::array::from_fn(|i| c[i] + half[i]),
        }
    }
}

/// Coarse-to-fine grid search minimizing the sum of squared orthogonal
/// distances. Each level evaluates `grid⁵` nodes and shrinks the box to one
/// node spacing around the best node. Returns the best parameters, their
/// cost and the final node spacing.
pub fn oracle_ellipse(
    points: &[[f64; 2]],
    bounds: OracleBounds,
    grid: usize,
    levels: usize,
    exec: Exec,
) -> (EllipseParams, f64, [f64; 5]) {
    let grid = grid.max(2);
    let (mut lo, mut hi) = (bounds.lo, bounds.hi);
    let mut best = [0.0; 5];
    let mut best_cost = f64::INFINITY;
    let mut step = [0.0; 5];
    for _ in 0..levels.max(1) {
        step = std::array::from_fn(|i| (hi[i] - lo[i]) / (grid - 1) as f64);
        let nodes = grid.pow(5);
        let costs = exec.map_range(nodes, |k| {
            let p = node(k, grid, &lo, &step);
            oracle_cost(points, &p)
        });
        let (k, c) = costs
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (k, c)| if *c < acc.1 { (k, *c) } else { acc });
        if c < best_cost {
            best_cost = c;
            best = node(k, grid, &lo, &step);
        }
        lo = std::array::from_fn(|i| best[i] - step[i]);
        hi = std::array::from_fn(|i| best[i] + step[i]);
    }
    let e = EllipseParams::new(best[0], best[1], best[2], best[3], best[4]).normalized();
    (e, best_cost, step)
}

fn node(mut k: usize, grid: usize, lo: &[f64; 5], step: &[f64; 5]) -> [f64; 5] {
    let mut p = [0.0; 5];
    for i in 0..5 {
        p[i] = lo[i] + (k % grid) as f64 * step[i];
        k /= grid;
    }
    p
}

fn bilinear(f: &GrayFrame, x: f64, y: f64) -> Option<f64> {
    let (w, h) = (f.width(), f.height());
    if w < 2 || h < 2 || x < 0.0 || y < 0.0 || x > (w - 1) as f64 || y > (h - 1) as f64 {
        return None;
    }
    let xi = (x as usize).min(w - 2);
    let yi = (y as usize).min(h - 2);
    let (fx, fy) = (x - xi as f64, y - yi as f64);
    let d = f.data();
    let at = |xx: usize, yy: usize| d[yy * w + xx];
    Some(
        (1.0 - fy) * ((1.0 - fx) * at(xi, yi) + fx * at(xi + 1, yi))
            + fy * ((1.0 - fx) * at(xi, yi + 1) + fx * at(xi + 1, yi + 1)),
    )
}

/// Rotation of `b` relative to `a` about `center`: exhaustive scan of
/// `[−180, 180)` at `step_deg`, minimizing the mean squared difference
/// between `a(p)` and `b(center + R(θ)(p − center))` over annulus pixels on
/// a stride-2 grid.
pub fn oracle_rotation(
    a: &GrayFrame,
    b: &GrayFrame,
    center: [f64; 2],
    radii: (f64, f64),
    step_deg: f64,
    exec: Exec,
) -> f64 {
    let mut samples = Vec::new();
    for y in (0..a.height()).step_by(2) {
        for x in (0..a.width()).step_by(2) {
            let r = (x as f64 - center[0]).hypot(y as f64 - center[1]);
            if r >= radii.0 && r <= radii.1 {
                samples.push((x as f64 - center[0], y as f64 - center[1], a.get(x, y)));
            }
        }
    }
    let count = (360.0 / step_deg).round() as usize;
    let scores = exec.map_range(count, |k| {
        let (s, c) = (-180.0 + k as f64 * step_deg).to_radians().sin_cos();
        let (mut sse, mut n) = (0.0, 0usize);
        for &(dx, dy, va) in &samples {
            if let Some(vb) = bilinear(b, center[0] + c * dx - s * dy, center[1] + s * dx + c * dy) {
                sse += (va - vb).powi(2);
                n += 1;
            }
        }
        if n == 0 {
            f64::INFINITY
        } else {
            sse / n as f64
        }
    });
    let (k, _) = scores
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, s)| if *s < acc.1 { (k, *s) } else { acc });
    -180.0 + k as f64 * step_deg
}
