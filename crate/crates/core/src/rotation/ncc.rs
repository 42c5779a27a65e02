use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{wrap_degrees, PolarPatch, RotationError};
use crate::par::Exec;

/// How the full shift surface is searched.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NccMethod {
    /// Masked correlation sums by FFT along the angular axis; the best
    /// candidates are re-scored directly.
    #[default]
    Fft,
    /// Direct evaluation of every shift.
    Direct,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RotationConfig {
    /// Radial search range `±v_max` in bins.
    pub v_max: usize,
    /// Peak scores below this set `low_confidence`.
    pub low_confidence_floor: f64,
    pub method: NccMethod,
    pub exec: Exec,
}

impl Default for RotationConfig {
    fn default() -> Self {
        Self { v_max: 2, low_confidence_floor: 0.2, method: NccMethod::Fft, exec: Exec::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RotationEstimate {
    /// Degrees in `(−180, 180]`, positive when `cur` is `ref` rotated from
    /// +x toward +y.
    pub theta_deg: f64,
    pub peak_score: f64,
    /// Integer angular shift at the peak, in `[0, n)`.
    pub shift_u: usize,
    pub shift_v: isize,
    pub low_confidence: bool,
}

// candidates from the FFT surface that get a direct re-score
const RESCORE: usize = 8;

fn check_pair(r: &PolarPatch, c: &PolarPatch) -> Result<(), RotationError> {
    if r.shape() != c.shape() {
        return Err(RotationError::ShapeMismatch(r.shape(), c.shape()));
    }
    for p in [r, c] {
        if p.valid_count() < 2 || p.std() <= 1e-12 * (1.0 + p.mean().abs()) {
            return Err(RotationError::ZeroVariance);
        }
    }
    Ok(())
}

fn pearson(n: f64, sx: f64, sy: f64, sxx: f64, syy: f64, sxy: f64) -> f64 {
    if n < 2.0 {
        return 0.0;
    }
    let vx = sxx - sx * sx / n;
    let vy = syy - sy * sy / n;
    if vx <= 1e-12 * sxx.abs().max(1e-300) || vy <= 1e-12 * syy.abs().max(1e-300) {
        return 0.0;
    }
    ((sxy - sx * sy / n) / (vx * vy).sqrt()).clamp(-1.0, 1.0)
}

/// Zero-mean normalized correlation pairing `ref(r, a)` with
/// `cur(r + v, (a + u) mod n)` over jointly valid cells. Radial shifts
/// past the grid edge drop those rows.
pub fn ncc_score(
    reference: &PolarPatch,
    current: &PolarPatch,
    u: isize,
    v: isize,
) -> Result<f64, RotationError> {
    check_pair(reference, current)?;
    Ok(direct_score(reference, current, u, v))
}

fn direct_score(rp: &PolarPatch, cp: &PolarPatch, u: isize, v: isize) -> f64 {
    let (m, n) = rp.shape();
    let u = u.rem_euclid(n as isize) as usize;
    // centering on the global means keeps the single-pass sums well conditioned
    let (mr, mc) = (rp.mean(), cp.mean());
    let (mut cnt, mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for r in 0..m {
        let s = r as isize + v;
        if s < 0 || s >= m as isize {
            continue;
        }
        let s = s as usize;
        for a in 0..n {
            let b = if a + u >= n { a + u - n } else { a + u };
            if rp.is_valid(r, a) && cp.is_valid(s, b) {
                let x = rp.value(r, a) - mr;
                let y = cp.value(s, b) - mc;
                cnt += 1.0;
                sx += x;
                sy += y;
                sxx += x * x;
                syy += y * y;
                sxy += x * y;
            }
        }
    }
    pearson(cnt, sx, sy, sxx, syy, sxy)
}

struct RowSpectra {
    mask: Vec<Vec<Complex<f64>>>,
    x: Vec<Vec<Complex<f64>>>,
    xx: Vec<Vec<Complex<f64>>>,
}

fn row_spectra(p: &PolarPatch, planner: &mut FftPlanner<f64>) -> RowSpectra {
    let (m, n) = p.shape();
    let fft = planner.plan_fft_forward(n);
    let mean = p.mean();
    let mut out = RowSpectra { mask: Vec::with_capacity(m), x: Vec::with_capacity(m), xx: Vec::with_capacity(m) };
    for r in 0..m {
        let mut mk = vec![Complex::new(0.0, 0.0); n];
        let mut x = mk.clone();
        let mut xx = mk.clone();
        for a in 0..n {
            if p.is_valid(r, a) {
                let d = p.value(r, a) - mean;
                mk[a].re = 1.0;
                x[a].re = d;
                xx[a].re = d * d;
            }
        }
        fft.process(&mut mk);
        fft.process(&mut x);
        fft.process(&mut xx);
        out.mask.push(mk);
        out.x.push(x);
        out.xx.push(xx);
    }
    out
}

/// Scores for every `u ∈ [0, n)` and `v ∈ [−v_max, v_max]`, row-major by
/// `v`. Each circular correlation `Σ_a f(a)·g(a + u)` is
/// `IFFT(conj(F)·G)`.
fn fft_surface(rp: &PolarPatch, cp: &PolarPatch, v_max: isize, exec: Exec) -> Vec<f64> {
    let (m, n) = rp.shape();
    let mut planner = FftPlanner::<f64>::new();
    let rs = row_spectra(rp, &mut planner);
    let cs = row_spectra(cp, &mut planner);
    let inv = planner.plan_fft_inverse(n);
    let scale = 1.0 / n as f64;
    let rows = exec.map_range((2 * v_max + 1) as usize, |vi| {
        let v = vi as isize - v_max;
        let zero = Complex::new(0.0, 0.0);
        let mut acc = vec![vec![zero; n]; 6];
        for r in 0..m {
            let s = r as isize + v;
            if s < 0 || s >= m as isize {
                continue;
            }
            let s = s as usize;
            for k in 0..n {
                let (rm, rx, rxx) = (rs.mask[r][k].conj(), rs.x[r][k].conj(), rs.xx[r][k].conj());
                let (cm, cx, cxx) = (cs.mask[s][k], cs.x[s][k], cs.xx[s][k]);
                acc[0][k] += rm * cm;
                acc[1][k] += rx * cm;
                acc[2][k] += rm * cx;
                acc[3][k] += rxx * cm;
                acc[4][k] += rm * cxx;
                acc[5][k] += rx * cx;
            }
        }
        for a in acc.iter_mut() {
            inv.process(a);
        }
        (0..n)
            .map(|u| {
                let g = |i: usize| acc[i][u].re * scale;
                pearson(g(0).round(), g(1), g(2), g(3), g(4), g(5))
            })
            .collect::<Vec<f64>>()
    });
    rows.concat()
}

/// Best shift over all angular shifts and radial shifts in `±v_max`,
/// refined by a parabola through the angular neighbors of the peak.
pub fn estimate_rotation(
    reference: &PolarPatch,
    current: &PolarPatch,
    cfg: &RotationConfig,
) -> Result<RotationEstimate, RotationError> {
    check_pair(reference, current)?;
    let (m, n) = reference.shape();
    let v_max = cfg.v_max.min(m - 1) as isize;
    let rows = (2 * v_max + 1) as usize;
    let idx_to_shift = |i: usize| ((i % n) as isize, (i / n) as isize - v_max);

    let best = match cfg.method {
        NccMethod::Direct => {
            let scores = cfg.exec.map_range(rows * n, |i| {
                let (u, v) = idx_to_shift(i);
                direct_score(reference, current, u, v)
            });
            argmax(scores.iter().copied().enumerate())
        }
        NccMethod::Fft => {
            let surface = fft_surface(reference, current, v_max, cfg.exec);
            let mut order: Vec<usize> = (0..surface.len()).collect();
            order.sort_by(|&a, &b| surface[b].total_cmp(&surface[a]).then(a.cmp(&b)));
            order.truncate(RESCORE);
            order.sort_unstable();
            argmax(order.into_iter().map(|i| {
                let (u, v) = idx_to_shift(i);
                (i, direct_score(reference, current, u, v))
            }))
        }
    };
    let (bi, peak) = best;
    let (u, v) = idx_to_shift(bi);

    let mut offset = 0.0;
    if n >= 3 {
        let left = direct_score(reference, current, u - 1, v);
        let right = direct_score(reference, current, u + 1, v);
        let denom = left - 2.0 * peak + right;
        if denom < 0.0 {
            offset = (0.5 * (left - right) / denom).clamp(-0.5, 0.5);
        }
    }
    let theta_deg = wrap_degrees((u as f64 + offset) * reference.deg_per_bin());
    Ok(RotationEstimate {
        theta_deg,
        peak_score: peak,
        shift_u: u as usize,
        shift_v: v,
        low_confidence: peak < cfg.low_confidence_floor,
    })
}

// first index wins ties
fn argmax(it: impl Iterator<Item = (usize, f64)>) -> (usize, f64) {
    it.fold((0, f64::NEG_INFINITY), |best, (i, s)| if s > best.1 { (i, s) } else { best })
}
