use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{rng_for, stream, SynthError, SynthRng};
use crate::ellipse::EllipseParams;
use crate::geometry::BinaryMask;
use crate::par::Exec;
use crate::rotation::GrayFrame;

/// Thin radial protrusions glued to the mask boundary.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpikeSpec {
    pub per_frame: usize,
    pub min_len: f64,
    pub max_len: f64,
    pub width: f64,
}

impl Default for SpikeSpec {
    fn default() -> Self {
        Self { per_frame: 0, min_len: 15.0, max_len: 30.0, width: 2.0 }
    }
}

/// Rectangle `[x0, x1) × [y0, y1)` that hides the mask and darkens the
/// frame on frames `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Occluder {
    pub start: usize,
    pub end: usize,
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Limbus at zero rotation. The whole eye, limbus tilt included, turns
    /// by the scheduled angle about the center.
    pub ellipse: EllipseParams,
    pub rotation_deg: Vec<f64>,
    pub phases: Vec<usize>,
    pub seed: u64,
    /// Standard deviation of the smooth radial jitter of the mask boundary, px.
    pub boundary_sigma: f64,
    /// Additive Gaussian intensity noise.
    pub pixel_noise: f64,
    pub spikes: SpikeSpec,
    pub occluders: Vec<Occluder>,
    /// 3×3 box blur on the gray frame.
    pub blur: bool,
}

impl SceneSpec {
    /// 256×256 eye with `frames` frames split into `phases` equal runs and
    /// a smooth rotation drift within ±15°.
    pub fn scripted(seed: u64, frames: usize, phases: usize) -> Self {
        let phases = phases.max(1);
        let run = frames.div_ceil(phases).max(1);
        let mut rng = rng_for(seed, stream::TEXTURE, u64::MAX);
        let amp = rng.random_range(6.0..14.0);
        let rate = rng.random_range(0.01..0.03);
        let offset = rng.random_range(0.0..TAU);
        Self {
            width: 256,
            height: 256,
            ellipse: EllipseParams::new(128.0, 128.0, 90.0, 76.0, 0.35),
            rotation_deg: (0..frames).map(|i| amp * (rate * i as f64 + offset).sin()).collect(),
            phases: (0..frames).map(|i| (i / run).min(phases - 1)).collect(),
            seed,
            boundary_sigma: 0.5,
            pixel_noise: 0.01,
            spikes: SpikeSpec::default(),
            occluders: Vec::new(),
            blur: false,
        }
    }

    pub fn frames(&self) -> usize {
        self.rotation_deg.len()
    }

    fn validate(&self, frames: usize) -> Result<(), SynthError> {
        if self.rotation_deg.len() != self.phases.len() {
            return Err(SynthError::ScheduleMismatch(self.rotation_deg.len(), self.phases.len()));
        }
        if frames > self.rotation_deg.len() {
            return Err(SynthError::ScheduleTooShort { have: self.rotation_deg.len(), want: frames });
        }
        if self.width == 0 || self.height == 0 {
            return Err(SynthError::InvalidSpec("empty frame".into()));
        }
        if !(self.boundary_sigma >= 0.0 && self.pixel_noise >= 0.0) {
            return Err(SynthError::InvalidSpec("noise levels must be non-negative".into()));
        }
        if !(self.ellipse.l_minor > 0.0 && self.ellipse.l_major >= self.ellipse.l_minor) {
            return Err(SynthError::InvalidSpec("ellipse axes".into()));
        }
        Ok(())
    }

    /// Truth ellipse of frame `i`.
    pub fn ellipse_at(&self, i: usize) -> EllipseParams {
        let mut e = self.ellipse;
        e.phi += self.rotation_deg[i].to_radians();
        e.normalized()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FrameTruth {
    pub ellipse: EllipseParams,
    pub theta_deg: f64,
    pub phase: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneFrame {
    pub index: usize,
    pub mask: BinaryMask,
    pub gray: GrayFrame,
    pub truth: FrameTruth,
}

struct Streak {
    angle: f64,
    half_width: f64,
    amp: f64,
    r0: f64,
    r1: f64,
}

/// Eye appearance in the unrotated frame, as a function of the offset from
/// the limbus center.
struct Texture {
    streaks: Vec<Streak>,
    // (angular frequency, amplitude, phase, radial wavenumber)
    waves: Vec<(f64, f64, f64, f64)>,
}

impl Texture {
    fn new(seed: u64, mean_radius: f64) -> Self {
        let mut rng = rng_for(seed, stream::TEXTURE, 0);
        let count = rng.random_range(24..=48);
        let streaks = (0..count)
            .map(|_| {
                let r0 = mean_radius * rng.random_range(0.45..0.9);
                Streak {
                    angle: rng.random_range(0.0..TAU),
                    half_width: rng.random_range(0.5f64..2.0).to_radians(),
                    amp: rng.random_range(0.06..0.22) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                    r0,
                    r1: r0 + mean_radius * rng.random_range(0.4..0.9),
                }
            })
            .collect();
        let waves = (0..6)
            .map(|_| {
                (
                    rng.random_range(1..=6) as f64,
                    rng.random_range(0.01..0.04),
                    rng.random_range(0.0..TAU),
                    rng.random_range(0.0..0.08),
                )
            })
            .collect();
        Self { streaks, waves }
    }

    /// `r`, `angle`: polar offset from the center at zero rotation; `rho`:
    /// normalized elliptical radius (1 on the limbus).
    fn value(&self, r: f64, angle: f64, rho: f64) -> f64 {
        let pupil = 1.0 / (1.0 + ((rho - 0.38) / 0.02).exp());
        let sclera = 1.0 / (1.0 + (-(rho - 1.0) / 0.025).exp());
        let mut v = 0.34 + 0.38 * sclera - 0.26 * pupil;
        for s in &self.streaks {
            if r < s.r0 - 3.0 || r > s.r1 + 3.0 {
                continue;
            }
            let d = (angle - s.angle + PI).rem_euclid(TAU) - PI;
            if d.abs() > 4.0 * s.half_width {
                continue;
            }
            let fade = ((r - s.r0 + 3.0) / 6.0).clamp(0.0, 1.0) * ((s.r1 + 3.0 - r) / 6.0).clamp(0.0, 1.0);
            v += s.amp * fade * (-(d / s.half_width).powi(2)).exp();
        }
        for &(m, amp, ph, k) in &self.waves {
            v += amp * (m * angle + ph + k * r).cos();
        }
        v.clamp(0.0, 1.0)
    }
}

/// Smooth closed radial jitter with unit variance at every angle.
struct BoundaryJitter {
    coef: Vec<(f64, f64, f64)>,
}

impl BoundaryJitter {
    const MIN_HARMONIC: usize = 3;
    const MAX_HARMONIC: usize = 10;

    fn new(rng: &mut SynthRng) -> Self {
        let n = (Self::MAX_HARMONIC - Self::MIN_HARMONIC + 1) as f64;
        let normal = Normal::new(0.0, (1.0 / n).sqrt()).expect("valid sigma");
        let coef = (Self::MIN_HARMONIC..=Self::MAX_HARMONIC)
            .map(|j| (j as f64, normal.sample(rng), normal.sample(rng)))
            .collect();
        Self { coef }
    }

    fn at(&self, t: f64) -> f64 {
        self.coef.iter().map(|&(j, a, b)| a * (j * t).cos() + b * (j * t).sin()).sum()
    }
}

/// Generate frame `index` alone; identical to the same frame of [`gen_scene`].
pub fn gen_frame(spec: &SceneSpec, index: usize) -> Result<SceneFrame, SynthError> {
    spec.validate(index + 1)?;
    let texture = Texture::new(spec.seed, spec.ellipse.mean_radius());
    Ok(render_frame(spec, &texture, index))
}

/// Frames `0..frames` with ground truth. Frames are independent given the
/// seed, so `exec` only changes speed.
pub fn gen_scene(spec: &SceneSpec, frames: usize, exec: Exec) -> Result<Vec<SceneFrame>, SynthError> {
    spec.validate(frames)?;
    let texture = Texture::new(spec.seed, spec.ellipse.mean_radius());
    Ok(exec.map_range(frames, |i| render_frame(spec, &texture, i)))
}

fn render_frame(spec: &SceneSpec, texture: &Texture, index: usize) -> SceneFrame {
    let (w, h) = (spec.width, spec.height);
    let theta = spec.rotation_deg[index];
    let e = spec.ellipse_at(index);
    let mut rng = rng_for(spec.seed, stream::FRAME, index as u64);
    let jitter = BoundaryJitter::new(&mut rng);

    // gray: sample the unrotated texture at R(−θ)·(p − c)
    let (sr, cr) = theta.to_radians().sin_cos();
    let e0 = spec.ellipse;
    let (s0, c0) = e0.phi.sin_cos();
    let mut gray = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - e0.ox, y as f64 - e0.oy);
            let (qx, qy) = (cr * dx + sr * dy, -sr * dx + cr * dy);
            let (u, v) = (c0 * qx + s0 * qy, -s0 * qx + c0 * qy);
            let rho = ((u / e0.l_major).powi(2) + (v / e0.l_minor).powi(2)).sqrt();
            gray[y * w + x] = texture.value(qx.hypot(qy), qy.atan2(qx), rho);
        }
    }
    if spec.pixel_noise > 0.0 {
        let normal = Normal::new(0.0, spec.pixel_noise).expect("valid sigma");
        for g in gray.iter_mut() {
            *g = (*g + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    if spec.blur {
        gray = box_blur(&gray, w, h);
    }

    // mask: filled ellipse with boundary jitter, in the rotated limbus frame
    let (se, ce) = e.phi.sin_cos();
    let mut bits = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - e.ox, y as f64 - e.oy);
            let (u, v) = (ce * dx + se * dy, -se * dx + ce * dy);
            let t = (v / e.l_minor).atan2(u / e.l_major);
            let rho = ((u / e.l_major).powi(2) + (v / e.l_minor).powi(2)).sqrt();
            let rt = (e.l_major * t.cos()).hypot(e.l_minor * t.sin());
            bits[y * w + x] = rho * rt <= rt + spec.boundary_sigma * jitter.at(t);
        }
    }
    for _ in 0..spec.spikes.per_frame {
        let t = rng.random_range(0.0..TAU);
        let len = rng.random_range(spec.spikes.min_len..=spec.spikes.max_len);
        draw_spike(&mut bits, w, h, &e, t, len, spec.spikes.width);
    }
    for o in spec.occluders.iter().filter(|o| (o.start..o.end).contains(&index)) {
        for y in o.y0.min(h)..o.y1.min(h) {
            for x in o.x0.min(w)..o.x1.min(w) {
                bits[y * w + x] = false;
                gray[y * w + x] = 0.08;
            }
        }
    }

    SceneFrame {
        index,
        mask: BinaryMask::from_bits(w, h, bits).expect("dimensions validated"),
        gray: GrayFrame::new(w, h, gray).expect("finite intensities"),
        truth: FrameTruth { ellipse: e, theta_deg: theta, phase: spec.phases[index] },
    }
}

/// Outward strip of `len × width` px starting 2 px inside the boundary at
/// curve parameter `t`.
fn draw_spike(bits: &mut [bool], w: usize, h: usize, e: &EllipseParams, t: f64, len: f64, width: f64) {
    let p = e.point_at(t);
    // outward normal in the world frame
    let (s, c) = t.sin_cos();
    let (nx, ny) = (e.l_minor * c, e.l_major * s);
    let (sp, cp) = e.phi.sin_cos();
    let (mut wx, mut wy) = (cp * nx - sp * ny, sp * nx + cp * ny);
    let norm = wx.hypot(wy);
    wx /= norm;
    wy /= norm;
    let steps_l = ((len + 2.0) * 4.0).ceil() as usize;
    let steps_w = (width * 4.0).ceil().max(1.0) as usize;
    for i in 0..=steps_l {
        let along = -2.0 + i as f64 * 0.25;
        for j in 0..=steps_w {
            let across = -0.5 * width + j as f64 * width / steps_w as f64;
            let x = (p[0] + along * wx - across * wy).round();
            let y = (p[1] + along * wy + across * wx).round();
            if x >= 0.0 && y >= 0.0 && (x as usize) < w && (y as usize) < h {
                bits[y as usize * w + x as usize] = true;
            }
        }
    }
}

fn box_blur(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (mut s, mut n) = (0.0, 0.0);
            for yy in y.saturating_sub(1)..(y + 2).min(h) {
                for xx in x.saturating_sub(1)..(x + 2).min(w) {
                    s += src[yy * w + xx];
                    n += 1.0;
                }
            }
            out[y * w + x] = s / n;
        }
    }
    out
}
