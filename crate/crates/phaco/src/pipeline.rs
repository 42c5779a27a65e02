//! Per-frame guidance: phase, limbus ellipse, rotation against the phase
//! reference, and the cue set for the active phase.
//!
//! Geometry failures never abort a session. A frame whose fit fails reuses
//! the last good ellipse and bumps a staleness counter; past `n_stale` held
//! frames the cue set is withdrawn. A rotation that cannot be trusted drops
//! only the cues anchored to the reference line.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use phaco_core::cues::{build_cues, CueInputs, VisualCue};
use phaco_core::ellipse::{fit_ellipse, EllipseParams};
use phaco_core::geometry::{largest_component, reject_outliers, trace_contour, BinaryMask, Connectivity};
use phaco_core::metrics::{mean_sd, MeanSd};
use phaco_core::rotation::{estimate_rotation, polar_unwrap, AnnulusSpec, GrayFrame, PolarPatch};
use phaco_lssat::{LsSat, StreamState};

use crate::config::Config;
use crate::PhacoError;

pub const RESULT_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct FrameBundle {
    pub index: usize,
    pub mask: BinaryMask,
    pub gray: GrayFrame,
    pub feature: Option<Vec<f64>>,
    /// Externally supplied phase, used when no recognizer is loaded.
    pub phase: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Flags {
    pub fallback_ellipse: bool,
    pub low_confidence_rotation: bool,
    pub no_cues: bool,
}

/// Wall time per stage, milliseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub recognize: f64,
    pub segment: f64,
    pub filter: f64,
    pub fit: f64,
    pub unwrap: f64,
    pub rotation: f64,
    pub cues: f64,
    pub total: f64,
}

impl StageTimings {
    pub const STAGES: [&'static str; 8] = ["recognize", "segment", "filter", "fit", "unwrap", "rotation", "cues", "total"];

    pub fn values(&self) -> [f64; 8] {
        [self.recognize, self.segment, self.filter, self.fit, self.unwrap, self.rotation, self.cues, self.total]
    }
}

/// One line of `results.jsonl`. Timings are kept out of the serialized
/// record so that results are reproducible byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub v: u32,
    pub index: usize,
    /// Recognizer argmax, or the external phase in geometry-only mode.
    pub phase: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    /// Phase after hysteresis; drives reference management and cues.
    pub active_phase: usize,
    pub reference_index: Option<usize>,
    pub ellipse: Option<EllipseParams>,
    pub theta_deg: Option<f64>,
    pub rotation_score: Option<f64>,
    pub cues: Vec<VisualCue>,
    pub flags: Flags,
    #[serde(skip)]
    pub timings: StageTimings,
}

#[derive(Clone, Debug)]
struct Reference {
    patch: PolarPatch,
    index: usize,
}

/// Mutable per-session state. Sessions share nothing.
#[derive(Clone, Debug)]
pub struct SessionState<'m> {
    recognizer: Option<StreamState<'m>>,
    active: Option<usize>,
    candidate: Option<(usize, usize)>,
    reference: Option<Reference>,
    last_ellipse: Option<EllipseParams>,
    staleness: usize,
    last_index: Option<usize>,
}

impl<'m> SessionState<'m> {
    /// Geometry-only session: every bundle must carry its phase.
    pub fn geometry_only() -> Self {
        Self {
            recognizer: None,
            active: None,
            candidate: None,
            reference: None,
            last_ellipse: None,
            staleness: 0,
            last_index: None,
        }
    }

    pub fn with_model(model: &'m LsSat) -> Self {
        Self { recognizer: Some(StreamState::new(model)), ..Self::geometry_only() }
    }

    pub fn active_phase(&self) -> Option<usize> {
        self.active
    }

    pub fn staleness(&self) -> usize {
        self.staleness
    }

    pub fn reference_index(&self) -> Option<usize> {
        self.reference.as_ref().map(|r| r.index)
    }

    /// Apply hysteresis to a new raw phase; true when the active phase changed.
    fn update_phase(&mut self, raw: usize, m: usize) -> bool {
        match self.active {
            None => {
                self.active = Some(raw);
                true
            }
            Some(a) if a == raw => {
                self.candidate = None;
                false
            }
            Some(_) => {
                let count = match self.candidate {
                    Some((p, c)) if p == raw => c + 1,
                    _ => 1,
                };
                if count >= m {
                    self.active = Some(raw);
                    self.candidate = None;
                    true
                } else {
                    self.candidate = Some((raw, count));
                    false
                }
            }
        }
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn argmax(p: &[f64]) -> usize {
    p.iter().enumerate().fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) }).0
}

/// Mask to fitted ellipse, timing the three geometric stages.
fn fit_mask(mask: &BinaryMask, cfg: &Config, t: &mut StageTimings) -> Option<EllipseParams> {
    let clock = Instant::now();
    let contour = largest_component(mask, Connectivity::Eight).and_then(|m| trace_contour(&m));
    t.segment = ms(clock);
    let clock = Instant::now();
    let points = contour.and_then(|c| reject_outliers(&c.to_f64(), cfg.curvature_spacing, &cfg.curvature, cfg.curvature_passes));
    t.filter = ms(clock);
    let clock = Instant::now();
    let fitted = points.ok().and_then(|p| fit_ellipse(&p, &cfg.fit_config()).ok()).map(|(e, _)| e);
    t.fit = ms(clock);
    fitted.filter(|e| e.is_valid())
}

fn unwrap(gray: &GrayFrame, e: &EllipseParams, cfg: &Config, radial_bins: Option<usize>) -> Option<PolarPatch> {
    let spec = AnnulusSpec::new(*e, cfg.lambda_in, cfg.lambda_out).ok()?;
    let bins = radial_bins.unwrap_or(if cfg.radial_bins > 0 { cfg.radial_bins } else { spec.default_radial_bins() });
    polar_unwrap(gray, &spec, cfg.angular_bins, bins).ok()
}

/// Process one frame. Errors only on invalid input; geometric failures
/// degrade through the fallback ladder.
pub fn process_frame(state: &mut SessionState<'_>, bundle: &FrameBundle, cfg: &Config) -> Result<FrameResult, PhacoError> {
    let frame_err = |msg: String| PhacoError::Frame { index: bundle.index, msg };
    if (bundle.mask.width(), bundle.mask.height()) != (bundle.gray.width(), bundle.gray.height()) {
        return Err(frame_err("mask and gray dimensions differ".into()));
    }
    if state.last_index.is_some_and(|last| bundle.index <= last) {
        return Err(frame_err("frame indices must increase".into()));
    }
    let start = Instant::now();
    let mut t = StageTimings::default();

    let clock = Instant::now();
    let (phase, probs) = match (&mut state.recognizer, &bundle.feature, bundle.phase) {
        (Some(rec), Some(x), _) => {
            let p = rec.push(x).map_err(|e| frame_err(e.to_string()))?;
            (argmax(&p), Some(p))
        }
        (Some(_), None, _) => return Err(frame_err("recognizer needs a feature vector".into())),
        (None, _, Some(p)) => (p, None),
        (None, _, None) => return Err(frame_err("geometry-only mode needs an external phase".into())),
    };
    if phase >= cfg.phases {
        return Err(frame_err(format!("phase {phase} outside {} phases", cfg.phases)));
    }
    t.recognize = ms(clock);
    state.last_index = Some(bundle.index);
    if state.update_phase(phase, cfg.hysteresis) {
        state.reference = None;
    }
    let active = state.active.expect("set by update_phase");

    let mut flags = Flags::default();
    let fitted = fit_mask(&bundle.mask, cfg, &mut t);
    let ellipse = match fitted {
        Some(e) => {
            state.last_ellipse = Some(e);
            state.staleness = 0;
            Some(e)
        }
        None => {
            state.staleness += 1;
            flags.fallback_ellipse = state.last_ellipse.is_some();
            state.last_ellipse
        }
    };

    let mut theta = None;
    let mut score = None;
    let mut trusted = false;
    if let Some(e) = ellipse {
        let clock = Instant::now();
        let bins = state.reference.as_ref().map(|r| r.patch.radial_bins());
        let patch = unwrap(&bundle.gray, &e, cfg, bins);
        t.unwrap = ms(clock);
        let clock = Instant::now();
        match (patch, &state.reference) {
            // a held ellipse never seeds a reference
            (Some(p), None) if fitted.is_some() => {
                state.reference = Some(Reference { patch: p, index: bundle.index });
                theta = Some(0.0);
                score = Some(1.0);
                trusted = true;
            }
            (Some(p), Some(r)) => {
                // zero variance or mismatched grids leave theta unset
                if let Ok(est) = estimate_rotation(&r.patch, &p, &cfg.rotation_config()) {
                    theta = Some(est.theta_deg);
                    score = Some(est.peak_score);
                    trusted = !est.low_confidence;
                }
            }
            _ => {}
        }
        t.rotation = ms(clock);
        flags.low_confidence_rotation = !trusted;
    }

    let clock = Instant::now();
    let mut cues = Vec::new();
    if let Some(e) = ellipse.filter(|_| state.staleness <= cfg.n_stale) {
        let kinds = cfg.cue_map.kinds(active).map_err(|e| frame_err(e.to_string()))?;
        let inputs = CueInputs { ellipse: Some(e), theta_deg: theta.filter(|_| trusted) };
        for kind in kinds {
            if kind.needs_rotation() && inputs.theta_deg.is_none() {
                continue;
            }
            if let Ok(c) = build_cues(&[kind], &inputs, &cfg.cues) {
                cues.extend(c);
            }
        }
        cues.sort_by_key(|c| c.kind);
        cues.dedup_by_key(|c| c.kind);
    }
    flags.no_cues = cues.is_empty();
    t.cues = ms(clock);
    t.total = ms(start);

    Ok(FrameResult {
        v: RESULT_SCHEMA,
        index: bundle.index,
        phase,
        probs,
        active_phase: active,
        reference_index: state.reference_index(),
        ellipse,
        theta_deg: theta,
        rotation_score: score,
        cues,
        flags,
        timings: t,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub frames: usize,
    pub wall_ms: f64,
    /// Frames over total wall time, input loading and sinks included.
    pub fps: f64,
    pub stages_ms: BTreeMap<String, MeanSd>,
    pub fallback_ellipse: usize,
    pub low_confidence_rotation: usize,
    pub no_cues: usize,
}

/// Process a stream strictly in order, handing each result to `sink`.
pub fn run_session<'m, I, F>(
    state: &mut SessionState<'m>,
    frames: I,
    cfg: &Config,
    mut sink: F,
) -> Result<SessionSummary, PhacoError>
where
    I: IntoIterator<Item = Result<FrameBundle, PhacoError>>,
    F: FnMut(&FrameResult) -> Result<(), PhacoError>,
{
    let start = Instant::now();
    let mut per_stage: Vec<Vec<f64>> = vec![Vec::new(); StageTimings::STAGES.len()];
    let mut s = SessionSummary::default();
    for bundle in frames {
        let r = process_frame(state, &bundle?, cfg)?;
        for (acc, v) in per_stage.iter_mut().zip(r.timings.values()) {
            acc.push(v);
        }
        s.frames += 1;
        s.fallback_ellipse += usize::from(r.flags.fallback_ellipse);
        s.low_confidence_rotation += usize::from(r.flags.low_confidence_rotation);
        s.no_cues += usize::from(r.flags.no_cues);
        sink(&r)?;
    }
    s.wall_ms = ms(start);
    s.fps = if s.wall_ms > 0.0 { s.frames as f64 / (s.wall_ms / 1e3) } else { 0.0 };
    s.stages_ms = StageTimings::STAGES.iter().zip(&per_stage).map(|(n, v)| (n.to_string(), mean_sd(v))).collect();
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use phaco_core::cues::CueKind;

    fn disk(cx: f64, cy: f64, r: f64) -> BinaryMask {
        BinaryMask::from_fn(96, 96, |x, y| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r).unwrap()
    }

    fn streaks() -> GrayFrame {
        GrayFrame::from_fn(96, 96, |x, y| {
            let a = (y as f64 - 48.0).atan2(x as f64 - 48.0);
            0.5 + 0.3 * (7.0 * a).sin() + 0.1 * (13.0 * a + 1.0).cos()
        })
        .unwrap()
    }

    fn bundle(index: usize, mask: BinaryMask, phase: usize) -> FrameBundle {
        FrameBundle { index, mask, gray: streaks(), feature: None, phase: Some(phase) }
    }

    fn cfg() -> Config {
        Config { angular_bins: 360, ..Config::default() }
    }

    #[test]
    fn first_frame_is_its_own_reference() {
        let mut s = SessionState::geometry_only();
        let r = process_frame(&mut s, &bundle(0, disk(48.0, 48.0, 30.0), 0), &cfg()).unwrap();
        assert_eq!(r.theta_deg, Some(0.0));
        assert_eq!(r.reference_index, Some(0));
        assert!(!r.flags.no_cues);
        let kinds: Vec<CueKind> = r.cues.iter().map(|c| c.kind).collect();
        assert_eq!(kinds, vec![CueKind::Flc, CueKind::Pic, CueKind::Sic, CueKind::Pig, CueKind::Sig, CueKind::Rrl]);
    }

    #[test]
    fn empty_mask_holds_last_ellipse_until_stale() {
        let c = Config { n_stale: 2, ..cfg() };
        let mut s = SessionState::geometry_only();
        let good = process_frame(&mut s, &bundle(0, disk(48.0, 48.0, 30.0), 1), &c).unwrap();
        for i in 1..=3 {
            let r = process_frame(&mut s, &bundle(i, BinaryMask::new(96, 96).unwrap(), 1), &c).unwrap();
            assert!(r.flags.fallback_ellipse);
            assert_eq!(r.ellipse, good.ellipse);
            assert_eq!(s.staleness(), i);
            assert_eq!(r.flags.no_cues, i > 2);
            assert_eq!(r.cues.is_empty(), r.flags.no_cues);
        }
        let back = process_frame(&mut s, &bundle(4, disk(48.0, 48.0, 30.0), 1), &c).unwrap();
        assert!(!back.flags.fallback_ellipse && !back.flags.no_cues);
        assert_eq!(s.staleness(), 0);
    }

    #[test]
    fn no_ellipse_ever_means_no_cues() {
        let mut s = SessionState::geometry_only();
        let r = process_frame(&mut s, &bundle(0, BinaryMask::new(96, 96).unwrap(), 0), &cfg()).unwrap();
        assert!(r.flags.no_cues && !r.flags.fallback_ellipse && r.ellipse.is_none() && r.cues.is_empty());
    }

    #[test]
    fn flat_texture_drops_rotation_cues_only() {
        let mut s = SessionState::geometry_only();
        let mut b = bundle(0, disk(48.0, 48.0, 30.0), 0);
        process_frame(&mut s, &b, &cfg()).unwrap();
        b.index = 1;
        b.gray = GrayFrame::from_fn(96, 96, |_, _| 0.5).unwrap();
        let r = process_frame(&mut s, &b, &cfg()).unwrap();
        assert!(r.flags.low_confidence_rotation);
        assert_eq!(r.theta_deg, None);
        assert_eq!(r.cues.iter().map(|c| c.kind).collect::<Vec<_>>(), vec![CueKind::Flc]);
    }

    #[test]
    fn hysteresis_delays_reference_switch() {
        let mut s = SessionState::geometry_only();
        let phases = [2, 2, 3, 3, 2, 3, 3, 3, 3];
        let mut refs = Vec::new();
        let mut active = Vec::new();
        for (i, p) in phases.iter().enumerate() {
            let r = process_frame(&mut s, &bundle(i, disk(48.0, 48.0, 30.0), *p), &cfg()).unwrap();
            refs.push(r.reference_index.unwrap());
            active.push(r.active_phase);
        }
        assert_eq!(active, vec![2, 2, 2, 2, 2, 2, 2, 3, 3]);
        assert_eq!(refs, vec![0, 0, 0, 0, 0, 0, 0, 7, 7]);
    }

    #[test]
    fn input_errors_are_reported() {
        let mut s = SessionState::geometry_only();
        let mut b = bundle(3, disk(48.0, 48.0, 30.0), 0);
        b.phase = None;
        assert!(process_frame(&mut s, &b, &cfg()).is_err());
        b.phase = Some(42);
        assert!(process_frame(&mut s, &b, &cfg()).is_err());
        b.phase = Some(0);
        process_frame(&mut s, &b, &cfg()).unwrap();
        assert!(process_frame(&mut s, &b, &cfg()).is_err(), "repeated index");
    }

    #[test]
    fn empty_stream_summary() {
        let mut s = SessionState::geometry_only();
        let sum = run_session(&mut s, std::iter::empty(), &cfg(), |_| Ok(())).unwrap();
        assert_eq!(sum.frames, 0);
        assert_eq!(sum.fps, 0.0);
    }
}
