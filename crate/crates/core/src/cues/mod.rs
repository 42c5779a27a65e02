//! AR visual cues built from the fitted limbus and the eye rotation, and
//! the per-phase selection of which cues to show.

mod geometry;
mod phase;
pub mod svg;

pub use geometry::{ccr, incision_curve, incision_guideline, rrl, Circle, EllipseArc, Segment};
pub use phase::{PhaseCueMap, SurgicalPhase, DEFAULT_PHASE_NAMES};

use crate::ellipse::EllipseParams;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CueError {
    #[error("cue {0} needs an input that is not available")]
    MissingInput(CueKind),
    #[error("guideline does not intersect the ellipse")]
    NoIntersection,
    #[error("arc length {len:.3} px must be positive and below the perimeter {perimeter:.3} px")]
    ArcTooLong { len: f64, perimeter: f64 },
    #[error("phase {phase} is outside the cue map ({phases} phases)")]
    PhaseOutOfRange { phase: usize, phases: usize },
    #[error("unknown cue kind {0:?}")]
    UnknownKind(String),
}

/// The seven cue kinds, declared in construction order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CueKind {
    /// Fitted limbus contour.
    Flc,
    /// Capsulorhexis circle.
    Ccr,
    /// Primary incision curve.
    Pic,
    /// Secondary incision curve.
    Sic,
    /// Primary incision guideline.
    Pig,
    /// Secondary incision guideline.
    Sig,
    /// Rotation reference line.
    Rrl,
}

impl CueKind {
    pub const ALL: [CueKind; 7] =
        [CueKind::Flc, CueKind::Ccr, CueKind::Pic, CueKind::Sic, CueKind::Pig, CueKind::Sig, CueKind::Rrl];

    pub fn name(self) -> &'static str {
        match self {
            CueKind::Flc => "FLC",
            CueKind::Ccr => "CCR",
            CueKind::Pic => "PIC",
            CueKind::Sic => "SIC",
            CueKind::Pig => "PIG",
            CueKind::Sig => "SIG",
            CueKind::Rrl => "RRL",
        }
    }

    /// Cues anchored to the rotation reference line.
    pub fn needs_rotation(self) -> bool {
        matches!(self, CueKind::Rrl | CueKind::Pig | CueKind::Sig | CueKind::Pic | CueKind::Sic)
    }
}

impl std::fmt::Display for CueKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for CueKind {
    type Err = CueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CueKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| CueError::UnknownKind(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CueGeometry {
    Ellipse(EllipseParams),
    Segment(Segment),
    Arc(EllipseArc),
    Circle(Circle),
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VisualCue {
    pub kind: CueKind,
    pub geometry: CueGeometry,
}

/// Which side of the RRL the guidelines open toward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleSense {
    /// From +x toward +y in image coordinates.
    #[default]
    Ccw,
    Cw,
}

impl AngleSense {
    pub fn sign(self) -> f64 {
        match self {
            AngleSense::Ccw => 1.0,
            AngleSense::Cw => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Incision {
    Primary,
    Secondary,
}

impl Incision {
    /// Included angle with the RRL, degrees.
    pub fn angle_deg(self) -> f64 {
        match self {
            Incision::Primary => 95.0,
            Incision::Secondary => 175.0,
        }
    }
}

/// Knife arc length: absolute, or a fraction of `l_major + l_minor`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArcLength {
    Pixels(f64),
    Fraction(f64),
}

impl ArcLength {
    pub fn resolve(self, e: &EllipseParams) -> f64 {
        match self {
            ArcLength::Pixels(px) => px,
            ArcLength::Fraction(f) => f * (e.l_major + e.l_minor),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CueConfig {
    pub sense: AngleSense,
    pub primary_arc: ArcLength,
    pub secondary_arc: ArcLength,
}

impl Default for CueConfig {
    fn default() -> Self {
        Self {
            sense: AngleSense::Ccw,
            primary_arc: ArcLength::Fraction(0.25),
            secondary_arc: ArcLength::Fraction(0.12),
        }
    }
}

/// Per-frame inputs; either may be missing after a failed stage.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CueInputs {
    pub ellipse: Option<EllipseParams>,
    pub theta_deg: Option<f64>,
}

/// Build exactly the kinds mapped to `phase`, in the fixed kind order.
pub fn cues_for_phase(
    phase: usize,
    map: &PhaseCueMap,
    inputs: &CueInputs,
    cfg: &CueConfig,
) -> Result<Vec<VisualCue>, CueError> {
    let kinds = map.kinds(phase)?;
    build_cues(&kinds, inputs, cfg)
}

/// Build the given kinds (deduplicated, fixed order).
pub fn build_cues(
    kinds: &[CueKind],
    inputs: &CueInputs,
    cfg: &CueConfig,
) -> Result<Vec<VisualCue>, CueError> {
    let mut kinds = kinds.to_vec();
    kinds.sort();
    kinds.dedup();
    let mut out = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let e = inputs.ellipse.ok_or(CueError::MissingInput(kind))?;
        let theta = || inputs.theta_deg.ok_or(CueError::MissingInput(kind));
        let guide = |which| -> Result<Segment, CueError> {
            Ok(incision_guideline(&e, &rrl(&e, theta()?), which, cfg.sense))
        };
        let geometry = match kind {
            CueKind::Flc => CueGeometry::Ellipse(e),
            CueKind::Ccr => CueGeometry::Circle(ccr(&e)),
            CueKind::Rrl => CueGeometry::Segment(rrl(&e, theta()?)),
            CueKind::Pig => CueGeometry::Segment(guide(Incision::Primary)?),
            CueKind::Sig => CueGeometry::Segment(guide(Incision::Secondary)?),
            CueKind::Pic => CueGeometry::Arc(incision_curve(
                &e,
                &guide(Incision::Primary)?,
                cfg.primary_arc.resolve(&e),
            )?),
            CueKind::Sic => CueGeometry::Arc(incision_curve(
                &e,
                &guide(Incision::Secondary)?,
                cfg.secondary_arc.resolve(&e),
            )?),
        };
        out.push(VisualCue { kind, geometry });
    }
    Ok(out)
}
