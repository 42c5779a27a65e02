//! SVG primitives for cues. Coordinates are pixel coordinates with y down,
//! so SVG's positive rotation and sweep direction match the crate's angle
//! sense.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write;

use super::{CueGeometry, CueKind, VisualCue};

/// Stroke color per cue kind.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Palette {
    colors: BTreeMap<CueKind, String>,
}

impl Default for Palette {
    fn default() -> Self {
        let colors = [
            (CueKind::Flc, "#00e676"),
            (CueKind::Ccr, "#ffd600"),
            (CueKind::Pic, "#ff1744"),
            (CueKind::Sic, "#ff9100"),
            (CueKind::Pig, "#d500f9"),
            (CueKind::Sig, "#2979ff"),
            (CueKind::Rrl, "#00e5ff"),
        ]
        .into_iter()
        .map(|(k, c)| (k, c.to_string()))
        .collect();
        Self { colors }
    }
}

impl Palette {
    pub fn color(&self, kind: CueKind) -> &str {
        self.colors.get(&kind).map(String::as_str).unwrap_or("#ffffff")
    }

    pub fn set(&mut self, kind: CueKind, color: impl Into<String>) {
        self.colors.insert(kind, color.into());
    }
}

fn f(v: f64) -> String {
    let s = format!("{v:.3}");
    // avoid "-0.000"
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0.000".to_string()
    } else {
        s
    }
}

/// One SVG element for `cue`.
pub fn cue_element(cue: &VisualCue, color: &str, stroke_width: f64) -> String {
    let style = format!(
        r#"fill="none" stroke="{color}" stroke-width="{}" data-cue="{}""#,
        f(stroke_width),
        cue.kind
    );
    match cue.geometry {
        CueGeometry::Ellipse(e) => format!(
            r#"<ellipse cx="{}" cy="{}" rx="{}" ry="{}" transform="rotate({} {} {})" {style}/>"#,
            f(e.ox),
            f(e.oy),
            f(e.l_major),
            f(e.l_minor),
            f(e.phi.to_degrees()),
            f(e.ox),
            f(e.oy)
        ),
        CueGeometry::Segment(s) => format!(
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" {style}/>"#,
            f(s.start[0]),
            f(s.start[1]),
            f(s.end[0]),
            f(s.end[1])
        ),
        CueGeometry::Arc(a) => {
            let (p0, p1) = (a.start_point(), a.end_point());
            let large = u8::from(a.t_end - a.t_start > PI);
            format!(
                r#"<path d="M {} {} A {} {} {} {} 1 {} {}" {style}/>"#,
                f(p0[0]),
                f(p0[1]),
                f(a.ellipse.l_major),
                f(a.ellipse.l_minor),
                f(a.ellipse.phi.to_degrees()),
                large,
                f(p1[0]),
                f(p1[1])
            )
        }
        CueGeometry::Circle(c) => format!(
            r#"<circle cx="{}" cy="{}" r="{}" {style}/>"#,
            f(c.center[0]),
            f(c.center[1]),
            f(c.radius)
        ),
    }
}

/// Standalone overlay document; `background` is an optional image href.
pub fn overlay_document(
    width: usize,
    height: usize,
    cues: &[VisualCue],
    palette: &Palette,
    background: Option<&str>,
) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    if let Some(href) = background {
        let _ = writeln!(out, r#"  <image href="{href}" x="0" y="0" width="{width}" height="{height}"/>"#);
    }
    let stroke = (width.max(height) as f64 / 256.0).max(1.0);
    for cue in cues {
        let _ = writeln!(out, "  {}", cue_element(cue, palette.color(cue.kind), stroke));
    }
    out.push_str("</svg>\n");
    out
}
