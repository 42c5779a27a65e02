//! Cue overlays as SVG documents or as PNG frames with the cues drawn onto
//! the grayscale image.

use std::f64::consts::TAU;

use image::{Rgb, RgbImage};

use phaco_core::cues::svg::{overlay_document, Palette};
use phaco_core::cues::{CueGeometry, VisualCue};
use phaco_core::rotation::GrayFrame;

pub fn svg_overlay(width: usize, height: usize, cues: &[VisualCue], palette: &Palette, background: Option<&str>) -> String {
    overlay_document(width, height, cues, palette, background)
}

/// `#rrggbb` or `#rgb`; anything else draws white.
pub fn parse_color(s: &str) -> [u8; 3] {
    let hex = s.trim().trim_start_matches('#');
    let nib = |i: usize| u8::from_str_radix(&hex[i..i + 1], 16).ok().map(|v| v * 17);
    let byte = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).ok();
    let rgb = match hex.len() {
        6 if hex.is_ascii() => [byte(0), byte(2), byte(4)],
        3 if hex.is_ascii() => [nib(0), nib(1), nib(2)],
        _ => [None; 3],
    };
    match rgb {
        [Some(r), Some(g), Some(b)] => [r, g, b],
        _ => [255; 3],
    }
}

/// Points along a cue, at most half a pixel apart.
pub fn sample_cue(cue: &VisualCue) -> Vec<[f64; 2]> {
    let steps = |len: f64| ((2.0 * len).ceil() as usize).max(2);
    match cue.geometry {
        CueGeometry::Ellipse(e) => {
            let n = steps(e.perimeter());
            (0..=n).map(|i| e.point_at(TAU * i as f64 / n as f64)).collect()
        }
        CueGeometry::Circle(c) => {
            let n = steps(TAU * c.radius);
            (0..=n)
                .map(|i| {
                    let (s, co) = (TAU * i as f64 / n as f64).sin_cos();
                    [c.center[0] + c.radius * co, c.center[1] + c.radius * s]
                })
                .collect()
        }
        CueGeometry::Segment(seg) => {
            let n = steps(seg.length());
            (0..=n)
                .map(|i| {
                    let s = i as f64 / n as f64;
                    [seg.start[0] + s * (seg.end[0] - seg.start[0]), seg.start[1] + s * (seg.end[1] - seg.start[1])]
                })
                .collect()
        }
        CueGeometry::Arc(arc) => {
            let n = steps(arc.length());
            (0..=n).map(|i| arc.point_at(i as f64 / n as f64)).collect()
        }
    }
}

/// Gray frame (values clamped to `[0, 1]`) with the cues stamped on top.
pub fn rasterize(gray: &GrayFrame, cues: &[VisualCue], palette: &Palette) -> RgbImage {
    let (w, h) = (gray.width(), gray.height());
    let mut img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let v = (gray.get(x as usize, y as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([v, v, v])
    });
    let radius = ((w.max(h) as f64 / 256.0).round() as i64).max(1) - 1;
    for cue in cues {
        let color = Rgb(parse_color(palette.color(cue.kind)));
        for [x, y] in sample_cue(cue) {
            let (px, py) = (x.round() as i64, y.round() as i64);
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    let (qx, qy) = (px + dx, py + dy);
                    if qx >= 0 && qy >= 0 && (qx as usize) < w && (qy as usize) < h {
                        img.put_pixel(qx as u32, qy as u32, color);
                    }
                }
            }
        }
    }
    img
}
