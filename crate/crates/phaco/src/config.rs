//! Flat `key = value` configuration. Blank lines and lines starting with
//! `#` are ignored; there are no trailing comments since colors use `#`.
//! Unknown keys and out-of-range values are rejected with the line number.

use std::fmt::Write;
use std::path::Path;

use phaco_core::cues::svg::Palette;
use phaco_core::cues::{AngleSense, ArcLength, CueConfig, CueKind, PhaseCueMap};
use phaco_core::ellipse::FitConfig;
use phaco_core::geometry::{CurvatureFilter, CurvatureScale, FilterMode};
use phaco_core::par::Exec;
use phaco_core::rotation::{NccMethod, RotationConfig};
use phaco_lssat::{LsSatConfig, TrainConfig};

use crate::PhacoError;

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub phases: usize,
    pub model: LsSatConfig,
    pub train: TrainConfig,
    /// Weight of the cross-entropy term in the segmentation hybrid loss.
    pub alpha: f64,
    /// Weight of the segmentation term in the joint loss.
    pub beta: f64,
    pub curvature: CurvatureFilter,
    pub curvature_spacing: usize,
    pub curvature_passes: usize,
    pub fit: FitConfig,
    pub lambda_in: f64,
    pub lambda_out: f64,
    pub angular_bins: usize,
    /// 0 picks one bin per pixel of annulus width.
    pub radial_bins: usize,
    pub rotation: RotationConfig,
    /// Consecutive agreeing frames before the active phase switches.
    pub hysteresis: usize,
    /// Frames a held ellipse may be reused before cues are withdrawn.
    pub n_stale: usize,
    pub cue_map: PhaseCueMap,
    pub cues: CueConfig,
    pub palette: Palette,
    pub exec: Exec,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            phases: 10,
            model: LsSatConfig::default(),
            train: TrainConfig::default(),
            alpha: 0.6,
            beta: 0.5,
            curvature: CurvatureFilter::default(),
            curvature_spacing: 5,
            curvature_passes: 3,
            fit: FitConfig::default(),
            lambda_in: 3.0,
            lambda_out: 3.0,
            angular_bins: 720,
            radial_bins: 0,
            rotation: RotationConfig::default(),
            hysteresis: 3,
            n_stale: 15,
            cue_map: PhaseCueMap::default_for(10),
            cues: CueConfig::default(),
            palette: Palette::default(),
            exec: Exec::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("{key}: expected true or false, got {v:?}")),
    }
}

fn parse_arc(key: &str, v: &str) -> Result<ArcLength, String> {
    match v.strip_suffix("px") {
        Some(px) => Ok(ArcLength::Pixels(parse(key, px.trim())?)),
        None => Ok(ArcLength::Fraction(parse(key, v)?)),
    }
}

fn fmt_arc(a: ArcLength) -> String {
    match a {
        ArcLength::Pixels(px) => format!("{px}px"),
        ArcLength::Fraction(f) => f.to_string(),
    }
}

fn parse_kinds(key: &str, v: &str) -> Result<Vec<CueKind>, String> {
    if v.is_empty() || v == "none" {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| s.parse::<CueKind>().map_err(|e| format!("{key}: {e}"))).collect()
}

fn exec_name(e: Exec) -> &'static str {
    match e {
        Exec::Sequential => "sequential",
        Exec::Parallel => "parallel",
    }
}

impl Config {
    /// Defaults with the phase count, model head and cue map set to `phases`.
    pub fn with_phases(phases: usize) -> Self {
        let d = Config::default();
        Config {
            phases,
            model: LsSatConfig { phases, ..d.model },
            cue_map: PhaseCueMap::default_for(phases),
            ..d
        }
    }

    pub fn load(path: &Path) -> Result<Self, PhacoError> {
        let text = std::fs::read_to_string(path).map_err(|e| PhacoError::io(path, e))?;
        Self::parse(&text).map_err(|msg| PhacoError::Invalid { path: path.to_path_buf(), msg })
    }

    /// Defaults overridden by the lines of `text`.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut cfg = Config::default();
        let mut cue_lines = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key = value", no + 1))?;
            let (k, v) = (k.trim(), v.trim());
            if let Some(p) = k.strip_prefix("cues.").and_then(|p| p.parse::<usize>().ok()) {
                cue_lines.push((p, parse_kinds(k, v).map_err(|e| format!("line {}: {e}", no + 1))?));
                continue;
            }
            cfg.set(k, v).map_err(|e| format!("line {}: {e}", no + 1))?;
        }
        // the phase count decides the default map; explicit entries go on top
        if cfg.cue_map.phases() != cfg.phases {
            cfg.cue_map = PhaseCueMap::default_for(cfg.phases);
        }
        for (p, kinds) in cue_lines {
            if p >= cfg.phases {
                return Err(format!("cues.{p}: phase outside 0..{}", cfg.phases));
            }
            cfg.cue_map.set(p, kinds);
        }
        cfg.model.phases = cfg.phases;
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, k: &str, v: &str) -> Result<(), String> {
        match k {
            "phases" => self.phases = parse(k, v)?,
            "model.raw_dim" => self.model.raw_dim = parse(k, v)?,
            "model.kappa" => self.model.kappa = parse(k, v)?,
            "model.heads" => self.model.heads = parse(k, v)?,
            "model.n_self" => self.model.n_self = parse(k, v)?,
            "model.n_cross" => self.model.n_cross = parse(k, v)?,
            "model.tau" => self.model.tau = parse(k, v)?,
            "model.literal" => self.model.literal = parse_bool(k, v)?,
            "train.lr" => self.train.lr = parse(k, v)?,
            "train.epochs" => self.train.epochs = parse(k, v)?,
            "train.seed" => self.train.seed = parse(k, v)?,
            "train.class_weights" => self.train.class_weights = parse_bool(k, v)?,
            "loss.alpha" => self.alpha = parse(k, v)?,
            "loss.beta" => self.beta = parse(k, v)?,
            "curvature.threshold" => self.curvature.threshold = parse(k, v)?,
            "curvature.mode" => {
                self.curvature.mode = match v {
                    "exclude-above" => FilterMode::ExcludeAbove,
                    "exclude-below" => FilterMode::ExcludeBelow,
                    _ => return Err(format!("{k}: expected exclude-above or exclude-below")),
                }
            }
            "curvature.scale" => {
                self.curvature.scale = match v {
                    "median-excess" => CurvatureScale::MedianExcess,
                    "raw" => CurvatureScale::Raw,
                    _ => return Err(format!("{k}: expected median-excess or raw")),
                }
            }
            "curvature.spacing" => self.curvature_spacing = parse(k, v)?,
            "curvature.passes" => self.curvature_passes = parse(k, v)?,
            "fit.max_iter" => self.fit.lm.max_iter = parse(k, v)?,
            "fit.cost_tol" => self.fit.lm.cost_tol = parse(k, v)?,
            "fit.fallback_to_moments" => self.fit.fallback_to_moments = parse_bool(k, v)?,
            "annulus.lambda_in" => self.lambda_in = parse(k, v)?,
            "annulus.lambda_out" => self.lambda_out = parse(k, v)?,
            "rotation.angular_bins" => self.angular_bins = parse(k, v)?,
            "rotation.radial_bins" => self.radial_bins = parse(k, v)?,
            "rotation.v_max" => self.rotation.v_max = parse(k, v)?,
            "rotation.low_confidence" => self.rotation.low_confidence_floor = parse(k, v)?,
            "rotation.method" => {
                self.rotation.method = match v {
                    "fft" => NccMethod::Fft,
                    "direct" => NccMethod::Direct,
                    _ => return Err(format!("{k}: expected fft or direct")),
                }
            }
            "pipeline.hysteresis" => self.hysteresis = parse(k, v)?,
            "pipeline.n_stale" => self.n_stale = parse(k, v)?,
            "cues.sense" => {
                self.cues.sense = match v {
                    "ccw" => AngleSense::Ccw,
                    "cw" => AngleSense::Cw,
                    _ => return Err(format!("{k}: expected ccw or cw")),
                }
            }
            "cues.primary_arc" => self.cues.primary_arc = parse_arc(k, v)?,
            "cues.secondary_arc" => self.cues.secondary_arc = parse_arc(k, v)?,
            "exec" => {
                self.exec = match v {
                    "sequential" => Exec::Sequential,
                    "parallel" => Exec::Parallel,
                    _ => return Err(format!("{k}: expected sequential or parallel")),
                }
            }
            _ => match k.strip_prefix("color.") {
                Some(kind) => {
                    let kind: CueKind = kind.parse().map_err(|e| format!("{k}: {e}"))?;
                    if v.is_empty() {
                        return Err(format!("{k}: empty color"));
                    }
                    self.palette.set(kind, v);
                }
                None => return Err(format!("unknown key {k:?}")),
            },
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(msg.to_string()) };
        check(self.phases >= 1, "phases must be at least 1")?;
        self.model.validate().map_err(|e| e.to_string())?;
        check(self.train.lr > 0.0 && self.train.lr.is_finite(), "train.lr must be positive")?;
        check((0.0..=1.0).contains(&self.alpha), "loss.alpha must lie in [0, 1]")?;
        check(self.beta >= 0.0 && self.beta.is_finite(), "loss.beta must be non-negative")?;
        check(self.curvature.threshold >= 0.0 && self.curvature.threshold.is_finite(), "curvature.threshold must be non-negative")?;
        check(self.curvature_spacing >= 1, "curvature.spacing must be at least 1")?;
        check(self.curvature_passes >= 1, "curvature.passes must be at least 1")?;
        check(self.fit.lm.max_iter >= 1, "fit.max_iter must be at least 1")?;
        check(self.lambda_in > 0.0 && self.lambda_out > 0.0, "annulus factors must be positive")?;
        check(self.angular_bins >= 8, "rotation.angular_bins must be at least 8")?;
        check((0.0..=1.0).contains(&self.rotation.low_confidence_floor), "rotation.low_confidence must lie in [0, 1]")?;
        check(self.hysteresis >= 1, "pipeline.hysteresis must be at least 1")?;
        for (name, arc) in [("primary", self.cues.primary_arc), ("secondary", self.cues.secondary_arc)] {
            let v = match arc {
                ArcLength::Pixels(v) | ArcLength::Fraction(v) => v,
            };
            check(v > 0.0 && v.is_finite(), &format!("cues.{name}_arc must be positive"))?;
        }
        Ok(())
    }

    /// Text that parses back to this configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let m = &self.model;
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("phases", self.phases.to_string());
        kv("model.raw_dim", m.raw_dim.to_string());
        kv("model.kappa", m.kappa.to_string());
        kv("model.heads", m.heads.to_string());
        kv("model.n_self", m.n_self.to_string());
        kv("model.n_cross", m.n_cross.to_string());
        kv("model.tau", m.tau.to_string());
        kv("model.literal", m.literal.to_string());
        kv("train.lr", self.train.lr.to_string());
        kv("train.epochs", self.train.epochs.to_string());
        kv("train.seed", self.train.seed.to_string());
        kv("train.class_weights", self.train.class_weights.to_string());
        kv("loss.alpha", self.alpha.to_string());
        kv("loss.beta", self.beta.to_string());
        kv("curvature.threshold", self.curvature.threshold.to_string());
        let mode = match self.curvature.mode {
            FilterMode::ExcludeAbove => "exclude-above",
            FilterMode::ExcludeBelow => "exclude-below",
        };
        kv("curvature.mode", mode.into());
        let scale = match self.curvature.scale {
            CurvatureScale::MedianExcess => "median-excess",
            CurvatureScale::Raw => "raw",
        };
        kv("curvature.scale", scale.into());
        kv("curvature.spacing", self.curvature_spacing.to_string());
        kv("curvature.passes", self.curvature_passes.to_string());
        kv("fit.max_iter", self.fit.lm.max_iter.to_string());
        kv("fit.cost_tol", self.fit.lm.cost_tol.to_string());
        kv("fit.fallback_to_moments", self.fit.fallback_to_moments.to_string());
        kv("annulus.lambda_in", self.lambda_in.to_string());
        kv("annulus.lambda_out", self.lambda_out.to_string());
        kv("rotation.angular_bins", self.angular_bins.to_string());
        kv("rotation.radial_bins", self.radial_bins.to_string());
        kv("rotation.v_max", self.rotation.v_max.to_string());
        kv("rotation.low_confidence", self.rotation.low_confidence_floor.to_string());
        let method = match self.rotation.method {
            NccMethod::Fft => "fft",
            NccMethod::Direct => "direct",
        };
        kv("rotation.method", method.into());
        kv("pipeline.hysteresis", self.hysteresis.to_string());
        kv("pipeline.n_stale", self.n_stale.to_string());
        let sense = match self.cues.sense {
            AngleSense::Ccw => "ccw",
            AngleSense::Cw => "cw",
        };
        kv("cues.sense", sense.into());
        kv("cues.primary_arc", fmt_arc(self.cues.primary_arc));
        kv("cues.secondary_arc", fmt_arc(self.cues.secondary_arc));
        for (p, kinds) in self.cue_map.entries().iter().enumerate() {
            let names: Vec<&str> = kinds.iter().map(|k| k.name()).collect();
            kv(&format!("cues.{p}"), if names.is_empty() { "none".into() } else { names.join(",") });
        }
        for kind in CueKind::ALL {
            kv(&format!("color.{kind}"), self.palette.color(kind).to_string());
        }
        kv("exec", exec_name(self.exec).into());
        s
    }

    /// Fit settings with the session's execution mode applied.
    pub fn fit_config(&self) -> FitConfig {
        let mut f = self.fit;
        f.lm.exec = self.exec;
        f
    }

    pub fn rotation_config(&self) -> RotationConfig {
        RotationConfig { exec: self.exec, ..self.rotation }
    }
}
