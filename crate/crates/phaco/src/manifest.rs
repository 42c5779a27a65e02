//! Session manifest: ordered frame entries plus session metadata, stored as
//! JSON. Relative paths resolve against the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use phaco_core::io::{read_features, read_gray, read_mask, write_atomic};

use crate::pipeline::FrameBundle;
use crate::PhacoError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub index: usize,
    pub mask: PathBuf,
    pub gray: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_phase: Option<usize>,
    /// Absolute eye rotation of this frame, degrees.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_theta: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionMeta {
    pub phases: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub meta: SessionMeta,
    pub frames: Vec<FrameEntry>,
    #[serde(skip)]
    pub root: PathBuf,
}

impl Manifest {
    /// Parse and check ordering, metadata and file existence.
    pub fn load(path: &Path) -> Result<Self, PhacoError> {
        let text = std::fs::read_to_string(path).map_err(|e| PhacoError::io(path, e))?;
        let invalid = |msg: String| PhacoError::Invalid { path: path.to_path_buf(), msg };
        let mut m: Manifest = serde_json::from_str(&text).map_err(|e| invalid(e.to_string()))?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if m.meta.phases == 0 || m.meta.width == 0 || m.meta.height == 0 {
            return Err(invalid("meta: phases and dimensions must be positive".into()));
        }
        for w in m.frames.windows(2) {
            if w[1].index <= w[0].index {
                return Err(invalid(format!("frame indices not strictly increasing at {}", w[1].index)));
            }
        }
        for f in &m.frames {
            if let Some(p) = f.gt_phase.filter(|p| *p >= m.meta.phases) {
                return Err(invalid(format!("frame {}: gt_phase {p} outside {} phases", f.index, m.meta.phases)));
            }
            if f.gt_theta.is_some_and(|t| !t.is_finite()) {
                return Err(invalid(format!("frame {}: gt_theta is not finite", f.index)));
            }
            for rel in [Some(&f.mask), Some(&f.gray), f.feature.as_ref()].into_iter().flatten() {
                let full = m.resolve(rel);
                if !full.is_file() {
                    return Err(PhacoError::MissingFile(full));
                }
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), PhacoError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(path, text.as_bytes())?;
        Ok(())
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    /// Read the files of frame `i`. With `phase_from_gt`, the ground-truth
    /// phase is passed on as the externally supplied phase.
    pub fn bundle(&self, i: usize, phase_from_gt: bool) -> Result<FrameBundle, PhacoError> {
        let f = &self.frames[i];
        let mask = read_mask(&self.resolve(&f.mask))?;
        let gray = read_gray(&self.resolve(&f.gray))?;
        for (what, w, h) in [("mask", mask.width(), mask.height()), ("gray", gray.width(), gray.height())] {
            if (w, h) != (self.meta.width, self.meta.height) {
                let p = if what == "mask" { &f.mask } else { &f.gray };
                return Err(PhacoError::Invalid {
                    path: self.resolve(p),
                    msg: format!("{w}x{h} {what}, manifest says {}x{}", self.meta.width, self.meta.height),
                });
            }
        }
        let feature = match &f.feature {
            Some(rel) => {
                let path = self.resolve(rel);
                let m = read_features(&path)?;
                if m.frames != 1 {
                    return Err(PhacoError::Invalid { path, msg: format!("expected one feature row, found {}", m.frames) });
                }
                Some(m.data.iter().map(|v| *v as f64).collect())
            }
            None => None,
        };
        let phase = if phase_from_gt { f.gt_phase } else { None };
        Ok(FrameBundle { index: f.index, mask, gray, feature, phase })
    }
}
