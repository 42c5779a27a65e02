use super::{CueError, CueKind};

pub const DEFAULT_PHASE_NAMES: [&str; 10] = [
    "incision",
    "VA injection",
    "capsulorhexis",
    "hydrodissection",
    "phacoemulsification",
    "irrigation",
    "capsule polishing",
    "lens implant",
    "VA removal",
    "tonifying",
];

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SurgicalPhase {
    pub id: usize,
    pub name: String,
}

impl SurgicalPhase {
    /// Standard name for ids below 10, `phase N` otherwise.
    pub fn from_id(id: usize) -> Self {
        let name = DEFAULT_PHASE_NAMES
            .get(id)
            .map(|s| s.to_string())
            .unwrap_or_else(|| format!("phase {id}"));
        Self { id, name }
    }
}

/// Which cues each phase shows. Index = phase id.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PhaseCueMap {
    entries: Vec<Vec<CueKind>>,
}

impl PhaseCueMap {
    pub fn new(entries: Vec<Vec<CueKind>>) -> Self {
        Self { entries }
    }

    /// The ten-phase default, truncated or padded with `[FLC]` to `phases`.
    pub fn default_for(phases: usize) -> Self {
        use CueKind::*;
        let base = [
            vec![Flc, Pig, Pic, Sig, Sic, Rrl],
            vec![Flc],
            vec![Flc, Ccr],
            vec![Flc],
            vec![Flc],
            vec![Flc],
            vec![Flc],
            vec![Flc, Rrl],
            vec![Flc],
            vec![Flc],
        ];
        let entries = (0..phases)
            .map(|p| base.get(p).cloned().unwrap_or_else(|| vec![Flc]))
            .collect();
        Self { entries }
    }

    pub fn phases(&self) -> usize {
        self.entries.len()
    }

    pub fn kinds(&self, phase: usize) -> Result<Vec<CueKind>, CueError> {
        self.entries
            .get(phase)
            .cloned()
            .ok_or(CueError::PhaseOutOfRange { phase, phases: self.entries.len() })
    }

    pub fn set(&mut self, phase: usize, kinds: Vec<CueKind>) {
        if phase >= self.entries.len() {
            self.entries.resize(phase + 1, Vec::new());
        }
        self.entries[phase] = kinds;
    }

    pub fn entries(&self) -> &[Vec<CueKind>] {
        &self.entries
    }
}

impl Default for PhaseCueMap {
    fn default() -> Self {
        Self::default_for(10)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_covers_ten_phases() {
        let m = PhaseCueMap::default();
        assert_eq!(m.phases(), 10);
        assert!(m.entries().iter().all(|e| e.contains(&CueKind::Flc)));
        assert_eq!(m.kinds(7).unwrap(), vec![CueKind::Flc, CueKind::Rrl]);
    }

    #[test]
    fn resized_defaults() {
        assert_eq!(PhaseCueMap::default_for(3).phases(), 3);
        let m = PhaseCueMap::default_for(12);
        assert_eq!(m.kinds(11).unwrap(), vec![CueKind::Flc]);
    }

    #[test]
    fn phase_names() {
        assert_eq!(SurgicalPhase::from_id(2).name, "capsulorhexis");
        assert_eq!(SurgicalPhase::from_id(10).name, "phase 10");
    }
}
