use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{rng_for, stream, SynthError};

/// Gaussian phase clusters standing in for backbone features.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureGenSpec {
    pub phases: usize,
    pub dim: usize,
    pub seed: u64,
    /// Per-coordinate standard deviation of the cluster centers.
    pub center_scale: f64,
    /// Per-coordinate intra-class standard deviation.
    pub sigma: f64,
    /// Inclusive range of phase durations, frames.
    pub duration: (usize, usize),
    /// Frames on each side of a transition drawn with inflated noise.
    pub boundary_width: usize,
    pub boundary_sigma_scale: f64,
}

impl Default for FeatureGenSpec {
    fn default() -> Self {
        Self {
            phases: 10,
            dim: 2048,
            seed: 0,
            center_scale: 1.0,
            sigma: 0.5,
            duration: (25, 50),
            boundary_width: 3,
            boundary_sigma_scale: 4.0,
        }
    }
}

/// Row-major `frames × dim` features with per-frame labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    pub dim: usize,
    pub data: Vec<f32>,
    pub labels: Vec<usize>,
}

impl FeatureSequence {
    pub fn frames(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Frames within `width` of a label change: `[b − width, b + width)` for
    /// every first frame `b` of a new run.
    pub fn near_transition(&self, width: usize) -> Vec<bool> {
        let n = self.frames();
        let mut out = vec![false; n];
        for b in 1..n {
            if self.labels[b] != self.labels[b - 1] {
                for flag in &mut out[b.saturating_sub(width)..(b + width).min(n)] {
                    *flag = true;
                }
            }
        }
        out
    }
}

impl FeatureGenSpec {
    fn validate(&self) -> Result<(), SynthError> {
        if self.phases == 0 || self.dim == 0 {
            return Err(SynthError::InvalidSpec("phases and dim must be positive".into()));
        }
        if self.duration.0 == 0 || self.duration.1 < self.duration.0 {
            return Err(SynthError::InvalidSpec("durations must satisfy 1 ≤ min ≤ max".into()));
        }
        if !(self.sigma >= 0.0 && self.center_scale >= 0.0 && self.boundary_sigma_scale >= 0.0) {
            return Err(SynthError::InvalidSpec("scales must be non-negative".into()));
        }
        Ok(())
    }

    pub fn centers(&self) -> Vec<Vec<f64>> {
        let mut rng = rng_for(self.seed, stream::FEATURE_CENTERS, 0);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        (0..self.phases)
            .map(|_| (0..self.dim).map(|_| self.center_scale * normal.sample(&mut rng)).collect())
            .collect()
    }
}

/// `sequences` sequences visiting every phase once, in order, with durations
/// drawn uniformly from `spec.duration`.
pub fn gen_features(spec: &FeatureGenSpec, sequences: usize) -> Result<Vec<FeatureSequence>, SynthError> {
    spec.validate()?;
    let centers = spec.centers();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    Ok((0..sequences)
        .map(|s| {
            let mut rng = rng_for(spec.seed, stream::FEATURE_SEQUENCE, s as u64);
            let mut labels = Vec::new();
            for p in 0..spec.phases {
                let d = rng.random_range(spec.duration.0..=spec.duration.1);
                labels.extend(std::iter::repeat_n(p, d));
            }
            let mut seq = FeatureSequence { dim: spec.dim, data: Vec::new(), labels };
            let noisy = seq.near_transition(spec.boundary_width);
            let mut data = Vec::with_capacity(seq.frames() * spec.dim);
            for (i, &label) in seq.labels.iter().enumerate() {
                let sigma = if noisy[i] { spec.sigma * spec.boundary_sigma_scale } else { spec.sigma };
                for c in &centers[label] {
                    data.push((c + sigma * normal.sample(&mut rng)) as f32);
                }
            }
            seq.data = data;
            seq
        })
        .collect())
}

/// Features for a given label script, drawn around the same centers as
/// [`gen_features`] so a model trained on one applies to the other.
/// `counter` selects an independent noise stream.
pub fn features_for_labels(
    spec: &FeatureGenSpec,
    labels: &[usize],
    counter: u64,
) -> Result<FeatureSequence, SynthError> {
    spec.validate()?;
    if let Some(&bad) = labels.iter().find(|&&l| l >= spec.phases) {
        return Err(SynthError::InvalidSpec(format!("label {bad} outside {} phases", spec.phases)));
    }
    let centers = spec.centers();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = rng_for(spec.seed, stream::LABELED_FEATURES, counter);
    let mut seq = FeatureSequence { dim: spec.dim, data: Vec::new(), labels: labels.to_vec() };
    let noisy = seq.near_transition(spec.boundary_width);
    let mut data = Vec::with_capacity(labels.len() * spec.dim);
    for (i, &label) in labels.iter().enumerate() {
        let sigma = if noisy[i] { spec.sigma * spec.boundary_sigma_scale } else { spec.sigma };
        for c in &centers[label] {
            data.push((c + sigma * normal.sample(&mut rng)) as f32);
        }
    }
    seq.data = data;
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> FeatureGenSpec {
        FeatureGenSpec { phases: 4, dim: 64, seed: 3, duration: (5, 9), ..Default::default() }
    }

    #[test]
    fn durations_and_order() {
        let seqs = gen_features(&small(), 3).unwrap();
        for s in &seqs {
            assert!(s.labels.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
            for p in 0..4 {
                let d = s.labels.iter().filter(|l| **l == p).count();
                assert!((5..=9).contains(&d));
            }
            assert_eq!(s.data.len(), s.frames() * 64);
        }
        assert_eq!(gen_features(&small(), 3).unwrap(), seqs);
    }

    #[test]
    fn zero_sigma_constant_per_phase() {
        let spec = FeatureGenSpec { sigma: 0.0, ..small() };
        let s = &gen_features(&spec, 1).unwrap()[0];
        for i in 1..s.frames() {
            if s.labels[i] == s.labels[i - 1] {
                assert_eq!(s.row(i), s.row(i - 1));
            }
        }
    }

    #[test]
    fn separable_one_nn() {
        let spec = FeatureGenSpec { sigma: 0.05, boundary_sigma_scale: 1.0, ..small() };
        let seqs = gen_features(&spec, 2).unwrap();
        let (train, test) = (&seqs[0], &seqs[1]);
        let dist = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f32>();
        let mut correct = 0;
        for i in 0..test.frames() {
            let nn = (0..train.frames())
                .min_by(|&a, &b| dist(train.row(a), test.row(i)).total_cmp(&dist(train.row(b), test.row(i))))
                .unwrap();
            correct += usize::from(train.labels[nn] == test.labels[i]);
        }
        assert!(correct as f64 / test.frames() as f64 >= 0.99);
    }

    #[test]
    fn scripted_labels_share_centers() {
        let spec = FeatureGenSpec { sigma: 0.0, ..small() };
        let trained = &gen_features(&spec, 1).unwrap()[0];
        let scripted = features_for_labels(&spec, &[3, 0, 0, 2], 9).unwrap();
        let first = |p: usize| trained.labels.iter().position(|l| *l == p).unwrap();
        for (i, &l) in scripted.labels.iter().enumerate() {
            assert_eq!(scripted.row(i), trained.row(first(l)));
        }
        assert!(features_for_labels(&spec, &[4], 0).is_err());
    }

    #[test]
    fn transition_window() {
        let s = FeatureSequence { dim: 1, data: vec![0.0; 8], labels: vec![0, 0, 0, 0, 1, 1, 1, 1] };
        assert_eq!(s.near_transition(2), vec![false, false, true, true, true, true, false, false]);
    }
}
