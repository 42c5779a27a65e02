//! Frame-wise softmax regression: the no-temporal-context reference.

use ndarray::Array2;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::tape::{Mask, Params, Tape};
use crate::train::{check_data, class_weights, fit, frame_weights, LabeledSequence, TrainConfig, TrainReport};
use crate::{shape_err, LsSatError};

#[derive(Clone, Debug, PartialEq)]
pub struct LinearClassifier {
    params: Params,
}

impl LinearClassifier {
    pub fn new(raw_dim: usize, phases: usize, seed: u64) -> Self {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0 / (raw_dim.max(1) as f64).sqrt()).expect("positive std");
        let mut params = Params::default();
        params.push("w", Array2::from_shape_fn((raw_dim, phases), |_| n.sample(&mut rng)));
        params.push("b", Array2::zeros((1, phases)));
        Self { params }
    }

    pub fn raw_dim(&self) -> usize {
        self.params.values[0].nrows()
    }

    pub fn phases(&self) -> usize {
        self.params.values[0].ncols()
    }

    /// Same loss, optimizer and schedule as the attention model.
    pub fn train(
        raw_dim: usize,
        phases: usize,
        data: &[LabeledSequence],
        cfg: &TrainConfig,
    ) -> Result<(Self, TrainReport), LsSatError> {
        let counts = check_data(data, raw_dim, phases)?;
        let weights = class_weights(&counts, cfg.class_weights)?;
        let mut model = Self::new(raw_dim, phases, cfg.seed);
        let report = fit(&mut model.params, data, &weights, cfg, |_, t, s, w| {
            let x = t.constant(s.features.clone());
            let (wv, bv) = (t.param(0), t.param(1));
            let z = t.matmul(x, wv);
            let z = t.add_row(z, bv);
            let p = t.softmax(z, Mask::None);
            t.neg_log_pick(p, &s.labels, &frame_weights(&s.labels, w))
        })?;
        Ok((model, report))
    }

    pub fn predict_sequence(&self, raw: &Array2<f64>) -> Result<Array2<f64>, LsSatError> {
        if raw.ncols() != self.raw_dim() {
            return Err(shape_err("raw features", &[raw.nrows(), self.raw_dim()], &[raw.nrows(), raw.ncols()]));
        }
        let mut t = Tape::new(&self.params);
        let x = t.constant(raw.clone());
        let (wv, bv) = (t.param(0), t.param(1));
        let z = t.matmul(x, wv);
        let z = t.add_row(z, bv);
        let p = t.softmax(z, Mask::None);
        Ok(t.value(p).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learns_separable_frames() {
        let labels: Vec<usize> = (0..30).map(|i| i / 10).collect();
        let features = Array2::from_shape_fn((30, 3), |(i, j)| if labels[i] == j { 1.0 } else { 0.0 });
        let data = vec![LabeledSequence { features: features.clone(), labels: labels.clone() }];
        let cfg = TrainConfig { lr: 0.05, epochs: 200, seed: 1, class_weights: true };
        let (m, rep) = LinearClassifier::train(3, 3, &data, &cfg).unwrap();
        assert!(rep.final_loss() < rep.initial_loss);
        let p = m.predict_sequence(&features).unwrap();
        for (row, l) in p.rows().into_iter().zip(&labels) {
            assert!(row[*l] > 0.9);
        }
        assert!(m.predict_sequence(&Array2::zeros((2, 4))).is_err());
    }
}
