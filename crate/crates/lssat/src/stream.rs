use ndarray::Array2;

use crate::model::{push_row, KeyValue, LsSat};
use crate::tape::{Mask, Tape};
use crate::{shape_err, LsSatError};

/// Incremental online predictor: one call per frame, each touching only the
/// frames seen so far. Keys and values of the long stack are cached, so a
/// step costs `O(t)` rather than recomputing the prefix.
#[derive(Clone, Debug)]
pub struct StreamState<'m> {
    model: &'m LsSat,
    reduced: Array2<f64>,
    long_cache: Vec<(Array2<f64>, Array2<f64>)>,
    cross_cache: Vec<(Array2<f64>, Array2<f64>)>,
    history: Vec<Vec<f64>>,
}

impl<'m> StreamState<'m> {
    pub fn new(model: &'m LsSat) -> Self {
        let d = model.config().d();
        let empty = || (Array2::zeros((0, d)), Array2::zeros((0, d)));
        Self {
            model,
            reduced: Array2::zeros((0, d)),
            long_cache: (0..model.config().n_self).map(|_| empty()).collect(),
            cross_cache: (0..model.config().n_cross).map(|_| empty()).collect(),
            history: Vec::new(),
        }
    }

    pub fn frames(&self) -> usize {
        self.history.len()
    }

    /// Predictions emitted so far, one per frame.
    pub fn history(&self) -> &[Vec<f64>] {
        &self.history
    }

    /// Consume one raw feature vector and return phase probabilities.
    pub fn push(&mut self, raw: &[f64]) -> Result<Vec<f64>, LsSatError> {
        let cfg = *self.model.config();
        if raw.len() != cfg.raw_dim {
            return Err(shape_err("raw feature", &[cfg.raw_dim], &[raw.len()]));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(LsSatError::NonFinite);
        }
        let m = self.model;
        let mut t = Tape::new(m.params());
        let x = t.constant(Array2::from_shape_vec((1, raw.len()), raw.to_vec()).expect("row"));
        let r = m.reduce(&mut t, x);
        push_row(&mut self.reduced, t.value(r));

        let mut row = r;
        for (layer, cache) in self.long_cache.iter_mut().enumerate() {
            row = m.long_step(&mut t, layer, row, cache);
        }
        for (layer, cache) in self.cross_cache.iter_mut().enumerate() {
            let kv = m.cross_kv(&mut t, layer, row);
            push_row(&mut cache.0, t.value(kv.k));
            push_row(&mut cache.1, t.value(kv.v));
        }

        let n = self.reduced.nrows();
        let start = n.saturating_sub(cfg.tau);
        let window = t.constant(self.reduced.slice(ndarray::s![start.., ..]).to_owned());
        let kvs: Vec<KeyValue> = self
            .cross_cache
            .iter()
            .map(|(k, v)| KeyValue { k: t.constant(k.clone()), v: t.constant(v.clone()) })
            .collect();
        let z = m.frame_logits(&mut t, window, n - 1 - start, &kvs, n);
        let p = t.softmax(z, Mask::None);
        let probs: Vec<f64> = t.value(p).iter().copied().collect();
        self.history.push(probs.clone());
        Ok(probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LsSatConfig;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn stream_matches_sequence_forward() {
        for (tau, literal) in [(3, false), (50, false), (1, false), (4, true)] {
            let cfg = LsSatConfig { raw_dim: 24, kappa: 3, heads: 2, n_self: 2, n_cross: 2, tau, phases: 4, literal };
            let m = LsSat::new(cfg, 11).unwrap();
            let raw = random(12, 24, 5);
            let batch = m.predict_sequence(&raw).unwrap();
            let mut s = StreamState::new(&m);
            for (i, row) in raw.rows().into_iter().enumerate() {
                let p = s.push(&row.to_vec()).unwrap();
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for (a, b) in p.iter().zip(batch.row(i)) {
                    assert!((a - b).abs() < 1e-10, "tau {tau} frame {i}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn window_longer_than_prefix_is_the_prefix() {
        let base = LsSatConfig { raw_dim: 16, kappa: 2, heads: 2, n_self: 1, n_cross: 1, tau: 6, phases: 3, literal: false };
        let raw = random(6, 16, 9);
        let short = LsSat::new(base, 3).unwrap().predict_sequence(&raw).unwrap();
        let long = LsSat::new(LsSatConfig { tau: 40, ..base }, 3).unwrap().predict_sequence(&raw).unwrap();
        assert_eq!(short, long);
    }

    #[test]
    fn rejects_bad_rows() {
        let m = LsSat::new(LsSatConfig { raw_dim: 8, kappa: 2, heads: 1, n_self: 1, n_cross: 1, tau: 2, phases: 2, literal: false }, 0).unwrap();
        let mut s = StreamState::new(&m);
        assert!(s.push(&[0.0; 7]).is_err());
        assert!(matches!(s.push(&[f64::NAN; 8]), Err(LsSatError::NonFinite)));
        assert_eq!(s.frames(), 0);
    }
}
