//! Loss evaluators on plain probability vectors.

use crate::tape::LOG_FLOOR;
use crate::{shape_err, LsSatError};

/// Smoothing added to both sides of the Dice ratio.
pub const DICE_EPS: f64 = 1e-6;

fn ln(p: f64) -> f64 {
    p.max(LOG_FLOOR).ln()
}

/// `−(1/K) Σ_s g_s ln p_s`.
pub fn phase_ce_loss(pred: &[f64], gt: &[f64]) -> Result<f64, LsSatError> {
    weighted_ce_loss(pred, gt, &vec![1.0; pred.len()])
}

/// `−(1/K) Σ_s w_s g_s ln p_s`.
pub fn weighted_ce_loss(pred: &[f64], gt: &[f64], weights: &[f64]) -> Result<f64, LsSatError> {
    if gt.len() != pred.len() || weights.len() != pred.len() || pred.is_empty() {
        return Err(shape_err("phase vectors", &[pred.len()], &[gt.len(), weights.len()]));
    }
    let k = pred.len() as f64;
    Ok(-pred.iter().zip(gt).zip(weights).map(|((p, g), w)| w * g * ln(*p)).sum::<f64>() / k)
}

/// Direction of the cross-entropy term of the segmentation loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SegCeForm {
    /// Ground truth weights the log of the prediction.
    #[default]
    Standard,
    /// Prediction weights the log of the ground truth, as printed.
    Literal,
}

/// Cross-entropy plus `α (1 − Dice)` over flattened `C × H × W`
/// probabilities.
pub fn seg_hybrid_loss(pred: &[f64], gt: &[f64], alpha: f64, form: SegCeForm) -> Result<f64, LsSatError> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(shape_err("segmentation maps", &[pred.len()], &[gt.len()]));
    }
    let n = pred.len() as f64;
    let ce = -pred
        .iter()
        .zip(gt)
        .map(|(p, g)| match form {
            SegCeForm::Standard => g * ln(*p),
            SegCeForm::Literal => p * ln(*g),
        })
        .sum::<f64>()
        / n;
    let inter: f64 = pred.iter().zip(gt).map(|(p, g)| p * g).sum();
    let total: f64 = pred.iter().sum::<f64>() + gt.iter().sum::<f64>();
    let dice = (2.0 * inter + DICE_EPS) / (total + DICE_EPS);
    Ok(ce + alpha * (1.0 - dice))
}

/// `L_phase + β L_seg`.
pub fn sf_loss(phase: f64, seg: f64, beta: f64) -> f64 {
    phase + beta * seg
}

/// Weights inversely proportional to class frequency, scaled to mean 1.
pub fn inverse_freq_weights(counts: &[usize]) -> Result<Vec<f64>, LsSatError> {
    if let Some(k) = counts.iter().position(|c| *c == 0) {
        return Err(LsSatError::EmptyClass(k));
    }
    let total: usize = counts.iter().sum();
    let raw: Vec<f64> = counts.iter().map(|c| total as f64 / *c as f64).collect();
    let mean = raw.iter().sum::<f64>() / raw.len().max(1) as f64;
    Ok(raw.into_iter().map(|w| w / mean).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn phase_ce_cases() {
        let one = [0.0, 1.0, 0.0];
        assert!(phase_ce_loss(&one, &one).unwrap().abs() < 1e-15);
        let uniform = vec![0.1; 10];
        let mut g = vec![0.0; 10];
        g[3] = 1.0;
        let got = phase_ce_loss(&uniform, &g).unwrap();
        assert!((got - 10f64.ln() / 10.0).abs() < 1e-12);
        assert!((got - 0.2303).abs() < 1e-4);
        let wrong = phase_ce_loss(&[0.999, 0.001, 0.0], &one).unwrap();
        let less_wrong = phase_ce_loss(&[0.6, 0.4, 0.0], &one).unwrap();
        assert!(wrong > less_wrong && less_wrong > 0.0);
        // zero probability on the true class hits the clamp, not infinity
        let clamped = phase_ce_loss(&[1.0, 0.0, 0.0], &one).unwrap();
        assert!((clamped - (-LOG_FLOOR.ln() / 3.0)).abs() < 1e-9);
        assert!(phase_ce_loss(&[0.5, 0.5], &one).is_err());
    }

    #[test]
    fn seg_cases() {
        let gt = [1.0, 0.0, 1.0, 0.0];
        let exact = seg_hybrid_loss(&gt, &gt, 0.6, SegCeForm::Standard).unwrap();
        assert!(exact.abs() < 1e-9, "{exact}");
        // two-channel map (foreground, background) with prediction 0.5 everywhere
        let fg = [1.0, 1.0, 0.0, 0.0];
        let gt2: Vec<f64> = fg.iter().chain(fg.iter().map(|v| 1.0 - v).collect::<Vec<_>>().iter()).copied().collect();
        let half = vec![0.5; 8];
        let got = seg_hybrid_loss(&half, &gt2, 0.6, SegCeForm::Standard).unwrap();
        // CE: −(1/8)·4·ln 0.5; Dice: 2·2 / (4 + 4)
        let ce = 4.0 * 2f64.ln() / 8.0;
        let dice = (4.0 + DICE_EPS) / (8.0 + DICE_EPS);
        assert!((got - (ce + 0.6 * (1.0 - dice))).abs() < 1e-12);
        let empty = [0.0; 5];
        let e = seg_hybrid_loss(&empty, &empty, 0.6, SegCeForm::Standard).unwrap();
        assert_eq!(e, 0.0);
        let lit = seg_hybrid_loss(&half, &gt2, 0.6, SegCeForm::Literal).unwrap();
        assert!(lit > got);
        assert!(seg_hybrid_loss(&half, &fg, 0.6, SegCeForm::Standard).is_err());
        assert_eq!(sf_loss(1.0, 2.0, 0.5), 2.0);
    }

    #[test]
    fn inverse_frequency() {
        assert_eq!(inverse_freq_weights(&[7, 7, 7]).unwrap(), vec![1.0; 3]);
        let w = inverse_freq_weights(&[100, 50]).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15 && (w[1] - 4.0 / 3.0).abs() < 1e-15);
        assert!(matches!(inverse_freq_weights(&[3, 0, 2]), Err(LsSatError::EmptyClass(1))));
    }

    #[test]
    fn weighted_matches_unweighted_with_unit_weights() {
        let p = [0.2, 0.5, 0.3];
        let g = [0.0, 0.0, 1.0];
        assert_eq!(weighted_ce_loss(&p, &g, &[1.0; 3]).unwrap(), phase_ce_loss(&p, &g).unwrap());
        let w = weighted_ce_loss(&p, &g, &[1.0, 1.0, 2.0]).unwrap();
        assert!((w - 2.0 * phase_ce_loss(&p, &g).unwrap()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn weights_scale_invariant(counts in proptest::collection::vec(1usize..1000, 1..12), k in 2usize..5) {
            let a = inverse_freq_weights(&counts).unwrap();
            let scaled: Vec<usize> = counts.iter().map(|c| c * k).collect();
            let b = inverse_freq_weights(&scaled).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!((a.iter().sum::<f64>() / a.len() as f64 - 1.0).abs() < 1e-12);
        }

        #[test]
        fn losses_non_negative(p in proptest::collection::vec(0.0f64..1.0, 2..8), idx in 0usize..8, alpha in 0.0f64..2.0) {
            let idx = idx % p.len();
            let mut g = vec![0.0; p.len()];
            g[idx] = 1.0;
            prop_assert!(phase_ce_loss(&p, &g).unwrap() >= 0.0);
            let gt: Vec<f64> = p.iter().map(|v| if *v > 0.5 { 1.0 } else { 0.0 }).collect();
            prop_assert!(seg_hybrid_loss(&p, &gt, alpha, SegCeForm::Standard).unwrap() >= -1e-12);
        }
    }
}
