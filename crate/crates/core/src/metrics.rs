//! Phase-recognition, segmentation and rotation metrics, plus the
//! phase-ribbon export.

use std::fmt::Write;

use crate::geometry::BinaryMask;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("prediction has {pred} entries but ground truth has {gt}")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("empty sequence")]
    Empty,
    #[error("mask shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("label {label} outside {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("palette has no color for phase {0}")]
    MissingColor(usize),
    #[error("malformed confusion matrix CSV: {0}")]
    InvalidCsv(String),
}

/// Rows = ground truth, columns = prediction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { classes, counts: vec![0; classes * classes] }
    }

    pub fn from_labels(pred: &[usize], gt: &[usize], classes: usize) -> Result<Self, MetricsError> {
        check_lengths(pred.len(), gt.len())?;
        let mut cm = Self::new(classes);
        for (&p, &g) in pred.iter().zip(gt) {
            for label in [p, g] {
                if label >= classes {
                    return Err(MetricsError::LabelOutOfRange { label, classes });
                }
            }
            cm.counts[g * classes + p] += 1;
        }
        Ok(cm)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn row_sum(&self, g: usize) -> u64 {
        (0..self.classes).map(|p| self.get(g, p)).sum()
    }

    fn col_sum(&self, p: usize) -> u64 {
        (0..self.classes).map(|g| self.get(g, p)).sum()
    }

    /// Accuracy plus macro precision, recall and Jaccard over the classes
    /// that occur in the ground truth. A class never predicted has
    /// precision 0.
    pub fn metrics(&self) -> PhaseMetrics {
        let total = self.total();
        let tp_all: u64 = (0..self.classes).map(|c| self.get(c, c)).sum();
        let (mut pre, mut rec, mut jac, mut present) = (0.0, 0.0, 0.0, 0usize);
        for c in 0..self.classes {
            let support = self.row_sum(c);
            if support == 0 {
                continue;
            }
            present += 1;
            let tp = self.get(c, c) as f64;
            let predicted = self.col_sum(c) as f64;
            pre += if predicted > 0.0 { tp / predicted } else { 0.0 };
            rec += tp / support as f64;
            jac += tp / (support as f64 + predicted - tp);
        }
        let pct = |v: f64| if present == 0 { 0.0 } else { 100.0 * v / present as f64 };
        PhaseMetrics {
            acc: if total == 0 { 0.0 } else { 100.0 * tp_all as f64 / total as f64 },
            pre: pct(pre),
            rec: pct(rec),
            jac: pct(jac),
        }
    }

    /// Header row `gt\pred,0,1,…`, then one row per ground-truth class.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("gt\\pred");
        for p in 0..self.classes {
            let _ = write!(s, ",{p}");
        }
        s.push('\n');
        for g in 0..self.classes {
            let _ = write!(s, "{g}");
            for p in 0..self.classes {
                let _ = write!(s, ",{}", self.get(g, p));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, MetricsError> {
        let bad = |m: &str| MetricsError::InvalidCsv(m.to_string());
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("missing header"))?;
        let classes = header.split(',').count().saturating_sub(1);
        let mut cm = Self::new(classes);
        let mut rows = 0;
        for (g, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if g >= classes || cells.len() != classes + 1 {
                return Err(bad("row count or width does not match header"));
            }
            for p in 0..classes {
                cm.counts[g * classes + p] = cells[p + 1].trim().parse().map_err(|_| bad(cells[p + 1]))?;
            }
            rows += 1;
        }
        if rows != classes {
            return Err(bad("row count does not match header"));
        }
        Ok(cm)
    }
}

/// Percentages.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhaseMetrics {
    pub acc: f64,
    pub pre: f64,
    pub rec: f64,
    pub jac: f64,
}

fn check_lengths(pred: usize, gt: usize) -> Result<(), MetricsError> {
    if pred != gt {
        return Err(MetricsError::LengthMismatch { pred, gt });
    }
    if gt == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Frame accuracy and macro precision/recall/Jaccard, in percent.
pub fn phase_metrics(pred: &[usize], gt: &[usize]) -> Result<PhaseMetrics, MetricsError> {
    check_lengths(pred.len(), gt.len())?;
    let classes = pred.iter().chain(gt).max().map_or(0, |m| m + 1);
    Ok(ConfusionMatrix::from_labels(pred, gt, classes)?.metrics())
}

/// Dice overlap in percent, with 1e−6 added to numerator and denominator.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MetricsError> {
    let (sa, sb) = ((a.width(), a.height()), (b.width(), b.height()));
    if sa != sb {
        return Err(MetricsError::ShapeMismatch(sa, sb));
    }
    let inter = a.bits().iter().zip(b.bits()).filter(|(x, y)| **x && **y).count() as f64;
    let total = (a.count() + b.count()) as f64;
    Ok(100.0 * ((2.0 * inter + 1e-6) / (total + 1e-6)))
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
    pub n: usize,
}

pub fn mean_sd(values: &[f64]) -> MeanSd {
    let n = values.len();
    if n == 0 {
        return MeanSd { mean: 0.0, sd: 0.0, n };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    MeanSd { mean, sd: var.sqrt(), n }
}

/// Absolute angular difference on the circle, in `[0, 180]` degrees.
pub fn angular_error_deg(pred: f64, gt: f64) -> f64 {
    let d = (pred - gt).rem_euclid(360.0);
    d.min(360.0 - d)
}

pub fn rotation_error(pred: &[f64], gt: &[f64]) -> Result<MeanSd, MetricsError> {
    check_lengths(pred.len(), gt.len())?;
    let errs: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| angular_error_deg(*p, *g)).collect();
    Ok(mean_sd(&errs))
}

/// Contiguous run `[start, end)` of one label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct Run {
    pub start: usize,
    pub end: usize,
    pub phase: usize,
}

pub fn run_lengths(labels: &[usize]) -> Vec<Run> {
    let mut runs: Vec<Run> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.phase == l => r.end = i + 1,
            _ => runs.push(Run { start: i, end: i + 1, phase: l }),
        }
    }
    runs
}

/// Two aligned ribbons (prediction on top, ground truth below) as SVG, and
/// their runs as CSV rows `ribbon,start,end,phase` with `end` exclusive.
pub fn ribbon_export(pred: &[usize], gt: &[usize], palette: &[String]) -> Result<(String, String), MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::LengthMismatch { pred: pred.len(), gt: gt.len() });
    }
    let color = |p: usize| {
        palette
            .get(p)
            .filter(|c| !c.trim().is_empty())
            .ok_or(MetricsError::MissingColor(p))
    };
    const ROW_H: usize = 24;
    const LABEL_W: usize = 48;
    let frames = pred.len().max(1);
    let width = LABEL_W + frames;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{h}\" viewBox=\"0 0 {width} {h}\">\n",
        h = 2 * ROW_H + 8
    );
    let mut csv = String::from("ribbon,start,end,phase\n");
    for (row, (name, labels)) in [("pred", pred), ("gt", gt)].into_iter().enumerate() {
        let y = row * (ROW_H + 8);
        let _ = writeln!(svg, "  <text x=\"2\" y=\"{}\" font-size=\"12\">{name}</text>", y + ROW_H / 2 + 4);
        for r in run_lengths(labels) {
            let _ = writeln!(
                svg,
                "  <rect x=\"{}\" y=\"{y}\" width=\"{}\" height=\"{ROW_H}\" fill=\"{}\" data-phase=\"{}\"/>",
                LABEL_W + r.start,
                r.end - r.start,
                color(r.phase)?,
                r.phase
            );
            let _ = writeln!(csv, "{name},{},{},{}", r.start, r.end, r.phase);
        }
    }
    svg.push_str("</svg>\n");
    Ok((svg, csv))
}

/// Ten distinguishable colors, cycled for larger phase counts.
pub fn default_phase_palette(phases: usize) -> Vec<String> {
    const BASE: [&str; 10] = [
        "#e6194b", "#3cb44b", "#ffe119", "#4363d8", "#f58231", "#911eb4", "#46f0f0", "#f032e6", "#bcf60c", "#fabebe",
    ];
    (0..phases).map(|i| BASE[i % BASE.len()].to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square(w: usize, x0: usize, y0: usize, side: usize) -> BinaryMask {
        BinaryMask::from_fn(w, w, |x, y| x >= x0 && x < x0 + side && y >= y0 && y < y0 + side).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let gt = [0, 0, 1, 2, 2, 2];
        let m = phase_metrics(&gt, &gt).unwrap();
        assert_eq!((m.acc, m.pre, m.rec, m.jac), (100.0, 100.0, 100.0, 100.0));
    }

    #[test]
    fn hand_example() {
        let m = phase_metrics(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap();
        assert_eq!(m.acc, 75.0);
        assert_eq!(m.pre, 100.0 * (1.0 + 2.0 / 3.0) / 2.0);
        assert_eq!(m.rec, 100.0 * (0.5 + 1.0) / 2.0);
        assert_eq!(m.jac, 100.0 * (0.5 + 2.0 / 3.0) / 2.0);
        assert!((m.pre - 83.333_333).abs() < 1e-4 && (m.jac - 58.333_333).abs() < 1e-4);
    }

    #[test]
    fn constant_wrong_prediction() {
        let m = phase_metrics(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap();
        assert_eq!(m.acc, 50.0);
    }

    #[test]
    fn absent_class_excluded() {
        // class 2 appears only in predictions
        let m = phase_metrics(&[0, 2], &[0, 0]).unwrap();
        assert_eq!(m.rec, 50.0);
        assert_eq!(m.pre, 100.0);
    }

    #[test]
    fn length_errors() {
        assert_eq!(phase_metrics(&[0], &[0, 1]).unwrap_err(), MetricsError::LengthMismatch { pred: 1, gt: 2 });
        assert_eq!(phase_metrics(&[], &[]).unwrap_err(), MetricsError::Empty);
        assert!(rotation_error(&[0.0], &[]).is_err());
    }

    #[test]
    fn confusion_csv_round_trip() {
        let cm = ConfusionMatrix::from_labels(&[0, 1, 1, 2, 0], &[0, 0, 1, 2, 2], 3).unwrap();
        let back = ConfusionMatrix::from_csv(&cm.to_csv()).unwrap();
        assert_eq!(cm, back);
        assert_eq!(back.metrics(), cm.metrics());
        assert!(ConfusionMatrix::from_csv("gt\\pred,0,1\n0,1,2\n").is_err());
    }

    #[test]
    fn dice_cases() {
        let a = square(32, 0, 0, 10);
        let b = square(32, 5, 0, 10);
        assert_eq!(dice(&a, &a).unwrap(), 100.0);
        assert_eq!(dice(&a, &square(32, 20, 20, 10)).unwrap(), 100.0 * (1e-6 / (200.0 + 1e-6)));
        assert_eq!(dice(&a, &b).unwrap(), 100.0 * ((100.0 + 1e-6) / (200.0 + 1e-6)));
        let empty = BinaryMask::new(32, 32).unwrap();
        assert_eq!(dice(&empty, &empty).unwrap(), 100.0);
        assert!(dice(&a, &BinaryMask::new(8, 8).unwrap()).is_err());
    }

    #[test]
    fn rotation_error_cases() {
        let gt = [0.0, 5.0, -30.0];
        assert_eq!(rotation_error(&gt, &gt).unwrap(), MeanSd { mean: 0.0, sd: 0.0, n: 3 });
        let p: Vec<f64> = gt.iter().map(|g| g + 1.0).collect();
        let e = rotation_error(&p, &gt).unwrap();
        assert!((e.mean - 1.0).abs() < 1e-12 && e.sd < 1e-12);
        assert_eq!(rotation_error(&[-179.0], &[179.0]).unwrap().mean, 2.0);
    }

    #[test]
    fn ribbons() {
        let pal = default_phase_palette(3);
        let (svg, csv) = ribbon_export(&[1, 1, 1], &[1, 1, 1], &pal).unwrap();
        assert_eq!(svg.matches("<rect").count(), 2);
        assert_eq!(csv, "ribbon,start,end,phase\npred,0,3,1\ngt,0,3,1\n");
        let mut pal = pal;
        pal[2] = String::new();
        assert_eq!(ribbon_export(&[0, 2], &[0, 0], &pal).unwrap_err(), MetricsError::MissingColor(2));
        assert_eq!(ribbon_export(&[0, 7], &[0, 0], &pal).unwrap_err(), MetricsError::MissingColor(7));
    }

    proptest! {
        #[test]
        fn rle_matches_scan(labels in proptest::collection::vec(0usize..3, 0..60)) {
            let runs = run_lengths(&labels);
            let mut expanded = Vec::new();
            for r in &runs {
                prop_assert!(r.end > r.start);
                expanded.extend(std::iter::repeat_n(r.phase, r.end - r.start));
            }
            prop_assert_eq!(&expanded, &labels);
            let changes = labels.windows(2).filter(|w| w[0] != w[1]).count();
            prop_assert_eq!(runs.len(), if labels.is_empty() { 0 } else { changes + 1 });
        }

        #[test]
        fn relabeling_invariance(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..80), perm_seed in 0usize..24) {
            let mut perm = vec![0usize, 1, 2, 3];
            // enumerate the 24 permutations by Lehmer code
            let mut code = perm_seed;
            let mut pool = perm.clone();
            for (i, slot) in perm.iter_mut().enumerate() {
                let f = (1..4 - i).product::<usize>().max(1);
                *slot = pool.remove(code / f);
                code %= f;
            }
            let (pred, gt): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let a = phase_metrics(&pred, &gt).unwrap();
            let pp: Vec<usize> = pred.iter().map(|l| perm[*l]).collect();
            let gp: Vec<usize> = gt.iter().map(|l| perm[*l]).collect();
            let b = phase_metrics(&pp, &gp).unwrap();
            for (x, y) in [(a.acc, b.acc), (a.pre, b.pre), (a.rec, b.rec), (a.jac, b.jac)] {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn dice_symmetric(bits_a in proptest::collection::vec(any::<bool>(), 64), bits_b in proptest::collection::vec(any::<bool>(), 64)) {
            let a = BinaryMask::from_bits(8, 8, bits_a).unwrap();
            let b = BinaryMask::from_bits(8, 8, bits_b).unwrap();
            prop_assert_eq!(dice(&a, &b).unwrap(), dice(&b, &a).unwrap());
            prop_assert_eq!(dice(&a, &a).unwrap(), 100.0);
        }
    }
}
