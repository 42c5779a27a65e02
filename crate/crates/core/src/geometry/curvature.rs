use super::GeometryError;

/// Per-point discrete curvature of a closed point sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureProfile {
    /// Menger curvature per point, 1/px, always ≥ 0.
    pub values: Vec<f64>,
    /// Index offset to the neighbors used in each triple.
    pub spacing: usize,
}

/// Which side of the threshold gets discarded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterMode {
    /// Drop points whose curvature exceeds the threshold (spike rejection).
    #[default]
    ExcludeAbove,
    /// Drop points whose curvature is below the threshold.
    ExcludeBelow,
}

/// Scale on which the threshold is compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurvatureScale {
    /// Raw Menger curvature in 1/px.
    Raw,
    /// Scale-free excess over the contour's median curvature,
    /// `max(0, κ / median - 1)`. A value of 0.7 marks points curving 70%
    /// more sharply than the median point.
    #[default]
    MedianExcess,
}

/// Menger curvature of three points: `4·area / (|ab|·|bc|·|ca|)`.
///
/// Collinear triples that continue forward give 0. A collinear fold-back
/// (both neighbors on the same side of `b`, as when a trace runs out along a
/// one-pixel spike and returns) gets `2 / max(|ab|, |bc|)`, which for
/// `a == c` is the limit of the Menger value as the fold angle closes.
/// Triples with `b` coinciding with a neighbor give 0.
pub fn menger(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let ab = (b[0] - a[0]).hypot(b[1] - a[1]);
    let bc = (c[0] - b[0]).hypot(c[1] - b[1]);
    let ca = (a[0] - c[0]).hypot(a[1] - c[1]);
    if ab == 0.0 || bc == 0.0 {
        return 0.0;
    }
    if cross == 0.0 {
        let dot = (a[0] - b[0]) * (c[0] - b[0]) + (a[1] - b[1]) * (c[1] - b[1]);
        return if dot > 0.0 { 2.0 / ab.max(bc) } else { 0.0 };
    }
    let denom = ab * bc * ca;
    // 4 · (|cross| / 2) / denom
    2.0 * cross.abs() / denom
}

/// Curvature at every point of a closed sequence from the triple
/// `(p[i-k], p[i], p[i+k])` with cyclic indexing.
pub fn curvature(points: &[[f64; 2]], spacing: usize) -> Result<CurvatureProfile, GeometryError> {
    let n = points.len();
    if spacing == 0 || n < 2 * spacing + 1 {
        return Err(GeometryError::ContourTooShort { len: n, spacing });
    }
    let values = (0..n)
        .map(|i| {
            let prev = points[(i + n - spacing) % n];
            let next = points[(i + spacing) % n];
            menger(prev, points[i], next)
        })
        .collect();
    Ok(CurvatureProfile { values, spacing })
}

impl CurvatureProfile {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn median(&self) -> f64 {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n == 0 {
            0.0
        } else if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    /// Values on the requested scale.
    pub fn scaled(&self, scale: CurvatureScale) -> Vec<f64> {
        match scale {
            CurvatureScale::Raw => self.values.clone(),
            CurvatureScale::MedianExcess => {
                let m = self.median();
                self.values
                    .iter()
                    .map(|&k| {
                        if k <= m {
                            0.0
                        } else if m > 0.0 {
                            k / m - 1.0
                        } else {
                            f64::INFINITY
                        }
                    })
                    .collect()
            }
        }
    }
}

/// Threshold settings for [`filter_by_curvature`].
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CurvatureFilter {
    pub threshold: f64,
    pub mode: FilterMode,
    pub scale: CurvatureScale,
}

impl Default for CurvatureFilter {
    fn default() -> Self {
        Self {
            threshold: 0.7,
            mode: FilterMode::ExcludeAbove,
            scale: CurvatureScale::MedianExcess,
        }
    }
}

/// Keep the points that pass the curvature predicate, in order.
pub fn filter_by_curvature(
    points: &[[f64; 2]],
    profile: &CurvatureProfile,
    filter: &CurvatureFilter,
) -> Result<Vec<[f64; 2]>, GeometryError> {
    if points.len() != profile.len() {
        return Err(GeometryError::ProfileMismatch {
            points: points.len(),
            profile: profile.len(),
        });
    }
    let scaled = profile.scaled(filter.scale);
    let kept: Vec<[f64; 2]> = points
        .iter()
        .zip(&scaled)
        .filter(|(_, &v)| match filter.mode {
            FilterMode::ExcludeAbove => !(v > filter.threshold),
            FilterMode::ExcludeBelow => !(v < filter.threshold),
        })
        .map(|(p, _)| *p)
        .collect();
    if kept.is_empty() {
        return Err(GeometryError::AllPointsRejected);
    }
    Ok(kept)
}

/// Repeated curvature filtering: each pass recomputes the profile on the
/// survivors of the previous one, so a spike hidden by a neighboring spike
/// in its triple surfaces once that neighbor is gone. Stops early when a
/// pass removes nothing or too few points remain for the spacing.
pub fn reject_outliers(
    points: &[[f64; 2]],
    spacing: usize,
    filter: &CurvatureFilter,
    passes: usize,
) -> Result<Vec<[f64; 2]>, GeometryError> {
    let profile = curvature(points, spacing)?;
    let mut kept = filter_by_curvature(points, &profile, filter)?;
    for _ in 1..passes {
        if kept.len() < 2 * spacing + 1 {
            break;
        }
        let profile = curvature(&kept, spacing)?;
        let next = filter_by_curvature(&kept, &profile, filter)?;
        if next.len() == kept.len() {
            break;
        }
        kept = next;
    }
    Ok(kept)
}
