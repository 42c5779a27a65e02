use nalgebra::{Matrix5, Vector5};

use super::{init_guess, moment_guess, EllipseError, EllipseParams, FitDiagnostics, NearestPointSolver};
use crate::par::Exec;

/// Levenberg–Marquardt settings. Damping scales the diagonal of `JᵀJ`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LmConfig {
    pub max_iter: usize,
    /// Relative cost decrease below which an accepted step ends the fit.
    pub cost_tol: f64,
    /// Relative step norm below which an accepted step ends the fit.
    pub param_tol: f64,
    pub lambda0: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub lambda_max: f64,
    pub exec: Exec,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            cost_tol: 1e-8,
            param_tol: 1e-10,
            lambda0: 1e-3,
            lambda_up: 10.0,
            lambda_down: 0.1,
            lambda_max: 1e10,
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Initializer {
    /// Centroid, half the mean centroid distance, zero tilt.
    #[default]
    HalfMeanDistance,
    /// Second-moment estimate.
    Moments,
}

#[derive(Clone, Copy, Debug, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct FitConfig {
    pub lm: LmConfig,
    pub init: Initializer,
    /// Retry from the second-moment estimate when the primary fit fails.
    pub fallback_to_moments: bool,
}

fn to_vec(e: &EllipseParams) -> Vector5<f64> {
    Vector5::new(e.ox, e.oy, e.l_major, e.l_minor, e.phi)
}

fn from_vec(v: &Vector5<f64>) -> EllipseParams {
    EllipseParams::new(v[0], v[1], v[2], v[3], v[4])
}

struct Linearization {
    cost: f64,
    jtj: Matrix5<f64>,
    jtr: Vector5<f64>,
}

fn linearize(points: &[[f64; 2]], e: &EllipseParams, exec: Exec) -> Linearization {
    let solver = NearestPointSolver::new(e);
    let rows = exec.map_slice(points, |p| solver.residual_and_gradient(*p));
    let mut jtj = Matrix5::zeros();
    let mut jtr = Vector5::zeros();
    let mut cost = 0.0;
    for (r, g) in rows {
        let g = Vector5::from(g);
        cost += r * r;
        jtr += g * r;
        jtj += g * g.transpose();
    }
    Linearization { cost, jtj, jtr }
}

/// Sum of squared orthogonal residuals of `points` against `e`.
pub fn orthogonal_cost(points: &[[f64; 2]], e: &EllipseParams, exec: Exec) -> f64 {
    let solver = NearestPointSolver::new(e);
    exec.map_slice(points, |p| solver.residual_and_gradient(*p).0)
        .into_iter()
        .map(|r| r * r)
        .sum()
}

/// Levenberg–Marquardt refinement from `init`.
///
/// The returned parameters never cost more than `init`; the output is
/// normalized so `l_major ≥ l_minor` and `phi ∈ [0, π)`.
pub fn fit_lm(
    points: &[[f64; 2]],
    init: &EllipseParams,
    cfg: &LmConfig,
) -> Result<(EllipseParams, FitDiagnostics), EllipseError> {
    if points.len() < 5 {
        return Err(EllipseError::TooFewPoints(points.len()));
    }
    if !(init.l_major > 0.0 && init.l_minor > 0.0 && init.ox.is_finite() && init.oy.is_finite())
    {
        return Err(EllipseError::InvalidParams);
    }
    let mut params = to_vec(init);
    let mut lin = linearize(points, init, cfg.exec);
    let mut history = vec![lin.cost];
    let mut lambda = cfg.lambda0;
    let mut accepted_any = false;
    let mut converged = lin.cost == 0.0;
    let mut iterations = 0;

    while !converged && iterations < cfg.max_iter {
        iterations += 1;
        let max_diag = (0..5).map(|i| lin.jtj[(i, i)]).fold(0.0, f64::max);
        let floor = 1e-12 * max_diag.max(1e-300);
        let mut stepped = false;
        loop {
            let mut a = lin.jtj;
            for i in 0..5 {
                a[(i, i)] += lambda * lin.jtj[(i, i)].max(floor);
            }
            let delta = a
                .cholesky()
                .map(|c| c.solve(&(-lin.jtr)))
                .or_else(|| a.lu().solve(&(-lin.jtr)));
            if let Some(delta) = delta.filter(|d| d.iter().all(|v| v.is_finite())) {
                let trial = params + delta;
                if trial[2] > 0.0 && trial[3] > 0.0 {
                    let trial_e = from_vec(&trial);
                    let trial_lin = linearize(points, &trial_e, cfg.exec);
                    if trial_lin.cost < lin.cost {
                        let rel_drop = (lin.cost - trial_lin.cost) / lin.cost;
                        let rel_step = delta.norm() / (params.norm() + cfg.param_tol);
                        params = trial;
                        lin = trial_lin;
                        history.push(lin.cost);
                        lambda = (lambda * cfg.lambda_down).max(1e-300);
                        accepted_any = true;
                        stepped = true;
                        converged = rel_drop < cfg.cost_tol || rel_step < cfg.param_tol || lin.cost == 0.0;
                        break;
                    }
                }
            }
            lambda *= cfg.lambda_up;
            if lambda > cfg.lambda_max {
                break;
            }
        }
        if !stepped {
            if !accepted_any {
                return Err(EllipseError::NumericalFailure(cfg.lambda_max));
            }
            // No descent direction left at any damping: the cost is at a
            // numerical minimum.
            converged = true;
        }
    }

    let fitted = from_vec(&params).normalized();
    let n = points.len() as f64;
    Ok((
        fitted,
        FitDiagnostics {
            final_cost: lin.cost,
            iterations,
            converged,
            rms_residual: (lin.cost / n).sqrt(),
            cost_history: history,
            used_fallback_init: false,
        },
    ))
}

/// Initializer plus LM, with the optional second-moment retry.
pub fn fit_ellipse(
    points: &[[f64; 2]],
    cfg: &FitConfig,
) -> Result<(EllipseParams, FitDiagnostics), EllipseError> {
    let primary = match cfg.init {
        Initializer::HalfMeanDistance => init_guess(points)?,
        Initializer::Moments => moment_guess(points)?,
    };
    match fit_lm(points, &primary, &cfg.lm) {
        Ok(r) if r.1.converged || !cfg.fallback_to_moments => Ok(r),
        other if cfg.fallback_to_moments && cfg.init != Initializer::Moments => {
            let alt = moment_guess(points)?;
            match fit_lm(points, &alt, &cfg.lm) {
                Ok((e, mut d)) => {
                    d.used_fallback_init = true;
                    match other {
                        // keep whichever reached the lower cost
                        Ok((pe, pd)) if pd.final_cost <= d.final_cost => Ok((pe, pd)),
                        _ => Ok((e, d)),
                    }
                }
                Err(err) => other.map_err(|_| err),
            }
        }
        other => other,
    }
}
