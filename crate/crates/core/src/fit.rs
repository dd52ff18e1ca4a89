//! Two-parameter exponential trend fits.
//!
//! Forms: `a·exp(-b·N)` for quantities that decay to zero, and
//! `1 - a·exp(-b·N)` for quantities that rise to one. The starting point is
//! the ordinary least-squares line through the log-transformed data, which is
//! then refined with Levenberg-Marquardt on the untransformed residuals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_ITERATIONS: usize = 200;
pub const PARAM_TOLERANCE: f64 = 1e-10;
const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_STEP: f64 = 10.0;
// past this the step is pure gradient descent of vanishing length
const LAMBDA_MAX: f64 = 1e16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitForm {
    /// `a·exp(-b·N)`
    Decay,
    /// `1 - a·exp(-b·N)`
    OneMinusDecay,
}

impl FitForm {
    pub fn eval(self, a: f64, b: f64, n: f64) -> f64 {
        match self {
            FitForm::Decay => a * (-b * n).exp(),
            FitForm::OneMinusDecay => 1.0 - a * (-b * n).exp(),
        }
    }

    /// Partial derivatives with respect to `a` and `b`.
    fn gradient(self, a: f64, b: f64, n: f64) -> [f64; 2] {
        let e = (-b * n).exp();
        let sign = match self {
            FitForm::Decay => 1.0,
            FitForm::OneMinusDecay => -1.0,
        };
        [sign * e, -sign * a * n * e]
    }

    /// The value whose logarithm is linear in `N`.
    fn linearise(self, p: f64) -> f64 {
        match self {
            FitForm::Decay => p,
            FitForm::OneMinusDecay => 1.0 - p,
        }
    }
}

impl std::str::FromStr for FitForm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "decay" => Ok(FitForm::Decay),
            "one-minus-decay" | "one_minus_decay" => Ok(FitForm::OneMinusDecay),
            _ => Err(format!("unknown fit form `{s}` (expected decay or one-minus-decay)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitModel {
    pub form: FitForm,
    pub a: f64,
    pub b: f64,
    /// Sum of squared residuals at `(a, b)`.
    pub sse: f64,
    pub iterations: usize,
    /// False when the iteration budget ran out; `(a, b)` are then the best
    /// parameters seen.
    pub converged: bool,
    /// SSE after the log-linear initialisation and after every accepted step.
    #[serde(skip)]
    pub sse_trace: Vec<f64>,
}

impl FitModel {
    pub fn predict(&self, n: f64) -> f64 {
        self.form.eval(self.a, self.b, n)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("point {index} (N={n}, p={p}) has no logarithm under this form")]
    UndefinedTransform { index: usize, n: f64, p: f64 },
    #[error("all points share the same N")]
    DegenerateAbscissa,
}

fn sse(form: FitForm, a: f64, b: f64, points: &[(f64, f64)]) -> f64 {
    points.iter().map(|&(n, p)| (form.eval(a, b, n) - p).powi(2)).sum()
}

/// Least-squares line through `(N, ln y)`; returns `(a, b)` of `a·exp(-b·N)`.
fn log_linear(form: FitForm, points: &[(f64, f64)]) -> Result<(f64, f64), FitError> {
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for (index, &(n, p)) in points.iter().enumerate() {
        let y = form.linearise(p);
        if y.is_nan() || y <= 0.0 || !y.is_finite() || !n.is_finite() {
            return Err(FitError::UndefinedTransform { index, n, p });
        }
        xs.push(n);
        ys.push(y.ln());
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(FitError::DegenerateAbscissa);
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(((my - slope * mx).exp(), -slope))
}

/// Fit `form` to `(N, p)` points.
pub fn fit(points: &[(f64, f64)], form: FitForm) -> Result<FitModel, FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    let (mut a, mut b) = log_linear(form, points)?;
    let mut cost = sse(form, a, b, points);
    let mut trace = vec![cost];
    let mut lambda = LAMBDA_INIT;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        // normal equations J^T J and J^T r
        let (mut jtj, mut jtr) = ([[0.0f64; 2]; 2], [0.0f64; 2]);
        for &(n, p) in points {
            let r = form.eval(a, b, n) - p;
            let g = form.gradient(a, b, n);
            for i in 0..2 {
                jtr[i] += g[i] * r;
                for j in 0..2 {
                    jtj[i][j] += g[i] * g[j];
                }
            }
        }
        if jtr.iter().all(|&g| g == 0.0) {
            converged = true;
            break;
        }
        let damped = |i: usize| jtj[i][i] + lambda * jtj[i][i].max(f64::MIN_POSITIVE);
        let (m00, m11, m01) = (damped(0), damped(1), jtj[0][1]);
        let det = m00 * m11 - m01 * m01;
        let step = if det.is_finite() && det != 0.0 {
            Some([-(m11 * jtr[0] - m01 * jtr[1]) / det, -(m00 * jtr[1] - m01 * jtr[0]) / det])
        } else {
            None
        };
        let accepted = step.and_then(|d| {
            let (na, nb) = (a + d[0], b + d[1]);
            let c = sse(form, na, nb, points);
            (c.is_finite() && c < cost).then_some((na, nb, c, d))
        });
        match accepted {
            Some((na, nb, c, d)) => {
                let rel = (d[0].hypot(d[1])) / a.hypot(b).max(f64::MIN_POSITIVE);
                a = na;
                b = nb;
                cost = c;
                trace.push(c);
                lambda /= LAMBDA_STEP;
                if rel < PARAM_TOLERANCE {
                    converged = true;
                    break;
                }
            }
            None => {
                lambda *= LAMBDA_STEP;
                if lambda > LAMBDA_MAX {
                    // no descent direction left: at a minimum to machine precision
                    converged = true;
                    break;
                }
            }
        }
    }

    Ok(FitModel { form, a, b, sse: cost, iterations, converged, sse_trace: trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_generated_decay() {
        let pts: Vec<(f64, f64)> = (1..=20).map(|n| (f64::from(n), 0.5 * (-0.1 * f64::from(n)).exp())).collect();
        let m = fit(&pts, FitForm::Decay).unwrap();
        assert!(m.converged);
        assert!((m.a - 0.5).abs() < 1e-10, "{m:?}");
        assert!((m.b - 0.1).abs() < 1e-10, "{m:?}");
    }

    #[test]
    fn recovers_random_substitution_sweep() {
        let pts: Vec<(f64, f64)> = (1..=20).map(|n| (f64::from(n), 1.0 - 0.75f64.powi(n + 1))).collect();
        let m = fit(&pts, FitForm::OneMinusDecay).unwrap();
        assert!((m.a - 0.75).abs() < 1e-6);
        assert!((m.b - (4.0f64 / 3.0).ln()).abs() < 1e-6);
        assert!((m.b - 0.287682).abs() < 1e-6);
    }

    #[test]
    fn refinement_improves_on_noisy_start() {
        let pts = [(5.0, 0.4370), (10.0, 0.2111), (15.0, 0.1510), (20.0, 0.0756)];
        let m = fit(&pts, FitForm::Decay).unwrap();
        assert!(m.converged);
        assert!(m.sse <= m.sse_trace[0]);
        assert!(m.sse_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(fit(&[(1.0, 0.5), (2.0, 0.25)], FitForm::Decay).unwrap_err(), FitError::TooFewPoints(2));
        assert!(matches!(
            fit(&[(1.0, 0.5), (2.0, 0.0), (3.0, 0.1)], FitForm::Decay),
            Err(FitError::UndefinedTransform { index: 1, .. })
        ));
        assert!(matches!(
            fit(&[(1.0, 0.5), (2.0, 1.0), (3.0, 0.1)], FitForm::OneMinusDecay),
            Err(FitError::UndefinedTransform { index: 1, .. })
        ));
        assert_eq!(
            fit(&[(2.0, 0.5), (2.0, 0.4), (2.0, 0.3)], FitForm::Decay).unwrap_err(),
            FitError::DegenerateAbscissa
        );
    }

    #[test]
    fn deterministic() {
        let pts: Vec<(f64, f64)> = (1..=20).map(|n| (f64::from(n), 1.0 - 0.875f64.powi(n + 1))).collect();
        assert_eq!(fit(&pts, FitForm::OneMinusDecay).unwrap(), fit(&pts, FitForm::OneMinusDecay).unwrap());
    }
}
