//! Central finite-difference gradient checking.

use serde::Serialize;

/// Outcome of comparing an analytic gradient with central differences.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Coordinate with the largest error.
    pub worst: usize,
    pub coordinates: usize,
    /// Coordinates where a perturbed evaluation was not finite.
    pub non_finite: Vec<usize>,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.non_finite.is_empty() && self.max_rel_error < tol
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

pub fn numeric_gradient<F>(f: F, params: &[f64], step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut x = params.to_vec();
    (0..params.len())
        .map(|i| {
            x[i] = params[i] + step;
            let plus = f(&x);
            x[i] = params[i] - step;
            let minus = f(&x);
            x[i] = params[i];
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// Compare `analytic` against central differences of `f` at `params`.
pub fn grad_check<F>(f: F, params: &[f64], analytic: &[f64], step: f64) -> GradCheck
where
    F: Fn(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length");
    let mut x = params.to_vec();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: 0,
        coordinates: params.len(),
        non_finite: Vec::new(),
    };
    for i in 0..params.len() {
        x[i] = params[i] + step;
        let plus = f(&x);
        x[i] = params[i] - step;
        let minus = f(&x);
        x[i] = params[i];
        if !plus.is_finite() || !minus.is_finite() {
            report.non_finite.push(i);
            continue;
        }
        let err = relative_error(analytic[i], (plus - minus) / (2.0 * step));
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = i;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        // f = sum_i c_i x_i^2 + x_0 x_1
        let f = |x: &[f64]| 3.0 * x[0] * x[0] + 0.5 * x[1] * x[1] - 2.0 * x[2] * x[2] + x[0] * x[1];
        let x = [0.7, -1.3, 2.1];
        let g = [6.0 * x[0] + x[1], x[1] + x[0], -4.0 * x[2]];
        let r = grad_check(f, &x, &g, 1e-5);
        assert!(r.max_rel_error < 1e-9, "{r:?}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let f = |x: &[f64]| x[0] * x[0];
        let r = grad_check(f, &[1.0], &[3.0], 1e-5);
        assert!(!r.passes(1e-4));
    }

    #[test]
    fn non_finite_reported() {
        let f = |x: &[f64]| x[0].ln();
        let r = grad_check(f, &[0.0], &[1.0], 1e-5);
        assert_eq!(r.non_finite, vec![0]);
    }
}
