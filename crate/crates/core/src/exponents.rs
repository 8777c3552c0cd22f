//! Estimation of the exponents `beta` and `beta2` from sweep data.
//!
//! Raw per-point estimators are log-ratios: `ln(omega)/ln(x0)` for `beta` and
//! `-ln(x0)/ln(tau)` for `beta2`. Both carry an `O(1/ln x0)` bias from the
//! multiplicative constant of the underlying power law; the adjusted
//! estimators remove it by fitting that constant with least squares in
//! log-log coordinates.

use thiserror::Error;

use crate::dulac::DulacSample;
use crate::ode::fmt_full;
use crate::regression::linear_fit;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least {needed} valid samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("degenerate regressor: all x0 coincide")]
    DegenerateRegressor,
}

/// Which exponent a fit estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExponentKind {
    Beta,
    Beta2,
}

impl ExponentKind {
    pub fn label(self) -> &'static str {
        match self {
            ExponentKind::Beta => "beta",
            ExponentKind::Beta2 => "beta2",
        }
    }
}

/// Raw and adjusted per-point estimates plus the fitted constants.
///
/// Two fits back each record. The adjustment constant `c_fit` comes from
/// least squares with the exponent pinned to its theoretical value (that is
/// what makes the adjusted error shrink toward the origin); the free
/// regression provides `slope_fit` as an independent estimate of the
/// exponent, with no theory assumed.
///
/// Invalid points (nonpositive `omega`, or `tau <= 1` for the flow-time
/// estimator) carry NaN in `raw`/`adjusted` and are excluded from every fit.
#[derive(Debug, Clone)]
pub struct ExponentFit {
    pub kind: ExponentKind,
    pub raw: Vec<f64>,
    pub adjusted: Vec<f64>,
    /// Multiplicative adjustment constant of the estimator equation, fitted
    /// with the exponent pinned to `theoretical`.
    pub c_fit: f64,
    /// Free-slope regression estimate of the exponent itself.
    pub slope_fit: f64,
    /// Slope of the free log-log regression.
    pub loglog_slope: f64,
    /// Intercept of the free log-log regression; `exp` of it is the
    /// multiplicative constant of the fitted power law.
    pub loglog_intercept: f64,
    /// Standard error of the free log-log slope.
    pub slope_stderr: f64,
    pub theoretical: f64,
    pub max_abs_err_adjusted: f64,
    pub n_valid: usize,
}

impl ExponentFit {
    /// Multiplicative constant of the fitted power law
    /// (`omega ~ c x0^beta` or `tau ~ zeta x0^(-1/beta2)`).
    pub fn amplitude(&self) -> f64 {
        self.loglog_intercept.exp()
    }

    /// CSV rows `x0,raw,adjusted,theoretical` (NaN for excluded points).
    pub fn to_csv(&self, samples: &[&DulacSample]) -> String {
        let mut out = String::from("x0,raw,adjusted,theoretical\n");
        for (i, s) in samples.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_full(s.x0),
                fmt_full(self.raw[i]),
                fmt_full(self.adjusted[i]),
                fmt_full(self.theoretical)
            ));
        }
        out
    }

    /// Flat key-value summary.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("kind: {}\n", self.kind.label()));
        out.push_str(&format!("n_valid: {}\n", self.n_valid));
        out.push_str(&format!("theoretical: {}\n", fmt_full(self.theoretical)));
        out.push_str(&format!("slope_fit: {}\n", fmt_full(self.slope_fit)));
        out.push_str(&format!("c_fit: {}\n", fmt_full(self.c_fit)));
        out.push_str(&format!("ln_c_fit: {}\n", fmt_full(self.c_fit.ln())));
        out.push_str(&format!("amplitude: {}\n", fmt_full(self.amplitude())));
        out.push_str(&format!("loglog_slope: {}\n", fmt_full(self.loglog_slope)));
        out.push_str(&format!(
            "loglog_intercept: {}\n",
            fmt_full(self.loglog_intercept)
        ));
        out.push_str(&format!("slope_stderr: {}\n", fmt_full(self.slope_stderr)));
        out.push_str(&format!(
            "max_abs_err_adjusted: {}\n",
            fmt_full(self.max_abs_err_adjusted)
        ));
        out
    }
}

/// Per-point `ln(omega)/ln(x0)`; NaN where `omega <= 0` or `|x0| >= 1`.
/// Mirror-branch samples (negative `x0`) enter through `|x0|` and must be
/// folded to positive `omega` by the caller.
pub fn estimate_beta_raw(samples: &[&DulacSample]) -> Vec<f64> {
    samples
        .iter()
        .map(|s| {
            let x = s.x0.abs();
            if s.omega > 0.0 && s.omega.is_finite() && x < 1.0 {
                s.omega.ln() / x.ln()
            } else {
                f64::NAN
            }
        })
        .collect()
}

/// Fits the adjustment constant by least squares in log-log coordinates with
/// the slope pinned to `theoretical_beta` (so `ln c_fit` is the mean of
/// `ln omega - beta ln x0`), and runs the free regression
/// `ln omega = slope ln x0 + intercept` alongside as an independent check.
/// Adjusted estimates are `(ln omega - ln c_fit)/ln x0`.
pub fn fit_adjustment(
    samples: &[&DulacSample],
    theoretical_beta: f64,
) -> Result<ExponentFit, FitError> {
    let raw = estimate_beta_raw(samples);
    let mut ln_x = Vec::new();
    let mut ln_w = Vec::new();
    for s in samples {
        let x = s.x0.abs();
        if s.omega > 0.0 && s.omega.is_finite() && x < 1.0 {
            ln_x.push(x.ln());
            ln_w.push(s.omega.ln());
        }
    }
    if ln_x.len() < 2 {
        return Err(FitError::TooFewSamples {
            needed: 2,
            got: ln_x.len(),
        });
    }
    let fit = linear_fit(&ln_x, &ln_w).ok_or(FitError::DegenerateRegressor)?;
    let ln_c = ln_x
        .iter()
        .zip(&ln_w)
        .map(|(lx, lw)| lw - theoretical_beta * lx)
        .sum::<f64>()
        / ln_x.len() as f64;
    let adjusted: Vec<f64> = samples
        .iter()
        .zip(&raw)
        .map(|(s, r)| {
            if r.is_nan() {
                f64::NAN
            } else {
                (s.omega.ln() - ln_c) / s.x0.abs().ln()
            }
        })
        .collect();
    let max_abs_err = adjusted
        .iter()
        .filter(|v| v.is_finite())
        .map(|v| (v - theoretical_beta).abs())
        .fold(0.0, f64::max);
    Ok(ExponentFit {
        kind: ExponentKind::Beta,
        raw,
        adjusted,
        c_fit: ln_c.exp(),
        slope_fit: fit.slope,
        loglog_slope: fit.slope,
        loglog_intercept: fit.intercept,
        slope_stderr: fit.slope_stderr,
        theoretical: theoretical_beta,
        max_abs_err_adjusted: max_abs_err,
        n_valid: ln_x.len(),
    })
}

/// Flow-time estimator of `beta2`.
///
/// Raw per-point values are `-ln(x0)/ln(tau)` (points with `tau <= 1` are
/// excluded so the logarithm keeps one sign). The flow-time constant is
/// fitted with the slope pinned to `-1/theoretical_beta2`; converting it to
/// the estimator's constant via `ln c_fit = beta2 ln zeta` makes the adjusted
/// estimates `(ln c_fit - ln x0)/ln tau` exact on pure power laws. The free
/// regression gives `slope_fit = -1/slope` as the independent estimate.
pub fn estimate_beta2(
    samples: &[&DulacSample],
    theoretical_beta2: f64,
) -> Result<ExponentFit, FitError> {
    let valid = |s: &DulacSample| s.tau > 1.0 && s.tau.is_finite() && s.x0.abs() < 1.0;
    let raw: Vec<f64> = samples
        .iter()
        .map(|s| {
            if valid(s) {
                -s.x0.abs().ln() / s.tau.ln()
            } else {
                f64::NAN
            }
        })
        .collect();
    let mut ln_x = Vec::new();
    let mut ln_t = Vec::new();
    for s in samples {
        if valid(s) {
            ln_x.push(s.x0.abs().ln());
            ln_t.push(s.tau.ln());
        }
    }
    if ln_x.len() < 2 {
        return Err(FitError::TooFewSamples {
            needed: 2,
            got: ln_x.len(),
        });
    }
    let fit = linear_fit(&ln_x, &ln_t).ok_or(FitError::DegenerateRegressor)?;
    if fit.slope == 0.0 {
        return Err(FitError::DegenerateRegressor);
    }
    let slope_fit = -1.0 / fit.slope;
    let ln_zeta = ln_x
        .iter()
        .zip(&ln_t)
        .map(|(lx, lt)| lt + lx / theoretical_beta2)
        .sum::<f64>()
        / ln_x.len() as f64;
    let ln_c = theoretical_beta2 * ln_zeta;
    let adjusted: Vec<f64> = samples
        .iter()
        .zip(&raw)
        .map(|(s, r)| {
            if r.is_nan() {
                f64::NAN
            } else {
                (ln_c - s.x0.abs().ln()) / s.tau.ln()
            }
        })
        .collect();
    let max_abs_err = adjusted
        .iter()
        .filter(|v| v.is_finite())
        .map(|v| (v - theoretical_beta2).abs())
        .fold(0.0, f64::max);
    Ok(ExponentFit {
        kind: ExponentKind::Beta2,
        raw,
        adjusted,
        c_fit: ln_c.exp(),
        slope_fit,
        loglog_slope: fit.slope,
        loglog_intercept: fit.intercept,
        slope_stderr: fit.slope_stderr,
        theoretical: theoretical_beta2,
        max_abs_err_adjusted: max_abs_err,
        n_valid: ln_x.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::State;
    use crate::ode::SectionHit;
    use approx::assert_relative_eq;

    fn synthetic_sample(x0: f64, omega: f64, tau: f64) -> DulacSample {
        DulacSample {
            x0,
            y0: 1.0,
            z0: None,
            exit: SectionHit {
                t_hit: tau,
                s_hit: State::two_d(1.0, omega),
                residual: 0.0,
            },
            omega,
            tau,
            q: 0.0,
        }
    }

    fn power_law_samples(c: f64, beta: f64, zeta: f64, beta2: f64, n: usize) -> Vec<DulacSample> {
        (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                let x = (1e-4f64.ln() + t * (1e-5f64.ln() - 1e-4f64.ln())).exp();
                synthetic_sample(x, c * x.powf(beta), zeta * x.powf(-1.0 / beta2))
            })
            .collect()
    }

    #[test]
    fn raw_estimator_on_pure_power_law() {
        let samples = power_law_samples(1.0, 0.4, 1.0, 4.0 / 3.0, 20);
        let refs: Vec<&DulacSample> = samples.iter().collect();
        for r in estimate_beta_raw(&refs) {
            assert_relative_eq!(r, 0.4, max_relative = 1e-12);
        }
    }

    #[test]
    fn raw_estimator_bias_from_constant() {
        let s = synthetic_sample(1e-4, 2.0 * 1e-4f64.powf(0.4), 10.0);
        let refs = [&s];
        let raw = estimate_beta_raw(&refs);
        let expected = 0.4 + 2.0f64.ln() / 1e-4f64.ln();
        assert_relative_eq!(raw[0], expected, max_relative = 1e-12);
    }

    #[test]
    fn adjustment_recovers_planted_constant_and_slope() {
        let samples = power_law_samples(1.1, 0.4, 1.0, 4.0 / 3.0, 50);
        let refs: Vec<&DulacSample> = samples.iter().collect();
        let fit = fit_adjustment(&refs, 0.4).unwrap();
        assert_relative_eq!(fit.c_fit, 1.1, max_relative = 1e-12);
        assert_relative_eq!(fit.slope_fit, 0.4, max_relative = 1e-12);
        for a in fit.adjusted.iter() {
            assert_relative_eq!(*a, 0.4, max_relative = 1e-11);
        }
        assert!(fit.max_abs_err_adjusted < 1e-11);
    }

    #[test]
    fn scale_covariance_of_the_constant() {
        let samples = power_law_samples(1.0, 0.4, 1.0, 4.0 / 3.0, 50);
        let scaled: Vec<DulacSample> = samples
            .iter()
            .map(|s| synthetic_sample(s.x0, 3.0 * s.omega, s.tau))
            .collect();
        let r1: Vec<&DulacSample> = samples.iter().collect();
        let r2: Vec<&DulacSample> = scaled.iter().collect();
        let f1 = fit_adjustment(&r1, 0.4).unwrap();
        let f2 = fit_adjustment(&r2, 0.4).unwrap();
        assert_relative_eq!(f2.c_fit, 3.0 * f1.c_fit, max_relative = 1e-12);
        assert_relative_eq!(f2.slope_fit, f1.slope_fit, max_relative = 1e-12);
    }

    #[test]
    fn beta2_estimator_exact_on_power_law() {
        let samples = power_law_samples(1.0, 0.4, 1.0, 4.0 / 3.0, 30);
        let refs: Vec<&DulacSample> = samples.iter().collect();
        let fit = estimate_beta2(&refs, 4.0 / 3.0).unwrap();
        for r in &fit.raw {
            assert_relative_eq!(*r, 4.0 / 3.0, max_relative = 1e-12);
        }
        assert_relative_eq!(fit.slope_fit, 4.0 / 3.0, max_relative = 1e-12);
        for a in &fit.adjusted {
            assert_relative_eq!(*a, 4.0 / 3.0, max_relative = 1e-11);
        }
        // nontrivial amplitude: adjusted stays exact, raw does not
        let samples = power_law_samples(1.0, 0.4, 0.55, 2.0, 30);
        let refs: Vec<&DulacSample> = samples.iter().collect();
        let fit = estimate_beta2(&refs, 2.0).unwrap();
        assert_relative_eq!(fit.amplitude(), 0.55, max_relative = 1e-11);
        for a in &fit.adjusted {
            assert_relative_eq!(*a, 2.0, max_relative = 1e-10);
        }
        assert!(fit.raw.iter().any(|r| (r - 2.0).abs() > 1e-3));
    }

    #[test]
    fn invalid_points_are_flagged_not_imputed() {
        let mut samples = power_law_samples(1.0, 0.4, 1.0, 4.0 / 3.0, 10);
        samples[3].omega = -1e-6;
        samples[7].tau = 0.5;
        let refs: Vec<&DulacSample> = samples.iter().collect();
        let beta_fit = fit_adjustment(&refs, 0.4).unwrap();
        assert!(beta_fit.raw[3].is_nan());
        assert!(beta_fit.adjusted[3].is_nan());
        assert_eq!(beta_fit.n_valid, 9);
        let beta2_fit = estimate_beta2(&refs, 4.0 / 3.0).unwrap();
        assert!(beta2_fit.raw[7].is_nan());
        assert_eq!(beta2_fit.n_valid, 9);
    }

    #[test]
    fn degenerate_regressor_detected() {
        let samples = vec![
            synthetic_sample(1e-4, 1e-2, 10.0),
            synthetic_sample(1e-4, 2e-2, 20.0),
        ];
        let refs: Vec<&DulacSample> = samples.iter().collect();
        assert_eq!(
            fit_adjustment(&refs, 0.4).unwrap_err(),
            FitError::DegenerateRegressor
        );
    }

    #[test]
    fn adjusted_beats_raw_with_correction_term() {
        // omega = c x^beta (1 + d x^gamma): the adjusted estimator must not be
        // worse than the raw one anywhere on the sweep.
        let n = 40;
        let samples: Vec<DulacSample> = (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                let x = (1e-4f64.ln() + t * (1e-5f64.ln() - 1e-4f64.ln())).exp();
                let omega = 0.8 * x.powf(0.4) * (1.0 + 0.3 * x.powf(0.375));
                synthetic_sample(x, omega, x.powf(-0.75))
            })
            .collect();
        let refs: Vec<&DulacSample> = samples.iter().collect();
        let fit = fit_adjustment(&refs, 0.4).unwrap();
        let max_raw = fit
            .raw
            .iter()
            .map(|r| (r - 0.4).abs())
            .fold(0.0, f64::max);
        assert!(fit.max_abs_err_adjusted <= max_raw);
    }

    #[test]
    fn summary_and_csv_shapes() {
        let samples = power_law_samples(1.0, 0.4, 1.0, 4.0 / 3.0, 5);
        let refs: Vec<&DulacSample> = samples.iter().collect();
        let fit = fit_adjustment(&refs, 0.4).unwrap();
        let csv = fit.to_csv(&refs);
        assert_eq!(csv.lines().next().unwrap(), "x0,raw,adjusted,theoretical");
        assert_eq!(csv.lines().count(), 6);
        let summary = fit.summary();
        assert!(summary.contains("kind: beta"));
        assert!(summary.contains("c_fit:"));
    }
}
