//! Ordinary least squares on a pair of slices, shared by the exponent
//! estimators and the tail fits.

/// Result of a simple linear regression `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LinFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope from the residual variance
    /// (zero for an exact fit or when fewer than three points).
    pub slope_stderr: f64,
    pub n: usize,
}

/// OLS over `(xs, ys)`; the slices must have equal length and at least two
/// distinct x-values. Returns `None` on a degenerate regressor.
pub(crate) fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinFit> {
    debug_assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mean_x = xs.iter().sum::<f64>() / nf;
    let mean_y = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        sxx += dx * dx;
        sxy += dx * (y - mean_y);
    }
    if sxx == 0.0 || !sxx.is_finite() {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let slope_stderr = if n > 2 {
        let mut ssr = 0.0;
        for (&x, &y) in xs.iter().zip(ys) {
            let r = y - (slope * x + intercept);
            ssr += r * r;
        }
        (ssr / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(LinFit {
        slope,
        intercept,
        slope_stderr,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_recovered() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 0.75).collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        assert!((fit.slope - 2.5).abs() < 1e-14);
        assert!((fit.intercept + 0.75).abs() < 1e-14);
        assert!(fit.slope_stderr < 1e-14);
    }

    #[test]
    fn degenerate_regressor_is_none() {
        let xs = [2.0, 2.0, 2.0];
        let ys = [1.0, 2.0, 3.0];
        assert!(linear_fit(&xs, &ys).is_none());
        assert!(linear_fit(&[1.0], &[1.0]).is_none());
    }
}
