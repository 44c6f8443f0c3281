//! Ordinary least squares line fits for log-log slope estimation.

/// Result of a straight-line fit y = slope * x + intercept.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope under homoscedastic residuals.
    pub slope_stderr: f64,
    /// Coefficient of determination; 1.0 when the residuals vanish.
    pub r2: f64,
}

/// Fit a line to (xs, ys) by least squares. Panics if the lengths differ or
/// fewer than two points are given; callers gate on their own minimums.
pub fn line_fit(xs: &[f64], ys: &[f64]) -> LineFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    assert!(n >= 2, "line fit needs at least two points");
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    assert!(sxx > 0.0, "line fit needs at least two distinct x values");
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = (syy - slope * sxy).max(0.0);
    let slope_stderr = if n > 2 {
        (sse / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    LineFit {
        slope,
        intercept,
        slope_stderr,
        r2,
    }
}

/// Mean and standard error of the mean of a sample.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    assert!(n >= 1);
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Self-normalized weighted mean with a delta-method standard error.
/// Weights must be nonnegative with positive sum.
pub fn weighted_mean_stderr(values: &[f64], weights: &[f64]) -> (f64, f64) {
    assert_eq!(values.len(), weights.len());
    let wsum: f64 = weights.iter().sum();
    assert!(wsum > 0.0, "weighted mean needs positive total weight");
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / wsum;
    let mut num = 0.0;
    for (&v, &w) in values.iter().zip(weights) {
        num += w * w * (v - mean) * (v - mean);
    }
    (mean, num.sqrt() / wsum)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_is_recovered() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let fit = line_fit(&xs, &ys);
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!(fit.slope_stderr < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_line_reports_positive_stderr() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = [0.1, 0.9, 2.2, 2.8, 4.1];
        let fit = line_fit(&xs, &ys);
        assert!((fit.slope - 1.0).abs() < 0.1);
        assert!(fit.slope_stderr > 0.0);
        assert!(fit.r2 > 0.98);
    }

    #[test]
    fn weighted_mean_matches_unweighted_for_equal_weights() {
        let vals = [1.0, 2.0, 3.0, 4.0];
        let w = [1.0; 4];
        let (m, se) = weighted_mean_stderr(&vals, &w);
        let (m2, se2) = mean_stderr(&vals);
        assert!((m - m2).abs() < 1e-12);
        // Delta-method error sqrt(sum (v-m)^2)/n versus sqrt(var/n): equal up
        // to the n/(n-1) Bessel factor.
        assert!((se / se2 - (3.0f64 / 4.0).sqrt()).abs() < 1e-12);
    }
}
