//! Small statistics helpers shared by the estimators.

/// Compensated (Neumaier) summation. Deterministic for a fixed input order.
pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut total = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = total + v;
        if total.abs() >= v.abs() {
            comp += (total - t) + v;
        } else {
            comp += (v - t) + total;
        }
        total = t;
    }
    total + comp
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    sum(values.iter().copied()) / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator). Zero for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss = sum(values.iter().map(|v| (v - m) * (v - m)));
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Standard error of the mean.
pub fn std_error(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    std_dev(values) / (values.len() as f64).sqrt()
}

/// Linear-interpolation quantile (Hyndman–Fan type 7) of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Classical standard error of the slope from the residuals.
    pub slope_stderr: f64,
    pub points: usize,
}

/// Fits a least-squares line. Returns `None` with fewer than two points or
/// when all `x` coincide.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx = sum(x.iter().map(|xi| (xi - mx) * (xi - mx)));
    if sxx <= 0.0 {
        return None;
    }
    let sxy = sum(x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 {
        let sse = sum(x.iter().zip(y).map(|(xi, yi)| (yi - intercept - slope * xi).powi(2)));
        (sse / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Some(LinearFit {
        slope,
        intercept,
        slope_stderr,
        points: n,
    })
}

/// Weights `c_j` such that the OLS slope equals `Σ c_j y_j` for abscissae `x`.
pub fn slope_weights(x: &[f64]) -> Vec<f64> {
    let mx = mean(x);
    let sxx = sum(x.iter().map(|xi| (xi - mx) * (xi - mx)));
    x.iter().map(|xi| (xi - mx) / sxx).collect()
}

/// Composite trapezoid rule on an arbitrary increasing grid.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    sum(x
        .windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1])))
}
