//! Small numerical helpers shared by the estimators and the simulator.

/// Two-sided 95% normal critical value.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Compensated (Neumaier) summation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    neumaier_sum(values.iter().copied()) / values.len() as f64
}

/// Sample standard deviation with the n−1 denominator.
pub fn sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss = neumaier_sum(values.iter().map(|v| (v - m) * (v - m)));
    (ss / (n - 1) as f64).sqrt()
}

/// Mean and Monte Carlo standard error (sd / sqrt(reps)) of replicate statistics.
pub fn mean_and_mcse(values: &[f64]) -> (f64, f64) {
    (mean(values), sd(values) / (values.len() as f64).sqrt())
}

/// Standard error implied by per-unit influence contributions: sqrt(mean(v²)/n).
pub fn influence_se(influence: &[f64]) -> f64 {
    let n = influence.len() as f64;
    if influence.is_empty() {
        return 0.0;
    }
    (neumaier_sum(influence.iter().map(|v| v * v)) / n / n).sqrt()
}
