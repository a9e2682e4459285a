//! Small summary statistics used by the experiment engine. All sums run in
//! slice order.

use serde::Serialize;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Half-width of the normal-approximation 95% interval for the mean.
pub fn ci95_half_width(xs: &[f64]) -> f64 {
    Z95 * std_dev(xs) / (xs.len() as f64).sqrt()
}

/// Wilson score interval (95%) for `successes` out of `trials`.
pub fn wilson95(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Least-squares line `log2(error) = slope * log2(dt) + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Fits on the pairs with a strictly positive, finite error. Needs at least two
/// such pairs with distinct step sizes.
pub fn fit_log2(step_sizes: &[f64], errors: &[f64]) -> Option<OrderFit> {
    let pts: Vec<(f64, f64)> = step_sizes
        .iter()
        .zip(errors)
        .filter(|(h, e)| **h > 0.0 && **e > 0.0 && e.is_finite())
        .map(|(h, e)| (h.log2(), e.log2()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some(OrderFit {
        slope,
        intercept: my - slope * mx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let h = [0.1, 0.05, 0.025, 0.0125];
        let e: Vec<f64> = h.iter().map(|x| 3.0 * x * x).collect();
        let fit = fit_log2(&h, &e).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_fits() {
        assert!(fit_log2(&[0.1], &[1.0]).is_none());
        assert!(fit_log2(&[0.1, 0.05], &[0.0, 0.0]).is_none());
        assert!(fit_log2(&[0.1, 0.1], &[1.0, 2.0]).is_none());
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson95(0, 1000);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.005);
        let (lo, hi) = wilson95(500, 1000);
        assert!(lo < 0.5 && hi > 0.5 && (hi - lo - 2.0 * 1.96 * 0.5 / 1000f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((std_dev(&xs) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(std_dev(&[1.0]), 0.0);
    }
}
