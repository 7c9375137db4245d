//! Small numeric helpers shared across modules.

use num_complex::Complex64;

/// Least-squares slope of `log(err)` against `log(x)`: the fitted convergence
/// order of a sequence of errors against a decreasing parameter.
///
/// Pairs with non-positive entries are skipped; returns `None` when fewer
/// than two usable pairs remain (e.g. errors at machine-noise level).
pub fn fit_order(xs: &[f64], errs: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(errs.iter())
        .filter(|(&x, &e)| x > 0.0 && e > 0.0 && e.is_finite())
        .map(|(&x, &e)| (x.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Relative L2 distance between two complex sample vectors.
pub fn rel_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let norm: f64 = b.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / norm
    }
}

/// L2 norm of a complex sample vector.
pub fn l2(a: &[Complex64]) -> f64 {
    a.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt()
}

/// Mean of a complex sample vector.
pub fn mean(a: &[Complex64]) -> Complex64 {
    if a.is_empty() {
        return Complex64::new(0.0, 0.0);
    }
    a.iter().sum::<Complex64>() / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_order_recovers_power_law() {
        let xs = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
        let errs: Vec<f64> = xs.iter().map(|&x: &f64| 3.0 * x.powf(1.7)).collect();
        let p = fit_order(&xs, &errs).unwrap();
        assert!((p - 1.7).abs() < 1e-12);
    }

    #[test]
    fn fit_order_handles_degenerate_input() {
        assert!(fit_order(&[1e-2], &[1e-3]).is_none());
        assert!(fit_order(&[1e-2, 5e-3], &[0.0, 0.0]).is_none());
    }
}
