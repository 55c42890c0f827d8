//! Least-squares fits used by the growth and decay diagnostics.

use nalgebra::{DMatrix, DVector};

/// Ordinary least-squares line `y = intercept + slope * x`.
pub fn line(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Fit `y = c + p ln(x) - rate * x` and return `(rate, p, c)`.
///
/// The `ln x` regressor absorbs algebraic prefactors, so `rate` isolates the
/// exponential part of a decay: it tends to zero for purely algebraic decay.
pub fn exp_rate_with_power(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let n = xs.len();
    if n < 3 || ys.len() != n || xs.iter().any(|&x| x <= 0.0) {
        return None;
    }
    // Columns rescaled for conditioning.
    let xmax = xs.iter().cloned().fold(0.0, f64::max);
    let a = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => xs[i].ln(),
        _ => -xs[i] / xmax,
    });
    let b = DVector::from_column_slice(ys);
    let sol = a.svd(true, true).solve(&b, 1e-13).ok()?;
    Some((sol[2] / xmax, sol[1], sol[0]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_recovers_exact_slope() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        let (s, c) = line(&xs, &ys).unwrap();
        assert!((s - 3.0).abs() < 1e-12 && (c + 1.0).abs() < 1e-12);
        assert!(line(&[1.0], &[2.0]).is_none());
    }

    #[test]
    fn power_regressor_separates_algebraic_from_exponential() {
        let xs: Vec<f64> = (4..=10).map(|k| 2f64.powi(k)).collect();
        let alg: Vec<f64> = xs.iter().map(|x| 2.0 - 3.0 * x.ln()).collect();
        let exp: Vec<f64> = xs.iter().map(|x| 0.5 * x.ln() - 0.01 * x).collect();
        let (r_alg, p_alg, _) = exp_rate_with_power(&xs, &alg).unwrap();
        let (r_exp, _, _) = exp_rate_with_power(&xs, &exp).unwrap();
        assert!(r_alg.abs() < 1e-10 && (p_alg + 3.0).abs() < 1e-9);
        assert!((r_exp - 0.01).abs() < 1e-12);
    }
}
