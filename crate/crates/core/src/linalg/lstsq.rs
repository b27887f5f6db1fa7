use crate::error::{Error, Result};

/// Fits `y ≈ alpha * x^beta` by linear least squares on `(ln x, ln y)`.
///
/// Returns `(alpha, beta)`. All coordinates must be positive and at least two
/// distinct abscissae are required.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InvalidInput("power-law fit needs at least two points".into()));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0) || !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidInput("power-law fit needs positive finite data".into()));
    }
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    // Centered normal equations.
    let mx = sx / n;
    let my = sy / n;
    let var = sxx - n * mx * mx;
    if var.abs() <= 1e-300 || var <= 1e-14 * sxx.abs() {
        return Err(Error::InvalidInput("power-law fit needs distinct abscissae".into()));
    }
    let beta = (sxy - n * mx * my) / var;
    let alpha = (my - beta * mx).exp();
    Ok((alpha, beta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_linear() {
        let pts: Vec<(f64, f64)> = [0.5, 1.0, 2.0, 3.0].iter().map(|&x| (x, 2.0 * x)).collect();
        let (a, b) = fit_power_law(&pts).unwrap();
        assert!((a - 2.0).abs() < 1e-14);
        assert!((b - 1.0).abs() < 1e-14);
    }

    #[test]
    fn exact_quadratic() {
        let pts: Vec<(f64, f64)> = [0.1, 0.4, 0.9].iter().map(|&x| (x, 3.0 * x * x)).collect();
        let (a, b) = fit_power_law(&pts).unwrap();
        assert!((a - 3.0).abs() < 1e-13);
        assert!((b - 2.0).abs() < 1e-13);
    }

    #[test]
    fn rejects_bad_data() {
        assert!(fit_power_law(&[(1.0, 1.0)]).is_err());
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, -1.0)]).is_err());
        assert!(fit_power_law(&[(0.0, 1.0), (2.0, 1.0)]).is_err());
        assert!(fit_power_law(&[(2.0, 1.0), (2.0, 3.0)]).is_err());
    }
}
