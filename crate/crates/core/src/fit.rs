//! Least-squares fits of `m(chi) = m0 + c / chi^2`.

use serde::Serialize;

use crate::error::{Error, Result};

/// One `(chi, value)` observation with an optional standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitPoint {
    pub chi: f64,
    pub value: f64,
    pub std_error: Option<f64>,
}

impl FitPoint {
    pub fn new(chi: f64, value: f64) -> Self {
        Self { chi, value, std_error: None }
    }

    pub fn with_error(chi: f64, value: f64, std_error: f64) -> Self {
        Self { chi, value, std_error: Some(std_error) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InverseChiSquaredFit {
    pub m0: f64,
    pub c: f64,
    /// Standard errors of `m0` and `c`: from the point errors when the fit is
    /// weighted, from the residual variance with `n - 2` degrees of freedom
    /// otherwise.
    pub m0_err: f64,
    pub c_err: f64,
    /// Coefficient of determination (weighted when the fit is).
    pub r_squared: f64,
    pub weighted: bool,
    pub n_points: usize,
}

/// Least squares in `x = 1 / chi^2`, weighted by inverse variance when every
/// point carries a positive standard error.
pub fn fit_inverse_chi_squared(points: &[FitPoint]) -> Result<InverseChiSquaredFit> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints(points.len()));
    }
    if let Some(p) = points.iter().find(|p| !(p.chi > 0.0) || !p.value.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad fit point chi = {}, value = {}", p.chi, p.value)));
    }
    let weighted = points.iter().all(|p| matches!(p.std_error, Some(e) if e > 0.0 && e.is_finite()));
    let w: Vec<f64> = points.iter().map(|p| if weighted { 1.0 / p.std_error.unwrap().powi(2) } else { 1.0 }).collect();
    let x: Vec<f64> = points.iter().map(|p| 1.0 / (p.chi * p.chi)).collect();
    let y: Vec<f64> = points.iter().map(|p| p.value).collect();
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = w.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&x).map(|(w, x)| w * (x - xm).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidArgument("fit needs at least two distinct chi".into()));
    }
    let sxy: f64 = w.iter().zip(&x).zip(&y).map(|((w, x), y)| w * (x - xm) * (y - ym)).sum();
    let c = sxy / sxx;
    let m0 = ym - c * xm;
    let ss_res: f64 = w.iter().zip(&x).zip(&y).map(|((w, x), y)| w * (y - m0 - c * x).powi(2)).sum();
    let ss_tot: f64 = w.iter().zip(&y).map(|(w, y)| w * (y - ym).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let n = points.len();
    let scale = if weighted { 1.0 } else { ss_res / (n - 2) as f64 };
    let c_err = (scale / sxx).sqrt();
    let m0_err = (scale * (1.0 / sw + xm * xm / sxx)).sqrt();
    Ok(InverseChiSquaredFit { m0, c, m0_err, c_err, r_squared, weighted, n_points: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_data_is_recovered() {
        let pts: Vec<FitPoint> = [2.0, 4.0, 8.0, 16.0, 32.0].iter().map(|&k| FitPoint::new(k, 0.7 - 1.3 / (k * k))).collect();
        let f = fit_inverse_chi_squared(&pts).unwrap();
        assert!((f.m0 - 0.7).abs() < 1e-10 && (f.c + 1.3).abs() < 1e-10);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(!f.weighted);
    }

    #[test]
    fn constant_data_has_zero_slope() {
        let pts: Vec<FitPoint> = [4.0, 8.0, 16.0].iter().map(|&k| FitPoint::with_error(k, 0.5, 0.01)).collect();
        let f = fit_inverse_chi_squared(&pts).unwrap();
        assert!(f.c.abs() < 1e-12 && (f.m0 - 0.5).abs() < 1e-12);
        assert!(f.c.abs() < f.c_err);
        assert!(f.weighted);
    }

    #[test]
    fn too_few_points() {
        let pts = [FitPoint::new(2.0, 1.0), FitPoint::new(4.0, 1.1)];
        assert!(matches!(fit_inverse_chi_squared(&pts), Err(Error::TooFewPoints(2))));
        let same = [FitPoint::new(2.0, 1.0), FitPoint::new(2.0, 1.1), FitPoint::new(2.0, 1.2)];
        assert!(fit_inverse_chi_squared(&same).is_err());
    }

    #[test]
    fn weights_follow_errors() {
        // an outlier with a huge error barely moves the weighted fit
        let mut pts: Vec<FitPoint> = [2.0, 4.0, 8.0, 16.0].iter().map(|&k| FitPoint::with_error(k, 1.0 + 2.0 / (k * k), 1e-3)).collect();
        pts.push(FitPoint::with_error(32.0, 5.0, 1e3));
        let f = fit_inverse_chi_squared(&pts).unwrap();
        assert!((f.m0 - 1.0).abs() < 1e-4 && (f.c - 2.0).abs() < 1e-3);
    }

    #[test]
    fn parameter_errors_match_closed_form() {
        // two-parameter covariance for three weighted points, computed by hand
        let pts = [FitPoint::with_error(1.0, 1.0, 1.0), FitPoint::with_error(2f64.sqrt(), 2.0, 1.0), FitPoint::with_error(2.0, 3.0, 1.0)];
        let f = fit_inverse_chi_squared(&pts).unwrap();
        let x = [1.0, 0.5, 0.25];
        let (s, sx, sxx) = (3.0, x.iter().sum::<f64>(), x.iter().map(|v| v * v).sum::<f64>());
        let det = s * sxx - sx * sx;
        assert!((f.c_err - (s / det).sqrt()).abs() < 1e-12);
        assert!((f.m0_err - (sxx / det).sqrt()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn fit_is_invariant_under_value_shift(m0 in -2.0f64..2.0, c in -5.0f64..5.0, shift in -3.0f64..3.0) {
            let pts: Vec<FitPoint> = [3.0, 5.0, 9.0, 12.0].iter().enumerate()
                .map(|(i, &k)| FitPoint::new(k, m0 + c / (k * k) + 1e-3 * (i as f64 - 1.5))).collect();
            let shifted: Vec<FitPoint> = pts.iter().map(|p| FitPoint::new(p.chi, p.value + shift)).collect();
            let (a, b) = (fit_inverse_chi_squared(&pts).unwrap(), fit_inverse_chi_squared(&shifted).unwrap());
            prop_assert!((b.m0 - a.m0 - shift).abs() < 1e-9);
            prop_assert!((b.c - a.c).abs() < 1e-7);
            prop_assert!((b.r_squared - a.r_squared).abs() < 1e-9);
        }
    }
}
