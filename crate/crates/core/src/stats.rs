//! Autocorrelation analysis and error bars for Monte Carlo traces.

use std::io::Write;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Traces at least this long use FFT-based autocovariances.
pub const FFT_THRESHOLD: usize = 10_000;

/// Default Sokal window constant.
pub const DEFAULT_WINDOW_C: f64 = 5.0;

/// Recorded values `f_1 .. f_{N_S}` of one observable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub values: Vec<f64>,
    pub label: String,
}

impl ChainTrace {
    pub fn new(values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::TraceTooShort(values.len()));
        }
        Ok(Self { values, label: label.into() })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn autocov_direct(dev: &[f64], t_max: usize) -> Vec<f64> {
    let n = dev.len();
    (0..=t_max)
        .map(|t| dev[..n - t].iter().zip(&dev[t..]).map(|(a, b)| a * b).sum::<f64>() / (n - t) as f64)
        .collect()
}

fn autocov_fft(dev: &[f64], t_max: usize) -> Vec<f64> {
    let n = dev.len();
    let size = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut buf: Vec<Complex<f64>> = dev.iter().map(|&x| Complex::new(x, 0.0)).collect();
    buf.resize(size, Complex::new(0.0, 0.0));
    fwd.process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    inv.process(&mut buf);
    (0..=t_max).map(|t| buf[t].re / size as f64 / (n - t) as f64).collect()
}

/// Autocovariances `c_f(t) = 1/(N_S - t) sum_n (f_n - mu)(f_{n+t} - mu)`
/// for `t = 0 ..= t_max`.
pub fn autocovariance(values: &[f64], t_max: usize) -> Result<Vec<f64>> {
    let n = values.len();
    if n < 2 {
        return Err(Error::TraceTooShort(n));
    }
    if t_max >= n {
        return Err(Error::InvalidArgument(format!("t_max = {t_max} must be below the trace length {n}")));
    }
    let mu = mean(values);
    let dev: Vec<f64> = values.iter().map(|v| v - mu).collect();
    Ok(if n >= FFT_THRESHOLD { autocov_fft(&dev, t_max) } else { autocov_direct(&dev, t_max) })
}

fn is_constant(values: &[f64], c0: f64) -> bool {
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    c0 <= f64::MIN_POSITIVE || c0.sqrt() <= 1e-15 * scale
}

/// Normalized autocorrelation `rho_f(t) = c_f(t) / c_f(0)`.
pub fn autocorr_function(trace: &ChainTrace, t_max: usize) -> Result<Vec<f64>> {
    let c = autocovariance(&trace.values, t_max)?;
    if is_constant(&trace.values, c[0]) {
        return Err(Error::ConstantTrace);
    }
    Ok(c.iter().map(|x| x / c[0]).collect())
}

/// Integrated autocorrelation time with its self-consistent window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutocorrTime {
    pub tau: f64,
    pub window: usize,
    /// Whether some `M` satisfied `M >= C tau(M)`.
    pub window_found: bool,
}

/// `tau = 1 + 2 sum_{t=1}^{M} rho_f(t)` at the smallest `M >= C tau(M)`.
pub fn integrated_autocorr_time(trace: &ChainTrace, c: f64) -> Result<AutocorrTime> {
    let n = trace.len();
    let t_max = n - 1;
    let cov = autocovariance(&trace.values, if n >= FFT_THRESHOLD { t_max } else { t_max.min(n / 2).max(1) })?;
    if is_constant(&trace.values, cov[0]) {
        return Err(Error::ConstantTrace);
    }
    let mut tau = 1.0;
    let mut found = None;
    for (m, cm) in cov.iter().enumerate().skip(1) {
        tau += 2.0 * cm / cov[0];
        if m as f64 >= c * tau {
            found = Some(m);
            break;
        }
    }
    let (window, window_found) = match found {
        Some(m) => (m, true),
        None => {
            log::warn!("{}: no window satisfies M >= {c} tau; using the full range", trace.label);
            (cov.len() - 1, false)
        }
    };
    if window as f64 > n as f64 / 50.0 {
        log::warn!("{}: window {window} is not small against the trace length {n}", trace.label);
    }
    let tau = tau.max(f64::MIN_POSITIVE);
    Ok(AutocorrTime { tau, window, window_found })
}

/// `sample_std * sqrt(tau / N_S)`; a constant trace gives 0.
pub fn corrected_std_error(trace: &ChainTrace) -> Result<f64> {
    let n = trace.len() as f64;
    let var = variance(&trace.values);
    match integrated_autocorr_time(trace, DEFAULT_WINDOW_C) {
        Ok(t) => Ok((var * t.tau.max(1.0 / n) / n).sqrt()),
        Err(Error::ConstantTrace) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Naive standard error of the mean.
pub fn naive_std_error(values: &[f64]) -> f64 {
    (variance(values) / values.len() as f64).sqrt()
}

/// Jackknife estimate of a statistic over `n_blocks` contiguous blocks:
/// returns `(full-sample value, standard error)`.
pub fn jackknife(values: &[f64], n_blocks: usize, stat: impl Fn(&[f64]) -> f64) -> Result<(f64, f64)> {
    let n = values.len();
    if n < 2 {
        return Err(Error::TraceTooShort(n));
    }
    let k = n_blocks.clamp(2, n);
    let full = stat(values);
    let bounds: Vec<usize> = (0..=k).map(|b| b * n / k).collect();
    let mut loo = Vec::with_capacity(k);
    let mut rest = Vec::with_capacity(n);
    for b in 0..k {
        rest.clear();
        rest.extend_from_slice(&values[..bounds[b]]);
        rest.extend_from_slice(&values[bounds[b + 1]..]);
        loo.push(stat(&rest));
    }
    let m = mean(&loo);
    let var = loo.iter().map(|x| (x - m) * (x - m)).sum::<f64>() * (k as f64 - 1.0) / k as f64;
    Ok((full, var.sqrt()))
}

/// `ln(mean(exp(x)))` without overflow.
pub fn log_mean_exp(x: &[f64]) -> f64 {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + (x.iter().map(|v| (v - m).exp()).sum::<f64>() / x.len() as f64).ln()
}

/// Writes `t,rho` rows.
pub fn write_autocorr_csv(rho: &[f64], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "t,rho")?;
    for (t, r) in rho.iter().enumerate() {
        writeln!(out, "{t},{r:.12e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = 0.0;
        let s = (1.0 - phi * phi).sqrt();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            x = phi * x + s * e;
            out.push(x);
        }
        out
    }

    fn iid(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn rho_zero_is_one() {
        let t = ChainTrace::new(iid(500, 1), "x").unwrap();
        assert!((autocorr_function(&t, 10).unwrap()[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn iid_is_uncorrelated() {
        let t = ChainTrace::new(iid(100_000, 2), "iid").unwrap();
        assert!(autocorr_function(&t, 5).unwrap()[1].abs() < 0.02);
        let tau = integrated_autocorr_time(&t, 5.0).unwrap();
        assert!((tau.tau - 1.0).abs() < 0.1, "{tau:?}");
        let naive = naive_std_error(&t.values);
        assert!((corrected_std_error(&t).unwrap() / naive - 1.0).abs() < 0.1);
    }

    #[test]
    fn ar1_matches_analytic() {
        let t = ChainTrace::new(ar1(0.9, 100_000, 3), "ar1").unwrap();
        let rho = autocorr_function(&t, 20).unwrap();
        for (k, r) in rho.iter().enumerate() {
            assert!((r - 0.9f64.powi(k as i32)).abs() < 0.05, "t = {k}: {r}");
        }
        let tau = integrated_autocorr_time(&t, 5.0).unwrap();
        assert!((tau.tau / 19.0 - 1.0).abs() < 0.15, "{tau:?}");
        let ratio = corrected_std_error(&t).unwrap() / naive_std_error(&t.values);
        assert!((ratio / 19f64.sqrt() - 1.0).abs() < 0.15);
    }

    #[test]
    fn duplicated_chain_doubles_tau() {
        let base = ar1(0.5, 40_000, 4);
        let t1 = integrated_autocorr_time(&ChainTrace::new(base.clone(), "a").unwrap(), 5.0).unwrap();
        let dup: Vec<f64> = base.iter().flat_map(|&x| [x, x]).collect();
        let t2 = integrated_autocorr_time(&ChainTrace::new(dup, "b").unwrap(), 5.0).unwrap();
        assert!((t2.tau / t1.tau - 2.0).abs() < 0.2, "{} {}", t1.tau, t2.tau);
    }

    #[test]
    fn fft_and_direct_agree() {
        let x = ar1(0.7, 12_000, 5);
        let mu = mean(&x);
        let dev: Vec<f64> = x.iter().map(|v| v - mu).collect();
        let a = autocov_direct(&dev, 200);
        let b = autocov_fft(&dev, 200);
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_traces() {
        let t = ChainTrace::new(vec![2.5; 100], "c").unwrap();
        assert!(matches!(autocorr_function(&t, 3), Err(Error::ConstantTrace)));
        assert_eq!(corrected_std_error(&t).unwrap(), 0.0);
        let noisy: Vec<f64> = iid(1000, 6).iter().map(|e| 1.0 + 1e-9 * e).collect();
        let s = corrected_std_error(&ChainTrace::new(noisy, "n").unwrap()).unwrap();
        assert!(s.is_finite() && s > 0.0 && s < 1e-9);
        assert!(ChainTrace::new(vec![1.0], "short").is_err());
    }

    #[test]
    fn jackknife_of_mean_is_naive_error() {
        let x = iid(1000, 7);
        let (m, e) = jackknife(&x, 1000, mean).unwrap();
        assert!((m - mean(&x)).abs() < 1e-14);
        assert!((e - naive_std_error(&x)).abs() < 1e-12);
    }

    #[test]
    fn log_mean_exp_is_stable() {
        assert!((log_mean_exp(&[1000.0, 1000.0]) - 1000.0).abs() < 1e-12);
        assert!((log_mean_exp(&[0.0, 2f64.ln()]) - 1.5f64.ln()).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn tau_invariant_under_affine_maps(seed in 0u64..1000, shift in -50.0f64..50.0, scale in 0.01f64..100.0) {
            let x = ar1(0.6, 5000, seed);
            let t1 = integrated_autocorr_time(&ChainTrace::new(x.clone(), "a").unwrap(), 5.0).unwrap();
            let y: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
            let t2 = integrated_autocorr_time(&ChainTrace::new(y, "b").unwrap(), 5.0).unwrap();
            prop_assert!((t2.tau / t1.tau - 1.0).abs() < 0.05);
        }
    }
}
