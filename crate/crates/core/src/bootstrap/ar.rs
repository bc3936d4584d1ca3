use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::lstsq_indices;
use crate::scalar::{mean, variance, Scalar};
use crate::seed::substream;

/// Values generated and discarded before a sieve replicate is emitted.
pub const SIEVE_BURN_IN: usize = 50;

/// Conditional least-squares AR(p) fit with intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct ArFit<S> {
    /// `rho_0` (intercept), `rho_1`, ..., `rho_p`.
    pub coeffs: Vec<S>,
    /// Residuals centred to mean zero.
    pub residuals: Vec<S>,
    pub mse: S,
    /// Observed first `p` values, used to start the sieve recursion.
    pub initial: Vec<S>,
    pub series_len: usize,
}

impl<S: Scalar> ArFit<S> {
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `rho_p`, the temporal parameter the tests compare.
    pub fn last_coefficient(&self) -> S {
        self.coeffs[self.order()]
    }

    /// Whether all roots of `1 - rho_1 z - ... - rho_p z^p` lie outside the
    /// unit circle, checked through the step-down (reverse Levinson)
    /// recursion: the partial autocorrelations must all be below one in
    /// modulus.
    pub fn is_stationary(&self) -> bool {
        let mut a: Vec<S> = self.coeffs[1..].to_vec();
        while let Some(&kappa) = a.last() {
            if !(kappa.abs() < S::one()) {
                return false;
            }
            let k = a.len();
            let denom = S::one() - kappa * kappa;
            let prev: Vec<S> = (0..k - 1).map(|j| (a[j] + kappa * a[k - 2 - j]) / denom).collect();
            a = prev;
        }
        true
    }
}

fn check_series<S: Scalar>(series: &[S], p: usize) -> Result<()> {
    if p == 0 {
        return Err(Error::Invalid("AR order must be positive".into()));
    }
    if series.len() <= 3 * p + 1 {
        return Err(Error::Invalid(format!(
            "AR({p}) needs more than {} observations, got {}",
            3 * p + 1,
            series.len()
        )));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::Invalid("series contains non-finite values".into()));
    }
    let m = mean(series);
    let floor = S::epsilon() * S::epsilon() * S::lit(1e4) * (S::one() + m * m);
    if variance(series) <= floor {
        return Err(Error::ZeroVarianceSeries);
    }
    Ok(())
}

fn ar_coefficients<S: Scalar>(series: &[S], p: usize) -> Result<Vec<S>> {
    let n_eff = series.len() - p;
    if p == 1 {
        // simple regression of y_t on y_{t-1}
        let x = &series[..n_eff];
        let y = &series[1..];
        let mx = mean(x);
        let my = mean(y);
        let mut sxx = S::zero();
        let mut sxy = S::zero();
        let mut xx = S::zero();
        for (&a, &b) in x.iter().zip(y) {
            sxx = sxx + (a - mx) * (a - mx);
            sxy = sxy + (a - mx) * (b - my);
            xx = xx + a * a;
        }
        let tol = S::rank_tol();
        if sxx <= tol * tol * xx || sxx == S::zero() {
            return Err(Error::SingularLagMatrix);
        }
        let slope = sxy / sxx;
        return Ok(vec![my - slope * mx, slope]);
    }
    let mut design = Array2::<S>::zeros((n_eff, p + 1));
    let mut response = Array1::<S>::zeros(n_eff);
    for row in 0..n_eff {
        let t = row + p;
        design[[row, 0]] = S::one();
        for j in 1..=p {
            design[[row, j]] = series[t - j];
        }
        response[row] = series[t];
    }
    lstsq_indices(design.view(), response.view()).map_err(|_| Error::SingularLagMatrix)
}

/// Fits `y_t = rho_0 + rho_1 y_{t-1} + ... + rho_p y_{t-p} + e_t` by
/// conditional least squares and centres the residuals.
pub fn ar_fit<S: Scalar>(series: &[S], p: usize) -> Result<ArFit<S>> {
    check_series(series, p)?;
    let coeffs = ar_coefficients(series, p)?;
    let mut residuals: Vec<S> = (p..series.len())
        .map(|t| {
            let pred = (1..=p).fold(coeffs[0], |acc, j| acc + coeffs[j] * series[t - j]);
            series[t] - pred
        })
        .collect();
    let sse: S = residuals.iter().map(|&e| e * e).sum();
    let dof = residuals.len().saturating_sub(p + 1).max(1);
    let centre = mean(&residuals);
    for e in residuals.iter_mut() {
        *e = *e - centre;
    }
    Ok(ArFit {
        coeffs,
        residuals,
        mse: sse / S::lit(dof as f64),
        initial: series[..p].to_vec(),
        series_len: series.len(),
    })
}

/// Yule-Walker AR(p) fit from the biased sample autocovariances, solved by
/// the Levinson-Durbin recursion. The fitted polynomial is always
/// stationary when the series has positive variance.
pub fn yule_walker_fit<S: Scalar>(series: &[S], p: usize) -> Result<ArFit<S>> {
    check_series(series, p)?;
    let n = series.len();
    let m = mean(series);
    let acov: Vec<S> = (0..=p)
        .map(|lag| {
            (lag..n).map(|t| (series[t] - m) * (series[t - lag] - m)).sum::<S>() / S::lit(n as f64)
        })
        .collect();
    let mut phi: Vec<S> = Vec::with_capacity(p);
    let mut err = acov[0];
    for k in 1..=p {
        let acc = (1..k).fold(acov[k], |a, j| a - phi[j - 1] * acov[k - j]);
        let kappa = acc / err;
        let prev = phi.clone();
        for j in 1..k {
            phi[j - 1] = prev[j - 1] - kappa * prev[k - j - 1];
        }
        phi.push(kappa);
        err = err * (S::one() - kappa * kappa);
    }
    let intercept = m * (S::one() - phi.iter().copied().sum::<S>());
    let mut coeffs = vec![intercept];
    coeffs.extend(phi);
    let mut residuals: Vec<S> = (p..n)
        .map(|t| series[t] - (1..=p).fold(coeffs[0], |acc, j| acc + coeffs[j] * series[t - j]))
        .collect();
    let sse: S = residuals.iter().map(|&e| e * e).sum();
    let centre = mean(&residuals);
    for e in residuals.iter_mut() {
        *e = *e - centre;
    }
    Ok(ArFit {
        coeffs,
        mse: sse / S::lit(residuals.len().saturating_sub(p + 1).max(1) as f64),
        residuals,
        initial: series[..p].to_vec(),
        series_len: n,
    })
}

/// `rho_p` of an AR(p) refit, without building residuals.
pub fn ar_last_coefficient<S: Scalar>(series: &[S], p: usize) -> Result<S> {
    check_series(series, p)?;
    Ok(ar_coefficients(series, p)?[p])
}

/// One AR-sieve replicate of length `m`, seeded deterministically.
pub fn sieve_bootstrap_series<S: Scalar>(fit: &ArFit<S>, m: usize, seed: u64) -> Result<Vec<S>> {
    let mut rng = substream(seed, &[]);
    sieve_bootstrap_series_with(fit, m, &mut rng)
}

/// One AR-sieve replicate: start from the observed first `p` values, run the
/// fitted recursion with innovations drawn uniformly with replacement from
/// the centred residuals, drop [`SIEVE_BURN_IN`] values, emit `m`.
pub fn sieve_bootstrap_series_with<S: Scalar, R: Rng + ?Sized>(
    fit: &ArFit<S>,
    m: usize,
    rng: &mut R,
) -> Result<Vec<S>> {
    if m < fit.series_len {
        return Err(Error::Invalid(format!(
            "bootstrap length {m} shorter than the observed series ({})",
            fit.series_len
        )));
    }
    if !fit.is_stationary() {
        return Err(Error::NonstationarySieve);
    }
    let p = fit.order();
    let total = SIEVE_BURN_IN + m;
    let mut path: Vec<S> = Vec::with_capacity(p + total);
    path.extend_from_slice(&fit.initial);
    let n_res = fit.residuals.len();
    for _ in 0..total {
        let len = path.len();
        let mut next = fit.coeffs[0];
        for j in 1..=p {
            next = next + fit.coeffs[j] * path[len - j];
        }
        next = next + fit.residuals[rng.random_range(0..n_res)];
        path.push(next);
    }
    Ok(path.split_off(p + SIEVE_BURN_IN))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn ar1_series(rho: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, &[]);
        let mut y = Vec::with_capacity(n);
        let mut prev: f64 = rng.sample::<f64, _>(StandardNormal) / (1.0 - rho * rho).sqrt();
        for _ in 0..n {
            prev = rho * prev + rng.sample::<f64, _>(StandardNormal);
            y.push(2.0 + prev);
        }
        y
    }

    #[test]
    fn white_noise_has_small_rho() {
        // median over replications of |rho_1| for T = 60 white noise
        let mut vals: Vec<f64> = (0..200)
            .map(|s| ar_fit(&ar1_series(0.0, 60, s), 1).unwrap().coeffs[1].abs())
            .collect();
        vals.sort_by(f64::total_cmp);
        assert!(vals[100] < 0.15, "median |rho| {}", vals[100]);
    }

    #[test]
    fn ar1_consistency() {
        let fit = ar_fit(&ar1_series(0.6, 500, 1), 1).unwrap();
        assert!((fit.coeffs[1] - 0.6).abs() < 0.1, "{}", fit.coeffs[1]);
    }

    #[test]
    fn residuals_centred() {
        for s in 0..20 {
            let y = ar1_series(0.4, 30, s);
            for p in [1, 2, 3] {
                let fit = ar_fit(&y, p).unwrap();
                assert!(mean(&fit.residuals).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn p1_fast_path_matches_qr() {
        let y = ar1_series(0.3, 25, 4);
        let fast = ar_coefficients(&y, 1).unwrap();
        let mut design = Array2::<f64>::zeros((24, 2));
        let mut resp = Array1::<f64>::zeros(24);
        for t in 1..25 {
            design[[t - 1, 0]] = 1.0;
            design[[t - 1, 1]] = y[t - 1];
            resp[t - 1] = y[t];
        }
        let qr = lstsq_indices(design.view(), resp.view()).unwrap();
        assert!((fast[0] - qr[0]).abs() < 1e-12 && (fast[1] - qr[1]).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(ar_fit(&[3.0; 20], 1), Err(Error::ZeroVarianceSeries)));
        assert!(matches!(ar_fit(&[1.0, 2.0, 3.0, 4.0], 1), Err(Error::Invalid(_))));
        let mut lag_const = vec![1.0; 11];
        lag_const.push(5.0);
        assert!(matches!(ar_fit(&lag_const, 1), Err(Error::SingularLagMatrix)));
    }

    #[test]
    fn stationarity_check() {
        let mk = |c: Vec<f64>| ArFit {
            coeffs: c,
            residuals: vec![0.0],
            mse: 0.0,
            initial: vec![],
            series_len: 1,
        };
        assert!(mk(vec![0.0, 0.9]).is_stationary());
        assert!(!mk(vec![0.0, 1.0]).is_stationary());
        assert!(!mk(vec![0.0, -1.2]).is_stationary());
        // AR(2) triangle: a1 + a2 < 1, a2 - a1 < 1, |a2| < 1
        assert!(mk(vec![0.0, 0.5, 0.3]).is_stationary());
        assert!(!mk(vec![0.0, 0.7, 0.4]).is_stationary());
        assert!(!mk(vec![0.0, -0.7, 0.4]).is_stationary());
        assert!(!mk(vec![0.0, 0.1, -1.05]).is_stationary());
    }

    #[test]
    fn zero_residuals_follow_deterministic_recursion() {
        let fit = ArFit {
            coeffs: vec![0.2, 0.5],
            residuals: vec![0.0; 10],
            mse: 0.0,
            initial: vec![3.0],
            series_len: 11,
        };
        let got = sieve_bootstrap_series(&fit, 11, 9).unwrap();
        let mut y = 3.0;
        let mut want = Vec::new();
        for t in 0..(SIEVE_BURN_IN + 11) {
            y = 0.2 + 0.5 * y;
            if t >= SIEVE_BURN_IN {
                want.push(y);
            }
        }
        assert_eq!(got, want);
    }

    #[test]
    fn sieve_deterministic_and_guarded() {
        let fit = ar_fit(&ar1_series(0.5, 40, 3), 1).unwrap();
        assert_eq!(
            sieve_bootstrap_series(&fit, 40, 5).unwrap(),
            sieve_bootstrap_series(&fit, 40, 5).unwrap()
        );
        assert_ne!(
            sieve_bootstrap_series(&fit, 40, 5).unwrap(),
            sieve_bootstrap_series(&fit, 40, 6).unwrap()
        );
        assert!(sieve_bootstrap_series(&fit, 39, 5).is_err());
        let mut explosive = fit.clone();
        explosive.coeffs[1] = 1.1;
        assert!(matches!(sieve_bootstrap_series(&explosive, 40, 5), Err(Error::NonstationarySieve)));
    }

    #[test]
    fn sieve_variance_brackets_original() {
        let y = ar1_series(0.5, 60, 12);
        let fit = ar_fit(&y, 1).unwrap();
        let original = variance(&y);
        let k = 500;
        let avg: f64 = (0..k)
            .map(|b| variance(&sieve_bootstrap_series(&fit, 60, b as u64).unwrap()))
            .sum::<f64>()
            / k as f64;
        assert!(avg > original / 2.0 && avg < original * 2.0, "{avg} vs {original}");
    }

    #[test]
    fn yule_walker_matches_closed_form_and_is_stationary() {
        let y = ar1_series(0.5, 40, 2);
        let yw = yule_walker_fit(&y, 1).unwrap();
        let m = mean(&y);
        let g0: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
        let g1: f64 = (1..40).map(|t| (y[t] - m) * (y[t - 1] - m)).sum();
        assert!((yw.coeffs[1] - g1 / g0).abs() < 1e-12);
        assert!((yw.coeffs[0] - m * (1.0 - g1 / g0)).abs() < 1e-12);
        assert!(mean(&yw.residuals).abs() < 1e-12);
        // trending series: least squares is explosive, Yule-Walker is not
        let trend: Vec<f64> = (0..12).map(|t| (t as f64 * 0.4).exp() + 0.01 * (t % 3) as f64).collect();
        assert!(!ar_fit(&trend, 1).unwrap().is_stationary());
        for p in [1, 2, 3] {
            assert!(yule_walker_fit(&trend, p).unwrap().is_stationary());
        }
    }

    #[test]
    fn yule_walker_ar2_against_normal_equations() {
        let y = ar1_series(0.3, 80, 6);
        let yw = yule_walker_fit(&y, 2).unwrap();
        let m = mean(&y);
        let g = |k: usize| (k..80).map(|t| (y[t] - m) * (y[t - k] - m)).sum::<f64>() / 80.0;
        // [g0 g1; g1 g0] phi = [g1; g2]
        let det = g(0) * g(0) - g(1) * g(1);
        let phi1 = (g(1) * g(0) - g(1) * g(2)) / det;
        let phi2 = (g(0) * g(2) - g(1) * g(1)) / det;
        assert!((yw.coeffs[1] - phi1).abs() < 1e-12 && (yw.coeffs[2] - phi2).abs() < 1e-12);
    }
}
