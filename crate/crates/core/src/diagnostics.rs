//! Posterior summaries, convergence diagnostics, and loss metrics.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2};

use crate::chain::ChainTrace;
use crate::error::{Error, Result};
use crate::linalg;

/// Point summaries of a finished chain.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    /// Most frequent retained count of nonzero loading columns, smallest on
    /// ties.
    pub xi_mode: usize,
    pub xi_histogram: BTreeMap<usize, usize>,
    pub support_histogram: BTreeMap<usize, usize>,
    /// Posterior mean of the model covariance.
    pub sigma_mean: Array2<f64>,
    pub psi_mean: f64,
    /// Per-variable noise means in the heterogeneous mode.
    pub psi_vector_mean: Option<Array1<f64>>,
    pub retained: usize,
}

/// Collapses a trace into its point summaries.
pub fn summarize(trace: &ChainTrace) -> Result<PosteriorSummary> {
    let xi_mode = trace
        .xi_mode()
        .ok_or_else(|| Error::parameter("trace has no retained samples to summarize"))?;
    Ok(PosteriorSummary {
        xi_mode,
        xi_histogram: trace.xi_histogram.clone(),
        support_histogram: trace.support_histogram.clone(),
        sigma_mean: trace.sigma_mean.clone(),
        psi_mean: trace.psi_mean,
        psi_vector_mean: trace.psi_vector_mean.clone(),
        retained: trace.retained,
    })
}

/// Sample autocorrelation with divisor n; lag 0 is exactly 1. A constant
/// series has no autocorrelation and is rejected.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n < 2 {
        return Err(Error::parameter("autocorrelation needs at least two points"));
    }
    if max_lag >= n {
        return Err(Error::parameter(format!(
            "max_lag = {max_lag} must be below the series length {n}"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let variance = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if variance == 0.0 {
        return Err(Error::numerical(
            "series is constant; autocorrelation is undefined",
        ));
    }
    let mut out = Vec::with_capacity(max_lag + 1);
    out.push(1.0);
    for lag in 1..=max_lag {
        let cov = (0..n - lag)
            .map(|t| (series[t] - mean) * (series[t + lag] - mean))
            .sum::<f64>()
            / n as f64;
        out.push(cov / variance);
    }
    Ok(out)
}

/// Partial autocorrelation via the Durbin-Levinson recursion; index 0 is 1
/// and index 1 equals the lag-1 autocorrelation.
pub fn pacf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let rho = acf(series, max_lag)?;
    let mut out = Vec::with_capacity(max_lag + 1);
    out.push(1.0);
    if max_lag == 0 {
        return Ok(out);
    }
    let mut phi_prev = vec![0.0; max_lag + 1];
    phi_prev[1] = rho[1];
    out.push(rho[1]);
    let mut denominator = 1.0 - rho[1] * rho[1];
    for k in 2..=max_lag {
        if denominator.abs() < 1e-300 {
            return Err(Error::numerical(
                "Durbin-Levinson recursion became singular",
            ));
        }
        let mut numerator = rho[k];
        for j in 1..k {
            numerator -= phi_prev[j] * rho[k - j];
        }
        let phi_kk = numerator / denominator;
        let mut phi = phi_prev.clone();
        phi[k] = phi_kk;
        for j in 1..k {
            phi[j] = phi_prev[j] - phi_kk * phi_prev[k - j];
        }
        denominator *= 1.0 - phi_kk * phi_kk;
        out.push(phi_kk);
        phi_prev = phi;
    }
    Ok(out)
}

/// Operator-norm loss of a covariance estimate relative to the truth:
/// ||sigma_hat - sigma_star||_2 / ||sigma_star||_2.
pub fn scaled_spectral_loss(
    sigma_hat: &ArrayView2<'_, f64>,
    sigma_star: &ArrayView2<'_, f64>,
) -> Result<f64> {
    if sigma_hat.dim() != sigma_star.dim() {
        return Err(Error::dimension("covariance matrices differ in shape"));
    }
    let diff = sigma_hat - sigma_star;
    let loss = linalg::spectral_norm_sym(&diff.view())?;
    let scale = linalg::spectral_norm_sym(sigma_star)?;
    if scale == 0.0 {
        return Err(Error::numerical("reference covariance has zero norm"));
    }
    Ok(loss / scale)
}

/// Estimation outcome relative to the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Classification {
    True,
    Over,
    Under,
}

impl Classification {
    pub fn name(&self) -> &'static str {
        match self {
            Classification::True => "True",
            Classification::Over => "Over",
            Classification::Under => "Under",
        }
    }
}

/// Classifies a rank estimate against the true rank.
pub fn classify_estimate(r_hat: usize, r_true: usize) -> Classification {
    match r_hat.cmp(&r_true) {
        std::cmp::Ordering::Equal => Classification::True,
        std::cmp::Ordering::Greater => Classification::Over,
        std::cmp::Ordering::Less => Classification::Under,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngHandle;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn acf_of_white_noise_stays_in_the_band() {
        let mut rng = RngHandle::new(61, 0).rng();
        let n = 4000;
        let series: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let rho = acf(&series, 40).unwrap();
        assert_eq!(rho[0], 1.0);
        let band = 2.0 / (n as f64).sqrt();
        let inside = rho[1..].iter().filter(|r| r.abs() <= band).count();
        assert!(inside >= 36, "only {inside}/40 lags inside the band");
    }

    #[test]
    fn acf_of_ar1_decays_geometrically() {
        let phi = 0.9;
        let mut rng = RngHandle::new(62, 0).rng();
        let n = 100_000;
        let mut series = Vec::with_capacity(n);
        let mut x = 0.0;
        for _ in 0..n {
            let e: f64 = rng.sample(StandardNormal);
            x = phi * x + e;
            series.push(x);
        }
        let rho = acf(&series, 10).unwrap();
        for (lag, r) in rho.iter().enumerate() {
            let expected = phi.powi(lag as i32);
            assert!((r - expected).abs() < 0.05, "lag {lag}: {r} vs {expected}");
        }
        let partial = pacf(&series, 10).unwrap();
        assert_abs_diff_eq!(partial[1], rho[1], epsilon = 1e-12);
        for (lag, phi_kk) in partial.iter().enumerate().skip(2) {
            assert!(phi_kk.abs() < 0.05, "pacf lag {lag} = {phi_kk}");
        }
    }

    #[test]
    fn pacf_of_ar2_cuts_off_after_two_lags() {
        let (a1, a2) = (0.5, 0.3);
        let mut rng = RngHandle::new(63, 0).rng();
        let n = 200_000;
        let mut series = Vec::with_capacity(n);
        let (mut x1, mut x2) = (0.0, 0.0);
        for _ in 0..n {
            let e: f64 = rng.sample(StandardNormal);
            let x = a1 * x1 + a2 * x2 + e;
            series.push(x);
            x2 = x1;
            x1 = x;
        }
        let partial = pacf(&series, 6).unwrap();
        assert!((partial[2] - a2).abs() < 0.05, "pacf[2] {}", partial[2]);
        for lag in 3..=6 {
            assert!(partial[lag].abs() < 0.05, "pacf[{lag}] {}", partial[lag]);
        }
    }

    #[test]
    fn constant_series_is_rejected() {
        let series = vec![3.0; 100];
        assert!(acf(&series, 5).is_err());
        assert!(pacf(&series, 5).is_err());
    }

    #[test]
    fn lag_bounds_are_checked() {
        let series = vec![1.0, 2.0, 3.0];
        assert!(acf(&series, 3).is_err());
        assert!(acf(&series, 2).is_ok());
    }

    #[test]
    fn spectral_loss_matches_hand_values() {
        let a = array![[3.0, 0.0], [0.0, 1.0]];
        let b = array![[1.0, 0.0], [0.0, 1.0]];
        assert_abs_diff_eq!(
            scaled_spectral_loss(&a.view(), &b.view()).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            scaled_spectral_loss(&a.view(), &a.view()).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        let doubled = &a * 2.0;
        assert_abs_diff_eq!(
            scaled_spectral_loss(&doubled.view(), &a.view()).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn classification_follows_the_sign() {
        assert_eq!(classify_estimate(3, 3), Classification::True);
        assert_eq!(classify_estimate(5, 3), Classification::Over);
        assert_eq!(classify_estimate(1, 3), Classification::Under);
        assert_eq!(Classification::Over.name(), "Over");
    }

    #[test]
    fn summarize_copies_the_trace_fields() {
        use crate::chain::{ChainSettings, ChainTrace};
        let trace = ChainTrace {
            settings: ChainSettings::default(),
            iterations: Vec::new(),
            retained: 500,
            xi_histogram: BTreeMap::from([(3, 400), (4, 100)]),
            support_histogram: BTreeMap::from([(10, 500)]),
            sigma_mean: Array2::eye(2),
            psi_mean: 1.5,
            psi_vector_mean: None,
            snapshots: Vec::new(),
        };
        let summary = summarize(&trace).unwrap();
        assert_eq!(summary.xi_mode, 3);
        assert_eq!(summary.retained, 500);
        assert_eq!(summary.psi_mean, 1.5);
        let empty = ChainTrace { retained: 0, xi_histogram: BTreeMap::new(), ..trace };
        assert!(summarize(&empty).is_err());
    }
}
