//! Scalar and matrix-variate samplers used by the Gibbs updates.
//!
//! Everything takes an explicit `Rng`; no global state. Parametrizations are
//! chosen to match the conditional updates: the inverse gamma uses
//! (shape, scale) with density proportional to x^(-shape-1) e^(-scale/x),
//! and the Bernoulli update consumes log-odds so that extreme values never
//! overflow.

mod gig;

pub use gig::sample_gig;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;

/// Inverse gamma with density proportional to x^(-shape-1) exp(-scale/x).
/// Sampled as scale / Gamma(shape, 1).
pub fn sample_inverse_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> Result<f64> {
    if !(shape > 0.0) || !(scale > 0.0) || !shape.is_finite() || !scale.is_finite() {
        return Err(Error::parameter(format!(
            "inverse gamma requires shape > 0 and scale > 0, got ({shape}, {scale})"
        )));
    }
    let gamma = Gamma::new(shape, 1.0)
        .map_err(|e| Error::parameter(format!("inverse gamma: {e}")))?;
    loop {
        let g = gamma.sample(rng);
        if g > 0.0 {
            return Ok(scale / g);
        }
        // Gamma(shape, 1) with tiny shape can round to zero; redraw.
    }
}

/// Unit-scale Laplace (double exponential) with density (1/2) e^{-|x|}.
pub fn sample_laplace_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Inversion: u uniform on (-1/2, 1/2), x = -sign(u) ln(1 - 2|u|).
    loop {
        let u = rng.random::<f64>() - 0.5;
        let mag = 1.0 - 2.0 * u.abs();
        if mag > 0.0 {
            let x = -mag.ln();
            return if u >= 0.0 { x } else { -x };
        }
    }
}

/// Exponential with the given rate (mean 1/rate).
pub fn sample_exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> Result<f64> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::parameter(format!("exponential requires rate > 0, got {rate}")));
    }
    let exp = Exp::new(rate).map_err(|e| Error::parameter(format!("exponential: {e}")))?;
    Ok(exp.sample(rng))
}

/// Bernoulli event with probability sigmoid(log_odds), exact for any finite
/// or infinite log-odds: compares the logit of a uniform draw, a strictly
/// monotone transform, so neither exp overflow nor underflow can bias it.
pub fn sample_bernoulli_logit<R: Rng + ?Sized>(rng: &mut R, log_odds: f64) -> Result<bool> {
    if log_odds.is_nan() {
        return Err(Error::numerical("Bernoulli log-odds is NaN".to_string()));
    }
    loop {
        let u = rng.random::<f64>();
        if u > 0.0 && u < 1.0 {
            return Ok((u / (1.0 - u)).ln() < log_odds);
        }
    }
}

/// Multivariate normal with the given mean and covariance (sampled through
/// the covariance Cholesky factor).
pub fn sample_mvn<R: Rng + ?Sized>(
    rng: &mut R,
    mean: &ArrayView1<f64>,
    cov: &ArrayView2<f64>,
) -> Result<Array1<f64>> {
    let d = mean.len();
    if cov.dim() != (d, d) {
        return Err(Error::dimension(format!(
            "MVN mean has length {d} but covariance is {:?}",
            cov.dim()
        )));
    }
    let l = linalg::cholesky(cov)?;
    let eps: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let mut out = mean.to_owned();
    for i in 0..d {
        let mut acc = 0.0;
        for k in 0..=i {
            acc += l[[i, k]] * eps[k];
        }
        out[i] += acc;
    }
    Ok(out)
}

/// Inverse Wishart IW(scale, dof) via the Bartlett decomposition of the
/// Wishart on the inverted scale: if W ~ Wishart(dof, scale^{-1}) then
/// W^{-1} ~ IW(scale, dof). Requires dof > dim - 1.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    rng: &mut R,
    scale: &ArrayView2<f64>,
    dof: f64,
) -> Result<Array2<f64>> {
    let d = scale.nrows();
    if scale.ncols() != d {
        return Err(Error::dimension(format!("inverse Wishart scale is {:?}", scale.dim())));
    }
    if !(dof > d as f64 - 1.0) {
        return Err(Error::parameter(format!(
            "inverse Wishart requires dof > dim - 1, got dof = {dof}, dim = {d}"
        )));
    }
    let scale_chol = linalg::cholesky(scale)?;
    let scale_inv = linalg::chol_inverse(&scale_chol.view());
    let l = linalg::cholesky(&scale_inv.view())?;
    // Bartlett factor: lower triangular, chi(dof - i) on the diagonal.
    let mut bart = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        let chi2 = Gamma::new(0.5 * (dof - i as f64), 2.0)
            .map_err(|e| Error::parameter(format!("inverse Wishart Bartlett: {e}")))?;
        bart[[i, i]] = chi2.sample(rng).max(f64::MIN_POSITIVE).sqrt();
        for j in 0..i {
            bart[[i, j]] = rng.sample(StandardNormal);
        }
    }
    // W = (L A)(L A)^T ~ Wishart(dof, scale^{-1}); its Cholesky factor is L A.
    let w_chol = l.dot(&bart);
    // Invert W from its Cholesky factor.
    Ok(linalg::chol_inverse(&w_chol.view()))
}
