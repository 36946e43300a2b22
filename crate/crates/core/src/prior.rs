//! The adaptive spike-and-slab prior over sparse loading matrices.
//!
//! Row and column support indicators (u, v) carry a joint prior on the
//! positive orthant pair (excluding all-zero vectors) that depends only on
//! the support sizes omega = |u|, xi = |v|:
//!
//! ```text
//!     log Q(omega, xi) = -A * omega * xi * log(max(p, n))
//!                        - log C(p, omega) - log C(q, xi)
//! ```
//!
//! The normalizer over the orthant pair is intractable at scale and is never
//! needed: every Gibbs step consumes prior *ratios* between configurations
//! differing in one indicator, for which the combinatorial terms telescope.
//! Active loadings get a unit Laplace slab, inactive ones a point mass at
//! zero; the slab enters the sampler through its scale-mixture
//! representation, so the prior module only exposes the log-density.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::ln_choose;

/// Inverse-gamma hyperparameters (shape, scale).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IgPair {
    pub shape: f64,
    pub scale: f64,
}

impl IgPair {
    pub fn new(shape: f64, scale: f64) -> Self {
        IgPair { shape, scale }
    }
}

impl Default for IgPair {
    /// Weakly informative default used throughout the experiments.
    fn default() -> Self {
        IgPair { shape: 0.01, scale: 0.01 }
    }
}

/// Prior on the noise variance: one shared variance or one per variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NoisePrior {
    Shared(IgPair),
    PerVariable(Vec<IgPair>),
}

/// Prior on the factor covariance: identity (the default model) or an
/// inverse-Wishart on a dense covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FactorCovPrior {
    Identity,
    InverseWishart { scale: Vec<Vec<f64>>, dof: f64 },
}

impl FactorCovPrior {
    pub fn inverse_wishart(scale: &Array2<f64>, dof: f64) -> Self {
        let rows = scale.nrows();
        let scale_vec = (0..rows)
            .map(|i| scale.row(i).to_vec())
            .collect::<Vec<_>>();
        FactorCovPrior::InverseWishart { scale: scale_vec, dof }
    }

    pub fn scale_matrix(&self) -> Option<Array2<f64>> {
        match self {
            FactorCovPrior::Identity => None,
            FactorCovPrior::InverseWishart { scale, .. } => {
                let d = scale.len();
                let mut m = Array2::<f64>::zeros((d, d));
                for (i, row) in scale.iter().enumerate() {
                    for (j, &v) in row.iter().enumerate() {
                        m[[i, j]] = v;
                    }
                }
                Some(m)
            }
        }
    }
}

/// Full model configuration for an (n, p) data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Sample size.
    pub n: usize,
    /// Observed dimension.
    pub p: usize,
    /// Working number of factor columns (upper bound on the recovered rank).
    pub q: usize,
    /// Sparsity penalty exponent A in (max(p, n))^(-A omega xi).
    pub sparsity_exponent: f64,
    pub noise: NoisePrior,
    pub factor_cov: FactorCovPrior,
}

impl ModelConfig {
    /// Defaults: q = ceil(sqrt(n)) clamped to p - 1, A = 0.1, shared
    /// IG(0.01, 0.01) noise, identity factor covariance. Returns the config
    /// together with a flag saying whether q had to be clamped (callers
    /// surface that as a warning).
    pub fn with_defaults(n: usize, p: usize) -> Result<(Self, bool)> {
        let q_raw = (n as f64).sqrt().ceil() as usize;
        let q_cap = p.saturating_sub(1).max(1);
        let clamped = q_raw > q_cap;
        let cfg = ModelConfig {
            n,
            p,
            q: q_raw.min(q_cap),
            sparsity_exponent: 0.1,
            noise: NoisePrior::Shared(IgPair::default()),
            factor_cov: FactorCovPrior::Identity,
        };
        cfg.validate()?;
        Ok((cfg, clamped))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::parameter(format!("need n >= 2 observations, got {}", self.n)));
        }
        if self.p < 2 {
            return Err(Error::parameter(format!("need p >= 2 variables, got {}", self.p)));
        }
        if self.q == 0 || self.q >= self.p {
            return Err(Error::parameter(format!(
                "factor count q must satisfy 1 <= q <= p - 1, got q = {}, p = {}",
                self.q, self.p
            )));
        }
        if !(self.sparsity_exponent > 0.0) || !self.sparsity_exponent.is_finite() {
            return Err(Error::parameter(format!(
                "sparsity exponent must be positive and finite, got {}",
                self.sparsity_exponent
            )));
        }
        let check_pair = |pair: &IgPair| -> Result<()> {
            if !(pair.shape > 0.0) || !(pair.scale > 0.0) {
                return Err(Error::parameter(format!(
                    "inverse-gamma hyperparameters must be positive, got ({}, {})",
                    pair.shape, pair.scale
                )));
            }
            Ok(())
        };
        match &self.noise {
            NoisePrior::Shared(pair) => check_pair(pair)?,
            NoisePrior::PerVariable(pairs) => {
                if pairs.len() != self.p {
                    return Err(Error::dimension(format!(
                        "per-variable noise prior has {} entries for p = {}",
                        pairs.len(),
                        self.p
                    )));
                }
                for pair in pairs {
                    check_pair(pair)?;
                }
            }
        }
        if let FactorCovPrior::InverseWishart { scale, dof } = &self.factor_cov {
            if scale.len() != self.q || scale.iter().any(|row| row.len() != self.q) {
                return Err(Error::dimension(format!(
                    "factor covariance prior scale must be {q} x {q}",
                    q = self.q
                )));
            }
            if !(*dof > self.q as f64 - 1.0) {
                return Err(Error::parameter(format!(
                    "inverse-Wishart dof must exceed q - 1 = {}, got {dof}",
                    self.q - 1
                )));
            }
        }
        Ok(())
    }

    /// log(max(p, n)), the base of the sparsity penalty.
    pub fn log_dim(&self) -> f64 {
        (self.p.max(self.n) as f64).ln()
    }

    /// Shape-(shape, scale) noise prior for variable j.
    pub fn noise_pair(&self, j: usize) -> IgPair {
        match &self.noise {
            NoisePrior::Shared(pair) => *pair,
            NoisePrior::PerVariable(pairs) => pairs[j],
        }
    }
}

/// log Q(omega, xi): unnormalized log prior mass of support sizes
/// (omega rows, xi columns active). Domain 1 <= omega <= p, 1 <= xi <= q.
pub fn log_q(cfg: &ModelConfig, omega: usize, xi: usize) -> Result<f64> {
    if omega == 0 || omega > cfg.p || xi == 0 || xi > cfg.q {
        return Err(Error::parameter(format!(
            "support sizes out of range: omega = {omega} (1..={p}), xi = {xi} (1..={q})",
            p = cfg.p,
            q = cfg.q
        )));
    }
    Ok(-cfg.sparsity_exponent * (omega as f64) * (xi as f64) * cfg.log_dim()
        - ln_choose(cfg.p, omega)
        - ln_choose(cfg.q, xi))
}

/// log prior odds of activating one row: configuration with s_minus other
/// active rows and k_active active columns, comparing u_j = 1 against
/// u_j = 0. The combinatorial normalizers telescope to
///
/// ```text
///     -A * k_active * log(max(p, n)) + log(s_minus + 1) - log(p - s_minus)
/// ```
pub fn log_prior_ratio_row(cfg: &ModelConfig, s_minus: usize, k_active: usize) -> Result<f64> {
    if s_minus >= cfg.p {
        return Err(Error::parameter(format!(
            "s_minus = {s_minus} must be below p = {}",
            cfg.p
        )));
    }
    if k_active > cfg.q {
        return Err(Error::parameter(format!(
            "k_active = {k_active} exceeds q = {}",
            cfg.q
        )));
    }
    Ok(-cfg.sparsity_exponent * (k_active as f64) * cfg.log_dim()
        + ((s_minus + 1) as f64).ln()
        - ((cfg.p - s_minus) as f64).ln())
}

/// Column mirror of [`log_prior_ratio_row`]: k_minus other active columns,
/// s_active active rows.
pub fn log_prior_ratio_col(cfg: &ModelConfig, k_minus: usize, s_active: usize) -> Result<f64> {
    if k_minus >= cfg.q {
        return Err(Error::parameter(format!(
            "k_minus = {k_minus} must be below q = {}",
            cfg.q
        )));
    }
    if s_active > cfg.p {
        return Err(Error::parameter(format!(
            "s_active = {s_active} exceeds p = {}",
            cfg.p
        )));
    }
    Ok(-cfg.sparsity_exponent * (s_active as f64) * cfg.log_dim()
        + ((k_minus + 1) as f64).ln()
        - ((cfg.q - k_minus) as f64).ln())
}

/// log prior density of a single loading entry given its activation state:
/// unit Laplace for active entries, point mass at zero otherwise.
pub fn log_prior_loading(value: f64, active: bool) -> f64 {
    if active {
        -value.abs() - std::f64::consts::LN_2
    } else if value == 0.0 {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}
