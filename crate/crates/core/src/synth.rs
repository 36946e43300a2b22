//! Synthetic ground-truth generators for the simulation designs.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Which generator produced a truth; serialized into truth sidecars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    SignedTwo,
    UniformBand,
    DiagonalPattern,
}

impl Design {
    pub fn name(&self) -> &'static str {
        match self {
            Design::SignedTwo => "signed_two",
            Design::UniformBand => "uniform_band",
            Design::DiagonalPattern => "diagonal_pattern",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "signed_two" => Ok(Design::SignedTwo),
            "uniform_band" => Ok(Design::UniformBand),
            "diagonal_pattern" => Ok(Design::DiagonalPattern),
            other => Err(Error::parameter(format!("unknown design '{other}'"))),
        }
    }
}

/// A ground-truth loading matrix with its noise level and derived
/// covariance metadata.
#[derive(Debug, Clone)]
pub struct SyntheticTruth {
    /// p x r true loading matrix; rows outside `support` are zero.
    pub loadings: Array2<f64>,
    /// True noise variance (shared across variables in every design).
    pub noise_variance: f64,
    /// Indices of the nonzero rows, ascending.
    pub support: Vec<usize>,
    pub r: usize,
    pub s: usize,
    pub design: Design,
}

impl SyntheticTruth {
    pub fn p(&self) -> usize {
        self.loadings.nrows()
    }

    /// Population covariance B* B*^T + psi* I.
    pub fn population_covariance(&self) -> Array2<f64> {
        let p = self.p();
        let mut sigma = self.loadings.dot(&self.loadings.t());
        for j in 0..p {
            sigma[[j, j]] += self.noise_variance;
        }
        sigma
    }
}

fn validate_dims(p: usize, s: usize, r: usize) -> Result<()> {
    if r == 0 || s == 0 {
        return Err(Error::parameter("sparsity and rank must be positive"));
    }
    if s > p {
        return Err(Error::parameter(format!("sparsity s = {s} exceeds p = {p}")));
    }
    Ok(())
}

/// Draws `s` distinct row indices uniformly, ascending.
fn draw_support<R: Rng + ?Sized>(p: usize, s: usize, rng: &mut R) -> Vec<usize> {
    let mut support = rand::seq::index::sample(rng, p, s).into_vec();
    support.sort_unstable();
    support
}

/// Truth with s active rows whose entries are independent signs times two;
/// noise variance 2.
pub fn gen_signed_two<R: Rng + ?Sized>(
    p: usize,
    s: usize,
    r: usize,
    rng: &mut R,
) -> Result<SyntheticTruth> {
    validate_dims(p, s, r)?;
    let support = draw_support(p, s, rng);
    let mut loadings = Array2::<f64>::zeros((p, r));
    for &j in &support {
        for k in 0..r {
            loadings[[j, k]] = if rng.random::<bool>() { 2.0 } else { -2.0 };
        }
    }
    Ok(SyntheticTruth {
        loadings,
        noise_variance: 2.0,
        support,
        r,
        s,
        design: Design::SignedTwo,
    })
}

/// Truth with s active rows whose entries have magnitude uniform on
/// [3/sqrt(s), 4/sqrt(s)] and independent signs; noise variance 1.
pub fn gen_uniform_band<R: Rng + ?Sized>(
    p: usize,
    s: usize,
    r: usize,
    rng: &mut R,
) -> Result<SyntheticTruth> {
    validate_dims(p, s, r)?;
    let support = draw_support(p, s, rng);
    let lo = 3.0 / (s as f64).sqrt();
    let hi = 4.0 / (s as f64).sqrt();
    let mut loadings = Array2::<f64>::zeros((p, r));
    for &j in &support {
        for k in 0..r {
            let magnitude = rng.random_range(lo..hi);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            loadings[[j, k]] = sign * magnitude;
        }
    }
    Ok(SyntheticTruth {
        loadings,
        noise_variance: 1.0,
        support,
        r,
        s,
        design: Design::UniformBand,
    })
}

/// Fixed 50 x 5 block truth: entry (j, k) is 1 exactly when
/// 5(k-1) < j <= 5k in 1-based indexing, giving five disjoint unit blocks
/// in rows 1-25 and zero rows below; noise variance 1.
pub fn gen_diagonal_pattern() -> SyntheticTruth {
    let p = 50;
    let r = 5;
    let mut loadings = Array2::<f64>::zeros((p, r));
    for k in 0..r {
        for j in (5 * k)..(5 * k + 5) {
            loadings[[j, k]] = 1.0;
        }
    }
    SyntheticTruth {
        loadings,
        noise_variance: 1.0,
        support: (0..25).collect(),
        r,
        s: 25,
        design: Design::DiagonalPattern,
    }
}

/// Draws n observations from N(0, B* B*^T + psi* I) as B* z + noise, one
/// row per observation.
pub fn sample_data<R: Rng + ?Sized>(
    truth: &SyntheticTruth,
    n: usize,
    rng: &mut R,
) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::parameter("need at least one observation"));
    }
    let p = truth.p();
    let r = truth.r;
    let sd = truth.noise_variance.sqrt();
    let mut data = Array2::<f64>::zeros((n, p));
    let mut z = vec![0.0; r];
    for i in 0..n {
        for slot in z.iter_mut() {
            *slot = rng.sample(StandardNormal);
        }
        // Only the supported rows carry signal.
        for j in 0..p {
            let e: f64 = rng.sample(StandardNormal);
            data[[i, j]] = sd * e;
        }
        for &j in &truth.support {
            let mut acc = 0.0;
            for k in 0..r {
                acc += truth.loadings[[j, k]] * z[k];
            }
            data[[i, j]] += acc;
        }
    }
    Ok(data)
}

/// Smallest nonzero row norm of the true loadings; positive for every
/// generated truth.
pub fn min_signal_row_norm(truth: &SyntheticTruth) -> f64 {
    truth
        .support
        .iter()
        .map(|&j| {
            truth
                .loadings
                .row(j)
                .iter()
                .map(|b| b * b)
                .sum::<f64>()
                .sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Entrywise tolerance check of a sample covariance against the population
/// covariance `sigma`, used by Monte Carlo validation.
pub fn covariance_within(
    sample: &ArrayView2<'_, f64>,
    sigma: &ArrayView2<'_, f64>,
    n: usize,
    multiplier: f64,
) -> bool {
    let p = sigma.nrows();
    for j in 0..p {
        for k in 0..p {
            let tol = multiplier * (sigma[[j, j]] * sigma[[k, k]] / n as f64).sqrt();
            if (sample[[j, k]] - sigma[[j, k]]).abs() > tol {
                return false;
            }
        }
    }
    true
}
