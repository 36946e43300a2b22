//! Chain driver: initialization, the sweep loop, and trace recording.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg;
use crate::prior::{FactorCovPrior, ModelConfig, NoisePrior};
use crate::rng::RngHandle;
use crate::sampler::{self, FactorState, NoiseVariance};

/// Floor applied to the initial noise variance so a noiseless spectrum
/// cannot start the chain at zero.
const PSI_FLOOR: f64 = 1e-4;

/// Iteration protocol. Defaults follow the evaluation protocol used
/// throughout the simulations: 3000 sweeps, 500 discarded, thinning 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ChainSettings {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Record the full loading matrix at every retained iteration.
    pub snapshot_loadings: bool,
    pub seed: u64,
    /// Sub-stream of the seed; replications run on distinct streams.
    pub stream: u64,
}

impl Default for ChainSettings {
    fn default() -> Self {
        ChainSettings {
            n_iter: 3000,
            burn_in: 500,
            thin: 5,
            snapshot_loadings: false,
            seed: 0,
            stream: 0,
        }
    }
}

impl ChainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 || self.burn_in >= self.n_iter {
            return Err(Error::parameter(
                "burn-in must be smaller than the iteration count",
            ));
        }
        if self.thin == 0 {
            return Err(Error::parameter("thinning interval must be at least 1"));
        }
        Ok(())
    }

    /// Whether 1-based iteration `t` is kept after burn-in and thinning.
    pub fn is_retained(&self, t: usize) -> bool {
        t > self.burn_in && (t - self.burn_in) % self.thin == 0
    }

    /// Number of retained iterations.
    pub fn retained_count(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }
}

/// Per-iteration scalar record; written for every sweep, not only retained
/// ones, so trace plots show the burn-in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarRecord {
    pub iteration: usize,
    /// Number of nonzero loading columns.
    pub xi: usize,
    /// Number of nonzero loading rows.
    pub support_size: usize,
    /// Noise variance (mean across variables in the per-variable mode).
    pub psi: f64,
}

/// Everything recorded over a run: the full scalar trace, retained-sample
/// histograms, the running mean of the model covariance, and optional
/// loading snapshots.
#[derive(Debug, Clone)]
pub struct ChainTrace {
    pub settings: ChainSettings,
    pub iterations: Vec<ScalarRecord>,
    pub retained: usize,
    pub xi_histogram: BTreeMap<usize, usize>,
    pub support_histogram: BTreeMap<usize, usize>,
    /// Mean over retained iterations of B Cov(z) B^T + noise diagonal.
    pub sigma_mean: Array2<f64>,
    /// Mean over retained iterations of the scalar noise value.
    pub psi_mean: f64,
    /// Per-variable noise mean; `None` in the shared mode.
    pub psi_vector_mean: Option<Array1<f64>>,
    /// Retained loading matrices, present when requested in the settings.
    pub snapshots: Vec<Array2<f64>>,
}

impl ChainTrace {
    /// Most frequent retained xi, smallest value on ties. `None` when
    /// nothing was retained.
    pub fn xi_mode(&self) -> Option<usize> {
        self.xi_histogram
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&xi, _)| xi)
    }

    /// Fraction of retained iterations with the given xi.
    pub fn xi_mass(&self, xi: usize) -> f64 {
        if self.retained == 0 {
            return 0.0;
        }
        *self.xi_histogram.get(&xi).unwrap_or(&0) as f64 / self.retained as f64
    }
}

/// Top eigenpairs of the (uncentered, divisor n) sample covariance plus the
/// mean of the trailing eigenvalues. When n < p the pairs come from the
/// n x n Gram matrix: Y^T Y / n and Y Y^T / n share their nonzero spectrum,
/// and u -> Y^T u / sqrt(n lambda) maps Gram eigenvectors to covariance
/// eigenvectors. The trailing mean uses the trace identity, so the p x p
/// matrix is never formed in that regime.
fn leading_spectrum(data: ArrayView2<'_, f64>, q: usize) -> Result<(Vec<f64>, Array2<f64>, f64)> {
    let n = data.nrows();
    let p = data.ncols();
    let total: f64 = data.iter().map(|y| y * y).sum::<f64>() / n as f64;
    let (values, vectors) = if p <= n {
        let s = data.t().dot(&data) / n as f64;
        let eig = linalg::sym_eigen(&s.view())?;
        let vals: Vec<f64> = eig.values.iter().take(q).copied().collect();
        let mut vecs = Array2::<f64>::zeros((p, q));
        for c in 0..q.min(p) {
            vecs.column_mut(c).assign(&eig.vectors.column(c));
        }
        (vals, vecs)
    } else {
        let g = data.dot(&data.t()) / n as f64;
        let eig = linalg::sym_eigen(&g.view())?;
        let m = q.min(n);
        let mut vals: Vec<f64> = eig.values.iter().take(m).copied().collect();
        vals.resize(q, 0.0);
        let mut vecs = Array2::<f64>::zeros((p, q));
        for c in 0..m {
            let lambda = eig.values[c];
            if lambda <= 0.0 {
                continue;
            }
            let u = eig.vectors.column(c);
            let w = data.t().dot(&u);
            let scale = 1.0 / (n as f64 * lambda).sqrt();
            for j in 0..p {
                vecs[[j, c]] = w[j] * scale;
            }
        }
        (vals, vecs)
    };
    let leading: f64 = values.iter().filter(|v| v.is_finite()).sum();
    let trailing = ((total - leading) / (p - q) as f64).max(0.0);
    Ok((values, vectors, trailing))
}

/// Builds the starting state: all rows and columns active, slab scales one,
/// loadings from the truncated eigendecomposition of the sample covariance
/// (column k scaled by sqrt(max(lambda_k - psi0, 0))), noise at the trailing
/// eigenvalue mean, and factors drawn from their conditional.
pub fn init_state(
    data: ArrayView2<'_, f64>,
    cfg: &ModelConfig,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<FactorState> {
    let (values, vectors, trailing) = leading_spectrum(data, cfg.q)?;
    let psi0 = trailing.max(PSI_FLOOR);
    let mut loadings = vectors;
    for (k, &lambda) in values.iter().enumerate() {
        let scale = (lambda - psi0).max(0.0).sqrt();
        loadings.column_mut(k).mapv_inplace(|w| w * scale);
    }
    let noise = match &cfg.noise {
        NoisePrior::Shared(_) => NoiseVariance::Shared(psi0),
        NoisePrior::PerVariable(_) => NoiseVariance::PerVariable(Array1::from_elem(cfg.p, psi0)),
    };
    let factor_cov = match &cfg.factor_cov {
        FactorCovPrior::Identity => None,
        FactorCovPrior::InverseWishart { .. } => Some(Array2::eye(cfg.q)),
    };
    let mut state = FactorState {
        loadings,
        row_active: vec![true; cfg.p],
        col_active: vec![true; cfg.q],
        slab_scales: Array2::ones((cfg.p, cfg.q)),
        factors: Array2::zeros((cfg.n, cfg.q)),
        noise,
        factor_cov,
    };
    sampler::update_z(&mut state, data, cfg, rng)?;
    Ok(state)
}

/// Runs the full Gibbs chain and records the trace.
pub fn run_chain(
    data: ArrayView2<'_, f64>,
    cfg: &ModelConfig,
    settings: &ChainSettings,
) -> Result<ChainTrace> {
    settings.validate()?;
    cfg.validate()?;
    let n = data.nrows();
    let p = data.ncols();
    if n != cfg.n || p != cfg.p {
        return Err(Error::dimension(format!(
            "data is {n} x {p} but the configuration says {} x {}",
            cfg.n, cfg.p
        )));
    }
    if n < 2 || p < 2 {
        return Err(Error::dimension("need at least 2 observations and 2 variables"));
    }
    if data.iter().any(|y| !y.is_finite()) {
        return Err(Error::format("data contains non-finite values"));
    }

    let mut rng = RngHandle::new(settings.seed, settings.stream).rng();
    let mut state = init_state(data, cfg, &mut rng)?;

    let mut iterations = Vec::with_capacity(settings.n_iter);
    let mut xi_histogram = BTreeMap::new();
    let mut support_histogram = BTreeMap::new();
    let mut sigma_mean = Array2::<f64>::zeros((p, p));
    let mut psi_mean = 0.0;
    let mut psi_vector_mean = match &cfg.noise {
        NoisePrior::Shared(_) => None,
        NoisePrior::PerVariable(_) => Some(Array1::<f64>::zeros(p)),
    };
    let mut snapshots = Vec::new();
    let mut retained = 0usize;

    for t in 1..=settings.n_iter {
        sampler::sweep(&mut state, data, cfg, &mut rng)?;
        let xi = state.xi();
        let support = state.support_size();
        iterations.push(ScalarRecord {
            iteration: t,
            xi,
            support_size: support,
            psi: state.noise.trace_value(),
        });
        if settings.is_retained(t) {
            retained += 1;
            *xi_histogram.entry(xi).or_insert(0) += 1;
            *support_histogram.entry(support).or_insert(0) += 1;
            let weight = 1.0 / retained as f64;
            let sigma = state.covariance();
            sigma_mean.zip_mut_with(&sigma, |m, &s| *m += weight * (s - *m));
            psi_mean += weight * (state.noise.trace_value() - psi_mean);
            if let (Some(mean), NoiseVariance::PerVariable(vs)) =
                (psi_vector_mean.as_mut(), &state.noise)
            {
                mean.zip_mut_with(vs, |m, &v| *m += weight * (v - *m));
            }
            if settings.snapshot_loadings {
                snapshots.push(state.loadings.clone());
            }
        }
    }

    Ok(ChainTrace {
        settings: *settings,
        iterations,
        retained,
        xi_histogram,
        support_histogram,
        sigma_mean,
        psi_mean,
        psi_vector_mean,
        snapshots,
    })
}
