//! Gibbs updates for the sparse factor model.
//!
//! One sweep cycles through the loadings, the slab scales, the row and
//! column indicators, the latent factors, and the noise variance (plus the
//! factor covariance in the correlated mode). Indicator moves marginalize
//! the affected loadings, so flips need no reversible-jump correction:
//! newly activated entries are drawn from the same conditionals that
//! produced the acceptance odds, and deactivated entries are zeroed.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dists::{
    sample_bernoulli_logit, sample_exponential, sample_gig, sample_inverse_gamma,
    sample_inverse_wishart,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::prior::{
    log_prior_ratio_col, log_prior_ratio_row, FactorCovPrior, ModelConfig, NoisePrior,
};

/// Current noise variance: one shared value or one value per variable.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseVariance {
    Shared(f64),
    PerVariable(Array1<f64>),
}

impl NoiseVariance {
    /// Noise variance attached to variable `j`.
    pub fn for_variable(&self, j: usize) -> f64 {
        match self {
            NoiseVariance::Shared(v) => *v,
            NoiseVariance::PerVariable(vs) => vs[j],
        }
    }

    /// Scalar recorded in traces: the shared value, or the mean across
    /// variables in the per-variable mode.
    pub fn trace_value(&self) -> f64 {
        match self {
            NoiseVariance::Shared(v) => *v,
            NoiseVariance::PerVariable(vs) => vs.mean().unwrap_or(f64::NAN),
        }
    }
}

/// Full Markov chain state.
///
/// Invariants kept by every update: `loadings[(j, k)] == 0` whenever row `j`
/// or column `k` is inactive, at least one row and one column are active,
/// and `slab_scales` and the noise variances stay strictly positive.
#[derive(Debug, Clone)]
pub struct FactorState {
    /// p x q loading matrix.
    pub loadings: Array2<f64>,
    /// Row inclusion indicators (length p).
    pub row_active: Vec<bool>,
    /// Column inclusion indicators (length q).
    pub col_active: Vec<bool>,
    /// p x q conditional prior variances of the loading entries.
    pub slab_scales: Array2<f64>,
    /// n x q latent factor matrix.
    pub factors: Array2<f64>,
    pub noise: NoiseVariance,
    /// q x q factor covariance; `None` means the identity.
    pub factor_cov: Option<Array2<f64>>,
}

impl FactorState {
    /// Indices of active rows, ascending.
    pub fn active_rows(&self) -> Vec<usize> {
        self.row_active
            .iter()
            .enumerate()
            .filter_map(|(j, &a)| a.then_some(j))
            .collect()
    }

    /// Indices of active columns, ascending.
    pub fn active_cols(&self) -> Vec<usize> {
        self.col_active
            .iter()
            .enumerate()
            .filter_map(|(k, &a)| a.then_some(k))
            .collect()
    }

    /// Number of nonzero columns of the loading matrix.
    pub fn xi(&self) -> usize {
        self.loadings
            .axis_iter(Axis(1))
            .filter(|col| col.iter().any(|&b| b != 0.0))
            .count()
    }

    /// Number of nonzero rows of the loading matrix.
    pub fn support_size(&self) -> usize {
        self.loadings
            .axis_iter(Axis(0))
            .filter(|row| row.iter().any(|&b| b != 0.0))
            .count()
    }

    /// Model covariance implied by the state: B Cov(z) B^T plus the noise
    /// diagonal.
    pub fn covariance(&self) -> Array2<f64> {
        let p = self.loadings.nrows();
        let mut sigma = match &self.factor_cov {
            None => self.loadings.dot(&self.loadings.t()),
            Some(sz) => self.loadings.dot(sz).dot(&self.loadings.t()),
        };
        for j in 0..p {
            sigma[[j, j]] += self.noise.for_variable(j);
        }
        sigma
    }

    /// Checks the structural invariants; used by tests and debug builds.
    pub fn check_invariants(&self) -> Result<()> {
        let (p, q) = self.loadings.dim();
        if self.row_active.len() != p || self.col_active.len() != q {
            return Err(Error::dimension("indicator lengths do not match the loading matrix"));
        }
        if !self.row_active.iter().any(|&a| a) || !self.col_active.iter().any(|&a| a) {
            return Err(Error::numerical("all rows or all columns went inactive"));
        }
        for j in 0..p {
            for k in 0..q {
                let active = self.row_active[j] && self.col_active[k];
                if !active && self.loadings[[j, k]] != 0.0 {
                    return Err(Error::numerical("nonzero loading on an inactive row/column"));
                }
                if !(self.slab_scales[[j, k]] > 0.0) {
                    return Err(Error::numerical("nonpositive slab scale"));
                }
            }
        }
        for j in 0..p {
            if !(self.noise.for_variable(j) > 0.0) {
                return Err(Error::numerical("nonpositive noise variance"));
            }
        }
        Ok(())
    }
}

/// Sufficient statistics for the loading and indicator updates. With the
/// factors fixed, every entrywise conditional depends on the data only
/// through Z^T Y and Z^T Z, so both are formed once per sweep.
#[derive(Debug, Clone)]
pub struct SweepStats {
    /// q x p cross-product Z^T Y.
    pub zt_y: Array2<f64>,
    /// q x q Gram matrix Z^T Z.
    pub zt_z: Array2<f64>,
}

impl SweepStats {
    pub fn compute(factors: &Array2<f64>, data: ArrayView2<'_, f64>) -> Self {
        SweepStats {
            zt_y: factors.t().dot(&data),
            zt_z: factors.t().dot(factors),
        }
    }
}

/// Conditional mean and variance of loading entry (j, k) given the rest of
/// its row (passed as `row`), the active column set, and the noise variance
/// of variable j. The cross term subtracts the contribution of the other
/// active entries of the row, so the result is exact whatever values the
/// row currently holds.
fn entry_posterior(
    stats: &SweepStats,
    row: &[f64],
    active_cols: &[usize],
    j: usize,
    k: usize,
    psi_j: f64,
    tau_jk: f64,
) -> Result<(f64, f64)> {
    let mut cross = stats.zt_y[[k, j]];
    for &h in active_cols {
        if h != k {
            cross -= stats.zt_z[[k, h]] * row[h];
        }
    }
    let precision = stats.zt_z[[k, k]] / psi_j + 1.0 / tau_jk;
    let var = 1.0 / precision;
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::numerical("conditional loading variance is not positive and finite"));
    }
    Ok((var * cross / psi_j, var))
}

/// Resamples every active loading entry from its Gaussian conditional and
/// zeroes the rest. Entries within a row are updated sequentially in
/// ascending column order, each seeing the latest values of its neighbors.
pub fn update_beta<R: Rng + ?Sized>(
    state: &mut FactorState,
    stats: &SweepStats,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<()> {
    let active_cols = state.active_cols();
    let mut row_buf = vec![0.0; cfg.q];
    for j in 0..cfg.p {
        if !state.row_active[j] {
            state.loadings.row_mut(j).fill(0.0);
            continue;
        }
        for k in 0..cfg.q {
            row_buf[k] = state.loadings[[j, k]];
        }
        let psi_j = state.noise.for_variable(j);
        for &k in &active_cols {
            let (mean, var) = entry_posterior(
                stats,
                &row_buf,
                &active_cols,
                j,
                k,
                psi_j,
                state.slab_scales[[j, k]],
            )?;
            let eps: f64 = rng.sample(StandardNormal);
            row_buf[k] = mean + var.sqrt() * eps;
        }
        for k in 0..cfg.q {
            state.loadings[[j, k]] = if state.col_active[k] { row_buf[k] } else { 0.0 };
        }
    }
    Ok(())
}

/// Resamples the slab scales. The branch depends on the row indicator
/// alone: active rows draw from the generalized inverse Gaussian conditional
/// GIG(1, beta^2, 1/2) (its b = 0 case is Gamma(1/2, rate 1/2)), inactive
/// rows refresh from the Exp(1/2) prior.
pub fn update_tau<R: Rng + ?Sized>(state: &mut FactorState, rng: &mut R) -> Result<()> {
    let (p, q) = state.loadings.dim();
    for j in 0..p {
        if state.row_active[j] {
            for k in 0..q {
                let b = state.loadings[[j, k]];
                state.slab_scales[[j, k]] = sample_gig(rng, 1.0, b * b, 0.5)?;
            }
        } else {
            for k in 0..q {
                state.slab_scales[[j, k]] = sample_exponential(rng, 0.5)?;
            }
        }
    }
    Ok(())
}

/// Accumulates the likelihood part of an indicator's log odds and stashes
/// the per-entry conditionals so a 0 -> 1 flip can reuse them.
fn entry_odds(
    stats: &SweepStats,
    row: &[f64],
    active_cols: &[usize],
    j: usize,
    k: usize,
    psi_j: f64,
    tau_jk: f64,
) -> Result<(f64, f64, f64)> {
    let (mean, var) = entry_posterior(stats, row, active_cols, j, k, psi_j, tau_jk)?;
    let term = 0.5 * ((var / tau_jk).ln() + mean * mean / var);
    Ok((mean, var, term))
}

/// Resamples the row indicators in ascending order. A row whose removal
/// would empty the support is pinned active. On a 0 -> 1 flip the row's
/// entries over the active columns are drawn from the conditionals that
/// produced the odds; on 1 -> 0 the row is zeroed.
pub fn update_u<R: Rng + ?Sized>(
    state: &mut FactorState,
    stats: &SweepStats,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<()> {
    let active_cols = state.active_cols();
    let k_active = active_cols.len();
    let mut s_active = state.row_active.iter().filter(|&&a| a).count();
    let mut row_buf = vec![0.0; cfg.q];
    let mut means = vec![0.0; k_active];
    let mut vars = vec![0.0; k_active];
    for j in 0..cfg.p {
        let old = state.row_active[j];
        let s_minus = s_active - usize::from(old);
        if s_minus == 0 {
            // Every other row is inactive, so this row must stay in.
            debug_assert!(old);
            continue;
        }
        for k in 0..cfg.q {
            row_buf[k] = state.loadings[[j, k]];
        }
        let psi_j = state.noise.for_variable(j);
        let mut log_rho = log_prior_ratio_row(cfg, s_minus, k_active)?;
        for (idx, &k) in active_cols.iter().enumerate() {
            let (mean, var, term) = entry_odds(
                stats,
                &row_buf,
                &active_cols,
                j,
                k,
                psi_j,
                state.slab_scales[[j, k]],
            )?;
            means[idx] = mean;
            vars[idx] = var;
            log_rho += term;
        }
        let new = sample_bernoulli_logit(rng, log_rho)?;
        if new && !old {
            for (idx, &k) in active_cols.iter().enumerate() {
                let eps: f64 = rng.sample(StandardNormal);
                state.loadings[[j, k]] = means[idx] + vars[idx].sqrt() * eps;
            }
        } else if !new && old {
            state.loadings.row_mut(j).fill(0.0);
        }
        state.row_active[j] = new;
        s_active = s_minus + usize::from(new);
    }
    Ok(())
}

/// Resamples the column indicators in ascending order; the exact mirror of
/// the row update with rows and columns exchanged.
pub fn update_v<R: Rng + ?Sized>(
    state: &mut FactorState,
    stats: &SweepStats,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<()> {
    let active_rows = state.active_rows();
    let s_active = active_rows.len();
    let mut k_count = state.col_active.iter().filter(|&&a| a).count();
    let mut means = vec![0.0; s_active];
    let mut vars = vec![0.0; s_active];
    for k in 0..cfg.q {
        let old = state.col_active[k];
        let k_minus = k_count - usize::from(old);
        if k_minus == 0 {
            debug_assert!(old);
            continue;
        }
        // The residualization set changes whenever a column flips.
        let active_cols = state.active_cols();
        let mut log_rho = log_prior_ratio_col(cfg, k_minus, s_active)?;
        for (idx, &j) in active_rows.iter().enumerate() {
            let row = state
                .loadings
                .row(j)
                .to_slice()
                .expect("loading rows are contiguous");
            let psi_j = state.noise.for_variable(j);
            let (mean, var, term) = entry_odds(
                stats,
                row,
                &active_cols,
                j,
                k,
                psi_j,
                state.slab_scales[[j, k]],
            )?;
            means[idx] = mean;
            vars[idx] = var;
            log_rho += term;
        }
        let new = sample_bernoulli_logit(rng, log_rho)?;
        if new && !old {
            for (idx, &j) in active_rows.iter().enumerate() {
                let eps: f64 = rng.sample(StandardNormal);
                state.loadings[[j, k]] = means[idx] + vars[idx].sqrt() * eps;
            }
        } else if !new && old {
            state.loadings.column_mut(k).fill(0.0);
        }
        state.col_active[k] = new;
        k_count = k_minus + usize::from(new);
    }
    Ok(())
}

/// The exact log posterior odds of activating row `j`, identical to the
/// value [`update_u`] feeds the Bernoulli draw, computed without mutating
/// the state. A pinned row (every other row inactive) has infinite odds.
pub fn row_log_odds(
    state: &FactorState,
    stats: &SweepStats,
    cfg: &ModelConfig,
    j: usize,
) -> Result<f64> {
    if j >= cfg.p {
        return Err(Error::dimension(format!("row {j} out of range for p = {}", cfg.p)));
    }
    let active_cols = state.active_cols();
    let k_active = active_cols.len();
    let s_minus = state
        .row_active
        .iter()
        .enumerate()
        .filter(|&(i, &a)| a && i != j)
        .count();
    if s_minus == 0 {
        return Ok(f64::INFINITY);
    }
    let row = state
        .loadings
        .row(j)
        .to_slice()
        .expect("loading rows are contiguous")
        .to_vec();
    let psi_j = state.noise.for_variable(j);
    let mut log_rho = log_prior_ratio_row(cfg, s_minus, k_active)?;
    for &k in &active_cols {
        let (_, _, term) =
            entry_odds(stats, &row, &active_cols, j, k, psi_j, state.slab_scales[[j, k]])?;
        log_rho += term;
    }
    Ok(log_rho)
}

/// Column mirror of [`row_log_odds`]: the exact log posterior odds of
/// activating column `k`, as used by [`update_v`].
pub fn col_log_odds(
    state: &FactorState,
    stats: &SweepStats,
    cfg: &ModelConfig,
    k: usize,
) -> Result<f64> {
    if k >= cfg.q {
        return Err(Error::dimension(format!("column {k} out of range for q = {}", cfg.q)));
    }
    let active_rows = state.active_rows();
    let s_active = active_rows.len();
    let k_minus = state
        .col_active
        .iter()
        .enumerate()
        .filter(|&(i, &a)| a && i != k)
        .count();
    if k_minus == 0 {
        return Ok(f64::INFINITY);
    }
    let active_cols = state.active_cols();
    let mut log_rho = log_prior_ratio_col(cfg, k_minus, s_active)?;
    for &j in &active_rows {
        let row = state
            .loadings
            .row(j)
            .to_slice()
            .expect("loading rows are contiguous");
        let psi_j = state.noise.for_variable(j);
        let (_, _, term) =
            entry_odds(stats, row, &active_cols, j, k, psi_j, state.slab_scales[[j, k]])?;
        log_rho += term;
    }
    Ok(log_rho)
}

/// Gathers the (rows, cols) submatrix of a square matrix.
fn gather(m: &Array2<f64>, rows: &[usize], cols: &[usize]) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((rows.len(), cols.len()));
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            out[[a, b]] = m[[i, j]];
        }
    }
    out
}

/// Resamples the latent factor matrix row by row. Active coordinates share
/// one posterior precision (formed once per sweep and Cholesky-factored);
/// inactive coordinates carry no likelihood and are drawn from their prior,
/// conditioned on the active block when the factor covariance is dense.
pub fn update_z<R: Rng + ?Sized>(
    state: &mut FactorState,
    data: ArrayView2<'_, f64>,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<()> {
    let n = cfg.n;
    let p = cfg.p;
    let q = cfg.q;
    let active = state.active_cols();
    let m = active.len();
    let inactive: Vec<usize> = (0..q).filter(|k| !state.col_active[*k]).collect();

    // B_K and its row-scaled copy Psi^{-1} B_K give both the likelihood
    // precision B_K^T Psi^{-1} B_K and the projection Psi^{-1} B_K.
    let mut bk = Array2::<f64>::zeros((p, m));
    let mut bk_scaled = Array2::<f64>::zeros((p, m));
    for j in 0..p {
        let w = 1.0 / state.noise.for_variable(j);
        for (c, &k) in active.iter().enumerate() {
            let b = state.loadings[[j, k]];
            bk[[j, c]] = b;
            bk_scaled[[j, c]] = b * w;
        }
    }
    let mut prec = bk.t().dot(&bk_scaled);
    // Symmetrize before adding the prior precision of the active block.
    for a in 0..m {
        for b in 0..a {
            let s = 0.5 * (prec[[a, b]] + prec[[b, a]]);
            prec[[a, b]] = s;
            prec[[b, a]] = s;
        }
    }
    // Prior conditional of the inactive coordinates given the active ones:
    // mean map `cross_map` and noise Cholesky `cond_chol` (None = identity
    // covariance with zero mean map).
    let mut cross_map: Option<Array2<f64>> = None;
    let mut cond_chol: Option<Array2<f64>> = None;
    match &state.factor_cov {
        None => {
            for a in 0..m {
                prec[[a, a]] += 1.0;
            }
        }
        Some(sz) => {
            let szkk = gather(sz, &active, &active);
            let szkk_inv = linalg::chol_inverse(&linalg::cholesky(&szkk.view())?.view());
            prec += &szkk_inv;
            if !inactive.is_empty() {
                let cross = gather(sz, &inactive, &active);
                let map = cross.dot(&szkk_inv);
                let mut schur = gather(sz, &inactive, &inactive) - map.dot(&cross.t());
                for a in 0..inactive.len() {
                    for b in 0..a {
                        let s = 0.5 * (schur[[a, b]] + schur[[b, a]]);
                        schur[[a, b]] = s;
                        schur[[b, a]] = s;
                    }
                }
                cond_chol = Some(linalg::cholesky(&schur.view())?);
                cross_map = Some(map);
            }
        }
    }
    let chol = linalg::cholesky(&prec.view())?;

    // n x m matrix of projected observations: row i holds B_K^T Psi^{-1} Y_i.
    let projected = data.dot(&bk_scaled);
    let mut zk = vec![0.0; m];
    let mut noise_buf = vec![0.0; m];
    for i in 0..n {
        for c in 0..m {
            zk[c] = projected[[i, c]];
        }
        linalg::chol_solve_in_place(&chol.view(), &mut zk);
        for slot in noise_buf.iter_mut() {
            *slot = rng.sample(StandardNormal);
        }
        linalg::solve_lower_transpose_in_place(&chol.view(), &mut noise_buf);
        for c in 0..m {
            zk[c] += noise_buf[c];
        }
        for (c, &k) in active.iter().enumerate() {
            state.factors[[i, k]] = zk[c];
        }
        match (&cross_map, &cond_chol) {
            (Some(map), Some(lc)) => {
                let mut tail: Vec<f64> =
                    (0..inactive.len()).map(|_| rng.sample(StandardNormal)).collect();
                // tail := L_c eps + map z_K, the prior conditional draw.
                for a in (0..inactive.len()).rev() {
                    let mut acc = 0.0;
                    for b in 0..=a {
                        acc += lc[[a, b]] * tail[b];
                    }
                    tail[a] = acc;
                }
                for (a, &k) in inactive.iter().enumerate() {
                    let mut mean = 0.0;
                    for c in 0..m {
                        mean += map[[a, c]] * zk[c];
                    }
                    state.factors[[i, k]] = mean + tail[a];
                }
            }
            _ => {
                for &k in &inactive {
                    state.factors[[i, k]] = rng.sample(StandardNormal);
                }
            }
        }
    }
    Ok(())
}

/// Resamples the noise variance from its inverse gamma conditional, shared
/// or per variable according to the configured mode.
pub fn update_psi<R: Rng + ?Sized>(
    state: &mut FactorState,
    data: ArrayView2<'_, f64>,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<()> {
    let mut resid = data.to_owned();
    resid -= &state.factors.dot(&state.loadings.t());
    let n = cfg.n as f64;
    match (&cfg.noise, &mut state.noise) {
        (NoisePrior::Shared(pair), NoiseVariance::Shared(psi)) => {
            let rss: f64 = resid.iter().map(|r| r * r).sum();
            *psi = sample_inverse_gamma(
                rng,
                pair.shape + 0.5 * n * cfg.p as f64,
                pair.scale + 0.5 * rss,
            )?;
        }
        (NoisePrior::PerVariable(pairs), NoiseVariance::PerVariable(psis)) => {
            for j in 0..cfg.p {
                let rss: f64 = resid.column(j).iter().map(|r| r * r).sum();
                psis[j] = sample_inverse_gamma(
                    rng,
                    pairs[j].shape + 0.5 * n,
                    pairs[j].scale + 0.5 * rss,
                )?;
            }
        }
        _ => {
            return Err(Error::parameter(
                "noise mode of the state does not match the configuration",
            ));
        }
    }
    Ok(())
}

/// Resamples the dense factor covariance from its inverse Wishart
/// conditional over the full q x q block.
pub fn update_sigma_z<R: Rng + ?Sized>(
    state: &mut FactorState,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<()> {
    let (scale, dof) = match &cfg.factor_cov {
        FactorCovPrior::InverseWishart { dof, .. } => (
            cfg.factor_cov
                .scale_matrix()
                .expect("inverse-Wishart mode carries a scale matrix"),
            *dof,
        ),
        FactorCovPrior::Identity => {
            return Err(Error::parameter(
                "factor covariance update requires the inverse-Wishart mode",
            ));
        }
    };
    let mut scale_post = state.factors.t().dot(&state.factors);
    scale_post += &scale;
    let draw = sample_inverse_wishart(rng, &scale_post.view(), dof + cfg.n as f64)?;
    state.factor_cov = Some(draw);
    Ok(())
}

/// One full systematic-scan sweep. The sufficient statistics are rebuilt
/// from the current factors on entry, so callers only carry `state` between
/// sweeps.
pub fn sweep<R: Rng + ?Sized>(
    state: &mut FactorState,
    data: ArrayView2<'_, f64>,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<()> {
    let stats = SweepStats::compute(&state.factors, data);
    update_beta(state, &stats, cfg, rng)?;
    update_tau(state, rng)?;
    update_u(state, &stats, cfg, rng)?;
    update_v(state, &stats, cfg, rng)?;
    update_z(state, data, cfg, rng)?;
    update_psi(state, data, cfg, rng)?;
    if matches!(cfg.factor_cov, FactorCovPrior::InverseWishart { .. }) {
        update_sigma_z(state, cfg, rng)?;
    }
    Ok(())
}
