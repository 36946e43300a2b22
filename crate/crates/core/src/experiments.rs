//! Replication harness: grids of synthetic cells, each run over several
//! replications, with rank-recovery and covariance-loss tables as output.
//!
//! Determinism contract: every random draw in a grid is keyed by
//! `(base_seed, stream_id(cell, replication, role))`, so results are
//! bit-identical across re-runs and independent of the number of worker
//! threads. Each table row records the `(base_seed, cell_index)` pair it
//! was produced from; together with the replication count that is enough
//! to re-run the cell exactly.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{run_chain, ChainSettings, ChainTrace};
use crate::diagnostics::{classify_estimate, scaled_spectral_loss, Classification};
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_act, estimate_dt, estimate_er, estimate_et, estimate_gr, sample_correlation,
    sample_covariance,
};
use crate::prior::{FactorCovPrior, IgPair, ModelConfig, NoisePrior};
use crate::rng::RngHandle;
use crate::synth::{gen_signed_two, gen_uniform_band, sample_data, Design, SyntheticTruth};

/// Rank estimators a study can run: the posterior mode of the factor count
/// plus the five spectral methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StudyMethod {
    #[serde(rename = "adass")]
    AdaSS,
    #[serde(rename = "et")]
    Et,
    #[serde(rename = "er")]
    Er,
    #[serde(rename = "gr")]
    Gr,
    #[serde(rename = "act")]
    Act,
    #[serde(rename = "dt")]
    Dt,
}

impl StudyMethod {
    pub const ALL: [StudyMethod; 6] = [
        StudyMethod::AdaSS,
        StudyMethod::Et,
        StudyMethod::Er,
        StudyMethod::Gr,
        StudyMethod::Act,
        StudyMethod::Dt,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StudyMethod::AdaSS => "AdaSS",
            StudyMethod::Et => "ET",
            StudyMethod::Er => "ER",
            StudyMethod::Gr => "GR",
            StudyMethod::Act => "ACT",
            StudyMethod::Dt => "DT",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adass" => Ok(StudyMethod::AdaSS),
            "et" => Ok(StudyMethod::Et),
            "er" => Ok(StudyMethod::Er),
            "gr" => Ok(StudyMethod::Gr),
            "act" => Ok(StudyMethod::Act),
            "dt" => Ok(StudyMethod::Dt),
            other => Err(Error::parameter(format!(
                "unknown method '{other}' (expected adass, et, er, gr, act, or dt)"
            ))),
        }
    }
}

/// What a per-replication random stream is used for. Separate roles get
/// separate streams so that, say, lengthening a chain never changes the
/// data it runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRole {
    Truth = 0,
    Data = 1,
    Chain = 2,
    /// The randomized rank estimator's perturbation draw.
    Dt = 3,
}

/// Replications per cell must fit in the stream layout.
pub const MAX_REPLICATIONS: usize = 1 << 20;

/// Packs (cell, replication, role) into a single sub-stream id:
/// 3 bits of role, 20 bits of replication, the rest cell index.
pub fn stream_id(cell: usize, replication: usize, role: StreamRole) -> u64 {
    debug_assert!(replication < MAX_REPLICATIONS);
    ((cell as u64) << 23) | ((replication as u64) << 3) | role as u64
}

/// A full study grid. The cell list is the cross product
/// `n_values x s_values x r_values` at fixed `p`, indexed in that order.
/// Fields omitted from a serialized grid take the desk-scale defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentGrid {
    pub design: Design,
    pub n_values: Vec<usize>,
    pub p: usize,
    pub s_values: Vec<usize>,
    pub r_values: Vec<usize>,
    pub replications: usize,
    pub methods: Vec<StudyMethod>,
    /// Factor-column budget for the sampler runs.
    pub q: usize,
    /// Candidate-rank cap for the spectral estimators.
    pub r_max: usize,
    pub sparsity_exponent: f64,
    /// Mean-center the data before the spectral estimators and the sample
    /// covariance (the sampler always sees the raw data).
    pub center: bool,
    pub chain: ChainSettings,
    pub base_seed: u64,
}

impl Default for ExperimentGrid {
    /// Desk-scale defaults: p = 200 with 20 replications per cell (the
    /// full-scale study raises those to 1000 and 100).
    fn default() -> Self {
        ExperimentGrid {
            design: Design::UniformBand,
            n_values: vec![100],
            p: 200,
            s_values: vec![10, 30],
            r_values: vec![1, 3],
            replications: 20,
            methods: StudyMethod::ALL.to_vec(),
            q: 10,
            r_max: 10,
            sparsity_exponent: 0.1,
            center: false,
            chain: ChainSettings::default(),
            base_seed: 0,
        }
    }
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.design == Design::DiagonalPattern {
            return Err(Error::parameter(
                "the diagonal-pattern design is a fixed demonstration truth, not a grid design; \
                 use signed_two or uniform_band",
            ));
        }
        if self.replications == 0 {
            return Err(Error::parameter("need at least one replication"));
        }
        if self.replications >= MAX_REPLICATIONS {
            return Err(Error::parameter(format!(
                "replications must be below {MAX_REPLICATIONS}"
            )));
        }
        if self.n_values.is_empty() || self.s_values.is_empty() || self.r_values.is_empty() {
            return Err(Error::parameter("n_values, s_values, r_values must be nonempty"));
        }
        if self.methods.is_empty() {
            return Err(Error::parameter("no methods selected"));
        }
        for &n in &self.n_values {
            if n < 2 {
                return Err(Error::parameter(format!("need n >= 2, got {n}")));
            }
        }
        for &s in &self.s_values {
            for &r in &self.r_values {
                if !(r >= 1 && r <= s && s <= self.p) {
                    return Err(Error::parameter(format!(
                        "cell needs 1 <= r <= s <= p, got r={r}, s={s}, p={}",
                        self.p
                    )));
                }
            }
        }
        if self.q == 0 || self.q >= self.p {
            return Err(Error::parameter(format!(
                "factor budget q must be in [1, p), got q={}, p={}",
                self.q, self.p
            )));
        }
        if self.r_max == 0 {
            return Err(Error::parameter("r_max must be positive"));
        }
        self.chain.validate()
    }

    /// Cells in iteration order: (cell_index, n, s, r).
    pub fn cells(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut out = Vec::new();
        let mut idx = 0;
        for &n in &self.n_values {
            for &s in &self.s_values {
                for &r in &self.r_values {
                    out.push((idx, n, s, r));
                    idx += 1;
                }
            }
        }
        out
    }

    fn model_config(&self, n: usize) -> ModelConfig {
        ModelConfig {
            n,
            p: self.p,
            q: self.q,
            sparsity_exponent: self.sparsity_exponent,
            noise: NoisePrior::Shared(IgPair::default()),
            factor_cov: FactorCovPrior::Identity,
        }
    }

    fn generate_truth(&self, cell: usize, rep: usize, s: usize, r: usize) -> Result<SyntheticTruth> {
        let mut rng = RngHandle::new(self.base_seed, stream_id(cell, rep, StreamRole::Truth)).rng();
        match self.design {
            Design::SignedTwo => gen_signed_two(self.p, s, r, &mut rng),
            Design::UniformBand => gen_uniform_band(self.p, s, r, &mut rng),
            Design::DiagonalPattern => unreachable!("rejected by validate"),
        }
    }

    fn run_cell_chain(&self, cell: usize, rep: usize, n: usize, data: ArrayView2<'_, f64>) -> Result<ChainTrace> {
        let cfg = self.model_config(n);
        let settings = ChainSettings {
            seed: self.base_seed,
            stream: stream_id(cell, rep, StreamRole::Chain),
            ..self.chain
        };
        run_chain(data, &cfg, &settings)
    }
}

/// One rank-study table row: a (cell, method) aggregate over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub design: Design,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub r: usize,
    pub method: StudyMethod,
    /// Percentages over replications, in [0, 100].
    pub pct_true: f64,
    pub pct_over: f64,
    pub pct_under: f64,
    /// Mean estimated rank.
    pub ave: f64,
    pub replications: usize,
    /// Seed lineage: streams are `stream_id(cell_index, rep, role)` under
    /// `base_seed`.
    pub cell_index: usize,
    pub base_seed: u64,
}

/// One covariance-study table row, with the sample covariance of the same
/// data as a baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovRow {
    pub design: Design,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub r: usize,
    pub mean_loss: f64,
    pub se_loss: f64,
    pub sample_mean_loss: f64,
    pub sample_se_loss: f64,
    /// Replications where the model loss beat the sample-covariance loss.
    pub model_wins: usize,
    pub replications: usize,
    pub cell_index: usize,
    pub base_seed: u64,
}

fn spectral_estimate(
    method: StudyMethod,
    data: ArrayView2<'_, f64>,
    grid: &ExperimentGrid,
    cell: usize,
    rep: usize,
) -> Result<usize> {
    let r_hat = match method {
        StudyMethod::Et => {
            let s = sample_covariance(data, grid.center)?;
            estimate_et(&s.view(), grid.r_max)?.r_hat
        }
        StudyMethod::Er => {
            let s = sample_covariance(data, grid.center)?;
            estimate_er(&s.view(), grid.r_max)?.r_hat
        }
        StudyMethod::Gr => {
            let s = sample_covariance(data, grid.center)?;
            estimate_gr(&s.view(), grid.r_max)?.r_hat
        }
        StudyMethod::Act => {
            let c = sample_correlation(data, grid.center)?;
            estimate_act(&c.view(), data.nrows(), grid.r_max)?.r_hat
        }
        StudyMethod::Dt => {
            let mut rng =
                RngHandle::new(grid.base_seed, stream_id(cell, rep, StreamRole::Dt)).rng();
            estimate_dt(&data, grid.r_max, &mut rng)?.r_hat
        }
        StudyMethod::AdaSS => unreachable!("posterior method handled by the caller"),
    };
    Ok(r_hat)
}

/// Estimates produced by one replication of one cell, in `grid.methods`
/// order.
fn run_rank_replication(
    grid: &ExperimentGrid,
    cell: usize,
    rep: usize,
    n: usize,
    s: usize,
    r: usize,
) -> Result<Vec<usize>> {
    let truth = grid.generate_truth(cell, rep, s, r)?;
    let mut rng = RngHandle::new(grid.base_seed, stream_id(cell, rep, StreamRole::Data)).rng();
    let data = sample_data(&truth, n, &mut rng)?;
    let mut estimates = Vec::with_capacity(grid.methods.len());
    for &method in &grid.methods {
        let r_hat = if method == StudyMethod::AdaSS {
            let trace = grid.run_cell_chain(cell, rep, n, data.view())?;
            trace
                .xi_mode()
                .ok_or_else(|| Error::numerical("chain retained no samples"))?
        } else {
            spectral_estimate(method, data.view(), grid, cell, rep)?
        };
        estimates.push(r_hat);
    }
    Ok(estimates)
}

/// Runs the rank-recovery study: per cell and method, the percentage of
/// replications classified true/over/under plus the average estimate.
pub fn run_rank_study(grid: &ExperimentGrid) -> Result<Vec<RankRow>> {
    grid.validate()?;
    let mut rows = Vec::new();
    for (cell, n, s, r) in grid.cells() {
        // Replications are independent; the collect preserves order, so the
        // aggregate below is identical to a serial run.
        let per_rep: Vec<Vec<usize>> = (0..grid.replications)
            .into_par_iter()
            .map(|rep| run_rank_replication(grid, cell, rep, n, s, r))
            .collect::<Result<_>>()?;
        for (m, &method) in grid.methods.iter().enumerate() {
            let mut counts = [0usize; 3];
            let mut total = 0.0;
            for estimates in &per_rep {
                let r_hat = estimates[m];
                total += r_hat as f64;
                match classify_estimate(r_hat, r) {
                    Classification::True => counts[0] += 1,
                    Classification::Over => counts[1] += 1,
                    Classification::Under => counts[2] += 1,
                }
            }
            let denom = grid.replications as f64;
            rows.push(RankRow {
                design: grid.design,
                n,
                p: grid.p,
                s,
                r,
                method,
                pct_true: 100.0 * counts[0] as f64 / denom,
                pct_over: 100.0 * counts[1] as f64 / denom,
                pct_under: 100.0 * counts[2] as f64 / denom,
                ave: total / denom,
                replications: grid.replications,
                cell_index: cell,
                base_seed: grid.base_seed,
            });
        }
    }
    Ok(rows)
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs the covariance study: per cell, the scaled spectral loss of the
/// posterior-mean covariance (mean and standard error over replications),
/// alongside the plain sample covariance on the same data.
pub fn run_cov_study(grid: &ExperimentGrid) -> Result<Vec<CovRow>> {
    grid.validate()?;
    let mut rows = Vec::new();
    for (cell, n, s, r) in grid.cells() {
        let per_rep: Vec<(f64, f64)> = (0..grid.replications)
            .into_par_iter()
            .map(|rep| -> Result<(f64, f64)> {
                let truth = grid.generate_truth(cell, rep, s, r)?;
                let mut rng =
                    RngHandle::new(grid.base_seed, stream_id(cell, rep, StreamRole::Data)).rng();
                let data = sample_data(&truth, n, &mut rng)?;
                let sigma_star = truth.population_covariance();
                let trace = grid.run_cell_chain(cell, rep, n, data.view())?;
                let model_loss =
                    scaled_spectral_loss(&trace.sigma_mean.view(), &sigma_star.view())?;
                let sample = sample_covariance(data.view(), grid.center)?;
                let sample_loss = scaled_spectral_loss(&sample.view(), &sigma_star.view())?;
                Ok((model_loss, sample_loss))
            })
            .collect::<Result<_>>()?;
        let model: Vec<f64> = per_rep.iter().map(|x| x.0).collect();
        let sample: Vec<f64> = per_rep.iter().map(|x| x.1).collect();
        let (mean_loss, se_loss) = mean_and_se(&model);
        let (sample_mean_loss, sample_se_loss) = mean_and_se(&sample);
        rows.push(CovRow {
            design: grid.design,
            n,
            p: grid.p,
            s,
            r,
            mean_loss,
            se_loss,
            sample_mean_loss,
            sample_se_loss,
            model_wins: per_rep.iter().filter(|(m, s)| m < s).count(),
            replications: grid.replications,
            cell_index: cell,
            base_seed: grid.base_seed,
        });
    }
    Ok(rows)
}

/// A fixed synthetic cell for the factor-budget sensitivity run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityCell {
    pub design: Design,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub r: usize,
    pub sparsity_exponent: f64,
    pub chain: ChainSettings,
    pub base_seed: u64,
}

/// The factor-count trace of one chain run at a given budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTrace {
    pub q: usize,
    /// Factor count at every iteration (burn-in included).
    pub xi_series: Vec<usize>,
    pub xi_mode: usize,
}

/// Runs one chain per factor budget on a single shared dataset and returns
/// the factor-count traces.
pub fn run_sensitivity_q(cell: &SensitivityCell, q_values: &[usize]) -> Result<Vec<QTrace>> {
    if q_values.is_empty() {
        return Err(Error::parameter("no q values supplied"));
    }
    if !(cell.r >= 1 && cell.r <= cell.s && cell.s <= cell.p) {
        return Err(Error::parameter(format!(
            "cell needs 1 <= r <= s <= p, got r={}, s={}, p={}",
            cell.r, cell.s, cell.p
        )));
    }
    let mut rng = RngHandle::new(cell.base_seed, stream_id(0, 0, StreamRole::Truth)).rng();
    let truth = match cell.design {
        Design::SignedTwo => gen_signed_two(cell.p, cell.s, cell.r, &mut rng)?,
        Design::UniformBand => gen_uniform_band(cell.p, cell.s, cell.r, &mut rng)?,
        Design::DiagonalPattern => {
            let t = crate::synth::gen_diagonal_pattern();
            if t.p() != cell.p || t.s != cell.s || t.r != cell.r {
                return Err(Error::parameter(format!(
                    "the diagonal pattern is fixed at p={}, s={}, r={}",
                    t.p(),
                    t.s,
                    t.r
                )));
            }
            t
        }
    };
    let mut data_rng = RngHandle::new(cell.base_seed, stream_id(0, 0, StreamRole::Data)).rng();
    let data = sample_data(&truth, cell.n, &mut data_rng)?;

    let traces: Vec<QTrace> = q_values
        .par_iter()
        .enumerate()
        .map(|(qi, &q)| -> Result<QTrace> {
            let cfg = ModelConfig {
                n: cell.n,
                p: cell.p,
                q,
                sparsity_exponent: cell.sparsity_exponent,
                noise: NoisePrior::Shared(IgPair::default()),
                factor_cov: FactorCovPrior::Identity,
            };
            let settings = ChainSettings {
                seed: cell.base_seed,
                stream: stream_id(0, qi, StreamRole::Chain),
                ..cell.chain
            };
            let trace = run_chain(data.view(), &cfg, &settings)?;
            let xi_series = trace.iterations.iter().map(|rec| rec.xi).collect();
            let xi_mode = trace
                .xi_mode()
                .ok_or_else(|| Error::numerical("chain retained no samples"))?;
            Ok(QTrace { q, xi_series, xi_mode })
        })
        .collect::<Result<_>>()?;
    Ok(traces)
}

/// Renders rank rows as CSV (with header).
pub fn rank_table_csv(rows: &[RankRow]) -> String {
    let mut out = String::from(
        "design,n,p,s,r,method,pct_true,pct_over,pct_under,ave,replications,cell_index,base_seed\n",
    );
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.2},{:.2},{:.2},{:.4},{},{},{}\n",
            row.design.name(),
            row.n,
            row.p,
            row.s,
            row.r,
            row.method.name(),
            row.pct_true,
            row.pct_over,
            row.pct_under,
            row.ave,
            row.replications,
            row.cell_index,
            row.base_seed,
        ));
    }
    out
}

/// Renders rank rows as an aligned plain-text table.
pub fn rank_table_text(rows: &[RankRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<13} {:>5} {:>5} {:>4} {:>3} {:<6} {:>7} {:>7} {:>8} {:>8}\n",
        "design", "n", "p", "s", "r", "method", "true%", "over%", "under%", "ave"
    ));
    for row in rows {
        out.push_str(&format!(
            "{:<13} {:>5} {:>5} {:>4} {:>3} {:<6} {:>7.1} {:>7.1} {:>8.1} {:>8.3}\n",
            row.design.name(),
            row.n,
            row.p,
            row.s,
            row.r,
            row.method.name(),
            row.pct_true,
            row.pct_over,
            row.pct_under,
            row.ave,
        ));
    }
    out
}

/// Renders covariance rows as CSV (with header).
pub fn cov_table_csv(rows: &[CovRow]) -> String {
    let mut out = String::from(
        "design,n,p,s,r,mean_loss,se_loss,sample_mean_loss,sample_se_loss,model_wins,replications,cell_index,base_seed\n",
    );
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{},{},{},{}\n",
            row.design.name(),
            row.n,
            row.p,
            row.s,
            row.r,
            row.mean_loss,
            row.se_loss,
            row.sample_mean_loss,
            row.sample_se_loss,
            row.model_wins,
            row.replications,
            row.cell_index,
            row.base_seed,
        ));
    }
    out
}

/// Renders covariance rows as an aligned plain-text table.
pub fn cov_table_text(rows: &[CovRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<13} {:>5} {:>5} {:>4} {:>3} {:>12} {:>12} {:>12} {:>12} {:>5}\n",
        "design", "n", "p", "s", "r", "loss", "se", "sample_loss", "sample_se", "wins"
    ));
    for row in rows {
        out.push_str(&format!(
            "{:<13} {:>5} {:>5} {:>4} {:>3} {:>12.4} {:>12.4} {:>12.4} {:>12.4} {:>5}\n",
            row.design.name(),
            row.n,
            row.p,
            row.s,
            row.r,
            row.mean_loss,
            row.se_loss,
            row.sample_mean_loss,
            row.sample_se_loss,
            row.model_wins,
        ));
    }
    out
}
