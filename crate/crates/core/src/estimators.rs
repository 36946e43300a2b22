//! Frequentist factor-dimensionality estimators on the sample spectrum.
//!
//! Five estimators share an eigendecomposition front-end: an eigenvalue
//! threshold count (ET), the eigenvalue ratio (ER) and growth ratio (GR)
//! argmax rules, an adjusted correlation threshold (ACT), and a randomized
//! diagonal thresholding rule (DT). All return an audit record with the
//! spectrum and per-index criterion values actually used.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;

/// Weight in the ET threshold: 2^(2/3) (2^(2/3) - 1).
pub const ET_WEIGHT: f64 = 0.932_441_047_821_546_9;

/// Relative cutoff below which an eigenvalue or partial sum is treated as
/// numerically zero (rank deficiency at n < p produces exact zeros up to
/// eigensolver noise).
const ZERO_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum RankMethod {
    Et,
    Er,
    Gr,
    Act,
    Dt,
}

impl RankMethod {
    pub fn name(&self) -> &'static str {
        match self {
            RankMethod::Et => "ET",
            RankMethod::Er => "ER",
            RankMethod::Gr => "GR",
            RankMethod::Act => "ACT",
            RankMethod::Dt => "DT",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ET" => Ok(RankMethod::Et),
            "ER" => Ok(RankMethod::Er),
            "GR" => Ok(RankMethod::Gr),
            "ACT" => Ok(RankMethod::Act),
            "DT" => Ok(RankMethod::Dt),
            other => Err(Error::parameter(format!("unknown estimator '{other}'"))),
        }
    }
}

/// Outcome of one estimator run.
#[derive(Debug, Clone)]
pub struct RankEstimate {
    pub method: RankMethod,
    pub r_hat: usize,
    /// Eigenvalues the decision was based on, descending.
    pub eigenvalues_used: Vec<f64>,
    /// Per-index audit values: thresholds for the counting rules, criterion
    /// values for the argmax rules.
    pub criterion_values: Vec<f64>,
    pub r_max: usize,
    /// Human-readable audit notes (excluded indices, degenerate spectra).
    pub notes: Vec<String>,
}

/// Uncentered sample covariance with divisor n; `center` subtracts column
/// means first (for real data whose mean is not structurally zero).
pub fn sample_covariance(data: ArrayView2<'_, f64>, center: bool) -> Result<Array2<f64>> {
    let n = data.nrows();
    if n == 0 || data.ncols() == 0 {
        return Err(Error::dimension("sample covariance needs a nonempty matrix"));
    }
    let s = if center {
        let means = data.mean_axis(ndarray::Axis(0)).expect("n > 0");
        let centered = &data - &means;
        centered.t().dot(&centered) / n as f64
    } else {
        data.t().dot(&data) / n as f64
    };
    Ok(s)
}

/// Sample correlation matrix obtained from the covariance by diagonal
/// scaling; the diagonal is set to exactly one.
pub fn sample_correlation(data: ArrayView2<'_, f64>, center: bool) -> Result<Array2<f64>> {
    let s = sample_covariance(data, center)?;
    correlation_from_covariance(&s)
}

/// Rescales a covariance matrix to a correlation matrix.
pub fn correlation_from_covariance(s: &Array2<f64>) -> Result<Array2<f64>> {
    let p = s.nrows();
    let mut inv_sd = vec![0.0; p];
    for j in 0..p {
        let v = s[[j, j]];
        if !(v > 0.0) {
            return Err(Error::numerical(format!(
                "variable {j} has nonpositive variance; correlation undefined"
            )));
        }
        inv_sd[j] = 1.0 / v.sqrt();
    }
    let mut r = Array2::<f64>::zeros((p, p));
    for j in 0..p {
        for k in 0..p {
            r[[j, k]] = s[[j, k]] * inv_sd[j] * inv_sd[k];
        }
        r[[j, j]] = 1.0;
    }
    Ok(r)
}

fn descending_eigenvalues(m: &ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    Ok(linalg::sym_eigenvalues(m)?.to_vec())
}

fn zero_tol(values: &[f64]) -> f64 {
    values.first().map_or(0.0, |v| v.abs() * ZERO_REL_TOL)
}

/// Eigenvalue threshold estimator: counts eigenvalues above the convex
/// combination ET_WEIGHT * lambda_{r_max+1} + (1 - ET_WEIGHT) *
/// lambda_{2 r_max + 1}.
pub fn estimate_et(s: &ArrayView2<'_, f64>, r_max: usize) -> Result<RankEstimate> {
    estimate_et_with_weight(s, r_max, ET_WEIGHT)
}

/// ET with an explicit weight (the published constant is disputed in the
/// literature, so it stays overridable).
pub fn estimate_et_with_weight(
    s: &ArrayView2<'_, f64>,
    r_max: usize,
    weight: f64,
) -> Result<RankEstimate> {
    let p = s.nrows();
    if r_max == 0 {
        return Err(Error::parameter("r_max must be at least 1"));
    }
    if 2 * r_max + 1 > p {
        return Err(Error::parameter(format!(
            "ET needs 2 r_max + 1 <= p, got r_max = {r_max}, p = {p}"
        )));
    }
    let values = descending_eigenvalues(s)?;
    let threshold = weight * values[r_max] + (1.0 - weight) * values[2 * r_max];
    let r_hat = values.iter().filter(|&&v| v > threshold).count();
    Ok(RankEstimate {
        method: RankMethod::Et,
        r_hat,
        eigenvalues_used: values,
        criterion_values: vec![threshold],
        r_max,
        notes: Vec::new(),
    })
}

/// Eigenvalue ratio estimator: argmax_j lambda_j / lambda_{j+1}, smallest j
/// on ties; indices with a numerically zero denominator are excluded.
pub fn estimate_er(s: &ArrayView2<'_, f64>, r_max: usize) -> Result<RankEstimate> {
    let p = s.nrows();
    if r_max == 0 || r_max + 1 > p {
        return Err(Error::parameter(format!(
            "ER needs 1 <= r_max <= p - 1, got r_max = {r_max}, p = {p}"
        )));
    }
    let values = descending_eigenvalues(s)?;
    let tol = zero_tol(&values);
    let mut notes = Vec::new();
    let mut criteria = vec![f64::NAN; r_max];
    let mut best: Option<(usize, f64)> = None;
    for j in 1..=r_max {
        if values[j] <= tol {
            notes.push(format!("index {j} excluded: eigenvalue {} is numerically zero", j + 1));
            continue;
        }
        let ratio = values[j - 1] / values[j];
        criteria[j - 1] = ratio;
        if best.map_or(true, |(_, b)| ratio > b) {
            best = Some((j, ratio));
        }
    }
    let (r_hat, _) = best.ok_or_else(|| {
        Error::numerical("eigenvalue ratio undefined everywhere: spectrum collapses after the first eigenvalue")
    })?;
    Ok(RankEstimate {
        method: RankMethod::Er,
        r_hat,
        eigenvalues_used: values,
        criterion_values: criteria,
        r_max,
        notes,
    })
}

/// Growth ratio estimator: argmax_j log(L_{j-1}/L_j) / log(L_j/L_{j+1})
/// with L_j the eigenvalue tail sum past j; smallest j on ties.
pub fn estimate_gr(s: &ArrayView2<'_, f64>, r_max: usize) -> Result<RankEstimate> {
    let p = s.nrows();
    if r_max == 0 || r_max + 1 > p {
        return Err(Error::parameter(format!(
            "GR needs 1 <= r_max <= p - 1, got r_max = {r_max}, p = {p}"
        )));
    }
    let values = descending_eigenvalues(s)?;
    let tol = zero_tol(&values);
    // tails[j] = sum of eigenvalues strictly past position j.
    let mut tails = vec![0.0; p + 1];
    for j in (0..p).rev() {
        tails[j] = tails[j + 1] + values[j];
    }
    let mut notes = Vec::new();
    let mut criteria = vec![f64::NAN; r_max];
    let mut best: Option<(usize, f64)> = None;
    for j in 1..=r_max {
        if tails[j + 1] <= tol || tails[j] <= tol || tails[j - 1] <= tol {
            notes.push(format!("index {j} excluded: tail sum is numerically zero"));
            continue;
        }
        let denom = (tails[j] / tails[j + 1]).ln();
        if denom.abs() < 1e-15 {
            notes.push(format!("index {j} excluded: zero log growth in the denominator"));
            continue;
        }
        let criterion = (tails[j - 1] / tails[j]).ln() / denom;
        criteria[j - 1] = criterion;
        if best.map_or(true, |(_, b)| criterion > b) {
            best = Some((j, criterion));
        }
    }
    let (r_hat, _) = best.ok_or_else(|| {
        Error::numerical("growth ratio undefined everywhere: eigenvalue tail sums vanish")
    })?;
    Ok(RankEstimate {
        method: RankMethod::Gr,
        r_hat,
        eigenvalues_used: values,
        criterion_values: criteria,
        r_max,
        notes,
    })
}

/// Adjusted correlation threshold estimator on the correlation spectrum:
/// r_hat is the largest j whose bias-adjusted eigenvalue exceeds
/// 1 + sqrt(p / (n - 1)), zero when none does.
pub fn estimate_act(r: &ArrayView2<'_, f64>, n: usize, r_max: usize) -> Result<RankEstimate> {
    let p = r.nrows();
    if n < 2 {
        return Err(Error::parameter("ACT needs at least two observations"));
    }
    if r_max == 0 || r_max + 1 > p {
        return Err(Error::parameter(format!(
            "ACT needs 1 <= r_max <= p - 1, got r_max = {r_max}, p = {p}"
        )));
    }
    let values = descending_eigenvalues(r)?;
    let threshold = 1.0 + (p as f64 / (n as f64 - 1.0)).sqrt();
    let mut notes = Vec::new();
    let mut adjusted = vec![f64::NAN; r_max];
    let mut r_hat = 0usize;
    for j in 1..=r_max {
        let lam = values[j - 1];
        if !(lam > 0.0) {
            notes.push(format!("index {j} excluded: nonpositive eigenvalue"));
            continue;
        }
        let gap = values[j] - lam;
        if gap == 0.0 {
            notes.push(format!("index {j} excluded: tied eigenvalues {j} and {}", j + 1));
            continue;
        }
        let w_j = (p - j) as f64 / (n as f64 - 1.0);
        let mut inner = 4.0 / gap;
        for t in (j + 1)..=p {
            inner += 1.0 / (values[t - 1] - lam);
        }
        let denom = (1.0 - w_j) / lam - w_j / (p - j) as f64 * inner;
        let dag = 1.0 / denom;
        if !dag.is_finite() {
            notes.push(format!("index {j} excluded: adjusted eigenvalue is not finite"));
            continue;
        }
        adjusted[j - 1] = dag;
        if dag > threshold {
            r_hat = j;
        }
    }
    let mut criterion_values = adjusted;
    criterion_values.push(threshold);
    Ok(RankEstimate {
        method: RankMethod::Act,
        r_hat,
        eigenvalues_used: values,
        criterion_values,
        r_max,
        notes,
    })
}

/// Diagonal-selection threshold used by DT.
pub fn dt_diagonal_threshold(n: usize, p: usize) -> f64 {
    2.0 + 6.0 * ((p as f64).ln() / n as f64).sqrt()
}

/// Eigenvalue threshold used by DT once |J| variables are selected.
pub fn dt_eigen_threshold(j_count: usize, n: usize, p: usize) -> f64 {
    let n = n as f64;
    let inflation = (2.0 * (1.0 + j_count as f64) * (1.0 + (p as f64).ln()) + 6.0 * n.ln()) / n;
    2.0 * (1.0 + (j_count as f64 / n).sqrt() + inflation.sqrt()).powi(2)
}

/// Diagonal thresholding estimator: perturbs the data with standard normal
/// noise, keeps the variables whose perturbed variance clears a diagonal
/// threshold, and counts the leading eigenvalues of that submatrix above a
/// second threshold. The only randomized estimator; draws come from the
/// caller's RNG.
pub fn estimate_dt<R: Rng + ?Sized>(
    data: &ArrayView2<'_, f64>,
    r_max: usize,
    rng: &mut R,
) -> Result<RankEstimate> {
    let n = data.nrows();
    let p = data.ncols();
    if n == 0 || p == 0 {
        return Err(Error::dimension("DT needs a nonempty data matrix"));
    }
    if r_max == 0 {
        return Err(Error::parameter("r_max must be at least 1"));
    }
    let mut perturbed = data.to_owned();
    for v in perturbed.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v += e;
    }
    let diag_thr = dt_diagonal_threshold(n, p);
    let mut selected = Vec::new();
    for j in 0..p {
        let var = perturbed.column(j).iter().map(|x| x * x).sum::<f64>() / n as f64;
        if var >= diag_thr {
            selected.push(j);
        }
    }
    let mut notes = vec![format!("selected {} of {p} variables", selected.len())];
    if selected.is_empty() {
        return Ok(RankEstimate {
            method: RankMethod::Dt,
            r_hat: 0,
            eigenvalues_used: Vec::new(),
            criterion_values: vec![diag_thr],
            r_max,
            notes,
        });
    }
    let sub = {
        let cols: Vec<_> = selected
            .iter()
            .map(|&j| perturbed.column(j).to_owned())
            .collect();
        let mut x = Array2::<f64>::zeros((n, selected.len()));
        for (c, col) in cols.iter().enumerate() {
            x.column_mut(c).assign(col);
        }
        x.t().dot(&x) / n as f64
    };
    let values = descending_eigenvalues(&sub.view())?;
    let eigen_thr = dt_eigen_threshold(selected.len(), n, p);
    let mut r_hat = 0usize;
    for j in 1..=r_max.min(values.len()) {
        if values[j - 1] > eigen_thr {
            r_hat = j;
        }
    }
    notes.push(format!("eigenvalue threshold {eigen_thr:.6}"));
    Ok(RankEstimate {
        method: RankMethod::Dt,
        r_hat,
        eigenvalues_used: values,
        criterion_values: vec![diag_thr, eigen_thr],
        r_max,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngHandle;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    fn diag(values: &[f64]) -> Array2<f64> {
        let p = values.len();
        let mut m = Array2::<f64>::zeros((p, p));
        for (j, &v) in values.iter().enumerate() {
            m[[j, j]] = v;
        }
        m
    }

    #[test]
    fn et_weight_matches_closed_form() {
        let expected = 2f64.powf(4.0 / 3.0) - 2f64.powf(2.0 / 3.0);
        assert_abs_diff_eq!(ET_WEIGHT, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(ET_WEIGHT, 0.932_441_047_821_547, epsilon = 1e-14);
    }

    #[test]
    fn et_counts_one_spike_above_unit_threshold() {
        // Spectrum (10, 1, ..., 1): both reference eigenvalues are 1, so the
        // threshold is exactly 1 and only the spike clears it.
        let s = diag(&[10.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let est = estimate_et(&s.view(), 3).unwrap();
        assert_eq!(est.r_hat, 1);
        assert_abs_diff_eq!(est.criterion_values[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn et_flat_spectrum_returns_zero() {
        let s = diag(&[2.0; 9]);
        let est = estimate_et(&s.view(), 4).unwrap();
        assert_eq!(est.r_hat, 0);
    }

    #[test]
    fn et_rejects_too_large_r_max() {
        let s = diag(&[1.0; 5]);
        assert!(estimate_et(&s.view(), 3).is_err());
    }

    #[test]
    fn er_picks_largest_ratio() {
        let s = diag(&[10.0, 2.0, 1.0, 0.9]);
        let est = estimate_er(&s.view(), 3).unwrap();
        assert_eq!(est.r_hat, 1);
        assert_abs_diff_eq!(est.criterion_values[0], 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(est.criterion_values[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(est.criterion_values[2], 1.0 / 0.9, epsilon = 1e-12);
    }

    #[test]
    fn er_constant_spectrum_breaks_ties_at_one() {
        let s = diag(&[3.0; 6]);
        let est = estimate_er(&s.view(), 4).unwrap();
        assert_eq!(est.r_hat, 1);
    }

    #[test]
    fn er_excludes_zero_denominators() {
        let s = diag(&[4.0, 2.0, 0.0, 0.0]);
        let est = estimate_er(&s.view(), 3).unwrap();
        assert_eq!(est.r_hat, 1);
        assert!(!est.notes.is_empty());
    }

    #[test]
    fn er_scale_equivariant() {
        let s = diag(&[7.0, 3.0, 2.5, 1.0, 0.5]);
        let scaled = &s * 13.7;
        let a = estimate_er(&s.view(), 4).unwrap();
        let b = estimate_er(&scaled.view(), 4).unwrap();
        assert_eq!(a.r_hat, b.r_hat);
    }

    #[test]
    fn gr_matches_hand_computed_criteria() {
        let s = diag(&[8.0, 4.0, 1.0, 0.5, 0.25]);
        let est = estimate_gr(&s.view(), 3).unwrap();
        assert_eq!(est.r_hat, 2);
        assert_abs_diff_eq!(est.criterion_values[0], 0.732_893_953_089_391_7, epsilon = 1e-12);
        assert_abs_diff_eq!(est.criterion_values[1], 1.403_973_882_726_686_7, epsilon = 1e-12);
        assert_abs_diff_eq!(est.criterion_values[2], 0.771_243_749_161_422_3, epsilon = 1e-12);
    }

    #[test]
    fn gr_self_similar_tails_break_ties_at_one() {
        // Eigenvalues chosen so the tail sums are exactly (1, 1/2, 1/4,
        // 1/8, 1/16): every criterion is exactly 1 and the tie-break picks
        // the smallest index.
        let s = diag(&[0.5, 0.25, 0.125, 0.0625, 0.04, 0.0225]);
        let est = estimate_gr(&s.view(), 3).unwrap();
        for &v in &est.criterion_values {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        }
        assert_eq!(est.r_hat, 1);
    }

    #[test]
    fn gr_scale_equivariant() {
        let s = diag(&[7.0, 3.0, 2.5, 1.0, 0.5]);
        let scaled = &s * 0.037;
        let a = estimate_gr(&s.view(), 4).unwrap();
        let b = estimate_gr(&scaled.view(), 4).unwrap();
        assert_eq!(a.r_hat, b.r_hat);
    }

    #[test]
    fn gr_zero_tail_is_excluded_or_fails() {
        let s = diag(&[4.0, 0.0, 0.0, 0.0]);
        assert!(estimate_gr(&s.view(), 3).is_err());
    }

    #[test]
    fn act_matches_hand_computed_adjustment() {
        // Spectrum (2.5, 0.7, 0.5, 0.3) with n = 101: the adjusted first
        // eigenvalue is 2.3511530 against threshold 1.2.
        let r = diag(&[2.5, 0.7, 0.5, 0.3]);
        let est = estimate_act(&r.view(), 101, 3).unwrap();
        assert_eq!(est.r_hat, 1);
        assert_abs_diff_eq!(est.criterion_values[0], 2.351_153_014_938_133_8, epsilon = 1e-10);
        let threshold = est.criterion_values.last().copied().unwrap();
        assert_abs_diff_eq!(threshold, 1.2, epsilon = 1e-12);
    }

    #[test]
    fn act_threshold_at_reference_scale() {
        // p = 1000, n = 100 gives 1 + sqrt(1000/99).
        assert_abs_diff_eq!(
            1.0 + (1000.0f64 / 99.0).sqrt(),
            4.178_208_630_818_641,
            epsilon = 1e-12
        );
    }

    #[test]
    fn act_identity_correlation_returns_zero() {
        let r = Array2::<f64>::eye(12);
        // Exactly tied eigenvalues are excluded; a near-identity spectrum
        // with small distinct perturbations must also stay below threshold.
        let est = estimate_act(&r.view(), 50, 5).unwrap();
        assert_eq!(est.r_hat, 0);
        let mut vals = vec![0.0; 12];
        for (i, v) in vals.iter_mut().enumerate() {
            *v = 1.0 + 0.01 * (6.0 - i as f64) / 6.0;
        }
        let r2 = diag(&vals);
        let est2 = estimate_act(&r2.view(), 50, 5).unwrap();
        assert_eq!(est2.r_hat, 0);
    }

    #[test]
    fn dt_thresholds_match_hand_values() {
        assert_abs_diff_eq!(
            dt_eigen_threshold(10, 100, 1000),
            14.972_406_301_606_971,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            dt_diagonal_threshold(100, 1000),
            3.576_956_530_927_079_6,
            epsilon = 1e-12
        );
    }

    #[test]
    fn dt_pure_noise_selects_nothing() {
        // Unit-variance noise plus the unit perturbation has diagonal near 2,
        // below the selection threshold 2 + 6 sqrt(log p / n).
        let mut rng = RngHandle::new(41, 0).rng();
        let n = 200;
        let p = 40;
        let mut data = Array2::<f64>::zeros((n, p));
        for v in data.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let est = estimate_dt(&data.view(), 10, &mut rng).unwrap();
        assert_eq!(est.r_hat, 0);
    }

    #[test]
    fn dt_detects_a_strong_spike() {
        // One factor with loading 4 on the first 8 variables: perturbed
        // variances near 18 clear the diagonal threshold and the leading
        // eigenvalue of the selected block is far above the eigen threshold.
        let mut rng = RngHandle::new(42, 0).rng();
        let n = 200;
        let p = 40;
        let mut data = Array2::<f64>::zeros((n, p));
        for i in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            for j in 0..p {
                let e: f64 = rng.sample(StandardNormal);
                let b = if j < 8 { 4.0 } else { 0.0 };
                data[[i, j]] = b * z + e;
            }
        }
        let est = estimate_dt(&data.view(), 10, &mut rng).unwrap();
        assert_eq!(est.r_hat, 1, "notes: {:?}", est.notes);
    }

    #[test]
    fn dt_is_reproducible_under_a_fixed_stream() {
        let mut data = Array2::<f64>::zeros((50, 10));
        let mut rng = RngHandle::new(43, 0).rng();
        for v in data.iter_mut() {
            *v = rng.sample::<f64, _>(StandardNormal) * 2.0;
        }
        let a = estimate_dt(&data.view(), 5, &mut RngHandle::new(7, 3).rng()).unwrap();
        let b = estimate_dt(&data.view(), 5, &mut RngHandle::new(7, 3).rng()).unwrap();
        assert_eq!(a.r_hat, b.r_hat);
        assert_eq!(a.eigenvalues_used, b.eigenvalues_used);
    }

    #[test]
    fn covariance_uses_divisor_n_without_centering() {
        let data = ndarray::array![[2.0, 0.0], [0.0, 2.0]];
        let s = sample_covariance(data.view(), false).unwrap();
        assert_abs_diff_eq!(s[[0, 0]], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s[[1, 1]], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s[[0, 1]], 0.0, epsilon = 1e-15);
        // One observation gives the rank-1 outer product.
        let one = ndarray::array![[1.0, 2.0]];
        let s1 = sample_covariance(one.view(), false).unwrap();
        assert_abs_diff_eq!(s1[[0, 0]], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s1[[0, 1]], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s1[[1, 1]], 4.0, epsilon = 1e-15);
    }

    #[test]
    fn centering_removes_the_mean() {
        let data = ndarray::array![[1.0, 10.0], [3.0, 10.0]];
        let s = sample_covariance(data.view(), true).unwrap();
        assert_abs_diff_eq!(s[[0, 0]], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s[[1, 1]], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn correlation_has_unit_diagonal() {
        let mut rng = RngHandle::new(44, 0).rng();
        let mut data = Array2::<f64>::zeros((30, 4));
        for v in data.iter_mut() {
            *v = rng.sample::<f64, _>(StandardNormal) * 3.0 + 1.0;
        }
        let r = sample_correlation(data.view(), false).unwrap();
        for j in 0..4 {
            assert_eq!(r[[j, j]], 1.0);
        }
        // Standardized data: covariance already has unit diagonal, so the
        // correlation equals it entrywise.
        let s = sample_covariance(data.view(), false).unwrap();
        let mut standardized = data.clone();
        for j in 0..4 {
            let sd = s[[j, j]].sqrt();
            standardized.column_mut(j).mapv_inplace(|x| x / sd);
        }
        let s_std = sample_covariance(standardized.view(), false).unwrap();
        let r_std = sample_correlation(standardized.view(), false).unwrap();
        for j in 0..4 {
            for k in 0..4 {
                assert_abs_diff_eq!(s_std[[j, k]], r_std[[j, k]], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn correlation_rejects_constant_columns() {
        let data = ndarray::array![[0.0, 1.0], [0.0, 2.0]];
        assert!(sample_correlation(data.view(), true).is_err());
    }

    #[test]
    fn estimates_are_sample_order_invariant() {
        let mut rng = RngHandle::new(45, 0).rng();
        let n = 60;
        let p = 12;
        let mut data = Array2::<f64>::zeros((n, p));
        for i in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            for j in 0..p {
                let e: f64 = rng.sample(StandardNormal);
                let b = if j < 4 { 2.0 } else { 0.0 };
                data[[i, j]] = b * z + e;
            }
        }
        let mut reversed = Array2::<f64>::zeros((n, p));
        for i in 0..n {
            reversed.row_mut(i).assign(&data.row(n - 1 - i));
        }
        let s_a = sample_covariance(data.view(), false).unwrap();
        let s_b = sample_covariance(reversed.view(), false).unwrap();
        let a = estimate_er(&s_a.view(), 5).unwrap();
        let b = estimate_er(&s_b.view(), 5).unwrap();
        assert_eq!(a.r_hat, b.r_hat);
        let g_a = estimate_gr(&s_a.view(), 5).unwrap();
        let g_b = estimate_gr(&s_b.view(), 5).unwrap();
        assert_eq!(g_a.r_hat, g_b.r_hat);
    }
}
