//! Sign-and-permutation alignment of posterior loading snapshots.
//!
//! A loading matrix is identified only up to signed column permutations, so
//! snapshots from one or more chains are rotated onto a common frame before
//! averaging: each snapshot gets the signed permutation minimizing its
//! Frobenius distance to a pivot, found exactly by solving an assignment
//! problem, and the pivot is refined to the running mean until the
//! permutations stabilize.

use ndarray::Array2;
use rand::seq::index::sample as sample_indices;

use crate::error::{Error, Result};
use crate::rng::RngHandle;

/// Fixed seed for the pivot-selection subsample; alignment is a pure
/// function of its input.
const PIVOT_SEED: u64 = 0x414c_4947;

/// Snapshots drawn into the pivot-selection distance computation.
const PIVOT_SUBSAMPLE: usize = 32;

/// Upper bound on pivot-refinement rounds.
const MAX_ROUNDS: usize = 20;

/// Fraction of snapshots in which a column must be nonzero to take part in
/// the matching; rarely active columns stay where they are.
const ACTIVE_FRACTION: f64 = 0.10;

/// Exact solver for the square min-cost assignment problem (Hungarian
/// method with potentials, O(n^3)). Returns `assign` with `assign[row] =
/// column`.
pub fn min_cost_assignment(cost: &Array2<f64>) -> Result<Vec<usize>> {
    let n = cost.nrows();
    if n != cost.ncols() {
        return Err(Error::dimension("assignment needs a square cost matrix"));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::numerical("assignment costs must be finite"));
    }
    // 1-based arrays; p[j] is the row matched to column j, p[0] the row
    // currently being inserted.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    Ok(assign)
}

/// Result of aligning a set of snapshots.
#[derive(Debug, Clone)]
pub struct Alignment {
    /// Entrywise mean of the aligned snapshots.
    pub consensus: Array2<f64>,
    pub aligned: Vec<Array2<f64>>,
    /// Columns that took part in the matching, ascending.
    pub columns_used: Vec<usize>,
    /// Pivot-refinement rounds actually run.
    pub rounds: usize,
}

/// Signed permutation of one snapshot onto the pivot, both restricted to
/// `cols`: returns (source column, sign) for each target position, chosen
/// to minimize the total squared distance.
fn best_match(
    snapshot: &Array2<f64>,
    pivot: &Array2<f64>,
    cols: &[usize],
) -> Result<Vec<(usize, f64)>> {
    let m = cols.len();
    let mut cost = Array2::<f64>::zeros((m, m));
    let mut snap_sq = vec![0.0; m];
    let mut pivot_sq = vec![0.0; m];
    for (a, &k) in cols.iter().enumerate() {
        snap_sq[a] = snapshot.column(k).iter().map(|x| x * x).sum();
        pivot_sq[a] = pivot.column(k).iter().map(|x| x * x).sum();
    }
    let mut dots = Array2::<f64>::zeros((m, m));
    for (a, &k) in cols.iter().enumerate() {
        for (b, &l) in cols.iter().enumerate() {
            let dot: f64 = snapshot
                .column(k)
                .iter()
                .zip(pivot.column(l).iter())
                .map(|(x, y)| x * y)
                .sum();
            dots[[a, b]] = dot;
            // min over the sign of || snap_k -+ pivot_l ||^2.
            cost[[a, b]] = snap_sq[a] + pivot_sq[b] - 2.0 * dot.abs();
        }
    }
    let assign = min_cost_assignment(&cost)?;
    let mut plan = vec![(0usize, 1.0); m];
    for (a, &b) in assign.iter().enumerate() {
        let sign = if dots[[a, b]] >= 0.0 { 1.0 } else { -1.0 };
        plan[b] = (a, sign);
    }
    Ok(plan)
}

/// Applies a match plan: target position b (within `cols`) receives the
/// sign-adjusted source column; columns outside `cols` are left in place.
fn apply_plan(snapshot: &Array2<f64>, cols: &[usize], plan: &[(usize, f64)]) -> Array2<f64> {
    let mut out = snapshot.clone();
    for (b, &(a, sign)) in plan.iter().enumerate() {
        let src = snapshot.column(cols[a]);
        let mut dst = out.column_mut(cols[b]);
        for (d, &s) in dst.iter_mut().zip(src.iter()) {
            *d = sign * s;
        }
    }
    out
}

/// Aligns snapshots onto a common signed-permutation frame and returns the
/// consensus mean. The pivot starts as the snapshot closest in total
/// Frobenius distance to a fixed-seed subsample and is refined to the
/// running mean until no permutation changes (at most `MAX_ROUNDS` rounds).
pub fn align_loadings(snapshots: &[Array2<f64>]) -> Result<Alignment> {
    if snapshots.is_empty() {
        return Err(Error::parameter("no snapshots to align"));
    }
    let shape = snapshots[0].dim();
    if snapshots.iter().any(|s| s.dim() != shape) {
        return Err(Error::dimension("snapshots have mismatched shapes"));
    }
    let (_, q) = shape;
    if snapshots.len() == 1 {
        return Ok(Alignment {
            consensus: snapshots[0].clone(),
            aligned: vec![snapshots[0].clone()],
            columns_used: (0..q)
                .filter(|&k| snapshots[0].column(k).iter().any(|&x| x != 0.0))
                .collect(),
            rounds: 0,
        });
    }

    let m = snapshots.len();
    let mut active_counts = vec![0usize; q];
    for snap in snapshots {
        for (k, count) in active_counts.iter_mut().enumerate() {
            if snap.column(k).iter().any(|&x| x != 0.0) {
                *count += 1;
            }
        }
    }
    let needed = (ACTIVE_FRACTION * m as f64).ceil().max(1.0) as usize;
    let cols: Vec<usize> = (0..q).filter(|&k| active_counts[k] >= needed).collect();
    if cols.is_empty() {
        return Err(Error::numerical("no column is active often enough to align"));
    }

    // Pivot choice: total restricted Frobenius distance to a fixed random
    // subsample of snapshots.
    let mut rng = RngHandle::new(PIVOT_SEED, 0).rng();
    let sub: Vec<usize> = if m <= PIVOT_SUBSAMPLE {
        (0..m).collect()
    } else {
        sample_indices(&mut rng, m, PIVOT_SUBSAMPLE).into_vec()
    };
    let restricted_dist = |a: &Array2<f64>, b: &Array2<f64>| -> f64 {
        cols.iter()
            .map(|&k| {
                a.column(k)
                    .iter()
                    .zip(b.column(k).iter())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    };
    let pivot_idx = (0..m)
        .min_by(|&a, &b| {
            let da: f64 = sub.iter().map(|&i| restricted_dist(&snapshots[a], &snapshots[i])).sum();
            let db: f64 = sub.iter().map(|&i| restricted_dist(&snapshots[b], &snapshots[i])).sum();
            da.partial_cmp(&db).expect("finite distances")
        })
        .expect("nonempty snapshot list");

    let mut pivot = snapshots[pivot_idx].clone();
    let mut plans: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    let mut rounds = 0;
    for round in 1..=MAX_ROUNDS {
        rounds = round;
        let mut changed = false;
        let mut mean = Array2::<f64>::zeros(shape);
        for (i, snap) in snapshots.iter().enumerate() {
            let plan = best_match(snap, &pivot, &cols)?;
            if plan != plans[i] {
                changed = true;
                plans[i] = plan;
            }
            mean += &apply_plan(snap, &cols, &plans[i]);
        }
        mean /= m as f64;
        pivot = mean;
        if !changed {
            break;
        }
    }

    let aligned: Vec<Array2<f64>> = snapshots
        .iter()
        .zip(&plans)
        .map(|(snap, plan)| apply_plan(snap, &cols, plan))
        .collect();
    let mut consensus = Array2::<f64>::zeros(shape);
    for a in &aligned {
        consensus += a;
    }
    consensus /= m as f64;
    Ok(Alignment {
        consensus,
        aligned,
        columns_used: cols,
        rounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngHandle;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = RngHandle::new(seed, 0).rng();
        let mut m = Array2::<f64>::zeros((rows, cols));
        for v in m.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        m
    }

    fn brute_force_assignment(cost: &Array2<f64>) -> f64 {
        fn recurse(cost: &Array2<f64>, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            let n = cost.nrows();
            if row == n {
                if acc < *best {
                    *best = acc;
                }
                return;
            }
            for col in 0..n {
                if !used[col] {
                    used[col] = true;
                    recurse(cost, row + 1, used, acc + cost[[row, col]], best);
                    used[col] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        recurse(cost, 0, &mut vec![false; cost.ncols()], 0.0, &mut best);
        best
    }

    #[test]
    fn assignment_matches_brute_force() {
        for seed in 0..25u64 {
            let n = 1 + (seed as usize % 6);
            let cost = random_matrix(n, n, 100 + seed);
            let assign = min_cost_assignment(&cost).unwrap();
            // Valid permutation.
            let mut seen = vec![false; n];
            let mut total = 0.0;
            for (row, &col) in assign.iter().enumerate() {
                assert!(!seen[col]);
                seen[col] = true;
                total += cost[[row, col]];
            }
            let best = brute_force_assignment(&cost);
            assert!((total - best).abs() < 1e-9, "seed {seed}: {total} vs {best}");
        }
    }

    #[test]
    fn assignment_rejects_bad_input() {
        let cost = Array2::<f64>::zeros((2, 3));
        assert!(min_cost_assignment(&cost).is_err());
        let mut bad = Array2::<f64>::zeros((2, 2));
        bad[[0, 0]] = f64::NAN;
        assert!(min_cost_assignment(&bad).is_err());
    }

    /// Applies a signed permutation: column k of the output is sign[k] times
    /// column perm[k] of the input.
    fn signed_permute(m: &Array2<f64>, perm: &[usize], signs: &[f64]) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros(m.dim());
        for (k, (&src, &sign)) in perm.iter().zip(signs).enumerate() {
            let col = m.column(src);
            let mut dst = out.column_mut(k);
            for (d, &s) in dst.iter_mut().zip(col.iter()) {
                *d = sign * s;
            }
        }
        out
    }

    #[test]
    fn aligning_a_signed_permutation_recovers_equality() {
        let base = random_matrix(12, 4, 200);
        let twisted = signed_permute(&base, &[2, 0, 3, 1], &[-1.0, 1.0, -1.0, 1.0]);
        let alignment = align_loadings(&[base.clone(), twisted]).unwrap();
        let (a, b) = (&alignment.aligned[0], &alignment.aligned[1]);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
        // The consensus is itself a signed permutation of the base.
        let mut matched = 0;
        for k in 0..4 {
            for l in 0..4 {
                let col = base.column(k);
                let cons = alignment.consensus.column(l);
                let plus: f64 = col.iter().zip(cons.iter()).map(|(x, y)| (x - y).abs()).sum();
                let minus: f64 = col.iter().zip(cons.iter()).map(|(x, y)| (x + y).abs()).sum();
                if plus < 1e-9 || minus < 1e-9 {
                    matched += 1;
                }
            }
        }
        assert_eq!(matched, 4);
    }

    #[test]
    fn single_snapshot_is_returned_unchanged() {
        let base = random_matrix(6, 3, 201);
        let alignment = align_loadings(&[base.clone()]).unwrap();
        assert_eq!(alignment.aligned.len(), 1);
        assert_eq!(alignment.consensus, base);
    }

    #[test]
    fn consensus_is_invariant_to_global_signed_permutations() {
        // Pre-twisting every snapshot by one fixed signed permutation must
        // leave the consensus unchanged up to a signed permutation.
        let mut snapshots = Vec::new();
        let base = random_matrix(10, 3, 202);
        let mut rng = RngHandle::new(203, 0).rng();
        for i in 0..8u64 {
            let mut noisy = base.clone();
            for v in noisy.iter_mut() {
                *v += 0.05 * rng.sample::<f64, _>(StandardNormal);
            }
            // Each snapshot arrives in its own random frame.
            let perm = match i % 3 {
                0 => vec![0, 1, 2],
                1 => vec![2, 0, 1],
                _ => vec![1, 2, 0],
            };
            let signs = match i % 2 {
                0 => vec![1.0, -1.0, 1.0],
                _ => vec![-1.0, 1.0, 1.0],
            };
            snapshots.push(signed_permute(&noisy, &perm, &signs));
        }
        let first = align_loadings(&snapshots).unwrap();
        let twisted: Vec<Array2<f64>> = snapshots
            .iter()
            .map(|s| signed_permute(s, &[1, 0, 2], &[-1.0, 1.0, -1.0]))
            .collect();
        let second = align_loadings(&twisted).unwrap();
        // Match the two consensus matrices column by column.
        let mut used = vec![false; 3];
        for k in 0..3 {
            let mut found = false;
            for l in 0..3 {
                if used[l] {
                    continue;
                }
                let a = first.consensus.column(k);
                let b = second.consensus.column(l);
                let plus: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum();
                let minus: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x + y).powi(2)).sum();
                if plus.min(minus) < 1e-12 {
                    used[l] = true;
                    found = true;
                    break;
                }
            }
            assert!(found, "column {k} has no counterpart");
        }
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let a = random_matrix(5, 2, 204);
        let b = random_matrix(5, 3, 205);
        assert!(align_loadings(&[a, b]).is_err());
        assert!(align_loadings(&[]).is_err());
    }

    #[test]
    fn rarely_active_columns_are_left_out_of_matching() {
        let mut snapshots = Vec::new();
        for seed in 0..10u64 {
            let mut snap = random_matrix(8, 3, 300 + seed);
            snap.column_mut(2).fill(0.0);
            snapshots.push(snap);
        }
        // Column 2 active in exactly one snapshot out of ten (10%): with the
        // >= ceil(0.1 m) rule one activation qualifies, so flip it fully off
        // to test exclusion.
        let alignment = align_loadings(&snapshots).unwrap();
        assert_eq!(alignment.columns_used, vec![0, 1]);
    }
}
