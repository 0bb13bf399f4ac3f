//! Duplication scoring and budgeted retention — the reduction algorithm
//! itself.
//!
//! The pipeline is: select pivots, compute the cosine duplication score of
//! every token against every pivot, aggregate the per-pivot scores per
//! token, then keep the `budget` tokens with the lowest aggregated
//! duplication (pivots are always kept; on tagged matrices text tokens pass
//! through untouched and only visual tokens compete for the remaining
//! slots).
//!
//! All dot products and norms accumulate in f64 in coordinate order, so the
//! optimized path here is bit-identical to the naive reference loops in
//! [`crate::synth::brute_force_prune`]. The per-token work is parallelized
//! across tokens, which does not change any accumulation order.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pivot::{select_pivots, PivotSet};
use crate::types::{
    Aggregator, AttentionMap, AuxFeatures, EpsilonMode, ReductionConfig, TokenMatrix,
};

/// Norms below this threshold are treated as zero; the cosine against a
/// zero-norm token is defined as 0.
pub const ZERO_NORM_EPS: f64 = 1e-12;

/// A `k x n` matrix of duplication scores; entry `(i, j)` is the cosine
/// similarity between pivot `i` and token `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DupMatrix {
    k: usize,
    n: usize,
    data: Vec<f64>,
}

impl DupMatrix {
    #[cfg(test)]
    pub(crate) fn from_raw(k: usize, n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), k * n);
        Self { k, n, data }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry(&self, pivot: usize, token: usize) -> f64 {
        self.data[pivot * self.n + token]
    }

    pub fn pivot_row(&self, pivot: usize) -> &[f64] {
        &self.data[pivot * self.n..(pivot + 1) * self.n]
    }
}

/// Sequential L2 norm of a row, accumulated in f64 in coordinate order.
pub(crate) fn l2_norm(row: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for &v in row {
        let v = v as f64;
        acc += v * v;
    }
    acc.sqrt()
}

/// Cosine similarity with the zero-norm convention, naive evaluation.
/// Shared by the bound verifier; the brute-force oracle carries its own
/// copy of these loops.
pub(crate) fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na < ZERO_NORM_EPS || nb < ZERO_NORM_EPS {
        return 0.0;
    }
    let mut dot = 0.0f64;
    for t in 0..a.len() {
        dot += a[t] as f64 * b[t] as f64;
    }
    dot / (na * nb)
}

/// Computes the full pivot-by-token duplication matrix.
///
/// Tokens are processed independently (and in parallel). For each token the
/// `k` pivot dot products advance together over the coordinate axis — the
/// pivot values are interleaved per coordinate so the `k` accumulator lanes
/// vectorize — but every individual accumulator still sums its products in
/// plain coordinate order, so each entry is bit-identical to the naive
/// two-loop evaluation in [`crate::synth::brute_force_prune`].
pub fn dup_scores(pivots: &PivotSet, tokens: &TokenMatrix) -> DupMatrix {
    let n = tokens.n();
    let d = tokens.d();
    let k = pivots.k();
    let pivot_rows: Vec<&[f32]> = pivots.indices().iter().map(|&i| tokens.row(i)).collect();
    let pivot_norms: Vec<f64> = pivot_rows.iter().map(|r| l2_norm(r)).collect();

    // interleaved[t*k + i] = pivot i, coordinate t (f32->f64 is exact)
    let mut interleaved = vec![0.0f64; d * k];
    for (t, slot) in interleaved.chunks_exact_mut(k).enumerate() {
        for i in 0..k {
            slot[i] = pivot_rows[i][t] as f64;
        }
    }

    // column-major scratch: per token, its k scores
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let row = tokens.row(j);
            let mut dots = vec![0.0f64; k];
            let mut norm_acc = 0.0f64;
            for (&xv, pivot_vals) in row.iter().zip(interleaved.chunks_exact(k)) {
                let x = xv as f64;
                norm_acc += x * x;
                for (acc, &p) in dots.iter_mut().zip(pivot_vals) {
                    *acc += p * x;
                }
            }
            let token_norm = norm_acc.sqrt();
            for (i, dot) in dots.iter_mut().enumerate() {
                *dot = if pivot_norms[i] < ZERO_NORM_EPS || token_norm < ZERO_NORM_EPS {
                    0.0
                } else {
                    *dot / (pivot_norms[i] * token_norm)
                };
            }
            dots
        })
        .collect();

    let mut data = vec![0.0f64; k * n];
    for (j, column) in columns.iter().enumerate() {
        for i in 0..k {
            data[i * n + j] = column[i];
        }
    }
    DupMatrix { k, n, data }
}

/// Reduces each token's pivot scores to a single duplication value.
pub fn aggregate_dup(dup: &DupMatrix, aggregator: Aggregator) -> Vec<f64> {
    let (k, n) = (dup.k, dup.n);
    debug_assert!(k >= 1);
    let mut agg = vec![0.0f64; n];
    for (j, out) in agg.iter_mut().enumerate() {
        *out = match aggregator {
            Aggregator::Max => {
                let mut best = dup.entry(0, j);
                for i in 1..k {
                    let v = dup.entry(i, j);
                    if v > best {
                        best = v;
                    }
                }
                best
            }
            Aggregator::Min => {
                let mut best = dup.entry(0, j);
                for i in 1..k {
                    let v = dup.entry(i, j);
                    if v < best {
                        best = v;
                    }
                }
                best
            }
            Aggregator::Mean => {
                let mut sum = 0.0f64;
                for i in 0..k {
                    sum += dup.entry(i, j);
                }
                sum / k as f64
            }
        };
    }
    agg
}

/// How a retention result was produced; bound verification only applies to
/// max-aggregated reductions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReductionMethod {
    Dart {
        aggregator: Aggregator,
        epsilon_mode: EpsilonMode,
    },
    Random,
    Importance,
}

/// The outcome of a reduction: which tokens survive, the pivots used, the
/// per-token aggregated duplication, and the realized cut.
///
/// `tau` is the largest aggregated duplication among retained tokens that
/// actually competed for a slot (prunable non-pivots), `NEG_INFINITY` if
/// none did. `eps_eff` is the smallest aggregated duplication among pruned
/// tokens, `INFINITY` if nothing was pruned; under max aggregation every
/// pruned token is therefore an `eps_eff`-duplicate of some pivot.
#[derive(Debug, Clone, PartialEq)]
pub struct RetentionResult {
    pub retained: Vec<usize>,
    pub pivots: PivotSet,
    pub agg_dup: Vec<f64>,
    pub tau: f64,
    pub eps_eff: f64,
    pub method: ReductionMethod,
}

impl RetentionResult {
    pub fn budget(&self) -> usize {
        self.retained.len()
    }

    pub fn n(&self) -> usize {
        self.agg_dup.len()
    }

    /// Sorted indices that were pruned.
    pub fn pruned(&self) -> Vec<usize> {
        let retained: std::collections::HashSet<usize> = self.retained.iter().copied().collect();
        (0..self.n()).filter(|i| !retained.contains(i)).collect()
    }
}

/// Indices every reduction must keep: the pivots, plus all text tokens on
/// tagged matrices.
fn forced_indices(tokens: &TokenMatrix, pivots: &PivotSet) -> Vec<usize> {
    (0..tokens.n())
        .filter(|&i| pivots.contains(i) || !tokens.is_prunable(i))
        .collect()
}

fn cut_stats(agg: &[f64], kept_candidates: &[usize], pruned: &[usize]) -> (f64, f64) {
    let mut tau = f64::NEG_INFINITY;
    for &i in kept_candidates {
        if agg[i] > tau {
            tau = agg[i];
        }
    }
    let mut eps = f64::INFINITY;
    for &i in pruned {
        if agg[i] < eps {
            eps = agg[i];
        }
    }
    (tau, eps)
}

/// Keeps the pivots (and any forced text tokens) plus the least-duplicated
/// remaining tokens until `budget` is met. Ties break toward the lower
/// index.
pub fn retain(
    tokens: &TokenMatrix,
    pivots: &PivotSet,
    agg_dup: Vec<f64>,
    aggregator: Aggregator,
    budget: usize,
) -> Result<RetentionResult> {
    let n = tokens.n();
    debug_assert_eq!(agg_dup.len(), n);
    let forced = forced_indices(tokens, pivots);
    if budget < forced.len() || budget > n {
        return Err(Error::BudgetOutOfRange {
            budget,
            min: forced.len(),
            max: n,
        });
    }
    let candidates: Vec<usize> = (0..n)
        .filter(|&i| !pivots.contains(i) && tokens.is_prunable(i))
        .collect();
    let keep = budget - forced.len();
    let kept =
        crate::pivot::top_k_indices(&agg_dup, &candidates, keep, crate::pivot::Direction::Min);

    let kept_set: std::collections::HashSet<usize> = kept.iter().copied().collect();
    let pruned: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|i| !kept_set.contains(i))
        .collect();
    let (tau, eps_eff) = cut_stats(&agg_dup, &kept, &pruned);

    let mut retained = forced;
    retained.extend(kept);
    retained.sort_unstable();

    Ok(RetentionResult {
        retained,
        pivots: pivots.clone(),
        agg_dup,
        tau,
        eps_eff,
        method: ReductionMethod::Dart {
            aggregator,
            epsilon_mode: EpsilonMode::Global,
        },
    })
}

/// Per-pivot variant of the cut: the tokens to prune are split into equal
/// shares (remainder to the earlier pivots in index order) and each pivot
/// prunes its own most-duplicate candidates that are still unclaimed.
pub fn retain_per_pivot(
    tokens: &TokenMatrix,
    pivots: &PivotSet,
    dup: &DupMatrix,
    agg_dup: Vec<f64>,
    aggregator: Aggregator,
    budget: usize,
) -> Result<RetentionResult> {
    let n = tokens.n();
    let k = pivots.k();
    debug_assert!(k >= 1);
    let forced = forced_indices(tokens, pivots);
    if budget < forced.len() || budget > n {
        return Err(Error::BudgetOutOfRange {
            budget,
            min: forced.len(),
            max: n,
        });
    }
    let candidates: Vec<usize> = (0..n)
        .filter(|&i| !pivots.contains(i) && tokens.is_prunable(i))
        .collect();
    let prune_total = candidates.len() - (budget - forced.len());
    let base = prune_total / k;
    let remainder = prune_total % k;

    let mut pruned_set = vec![false; n];
    for pivot_pos in 0..k {
        let share = base + usize::from(pivot_pos < remainder);
        // this pivot's view: candidates by descending duplication
        let mut order: Vec<usize> = candidates.clone();
        let row = dup.pivot_row(pivot_pos);
        order.sort_by(|&a, &b| {
            row[b]
                .partial_cmp(&row[a])
                .expect("duplication scores are never NaN")
                .then(a.cmp(&b))
        });
        let mut taken = 0;
        for idx in order {
            if taken == share {
                break;
            }
            if !pruned_set[idx] {
                pruned_set[idx] = true;
                taken += 1;
            }
        }
    }

    let kept: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&i| !pruned_set[i])
        .collect();
    let pruned: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&i| pruned_set[i])
        .collect();
    let (tau, eps_eff) = cut_stats(&agg_dup, &kept, &pruned);

    let mut retained = forced;
    retained.extend(kept);
    retained.sort_unstable();

    Ok(RetentionResult {
        retained,
        pivots: pivots.clone(),
        agg_dup,
        tau,
        eps_eff,
        method: ReductionMethod::Dart {
            aggregator,
            epsilon_mode: EpsilonMode::PerPivotShare,
        },
    })
}

/// End-to-end reduction: pivot selection, duplication scoring, aggregation,
/// and budgeted retention. Deterministic for fixed inputs.
pub fn dart_prune(
    tokens: &TokenMatrix,
    aux: Option<&AuxFeatures>,
    attn: Option<&AttentionMap>,
    cfg: &ReductionConfig,
) -> Result<RetentionResult> {
    let budget = cfg.resolve_budget(tokens.n())?;
    let pivots = select_pivots(tokens, aux, attn, cfg)?;
    let dup = dup_scores(&pivots, tokens);
    let agg = aggregate_dup(&dup, cfg.aggregator);
    match cfg.epsilon_mode {
        EpsilonMode::Global => retain(tokens, &pivots, agg, cfg.aggregator, budget),
        EpsilonMode::PerPivotShare => {
            retain_per_pivot(tokens, &pivots, &dup, agg, cfg.aggregator, budget)
        }
    }
}
