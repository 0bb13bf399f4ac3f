//! Reference pruning strategies and the score-recalibration diagnostic.
//!
//! `random_prune` and `importance_prune` are the two baselines the
//! duplication method is compared against. `recalibration_bias` quantifies
//! the drift that static importance scoring ignores: restrict the attention
//! map to a retained subset, renormalize its rows, and measure how much the
//! per-token scores move.

use rayon::prelude::*;

use crate::dedup::{ReductionMethod, RetentionResult};
use crate::error::{Error, Result};
use crate::pivot::{attention_received, top_k_indices, Direction, PivotSet};
use crate::rng::Xoshiro256PlusPlus;
use crate::types::AttentionMap;

/// Retains `budget` tokens drawn uniformly without replacement.
pub fn random_prune(n: usize, budget: usize, seed: u64) -> Result<RetentionResult> {
    if budget == 0 || budget > n {
        return Err(Error::BudgetOutOfRange {
            budget,
            min: 1,
            max: n,
        });
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let retained = rng.sample_distinct(n, budget);
    Ok(RetentionResult {
        retained,
        pivots: PivotSet::empty(),
        agg_dup: vec![0.0; n],
        tau: f64::NEG_INFINITY,
        eps_eff: f64::INFINITY,
        method: ReductionMethod::Random,
    })
}

/// Retains the `budget` highest-scoring tokens (the importance paradigm).
/// `tau` records the smallest retained score.
pub fn importance_prune(scores: &[f64], budget: usize) -> Result<RetentionResult> {
    let n = scores.len();
    if budget == 0 || budget > n {
        return Err(Error::BudgetOutOfRange {
            budget,
            min: 1,
            max: n,
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::BadConfig("importance scores must be finite".into()));
    }
    let candidates: Vec<usize> = (0..n).collect();
    let retained = top_k_indices(scores, &candidates, budget, Direction::Max);
    let mut tau = f64::INFINITY;
    for &i in &retained {
        if scores[i] < tau {
            tau = scores[i];
        }
    }
    Ok(RetentionResult {
        retained,
        pivots: PivotSet::empty(),
        agg_dup: scores.to_vec(),
        tau,
        eps_eff: f64::INFINITY,
        method: ReductionMethod::Importance,
    })
}

/// Monte-Carlo estimate of the recalibration drift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Total score drift for one retained subset: restrict the map to
/// `subset x subset`, renormalize each row, recompute the received scores,
/// and sum the per-token differences against the full-map scores.
fn subset_drift(map: &AttentionMap, full_scores: &[f64], subset: &[usize]) -> f64 {
    let b = subset.len();
    let mut restricted_scores = vec![0.0f64; b];
    for &j in subset {
        let row = map.row(j);
        let mut row_sum = 0.0f64;
        for &i in subset {
            row_sum += row[i] as f64;
        }
        if row_sum > 0.0 {
            for (pos, &i) in subset.iter().enumerate() {
                restricted_scores[pos] += row[i] as f64 / row_sum;
            }
        }
    }
    let mut drift = 0.0f64;
    for (pos, &i) in subset.iter().enumerate() {
        let restricted = restricted_scores[pos] / b as f64;
        drift += restricted - full_scores[i];
    }
    drift
}

/// Estimates the expected score drift over random retained subsets of size
/// `budget`. Sample `s` draws its subset from a generator seeded with
/// `seed + s` (through the documented SplitMix64 expansion), so the
/// estimate is deterministic and samples can run in parallel.
pub fn recalibration_bias(
    map: &AttentionMap,
    budget: usize,
    samples: usize,
    seed: u64,
) -> Result<BiasEstimate> {
    let n = map.n();
    if budget == 0 || budget > n {
        return Err(Error::BudgetOutOfRange {
            budget,
            min: 1,
            max: n,
        });
    }
    if samples == 0 {
        return Err(Error::BadConfig("samples must be at least 1".into()));
    }
    let full_scores = attention_received(map);
    let drifts: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed.wrapping_add(s as u64));
            let subset = rng.sample_distinct(n, budget);
            subset_drift(map, &full_scores, &subset)
        })
        .collect();

    let mut sum = 0.0f64;
    for &d in &drifts {
        sum += d;
    }
    let mean = sum / samples as f64;
    let std_error = if samples > 1 {
        let mut ss = 0.0f64;
        for &d in &drifts {
            let e = d - mean;
            ss += e * e;
        }
        (ss / ((samples - 1) as f64 * samples as f64)).sqrt()
    } else {
        0.0
    };
    Ok(BiasEstimate {
        mean,
        std_error,
        samples,
    })
}

/// Maximum map size accepted by the exhaustive enumeration.
pub const EXHAUSTIVE_LIMIT: usize = 12;

/// Exact expected drift by enumerating every size-`budget` subset.
/// Only feasible for small maps; guarded at `n <= 12`.
pub fn recalibration_bias_exhaustive(map: &AttentionMap, budget: usize) -> Result<f64> {
    let n = map.n();
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::TooLarge {
            n,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    if budget == 0 || budget > n {
        return Err(Error::BudgetOutOfRange {
            budget,
            min: 1,
            max: n,
        });
    }
    let full_scores = attention_received(map);
    let mut subset: Vec<usize> = (0..budget).collect();
    let mut sum = 0.0f64;
    let mut count = 0usize;
    loop {
        sum += subset_drift(map, &full_scores, &subset);
        count += 1;
        // next combination in lexicographic order
        let mut i = budget;
        loop {
            if i == 0 {
                return Ok(sum / count as f64);
            }
            i -= 1;
            if subset[i] != i + n - budget {
                break;
            }
        }
        subset[i] += 1;
        for j in i + 1..budget {
            subset[j] = subset[j - 1] + 1;
        }
    }
}
