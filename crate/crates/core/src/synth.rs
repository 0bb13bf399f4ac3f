//! Synthetic token generators and a brute-force reduction oracle.
//!
//! The generators produce matrices with controlled duplication structure
//! (tight clusters, progressively over-smoothed rows). The oracle
//! re-implements the whole reduction pipeline with naive scalar loops and
//! explicit stable sorts; tests assert it matches the optimized path
//! bit-for-bit. Keep the two implementations independent — the oracle may
//! only share the documented PRNG, since the random draws are part of the
//! specified behavior.

use crate::dedup::{ReductionMethod, RetentionResult};
use crate::error::{Error, Result};
use crate::pivot::{PivotSet, StrategyKind};
use crate::rng::Xoshiro256PlusPlus;
use crate::types::{
    Aggregator, AttentionMap, AuxFeatures, BudgetSpec, EpsilonMode, Modality, NormalizeRows,
    ReductionConfig, TokenMatrix,
};

/// Upper size limit for the brute-force oracle.
pub const BRUTE_FORCE_LIMIT: usize = 256;

fn normalize_f64(v: &mut [f64]) {
    let mut acc = 0.0f64;
    for &x in v.iter() {
        acc += x * x;
    }
    let norm = acc.sqrt();
    if norm < 1e-12 {
        // deterministic fallback for the (measure-zero) degenerate draw
        v.fill(0.0);
        v[0] = 1.0;
    } else {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Generates `n` tokens in `clusters` tight groups: unit cluster centers
/// drawn uniformly on the sphere, tokens assigned round-robin
/// (`cluster = index % clusters`) and offset by `spread * gaussian` before
/// optional re-normalization.
pub fn gen_clustered(
    n: usize,
    d: usize,
    clusters: usize,
    spread: f64,
    seed: u64,
    normalize: NormalizeRows,
) -> Result<TokenMatrix> {
    if n == 0 || d == 0 || clusters == 0 || clusters > n || spread < 0.0 || !spread.is_finite() {
        return Err(Error::BadParams(format!(
            "gen_clustered(n={n}, d={d}, clusters={clusters}, spread={spread})"
        )));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut centers = vec![vec![0.0f64; d]; clusters];
    for center in &mut centers {
        for slot in center.iter_mut() {
            *slot = rng.gaussian();
        }
        normalize_f64(center);
    }
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        let center = &centers[i % clusters];
        let mut row: Vec<f64> = (0..d)
            .map(|c| center[c] + spread * rng.gaussian())
            .collect();
        if normalize == NormalizeRows::Yes {
            normalize_f64(&mut row);
        }
        data.extend(row.iter().map(|&v| v as f32));
    }
    TokenMatrix::new(n, d, data)
}

/// Generates `n` Gaussian rows and applies `steps` rounds of mixing toward
/// the running mean, `x_i <- (1-lambda) x_i + lambda * mean`, then optional
/// row normalization. Models representations drifting toward uniformity.
pub fn gen_oversmoothed(
    n: usize,
    d: usize,
    steps: usize,
    lambda: f64,
    seed: u64,
    normalize: NormalizeRows,
) -> Result<TokenMatrix> {
    if n == 0 || d == 0 || !(0.0..=1.0).contains(&lambda) {
        return Err(Error::BadParams(format!(
            "gen_oversmoothed(n={n}, d={d}, lambda={lambda})"
        )));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.gaussian()).collect())
        .collect();
    for _ in 0..steps {
        let mut mean = vec![0.0f64; d];
        for row in &rows {
            for (c, slot) in mean.iter_mut().enumerate() {
                *slot += row[c];
            }
        }
        for slot in &mut mean {
            *slot /= n as f64;
        }
        for row in &mut rows {
            for c in 0..d {
                row[c] = (1.0 - lambda) * row[c] + lambda * mean[c];
            }
        }
    }
    let mut data = Vec::with_capacity(n * d);
    for row in &mut rows {
        if normalize == NormalizeRows::Yes {
            normalize_f64(row);
        }
        data.extend(row.iter().map(|&v| v as f32));
    }
    TokenMatrix::new(n, d, data)
}

// ---------------------------------------------------------------------------
// brute-force oracle
// ---------------------------------------------------------------------------

fn naive_l1(row: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for &v in row {
        acc += (v as f64).abs();
    }
    acc
}

fn naive_l2(row: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for &v in row {
        let v = v as f64;
        acc += v * v;
    }
    acc.sqrt()
}

fn naive_dup(p: &[f32], x: &[f32]) -> f64 {
    let np = naive_l2(p);
    let nx = naive_l2(x);
    if np < 1e-12 || nx < 1e-12 {
        return 0.0;
    }
    let mut dot = 0.0f64;
    for t in 0..p.len() {
        dot += p[t] as f64 * x[t] as f64;
    }
    dot / (np * nx)
}

/// Stable sort of candidate indices by score with explicit tie-breaking,
/// picking the top (`descending`) or bottom `k`.
fn naive_pick(scores: &[f64], candidates: &[usize], k: usize, descending: bool) -> Vec<usize> {
    let mut pairs: Vec<(f64, usize)> = candidates.iter().map(|&i| (scores[i], i)).collect();
    pairs.sort_by(|a, b| {
        let ord = if descending {
            if a.0 > b.0 {
                std::cmp::Ordering::Less
            } else if a.0 < b.0 {
                std::cmp::Ordering::Greater
            } else {
                std::cmp::Ordering::Equal
            }
        } else if a.0 < b.0 {
            std::cmp::Ordering::Less
        } else if a.0 > b.0 {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        };
        ord.then(a.1.cmp(&b.1))
    });
    let mut picked: Vec<usize> = pairs[..k].iter().map(|&(_, i)| i).collect();
    picked.sort_unstable();
    picked
}

/// Literal re-evaluation of the reduction: recompute every score with
/// scalar loops, sort explicitly, apply the same tie-breaking and modality
/// rules. Must agree with [`crate::dedup::dart_prune`] exactly on any input
/// it accepts. Guarded to `n <= 256`.
pub fn brute_force_prune(
    tokens: &TokenMatrix,
    aux: Option<&AuxFeatures>,
    attn: Option<&AttentionMap>,
    cfg: &ReductionConfig,
) -> Result<RetentionResult> {
    let n = tokens.n();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let k = cfg.pivot_count;
    if k == 0 {
        return Err(Error::BadConfig("pivot_count must be at least 1".into()));
    }
    if k > n {
        return Err(Error::KExceedsN { k, n });
    }
    cfg.validate_quota(tokens)?;

    // budget resolution, re-derived
    let budget = match cfg.budget {
        BudgetSpec::Count(b) => {
            if b < k || b > n {
                return Err(Error::BudgetOutOfRange {
                    budget: b,
                    min: k,
                    max: n,
                });
            }
            b
        }
        BudgetSpec::Ratio(r) => {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::BadConfig(format!("ratio {r} outside (0, 1]")));
            }
            let kept = n as f64 * (1.0 - r);
            let rounded = (kept + 0.5).floor() as usize; // kept is never negative
            rounded.clamp(k, n)
        }
    };

    // pivot selection, re-derived
    let strategy = cfg.pivot_strategy;
    let partitions: Vec<(Vec<usize>, usize)> = match cfg.modality_quota {
        None => vec![((0..n).collect(), k)],
        Some((vk, tk)) => {
            let mut visual = Vec::new();
            let mut text = Vec::new();
            for i in 0..n {
                let is_text = tokens
                    .modality()
                    .map(|m| m[i] == Modality::Text)
                    .unwrap_or(false);
                if is_text {
                    text.push(i);
                } else {
                    visual.push(i);
                }
            }
            vec![(visual, vk), (text, tk)]
        }
    };

    let mut pivot_indices: Vec<usize> = Vec::new();
    if strategy.kind == StrategyKind::Random {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);
        for (candidates, quota) in &partitions {
            // inline partial Fisher-Yates over the candidate list
            let mut pool = candidates.clone();
            let m = pool.len();
            for i in 0..*quota {
                let j = i + rng.index_below(m - i);
                pool.swap(i, j);
            }
            let mut picked = pool[..*quota].to_vec();
            picked.sort_unstable();
            pivot_indices.extend(picked);
        }
    } else {
        let scores: Vec<f64> = match strategy.kind {
            StrategyKind::EmbedNorm => (0..n)
                .map(|i| match strategy.norm_order {
                    crate::pivot::NormOrder::L1 => naive_l1(tokens.row(i)),
                    crate::pivot::NormOrder::L2 => naive_l2(tokens.row(i)),
                })
                .collect(),
            StrategyKind::KNorm => {
                let keys = aux
                    .and_then(|a| a.keys.as_ref())
                    .ok_or(Error::MissingAux("K-norm selection needs key features"))?;
                if keys.rows() != n {
                    return Err(Error::MissingAux("keys row count differs from token count"));
                }
                (0..n).map(|i| naive_l1(keys.row(i))).collect()
            }
            StrategyKind::VNorm => {
                let values = aux
                    .and_then(|a| a.values.as_ref())
                    .ok_or(Error::MissingAux("V-norm selection needs value features"))?;
                if values.rows() != n {
                    return Err(Error::MissingAux(
                        "values row count differs from token count",
                    ));
                }
                (0..n).map(|i| naive_l1(values.row(i))).collect()
            }
            StrategyKind::AttnScore => {
                let map = attn.ok_or(Error::MissingAttention)?;
                if map.n() != n {
                    return Err(Error::MissingAttention);
                }
                // column means by double loop
                (0..n)
                    .map(|i| {
                        let mut acc = 0.0f64;
                        for j in 0..n {
                            acc += map.row(j)[i] as f64;
                        }
                        acc / n as f64
                    })
                    .collect()
            }
            StrategyKind::Random => unreachable!(),
        };
        for (candidates, quota) in &partitions {
            let descending = strategy.direction == crate::pivot::Direction::Max;
            pivot_indices.extend(naive_pick(&scores, candidates, *quota, descending));
        }
    }
    pivot_indices.sort_unstable();
    let pivots = PivotSet::from_indices(pivot_indices.clone(), n, strategy)?;

    // duplication scores and aggregation, re-derived pair by pair
    let mut agg = vec![0.0f64; n];
    let mut dup = vec![0.0f64; k * n];
    for (pi, &p) in pivot_indices.iter().enumerate() {
        for j in 0..n {
            dup[pi * n + j] = naive_dup(tokens.row(p), tokens.row(j));
        }
    }
    for (j, out) in agg.iter_mut().enumerate() {
        *out = match cfg.aggregator {
            Aggregator::Max => {
                let mut best = dup[j];
                for pi in 1..k {
                    let v = dup[pi * n + j];
                    if v > best {
                        best = v;
                    }
                }
                best
            }
            Aggregator::Min => {
                let mut best = dup[j];
                for pi in 1..k {
                    let v = dup[pi * n + j];
                    if v < best {
                        best = v;
                    }
                }
                best
            }
            Aggregator::Mean => {
                let mut sum = 0.0f64;
                for pi in 0..k {
                    sum += dup[pi * n + j];
                }
                sum / k as f64
            }
        };
    }

    // retention, re-derived
    let is_pivot = |i: usize| pivot_indices.binary_search(&i).is_ok();
    let forced: Vec<usize> = (0..n)
        .filter(|&i| is_pivot(i) || !tokens.is_prunable(i))
        .collect();
    if budget < forced.len() {
        return Err(Error::BudgetOutOfRange {
            budget,
            min: forced.len(),
            max: n,
        });
    }
    let candidates: Vec<usize> = (0..n)
        .filter(|&i| !is_pivot(i) && tokens.is_prunable(i))
        .collect();

    let (kept, pruned): (Vec<usize>, Vec<usize>) = match cfg.epsilon_mode {
        EpsilonMode::Global => {
            let keep = budget - forced.len();
            let kept = naive_pick(&agg, &candidates, keep, false);
            let pruned = candidates
                .iter()
                .copied()
                .filter(|i| kept.binary_search(i).is_err())
                .collect();
            (kept, pruned)
        }
        EpsilonMode::PerPivotShare => {
            let prune_total = candidates.len() - (budget - forced.len());
            let base = prune_total / k;
            let remainder = prune_total % k;
            let mut pruned_flag = vec![false; n];
            for pi in 0..k {
                let share = base + usize::from(pi < remainder);
                let row: Vec<f64> = (0..n).map(|j| dup[pi * n + j]).collect();
                let order = naive_pick(&row, &candidates, candidates.len(), true);
                // naive_pick sorts its output; re-walk in score order instead
                let mut by_score: Vec<(f64, usize)> = order.iter().map(|&i| (row[i], i)).collect();
                by_score.sort_by(|a, b| {
                    b.0.partial_cmp(&a.0)
                        .expect("scores are finite")
                        .then(a.1.cmp(&b.1))
                });
                let mut taken = 0;
                for (_, idx) in by_score {
                    if taken == share {
                        break;
                    }
                    if !pruned_flag[idx] {
                        pruned_flag[idx] = true;
                        taken += 1;
                    }
                }
            }
            let kept = candidates
                .iter()
                .copied()
                .filter(|&i| !pruned_flag[i])
                .collect();
            let pruned = candidates
                .iter()
                .copied()
                .filter(|&i| pruned_flag[i])
                .collect();
            (kept, pruned)
        }
    };

    let mut tau = f64::NEG_INFINITY;
    for &i in &kept {
        if agg[i] > tau {
            tau = agg[i];
        }
    }
    let mut eps_eff = f64::INFINITY;
    for &i in &pruned {
        if agg[i] < eps_eff {
            eps_eff = agg[i];
        }
    }

    let mut retained = forced;
    retained.extend(kept);
    retained.sort_unstable();

    Ok(RetentionResult {
        retained,
        pivots,
        agg_dup: agg,
        tau,
        eps_eff,
        method: ReductionMethod::Dart {
            aggregator: cfg.aggregator,
            epsilon_mode: cfg.epsilon_mode,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dedup::{dart_prune, dup_scores};
    use crate::pivot::PivotStrategy;

    #[test]
    fn zero_spread_duplicates_cluster_centers() {
        let tokens = gen_clustered(12, 4, 3, 0.0, 5, NormalizeRows::Yes).unwrap();
        // tokens of the same cluster are identical rows
        for i in 0..12 {
            assert_eq!(tokens.row(i), tokens.row(i % 3), "token {i}");
        }
        // within-cluster duplication is exactly 1 (within fp tolerance)
        let pivots = PivotSet::from_indices(vec![0, 1, 2], 12, PivotStrategy::random()).unwrap();
        let dup = dup_scores(&pivots, &tokens);
        for j in 0..12 {
            let own = j % 3;
            assert!((dup.entry(own, j) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn each_token_its_own_center() {
        let tokens = gen_clustered(5, 3, 5, 0.1, 2, NormalizeRows::Yes).unwrap();
        assert_eq!(tokens.n(), 5);
        // all rows unit norm
        for i in 0..5 {
            let norm = naive_l2(tokens.row(i));
            assert!((norm - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn unnormalized_flag_leaves_norms_spread() {
        let tokens = gen_clustered(30, 6, 3, 0.4, 8, NormalizeRows::No).unwrap();
        let norms: Vec<f64> = (0..30).map(|i| naive_l2(tokens.row(i))).collect();
        let min = norms.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = norms.iter().cloned().fold(0.0, f64::max);
        assert!(max - min > 1e-3, "expected spread, got [{min}, {max}]");
    }

    #[test]
    fn oversmoothed_edges() {
        // zero steps: raw normalized gaussians, generally dissimilar
        let raw = gen_oversmoothed(8, 16, 0, 0.3, 3, NormalizeRows::Yes).unwrap();
        // full mixing in one step: all rows identical
        let collapsed = gen_oversmoothed(8, 16, 1, 1.0, 3, NormalizeRows::Yes).unwrap();
        for i in 1..8 {
            assert_eq!(collapsed.row(i), collapsed.row(0));
            assert_ne!(raw.row(i), raw.row(0));
        }
        let pivots = PivotSet::from_indices(vec![0], 8, PivotStrategy::random()).unwrap();
        let dup = dup_scores(&pivots, &collapsed);
        for j in 0..8 {
            assert!((dup.entry(0, j) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mean_cosine_rises_with_smoothing() {
        let mean_pairwise = |tokens: &TokenMatrix| {
            let n = tokens.n();
            let mut acc = 0.0f64;
            let mut count = 0usize;
            for i in 0..n {
                for j in (i + 1)..n {
                    acc += naive_dup(tokens.row(i), tokens.row(j));
                    count += 1;
                }
            }
            acc / count as f64
        };
        // averaged over seeds to smooth out single-instance noise
        let mut prev = f64::NEG_INFINITY;
        for steps in [0usize, 1, 2, 4, 8] {
            let mut acc = 0.0;
            for seed in 0..20u64 {
                let tokens =
                    gen_oversmoothed(64, 32, steps, 0.3, seed, NormalizeRows::Yes).unwrap();
                acc += mean_pairwise(&tokens);
            }
            let mean = acc / 20.0;
            assert!(
                mean >= prev,
                "mean cosine decreased at t={steps}: {mean} < {prev}"
            );
            prev = mean;
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let a = gen_clustered(20, 8, 4, 0.1, 99, NormalizeRows::Yes).unwrap();
        let b = gen_clustered(20, 8, 4, 0.1, 99, NormalizeRows::Yes).unwrap();
        assert_eq!(a, b);
        let a = gen_oversmoothed(20, 8, 3, 0.5, 99, NormalizeRows::Yes).unwrap();
        let b = gen_oversmoothed(20, 8, 3, 0.5, 99, NormalizeRows::Yes).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_params_are_rejected() {
        assert!(matches!(
            gen_clustered(3, 4, 5, 0.1, 0, NormalizeRows::Yes),
            Err(Error::BadParams(_))
        ));
        assert!(matches!(
            gen_clustered(3, 4, 1, -0.5, 0, NormalizeRows::Yes),
            Err(Error::BadParams(_))
        ));
        assert!(matches!(
            gen_oversmoothed(3, 4, 1, 1.5, 0, NormalizeRows::Yes),
            Err(Error::BadParams(_))
        ));
    }

    #[test]
    fn oracle_guard() {
        let tokens = gen_clustered(257, 2, 2, 0.1, 0, NormalizeRows::Yes).unwrap();
        let cfg = ReductionConfig {
            budget: BudgetSpec::Count(10),
            pivot_count: 2,
            pivot_strategy: PivotStrategy::random(),
            ..Default::default()
        };
        assert!(matches!(
            brute_force_prune(&tokens, None, None, &cfg),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn oracle_edge_budgets() {
        let tokens = gen_clustered(10, 4, 2, 0.2, 1, NormalizeRows::Yes).unwrap();
        let cfg = ReductionConfig {
            budget: BudgetSpec::Count(10),
            pivot_count: 2,
            pivot_strategy: PivotStrategy::random(),
            seed: 4,
            ..Default::default()
        };
        let r = brute_force_prune(&tokens, None, None, &cfg).unwrap();
        assert_eq!(r.retained, (0..10).collect::<Vec<_>>());

        let cfg = ReductionConfig {
            budget: BudgetSpec::Count(2),
            ..cfg
        };
        let r = brute_force_prune(&tokens, None, None, &cfg).unwrap();
        assert_eq!(r.retained, r.pivots.indices());
    }

    #[test]
    fn oracle_matches_fast_path_on_a_fixed_instance() {
        let tokens = gen_clustered(40, 6, 5, 0.3, 123, NormalizeRows::Yes).unwrap();
        let cfg = ReductionConfig {
            budget: BudgetSpec::Count(12),
            pivot_count: 3,
            pivot_strategy: PivotStrategy::embed_norm(
                crate::pivot::NormOrder::L2,
                crate::pivot::Direction::Max,
            ),
            aggregator: Aggregator::Max,
            seed: 7,
            ..Default::default()
        };
        let fast = dart_prune(&tokens, None, None, &cfg).unwrap();
        let slow = brute_force_prune(&tokens, None, None, &cfg).unwrap();
        assert_eq!(fast.retained, slow.retained);
        assert_eq!(fast.tau, slow.tau);
        assert_eq!(fast.eps_eff, slow.eps_eff);
        assert_eq!(fast.agg_dup, slow.agg_dup);
    }
}
