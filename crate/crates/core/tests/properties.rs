//! Property tests: oracle equivalence, budget exactness, monotonicity,
//! determinism, permutation equivariance, and the distance-bound
//! guarantees, over randomized instances.

use proptest::prelude::*;

use dart_core::rng::Xoshiro256PlusPlus;
use dart_core::*;

/// Deterministic random instance from a single seed: tokens, optional
/// modality tags, optional key/value features, optional attention map.
struct Instance {
    tokens: TokenMatrix,
    aux: AuxFeatures,
    attn: AttentionMap,
}

fn build_instance(seed: u64, n: usize, d: usize, tagged: bool, unit_norm: bool) -> Instance {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let mut row: Vec<f64> = (0..d).map(|_| rng.gaussian()).collect();
        if unit_norm {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                for v in &mut row {
                    *v /= norm;
                }
            }
        }
        data.extend(row.iter().map(|&v| v as f32));
    }
    let modality = if tagged {
        Some(
            (0..n)
                .map(|_| {
                    if rng.uniform_f64() < 0.3 {
                        Modality::Text
                    } else {
                        Modality::Visual
                    }
                })
                .collect(),
        )
    } else {
        None
    };
    let tokens = TokenMatrix::with_tags(n, d, data, modality, None).unwrap();

    let kv_width = 4;
    let keys: Vec<f32> = (0..n * kv_width).map(|_| rng.gaussian() as f32).collect();
    let values: Vec<f32> = (0..n * kv_width).map(|_| rng.gaussian() as f32).collect();
    let aux = AuxFeatures {
        keys: Some(FeatureMatrix::new(n, kv_width, keys).unwrap()),
        values: Some(FeatureMatrix::new(n, kv_width, values).unwrap()),
    };

    let mut weights = Vec::with_capacity(n * n);
    for _ in 0..n {
        let raw: Vec<f64> = (0..n).map(|_| rng.uniform_f64() + 1e-3).collect();
        let sum: f64 = raw.iter().sum();
        weights.extend(raw.iter().map(|&v| (v / sum) as f32));
    }
    let attn = AttentionMap::new(n, weights).unwrap();

    Instance { tokens, aux, attn }
}

fn strategy_from_id(id: u8) -> PivotStrategy {
    match id % 6 {
        0 => PivotStrategy::random(),
        1 => PivotStrategy::embed_norm(NormOrder::L1, Direction::Max),
        2 => PivotStrategy::embed_norm(NormOrder::L2, Direction::Min),
        3 => PivotStrategy::knorm(Direction::Max),
        4 => PivotStrategy::vnorm(Direction::Min),
        _ => PivotStrategy::attn_score(Direction::Max),
    }
}

fn aggregator_from_id(id: u8) -> Aggregator {
    match id % 3 {
        0 => Aggregator::Max,
        1 => Aggregator::Min,
        _ => Aggregator::Mean,
    }
}

fn assert_results_equal(fast: &RetentionResult, slow: &RetentionResult) {
    assert_eq!(fast.retained, slow.retained, "retained sets differ");
    assert_eq!(
        fast.pivots.indices(),
        slow.pivots.indices(),
        "pivots differ"
    );
    assert!(
        fast.tau == slow.tau || (fast.tau.is_infinite() && slow.tau.is_infinite()),
        "tau differs: {} vs {}",
        fast.tau,
        slow.tau
    );
    assert!(
        fast.eps_eff == slow.eps_eff || (fast.eps_eff.is_infinite() && slow.eps_eff.is_infinite()),
        "eps_eff differs: {} vs {}",
        fast.eps_eff,
        slow.eps_eff
    );
    for j in 0..fast.agg_dup.len() {
        assert_eq!(
            fast.agg_dup[j].to_bits(),
            slow.agg_dup[j].to_bits(),
            "agg_dup[{j}] differs"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// The optimized pipeline agrees with the naive oracle bit-for-bit.
    #[test]
    fn oracle_equivalence(
        seed in any::<u64>(),
        n in 2usize..64,
        d in 1usize..16,
        k_raw in 1usize..4,
        strategy_id in any::<u8>(),
        aggregator_id in any::<u8>(),
        tagged in any::<bool>(),
        per_pivot in any::<bool>(),
        use_ratio in any::<bool>(),
    ) {
        let k = k_raw.min(n);
        let inst = build_instance(seed, n, d, tagged, false);
        let forced = (0..n).filter(|&i| !inst.tokens.is_prunable(i)).count();
        let min_budget = (forced + k).min(n);
        let budget_spec = if use_ratio {
            BudgetSpec::Ratio(0.25)
        } else {
            let span = n - min_budget;
            BudgetSpec::Count(min_budget + (seed as usize % (span + 1)))
        };
        let cfg = ReductionConfig {
            budget: budget_spec,
            pivot_count: k,
            pivot_strategy: strategy_from_id(strategy_id),
            aggregator: aggregator_from_id(aggregator_id),
            epsilon_mode: if per_pivot { EpsilonMode::PerPivotShare } else { EpsilonMode::Global },
            seed: seed.wrapping_mul(0x9E37),
            modality_quota: None,
        };
        let fast = dart_prune(&inst.tokens, Some(&inst.aux), Some(&inst.attn), &cfg);
        let slow = brute_force_prune(&inst.tokens, Some(&inst.aux), Some(&inst.attn), &cfg);
        match (fast, slow) {
            (Ok(fast), Ok(slow)) => assert_results_equal(&fast, &slow),
            (Err(a), Err(b)) => prop_assert_eq!(a, b),
            (a, b) => prop_assert!(false, "one path failed: {a:?} vs {b:?}"),
        }
    }

    /// |retained| always equals the resolved budget.
    #[test]
    fn budget_exactness(
        seed in any::<u64>(),
        n in 2usize..80,
        d in 1usize..12,
        k_raw in 1usize..5,
        aggregator_id in any::<u8>(),
    ) {
        let k = k_raw.min(n);
        let inst = build_instance(seed, n, d, false, false);
        for budget in [k, (k + n) / 2, n] {
            let cfg = ReductionConfig {
                budget: BudgetSpec::Count(budget),
                pivot_count: k,
                pivot_strategy: PivotStrategy::random(),
                aggregator: aggregator_from_id(aggregator_id),
                seed,
                ..Default::default()
            };
            let result = dart_prune(&inst.tokens, None, None, &cfg).unwrap();
            prop_assert_eq!(result.retained.len(), budget);
            // retained indices distinct, sorted, pivots included
            prop_assert!(result.retained.windows(2).all(|w| w[0] < w[1]));
            for p in result.pivots.indices() {
                prop_assert!(result.retained.binary_search(p).is_ok());
            }
        }
    }

    /// Growing the budget by one only adds tokens, never swaps them.
    #[test]
    fn monotone_consistency(
        seed in any::<u64>(),
        n in 3usize..48,
        d in 1usize..10,
    ) {
        let inst = build_instance(seed, n, d, false, false);
        let mut previous: Option<RetentionResult> = None;
        for budget in 1..=n {
            let cfg = ReductionConfig {
                budget: BudgetSpec::Count(budget),
                pivot_count: 1,
                pivot_strategy: PivotStrategy::embed_norm(NormOrder::L2, Direction::Max),
                aggregator: Aggregator::Max,
                seed,
                ..Default::default()
            };
            let result = dart_prune(&inst.tokens, None, None, &cfg).unwrap();
            if let Some(prev) = &previous {
                for i in &prev.retained {
                    prop_assert!(
                        result.retained.binary_search(i).is_ok(),
                        "budget {budget} dropped index {i}"
                    );
                }
            }
            previous = Some(result);
        }
    }

    /// Identical inputs give identical outputs.
    #[test]
    fn determinism(
        seed in any::<u64>(),
        n in 2usize..40,
        d in 1usize..8,
        strategy_id in any::<u8>(),
    ) {
        let inst = build_instance(seed, n, d, false, false);
        let cfg = ReductionConfig {
            budget: BudgetSpec::Count(1 + (n / 2)),
            pivot_count: 1,
            pivot_strategy: strategy_from_id(strategy_id),
            seed,
            ..Default::default()
        };
        let a = dart_prune(&inst.tokens, Some(&inst.aux), Some(&inst.attn), &cfg).unwrap();
        let b = dart_prune(&inst.tokens, Some(&inst.aux), Some(&inst.attn), &cfg).unwrap();
        assert_results_equal(&a, &b);
    }

    /// Permuting rows permutes score-based pivot selection identically
    /// (checked on injective scores; ties would legitimately re-rank).
    #[test]
    fn permutation_equivariance(
        seed in any::<u64>(),
        n in 2usize..24,
        k_raw in 1usize..4,
    ) {
        let k = k_raw.min(n);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        // strictly increasing row norms make the selection score injective
        let data: Vec<f32> = (0..n)
            .flat_map(|i| {
                let scale = 1.0 + i as f64;
                [(scale * 0.6) as f32, (scale * 0.8) as f32]
            })
            .collect();
        let tokens = TokenMatrix::new(n, 2, data.clone()).unwrap();

        // a random permutation via the documented generator
        let mut perm: Vec<usize> = (0..n).collect();
        for i in 0..n {
            let j = i + rng.index_below(n - i);
            perm.swap(i, j);
        }
        let mut permuted_data = vec![0.0f32; n * 2];
        for (new_row, &old_row) in perm.iter().enumerate() {
            permuted_data[new_row * 2..new_row * 2 + 2]
                .copy_from_slice(&data[old_row * 2..old_row * 2 + 2]);
        }
        let permuted = TokenMatrix::new(n, 2, permuted_data).unwrap();

        let cfg = ReductionConfig {
            budget: BudgetSpec::Count(k),
            pivot_count: k,
            pivot_strategy: PivotStrategy::embed_norm(NormOrder::L2, Direction::Max),
            ..Default::default()
        };
        let base = select_pivots(&tokens, None, None, &cfg).unwrap();
        let moved = select_pivots(&permuted, None, None, &cfg).unwrap();
        let mut expected: Vec<usize> = base
            .indices()
            .iter()
            .map(|&old| perm.iter().position(|&p| p == old).unwrap())
            .collect();
        expected.sort_unstable();
        prop_assert_eq!(moved.indices(), &expected[..]);
    }

    /// General-mode verification never reports a violation for
    /// max-aggregated output, normalized or not.
    #[test]
    fn general_bounds_always_hold(
        seed in any::<u64>(),
        n in 2usize..48,
        d in 1usize..12,
        k_raw in 1usize..4,
    ) {
        let k = k_raw.min(n);
        let inst = build_instance(seed, n, d, false, false);
        let budget = k + (seed as usize % (n - k + 1));
        let cfg = ReductionConfig {
            budget: BudgetSpec::Count(budget),
            pivot_count: k,
            pivot_strategy: PivotStrategy::random(),
            aggregator: Aggregator::Max,
            seed,
            ..Default::default()
        };
        let result = dart_prune(&inst.tokens, None, None, &cfg).unwrap();
        let report = verify_bounds(&inst.tokens, &result, None, BoundMode::General).unwrap();
        prop_assert!(
            report.lemma1_ok && report.lemma2_ok,
            "general-mode violation: {report:?}"
        );
    }

    /// Normalized-mode verification holds on unit-norm instances, with the
    /// feature-map bound included.
    #[test]
    fn normalized_bounds_hold_on_sphere(
        seed in any::<u64>(),
        n in 2usize..64,
        d in 2usize..16,
        k_raw in 1usize..4,
    ) {
        let k = k_raw.min(n);
        let inst = build_instance(seed, n, d, false, true);
        let budget = k + (seed as usize % (n - k + 1));
        let cfg = ReductionConfig {
            budget: BudgetSpec::Count(budget),
            pivot_count: k,
            pivot_strategy: PivotStrategy::random(),
            aggregator: Aggregator::Max,
            seed,
            ..Default::default()
        };
        let result = dart_prune(&inst.tokens, None, None, &cfg).unwrap();
        let model = LipschitzModel::seeded(8, d, seed ^ 0xABCD);
        let report =
            verify_bounds(&inst.tokens, &result, Some(&model), BoundMode::Normalized).unwrap();
        prop_assert!(report.norms_equal);
        prop_assert!(
            report.all_ok(),
            "normalized-mode violation on spherical data: {report:?}"
        );
    }

    /// The certified Lipschitz constant really bounds the feature drift
    /// for nested subsets, with the Hausdorff op as the oracle.
    #[test]
    fn lipschitz_constant_is_certified(
        seed in any::<u64>(),
        n in 2usize..32,
        d in 1usize..8,
        d_out in 1usize..6,
    ) {
        let inst = build_instance(seed, n, d, false, false);
        let model = LipschitzModel::seeded(d_out, d, seed ^ 0x5EED);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed ^ 0xF00D);
        let subset_size = 1 + rng.index_below(n);
        let subset = rng.sample_distinct(n, subset_size);

        let fx = model.eval_all(&inst.tokens).unwrap();
        let fs = model.eval_subset(&inst.tokens, &subset).unwrap();
        let diff = fx
            .iter()
            .zip(&fs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let d_h = hausdorff(&inst.tokens, &subset).unwrap();
        prop_assert!(
            diff <= model.certified_k() * d_h + 1e-9,
            "certified constant violated: {diff} > {} * {d_h}",
            model.certified_k()
        );
    }

    /// Aggregated duplication is invariant to positive power-of-two row
    /// scaling, and retention with a fixed pivot set is unchanged.
    #[test]
    fn scale_invariance(
        seed in any::<u64>(),
        n in 3usize..32,
        d in 1usize..8,
        row_to_scale in any::<u8>(),
        exponent in 1i32..6,
    ) {
        let inst = build_instance(seed, n, d, false, false);
        let target = row_to_scale as usize % n;
        let factor = (2.0f32).powi(exponent);
        let mut scaled = inst.tokens.data().to_vec();
        for v in &mut scaled[target * d..(target + 1) * d] {
            *v *= factor;
        }
        let scaled_tokens = TokenMatrix::new(n, d, scaled).unwrap();
        let pivots =
            PivotSet::from_indices(vec![0, n / 2], n, PivotStrategy::random()).unwrap();
        let dup_a = dup_scores(&pivots, &inst.tokens);
        let dup_b = dup_scores(&pivots, &scaled_tokens);
        for i in 0..dup_a.k() {
            for j in 0..dup_a.n() {
                prop_assert_eq!(dup_a.entry(i, j).to_bits(), dup_b.entry(i, j).to_bits());
            }
        }
    }
}

#[test]
fn mean_norm_index_of_uniform_retention_is_centered() {
    // fixed-seed version of the CLT sanity check: 64 uniform draws from 576
    let r = random_prune(576, 64, 2024).unwrap();
    let tokens = TokenMatrix::new(576, 1, vec![1.0; 576]).unwrap();
    let stats = position_stats(&tokens, &r.retained).unwrap();
    assert!(
        (stats.mean_norm_index - 0.5).abs() < 0.06,
        "mean_norm_index {} strayed from 0.5",
        stats.mean_norm_index
    );
}
