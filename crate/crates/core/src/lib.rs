//! Duplication-aware token reduction over embedding matrices.
//!
//! Vision-token sequences in multimodal transformers carry heavy
//! representational redundancy. This crate implements a reduction pipeline
//! that exploits it directly: select a handful of pivot tokens, score every
//! token's cosine duplication against the pivots, and keep the budgeted
//! number of least-duplicated tokens. Importance- and random-retention
//! baselines, transformer FLOPs accounting, and verifiers for the
//! distance/output-drift guarantees round out the toolkit.
//!
//! Everything is deterministic: random choices flow from a documented
//! SplitMix64/Xoshiro256++ generator ([`rng`]), and all floating-point
//! reductions accumulate in f64 in a fixed order, so equal inputs give
//! bit-equal outputs on any platform.
//!
//! ```
//! use dart_core::{dart_prune, BudgetSpec, PivotStrategy, ReductionConfig, TokenMatrix};
//!
//! let tokens = TokenMatrix::new(4, 2, vec![
//!     1.0, 0.0,   // pivot candidate
//!     0.99, 0.01, // near-duplicate of token 0
//!     0.0, 1.0,   // orthogonal
//!     1.0, 0.05,  // near-duplicate of token 0
//! ]).unwrap();
//! let cfg = ReductionConfig {
//!     budget: BudgetSpec::Count(2),
//!     pivot_count: 1,
//!     pivot_strategy: PivotStrategy::embed_norm(
//!         dart_core::NormOrder::L2,
//!         dart_core::Direction::Max,
//!     ),
//!     ..Default::default()
//! };
//! let result = dart_prune(&tokens, None, None, &cfg).unwrap();
//! assert_eq!(result.retained.len(), 2);
//! assert!(result.retained.contains(&2), "the orthogonal token survives");
//! ```

pub mod analysis;
pub mod baselines;
pub mod dedup;
pub mod error;
pub mod pivot;
pub mod rng;
pub mod synth;
pub mod types;

pub use analysis::{
    flops_reduction_ratio, hausdorff, kv_cache_elements, overlap_stats, position_stats,
    post_prune_flops, total_flops, verify_bounds, verify_bounds_strict, BoundMode, BoundReport,
    LipschitzModel, OverlapStats, PositionStats,
};
pub use baselines::{
    importance_prune, random_prune, recalibration_bias, recalibration_bias_exhaustive, BiasEstimate,
};
pub use dedup::{
    aggregate_dup, dart_prune, dup_scores, retain, retain_per_pivot, DupMatrix, ReductionMethod,
    RetentionResult,
};
pub use error::{Error, Result};
pub use pivot::{
    attention_received, row_norms, select_pivots, Direction, NormOrder, PivotSet, PivotStrategy,
    StrategyKind,
};
pub use synth::{brute_force_prune, gen_clustered, gen_oversmoothed};
pub use types::{
    validate, Aggregator, AttentionMap, AuxFeatures, BudgetSpec, EpsilonMode, FeatureMatrix,
    Modality, ModelDims, NormalizeRows, ReductionConfig, TokenMatrix,
};
