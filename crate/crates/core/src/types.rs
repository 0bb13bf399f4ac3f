//! Shared domain types: token matrices, auxiliary attention features, and
//! reduction configuration.
//!
//! Numeric conventions used throughout the crate: token data is stored as
//! 32-bit floats; every similarity, norm, and distance accumulates in 64-bit
//! in index order, so results are identical across runs and platforms. All
//! types here are immutable after construction.

use crate::error::{Error, Result};
use crate::pivot::PivotStrategy;

/// Per-token modality tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Visual,
    Text,
}

/// An `n x d` row-major matrix of token embeddings, optionally tagged with
/// per-token modality and a spatial grid for the visual tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    n: usize,
    d: usize,
    data: Vec<f32>,
    modality: Option<Vec<Modality>>,
    grid: Option<(usize, usize)>,
}

impl TokenMatrix {
    /// Builds and validates a plain matrix with no tags.
    pub fn new(n: usize, d: usize, data: Vec<f32>) -> Result<Self> {
        Self::with_tags(n, d, data, None, None)
    }

    /// Builds and validates a matrix with optional modality tags and grid.
    pub fn with_tags(
        n: usize,
        d: usize,
        data: Vec<f32>,
        modality: Option<Vec<Modality>>,
        grid: Option<(usize, usize)>,
    ) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::EmptyMatrix);
        }
        if data.len() != n * d {
            return Err(Error::BadConfig(format!(
                "data length {} does not match {}x{}",
                data.len(),
                n,
                d
            )));
        }
        if let Some(tags) = &modality {
            if tags.len() != n {
                return Err(Error::BadConfig(format!(
                    "{} modality tags for {} tokens",
                    tags.len(),
                    n
                )));
            }
        }
        let matrix = Self {
            n,
            d,
            data,
            modality,
            grid,
        };
        matrix.check()?;
        Ok(matrix)
    }

    fn check(&self) -> Result<()> {
        for row in 0..self.n {
            if self.row(row).iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(row));
            }
        }
        if let Some((rows, cols)) = self.grid {
            let visual = self.visual_count();
            if rows * cols != visual {
                return Err(Error::GridMismatch { rows, cols, visual });
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn modality(&self) -> Option<&[Modality]> {
        self.modality.as_deref()
    }

    pub fn grid(&self) -> Option<(usize, usize)> {
        self.grid
    }

    /// Number of visual tokens. Untagged matrices count as all-visual.
    pub fn visual_count(&self) -> usize {
        match &self.modality {
            Some(tags) => tags.iter().filter(|m| **m == Modality::Visual).count(),
            None => self.n,
        }
    }

    /// True when token `i` may be pruned: untagged matrices are fully
    /// prunable, tagged ones only in their visual rows.
    pub fn is_prunable(&self, i: usize) -> bool {
        match &self.modality {
            Some(tags) => tags[i] == Modality::Visual,
            None => true,
        }
    }
}

/// Re-checks a matrix's invariants and hands it back. Idempotent; exists so
/// callers holding a deserialized matrix can assert validity explicitly.
pub fn validate(tokens: TokenMatrix) -> Result<TokenMatrix> {
    tokens.check()?;
    Ok(tokens)
}

/// A dense auxiliary feature matrix (keys or values from attention).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    width: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || width == 0 || data.len() != rows * width {
            return Err(Error::BadConfig(format!(
                "feature matrix shape {}x{} does not match {} values",
                rows,
                width,
                data.len()
            )));
        }
        for r in 0..rows {
            if data[r * width..(r + 1) * width]
                .iter()
                .any(|v| !v.is_finite())
            {
                return Err(Error::NonFinite(r));
            }
        }
        Ok(Self { rows, width, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.width..(i + 1) * self.width]
    }
}

/// Optional key/value matrices from attention computation, used by the
/// K-norm and V-norm pivot strategies.
#[derive(Debug, Clone, Default)]
pub struct AuxFeatures {
    pub keys: Option<FeatureMatrix>,
    pub values: Option<FeatureMatrix>,
}

impl AuxFeatures {
    /// Checks row counts against the token count.
    pub fn validate(&self, n: usize) -> Result<()> {
        if let Some(k) = &self.keys {
            if k.rows() != n {
                return Err(Error::MissingAux("keys row count differs from token count"));
            }
        }
        if let Some(v) = &self.values {
            if v.rows() != n {
                return Err(Error::MissingAux(
                    "values row count differs from token count",
                ));
            }
        }
        Ok(())
    }
}

/// Tolerance for the row-stochastic check on attention maps.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

/// An `n x n` row-stochastic attention map.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    n: usize,
    weights: Vec<f32>,
}

impl AttentionMap {
    /// Validates non-negativity and row sums of 1 within `1e-4`.
    pub fn new(n: usize, weights: Vec<f32>) -> Result<Self> {
        if n == 0 || weights.len() != n * n {
            return Err(Error::BadConfig(format!(
                "attention map shape {}x{} does not match {} values",
                n,
                n,
                weights.len()
            )));
        }
        for row in 0..n {
            let mut sum = 0.0f64;
            for &w in &weights[row * n..(row + 1) * n] {
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::NotRowStochastic { row, sum: w as f64 });
                }
                sum += w as f64;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::NotRowStochastic { row, sum });
            }
        }
        Ok(Self { n, weights })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.weights[i * self.n..(i + 1) * self.n]
    }
}

/// Whether synthetic generators re-normalize rows to unit norm (the
/// default, so the normalized-mode bound checks apply).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalizeRows {
    #[default]
    Yes,
    No,
}

/// How per-token duplication scores are reduced over pivots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregator {
    #[default]
    Max,
    Min,
    Mean,
}

impl Aggregator {
    pub fn name(&self) -> &'static str {
        match self {
            Aggregator::Max => "max",
            Aggregator::Min => "min",
            Aggregator::Mean => "mean",
        }
    }
}

/// How the budget-induced cut is applied: one global threshold on the
/// aggregated scores, or each pivot pruning an equal share of its own
/// most-duplicate tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EpsilonMode {
    #[default]
    Global,
    PerPivotShare,
}

impl EpsilonMode {
    pub fn name(&self) -> &'static str {
        match self {
            EpsilonMode::Global => "global",
            EpsilonMode::PerPivotShare => "per-pivot",
        }
    }
}

/// Retention budget, given directly or as the fraction of tokens pruned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetSpec {
    /// Retain exactly this many tokens.
    Count(usize),
    /// Prune this fraction of tokens, in `(0, 1]`.
    Ratio(f64),
}

/// Configuration for one reduction run.
#[derive(Debug, Clone)]
pub struct ReductionConfig {
    pub budget: BudgetSpec,
    pub pivot_count: usize,
    pub pivot_strategy: PivotStrategy,
    pub aggregator: Aggregator,
    pub epsilon_mode: EpsilonMode,
    pub seed: u64,
    /// Optional `(visual, text)` pivot quota; the parts must sum to
    /// `pivot_count`.
    pub modality_quota: Option<(usize, usize)>,
}

impl Default for ReductionConfig {
    /// Mirrors the usual operating point: 8 pivots chosen by maximum
    /// K-norm, max aggregation, one global cut.
    fn default() -> Self {
        Self {
            budget: BudgetSpec::Count(64),
            pivot_count: 8,
            pivot_strategy: PivotStrategy::knorm_max(),
            aggregator: Aggregator::Max,
            epsilon_mode: EpsilonMode::Global,
            seed: 0,
            modality_quota: None,
        }
    }
}

/// Round half away from zero, the convention used for ratio-derived budgets.
fn round_half_away(x: f64) -> i64 {
    if x >= 0.0 {
        (x + 0.5).floor() as i64
    } else {
        (x - 0.5).ceil() as i64
    }
}

impl ReductionConfig {
    /// Resolves the retained-token budget for a matrix of `n` tokens.
    ///
    /// Ratio budgets use `round(n * (1 - ratio))` with half-away-from-zero
    /// rounding, clamped into `[pivot_count, n]`. Count budgets must lie in
    /// that range already.
    pub fn resolve_budget(&self, n: usize) -> Result<usize> {
        let k = self.pivot_count;
        if k == 0 {
            return Err(Error::BadConfig("pivot_count must be at least 1".into()));
        }
        if k > n {
            return Err(Error::KExceedsN { k, n });
        }
        match self.budget {
            BudgetSpec::Count(budget) => {
                if budget < k || budget > n {
                    Err(Error::BudgetOutOfRange {
                        budget,
                        min: k,
                        max: n,
                    })
                } else {
                    Ok(budget)
                }
            }
            BudgetSpec::Ratio(ratio) => {
                if !(ratio > 0.0 && ratio <= 1.0) {
                    return Err(Error::BadConfig(format!("ratio {ratio} outside (0, 1]")));
                }
                let raw = round_half_away(n as f64 * (1.0 - ratio));
                Ok((raw.max(0) as usize).clamp(k, n))
            }
        }
    }

    /// Checks quota consistency against the matrix's modality tags.
    pub fn validate_quota(&self, tokens: &TokenMatrix) -> Result<()> {
        if let Some((visual_k, text_k)) = self.modality_quota {
            if visual_k + text_k != self.pivot_count {
                return Err(Error::BadConfig(format!(
                    "quota {visual_k}+{text_k} does not sum to pivot_count {}",
                    self.pivot_count
                )));
            }
            let visual = tokens.visual_count();
            let text = tokens.n() - visual;
            if visual_k > visual {
                return Err(Error::QuotaExceedsModality {
                    requested: visual_k,
                    available: visual,
                });
            }
            if text_k > text {
                return Err(Error::QuotaExceedsModality {
                    requested: text_k,
                    available: text,
                });
            }
        }
        Ok(())
    }
}

/// Transformer shape for FLOPs accounting: `t` layers, hidden size `d`,
/// FFN intermediate size `m`, pruning applied after layer `l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub t: usize,
    pub d: usize,
    pub m: usize,
    pub l: usize,
}

impl ModelDims {
    pub fn new(t: usize, d: usize, m: usize, l: usize) -> Result<Self> {
        if t == 0 || d == 0 || m == 0 {
            return Err(Error::BadConfig(
                "layer count, hidden size, and FFN size must be positive".into(),
            ));
        }
        if l > t {
            return Err(Error::BadConfig(format!(
                "prune layer {l} exceeds layer count {t}"
            )));
        }
        Ok(Self { t, d, m, l })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_formed_matrix_validates() {
        let m = TokenMatrix::new(4, 2, vec![1.0; 8]).unwrap();
        assert_eq!(m.n(), 4);
        assert_eq!(m.d(), 2);
        // validate is idempotent
        let m2 = validate(m.clone()).unwrap();
        let m3 = validate(m2.clone()).unwrap();
        assert_eq!(m2, m3);
    }

    #[test]
    fn nan_is_rejected_with_row_index() {
        let mut data = vec![0.0f32; 8];
        data[3] = f32::NAN; // row 1, column 1
        let err = TokenMatrix::new(4, 2, data).unwrap_err();
        assert_eq!(err, Error::NonFinite(1));
    }

    #[test]
    fn empty_matrix_is_rejected() {
        assert_eq!(
            TokenMatrix::new(0, 4, vec![]).unwrap_err(),
            Error::EmptyMatrix
        );
    }

    #[test]
    fn grid_must_match_visual_count() {
        let tags = vec![
            Modality::Visual,
            Modality::Visual,
            Modality::Text,
            Modality::Visual,
        ];
        // 3 visual tokens, grid claims 2x2
        let err = TokenMatrix::with_tags(4, 2, vec![0.5; 8], Some(tags.clone()), Some((2, 2)))
            .unwrap_err();
        assert!(matches!(err, Error::GridMismatch { visual: 3, .. }));
        // 3x1 grid is fine
        TokenMatrix::with_tags(4, 2, vec![0.5; 8], Some(tags), Some((3, 1))).unwrap();
    }

    #[test]
    fn zero_norm_rows_are_permitted() {
        TokenMatrix::new(2, 3, vec![0.0; 6]).unwrap();
    }

    #[test]
    fn ratio_budget_matches_published_retention_counts() {
        // 576 vision tokens under the usual published reduction ratios
        for (ratio, expected) in [(0.667, 192), (0.778, 128), (0.889, 64)] {
            let cfg = ReductionConfig {
                budget: BudgetSpec::Ratio(ratio),
                pivot_count: 8,
                ..Default::default()
            };
            assert_eq!(cfg.resolve_budget(576).unwrap(), expected, "ratio {ratio}");
        }
    }

    #[test]
    fn ratio_budget_clamps_to_pivot_floor() {
        let cfg = ReductionConfig {
            budget: BudgetSpec::Ratio(1.0),
            pivot_count: 8,
            ..Default::default()
        };
        assert_eq!(cfg.resolve_budget(100).unwrap(), 8);
    }

    #[test]
    fn count_budget_bounds() {
        let cfg = ReductionConfig {
            budget: BudgetSpec::Count(3),
            pivot_count: 4,
            ..Default::default()
        };
        assert!(matches!(
            cfg.resolve_budget(10),
            Err(Error::BudgetOutOfRange { .. })
        ));
        let cfg = ReductionConfig {
            budget: BudgetSpec::Count(11),
            pivot_count: 4,
            ..Default::default()
        };
        assert!(matches!(
            cfg.resolve_budget(10),
            Err(Error::BudgetOutOfRange { .. })
        ));
    }

    #[test]
    fn zero_ratio_is_rejected() {
        let cfg = ReductionConfig {
            budget: BudgetSpec::Ratio(0.0),
            ..Default::default()
        };
        assert!(cfg.resolve_budget(10).is_err());
    }

    #[test]
    fn attention_map_row_sums_checked() {
        AttentionMap::new(2, vec![0.5, 0.5, 1.0, 0.0]).unwrap();
        let err = AttentionMap::new(2, vec![0.5, 0.6, 1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NotRowStochastic { row: 0, .. }));
        let err = AttentionMap::new(2, vec![-0.1, 1.1, 1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NotRowStochastic { row: 0, .. }));
    }

    #[test]
    fn model_dims_invariants() {
        assert!(ModelDims::new(32, 4096, 11008, 2).is_ok());
        assert!(ModelDims::new(32, 4096, 11008, 33).is_err());
        assert!(ModelDims::new(0, 4096, 11008, 0).is_err());
    }
}
