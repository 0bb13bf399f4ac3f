//! Pivot-token selection.
//!
//! A pivot set is a small number of tokens picked to represent the whole
//! matrix; every other token is later scored by its duplication against the
//! pivots. Selection is either random (seeded) or score-based: embedding
//! norm, L1 norm of the attention keys or values, or mean attention
//! received. Score-based selection takes the top or bottom `k` with ties
//! broken toward the lower index, which gives a total order and makes every
//! strategy reproducible.

use crate::error::{Error, Result};
use crate::rng::Xoshiro256PlusPlus;
use crate::types::{AttentionMap, AuxFeatures, Modality, ReductionConfig, TokenMatrix};

/// Which statistic drives pivot selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    Random,
    EmbedNorm,
    KNorm,
    VNorm,
    AttnScore,
}

/// Pick the highest- or lowest-scoring tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Max,
    Min,
}

/// Norm order for the embedding-norm strategy. K-norm and V-norm are fixed
/// to L1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormOrder {
    L1,
    L2,
}

/// A fully specified pivot-selection strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PivotStrategy {
    pub kind: StrategyKind,
    /// Ignored for `Random`.
    pub direction: Direction,
    /// Only meaningful for `EmbedNorm`.
    pub norm_order: NormOrder,
}

impl PivotStrategy {
    pub fn random() -> Self {
        Self {
            kind: StrategyKind::Random,
            direction: Direction::Max,
            norm_order: NormOrder::L2,
        }
    }

    pub fn embed_norm(order: NormOrder, direction: Direction) -> Self {
        Self {
            kind: StrategyKind::EmbedNorm,
            direction,
            norm_order: order,
        }
    }

    pub fn knorm(direction: Direction) -> Self {
        Self {
            kind: StrategyKind::KNorm,
            direction,
            norm_order: NormOrder::L1,
        }
    }

    /// The usual default: maximum K-norm.
    pub fn knorm_max() -> Self {
        Self::knorm(Direction::Max)
    }

    pub fn vnorm(direction: Direction) -> Self {
        Self {
            kind: StrategyKind::VNorm,
            direction,
            norm_order: NormOrder::L1,
        }
    }

    pub fn attn_score(direction: Direction) -> Self {
        Self {
            kind: StrategyKind::AttnScore,
            direction,
            norm_order: NormOrder::L2,
        }
    }

    /// Stable textual name, e.g. `knorm-max` or `embednorm-l2-min`.
    pub fn name(&self) -> String {
        match self.kind {
            StrategyKind::Random => "random".to_string(),
            StrategyKind::EmbedNorm => format!(
                "embednorm-{}-{}",
                match self.norm_order {
                    NormOrder::L1 => "l1",
                    NormOrder::L2 => "l2",
                },
                dir_name(self.direction)
            ),
            StrategyKind::KNorm => format!("knorm-{}", dir_name(self.direction)),
            StrategyKind::VNorm => format!("vnorm-{}", dir_name(self.direction)),
            StrategyKind::AttnScore => format!("attn-{}", dir_name(self.direction)),
        }
    }

    /// Parses the names produced by [`name`](Self::name).
    pub fn parse(s: &str) -> Result<Self> {
        let strategy = match s {
            "random" => Self::random(),
            "embednorm-l1-max" => Self::embed_norm(NormOrder::L1, Direction::Max),
            "embednorm-l1-min" => Self::embed_norm(NormOrder::L1, Direction::Min),
            "embednorm-l2-max" | "embednorm-max" => Self::embed_norm(NormOrder::L2, Direction::Max),
            "embednorm-l2-min" | "embednorm-min" => Self::embed_norm(NormOrder::L2, Direction::Min),
            "knorm-max" => Self::knorm(Direction::Max),
            "knorm-min" => Self::knorm(Direction::Min),
            "vnorm-max" => Self::vnorm(Direction::Max),
            "vnorm-min" => Self::vnorm(Direction::Min),
            "attn-max" => Self::attn_score(Direction::Max),
            "attn-min" => Self::attn_score(Direction::Min),
            other => {
                return Err(Error::BadConfig(format!(
                    "unknown pivot strategy '{other}'"
                )))
            }
        };
        Ok(strategy)
    }
}

fn dir_name(d: Direction) -> &'static str {
    match d {
        Direction::Max => "max",
        Direction::Min => "min",
    }
}

/// The selected pivots: sorted distinct indices, the strategy that produced
/// them, and (for score-based strategies) the per-pivot selection scores.
#[derive(Debug, Clone, PartialEq)]
pub struct PivotSet {
    indices: Vec<usize>,
    strategy: PivotStrategy,
    scores: Option<Vec<f64>>,
}

impl PivotSet {
    /// Builds a pivot set from explicit indices (distinct, in `[0, n)`).
    /// Useful for tests and for driving retention with a fixed pivot set.
    pub fn from_indices(
        mut indices: Vec<usize>,
        n: usize,
        strategy: PivotStrategy,
    ) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::BadConfig("pivot indices must be distinct".into()));
        }
        if indices.iter().any(|&i| i >= n) {
            return Err(Error::BadConfig("pivot index out of range".into()));
        }
        Ok(Self {
            indices,
            strategy,
            scores: None,
        })
    }

    /// An empty pivot set, used by the baseline pruners.
    pub fn empty() -> Self {
        Self {
            indices: Vec::new(),
            strategy: PivotStrategy::random(),
            scores: None,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn k(&self) -> usize {
        self.indices.len()
    }

    pub fn strategy(&self) -> PivotStrategy {
        self.strategy
    }

    pub fn scores(&self) -> Option<&[f64]> {
        self.scores.as_deref()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }
}

/// Per-row L1 or L2 norms, accumulated in f64 in index order.
pub fn row_norms<'a, I>(rows: I, order: NormOrder) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [f32]>,
{
    rows.into_iter()
        .map(|row| match order {
            NormOrder::L1 => {
                let mut acc = 0.0f64;
                for &v in row {
                    acc += (v as f64).abs();
                }
                acc
            }
            NormOrder::L2 => {
                let mut acc = 0.0f64;
                for &v in row {
                    let v = v as f64;
                    acc += v * v;
                }
                acc.sqrt()
            }
        })
        .collect()
}

/// Mean attention **received** by each token: the column mean of the map.
///
/// Averaging a row of a row-stochastic map is constant by construction, so
/// the received direction is the only informative reading; see the README
/// notes on score orientation.
pub fn attention_received(map: &AttentionMap) -> Vec<f64> {
    let n = map.n();
    let mut scores = vec![0.0f64; n];
    for j in 0..n {
        let row = map.row(j);
        for (i, &w) in row.iter().enumerate() {
            scores[i] += w as f64;
        }
    }
    for s in &mut scores {
        *s /= n as f64;
    }
    scores
}

/// Shared top-k kernel: the `k` candidates with the highest (`Max`) or
/// lowest (`Min`) score, ties broken toward the lower index. Returned
/// sorted ascending.
pub(crate) fn top_k_indices(
    scores: &[f64],
    candidates: &[usize],
    k: usize,
    direction: Direction,
) -> Vec<usize> {
    debug_assert!(k <= candidates.len());
    let mut order: Vec<usize> = candidates.to_vec();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (scores[a], scores[b]);
        let primary = match direction {
            Direction::Max => sb.partial_cmp(&sa).expect("scores must not be NaN"),
            Direction::Min => sa.partial_cmp(&sb).expect("scores must not be NaN"),
        };
        primary.then(a.cmp(&b))
    });
    let mut picked: Vec<usize> = order[..k].to_vec();
    picked.sort_unstable();
    picked
}

/// Row norms computed in parallel across rows; each row's accumulation is
/// sequential, so values match [`row_norms`] bit for bit.
fn parallel_row_norms(tokens: &TokenMatrix, order: NormOrder) -> Vec<f64> {
    use rayon::prelude::*;
    (0..tokens.n())
        .into_par_iter()
        .map(|i| {
            let row = tokens.row(i);
            match order {
                NormOrder::L1 => {
                    let mut acc = 0.0f64;
                    for &v in row {
                        acc += (v as f64).abs();
                    }
                    acc
                }
                NormOrder::L2 => {
                    let mut acc = 0.0f64;
                    for &v in row {
                        let v = v as f64;
                        acc += v * v;
                    }
                    acc.sqrt()
                }
            }
        })
        .collect()
}

fn strategy_scores(
    tokens: &TokenMatrix,
    aux: Option<&AuxFeatures>,
    attn: Option<&AttentionMap>,
    strategy: PivotStrategy,
) -> Result<Vec<f64>> {
    let n = tokens.n();
    match strategy.kind {
        StrategyKind::Random => unreachable!("random selection does not use scores"),
        StrategyKind::EmbedNorm => Ok(parallel_row_norms(tokens, strategy.norm_order)),
        StrategyKind::KNorm => {
            let keys = aux
                .and_then(|a| a.keys.as_ref())
                .ok_or(Error::MissingAux("K-norm selection needs key features"))?;
            if keys.rows() != n {
                return Err(Error::MissingAux("keys row count differs from token count"));
            }
            Ok(row_norms((0..n).map(|i| keys.row(i)), NormOrder::L1))
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
            Ok(row_norms((0..n).map(|i| values.row(i)), NormOrder::L1))
        }
        StrategyKind::AttnScore => {
            let map = attn.ok_or(Error::MissingAttention)?;
            if map.n() != n {
                return Err(Error::MissingAttention);
            }
            Ok(attention_received(map))
        }
    }
}

/// Selects `cfg.pivot_count` pivots under `cfg.pivot_strategy`.
///
/// With a modality quota, selection runs independently inside the visual
/// and text partitions (visual first for the random strategy's draw order)
/// and the results are merged.
pub fn select_pivots(
    tokens: &TokenMatrix,
    aux: Option<&AuxFeatures>,
    attn: Option<&AttentionMap>,
    cfg: &ReductionConfig,
) -> Result<PivotSet> {
    let n = tokens.n();
    let k = cfg.pivot_count;
    if k == 0 {
        return Err(Error::BadConfig("pivot_count must be at least 1".into()));
    }
    if k > n {
        return Err(Error::KExceedsN { k, n });
    }
    cfg.validate_quota(tokens)?;
    if let Some(a) = aux {
        a.validate(n)?;
    }

    let strategy = cfg.pivot_strategy;
    let partitions: Vec<(Vec<usize>, usize)> = match cfg.modality_quota {
        None => vec![((0..n).collect(), k)],
        Some((visual_k, text_k)) => {
            let mut visual = Vec::new();
            let mut text = Vec::new();
            for i in 0..n {
                match tokens.modality().map(|m| m[i]) {
                    Some(Modality::Text) => text.push(i),
                    _ => visual.push(i),
                }
            }
            vec![(visual, visual_k), (text, text_k)]
        }
    };

    let mut indices: Vec<usize> = Vec::with_capacity(k);
    let mut scores: Option<Vec<f64>> = None;

    if strategy.kind == StrategyKind::Random {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);
        for (candidates, quota) in &partitions {
            indices.extend(rng.sample_distinct_from(candidates, *quota));
        }
    } else {
        let all_scores = strategy_scores(tokens, aux, attn, strategy)?;
        for (candidates, quota) in &partitions {
            indices.extend(top_k_indices(
                &all_scores,
                candidates,
                *quota,
                strategy.direction,
            ));
        }
        indices.sort_unstable();
        scores = Some(indices.iter().map(|&i| all_scores[i]).collect());
    }
    indices.sort_unstable();

    Ok(PivotSet {
        indices,
        strategy,
        scores,
    })
}
