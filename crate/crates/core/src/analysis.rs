//! FLOPs accounting, Hausdorff distance, bound verification, and retention
//! diagnostics.
//!
//! The bound verifier checks the distance guarantees that make budgeted
//! duplication pruning trustworthy: every pruned token is within
//! `sqrt(2(1-eps))*B` of some pivot, the Hausdorff distance between the
//! original and retained sets obeys the same bound, and a Hausdorff-
//! Lipschitz feature map moves by at most its certified constant times that
//! distance.
//!
//! Two modes are exposed because the `sqrt(2(1-eps))*B` form silently
//! substitutes the norm bound `B` for both token norms in the cosine
//! expansion, which is only valid when all norms are (near-)equal.
//! `Normalized` applies the equal-norm form and is expected to fail on
//! unequal-norm inputs; `General` checks the per-pair expansion
//! `|p-x|^2 <= |p|^2 + |x|^2 - 2*eps*|p||x|`, which is an exact algebraic
//! consequence of the cut and holds for any finite input.

use rayon::prelude::*;

use crate::dedup::{cosine, l2_norm, ReductionMethod, RetentionResult};
use crate::error::{Error, Result};
use crate::rng::Xoshiro256PlusPlus;
use crate::types::{Aggregator, ModelDims, TokenMatrix};

/// Relative tolerance on bound slack: a check fails only when its margin
/// drops below `-1e-6 * B`.
pub const MARGIN_TOLERANCE: f64 = 1e-6;

/// Relative tolerance for the equal-norm check in normalized mode.
pub const NORM_EQUALITY_TOLERANCE: f64 = 1e-4;

fn layer_cost(d: &ModelDims, n: usize) -> u128 {
    let (n, dd, m) = (n as u128, d.d as u128, d.m as u128);
    4 * n * dd * dd + 2 * n * n * dd + 2 * n * dd * m
}

/// Total transformer FLOPs for sequence length `n`:
/// `T * (4nd^2 + 2n^2d + 2ndm)`, evaluated exactly in 128-bit integers.
pub fn total_flops(dims: &ModelDims, n: usize) -> u128 {
    dims.t as u128 * layer_cost(dims, n)
}

/// FLOPs with the sequence pruned from `n` to `n_hat` tokens after layer
/// `L`: the first `L` layers run at full length, the remaining `T - L` at
/// the reduced length. Requires `n_hat <= n`.
pub fn post_prune_flops(dims: &ModelDims, n: usize, n_hat: usize) -> u128 {
    debug_assert!(n_hat <= n);
    dims.l as u128 * layer_cost(dims, n) + (dims.t - dims.l) as u128 * layer_cost(dims, n_hat)
}

/// Fraction of FLOPs removed by pruning: `1 - post/total`, in `[0, 1]`.
/// Zero-length inputs define the ratio as 0; the degenerate full-prune case
/// (`L = 0`, `n_hat = 0`) evaluates to exactly 1.
pub fn flops_reduction_ratio(dims: &ModelDims, n: usize, n_hat: usize) -> f64 {
    let total = total_flops(dims, n);
    if total == 0 {
        return 0.0;
    }
    let post = post_prune_flops(dims, n, n_hat);
    (1.0 - post as f64 / total as f64).clamp(0.0, 1.0)
}

/// KV-cache size after pruning, in stored elements: `2 * n_hat * d * (T-L)`
/// cached keys and values for the pruned layers (the first `L` layers cache
/// the full sequence and are excluded here).
pub fn kv_cache_elements(dims: &ModelDims, n_hat: usize) -> u128 {
    2 * n_hat as u128 * dims.d as u128 * (dims.t - dims.l) as u128
}

fn dist_sq(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for t in 0..a.len() {
        let e = a[t] as f64 - b[t] as f64;
        acc += e * e;
    }
    acc
}

/// Directed Hausdorff distance from the full matrix to a retained subset:
/// `max over x of min over r |x - r|`. Since the subset is drawn from the
/// matrix itself, this equals the symmetric Hausdorff distance.
pub fn hausdorff(tokens: &TokenMatrix, retained: &[usize]) -> Result<f64> {
    if retained.is_empty() {
        return Err(Error::EmptyRetention);
    }
    let n = tokens.n();
    if retained.iter().any(|&r| r >= n) {
        return Err(Error::BadConfig("retained index out of range".into()));
    }
    let worst_sq = (0..n)
        .into_par_iter()
        .map(|x| {
            let row = tokens.row(x);
            let mut best = f64::INFINITY;
            for &r in retained {
                let d = dist_sq(row, tokens.row(r));
                if d < best {
                    best = d;
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst_sq.sqrt())
}

/// A concrete Hausdorff-Lipschitz feature map: a linear map applied to the
/// coordinate-wise max-pool of the token set.
///
/// The certified constant is `sqrt(sum_rows (sum_cols |A|)^2)`: max-pooling
/// moves by at most the Hausdorff distance in every coordinate, and that
/// constant bounds the Euclidean response of `A` to a sup-norm perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzModel {
    d_out: usize,
    d_in: usize,
    a: Vec<f64>,
    certified_k: f64,
}

impl LipschitzModel {
    pub fn new(d_out: usize, d_in: usize, a: Vec<f64>) -> Result<Self> {
        if d_out == 0 || d_in == 0 || a.len() != d_out * d_in {
            return Err(Error::BadConfig(format!(
                "matrix shape {}x{} does not match {} entries",
                d_out,
                d_in,
                a.len()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadConfig("matrix entries must be finite".into()));
        }
        let mut sum_sq = 0.0f64;
        for r in 0..d_out {
            let mut row_abs = 0.0f64;
            for c in 0..d_in {
                row_abs += a[r * d_in + c].abs();
            }
            sum_sq += row_abs * row_abs;
        }
        Ok(Self {
            d_out,
            d_in,
            a,
            certified_k: sum_sq.sqrt(),
        })
    }

    pub fn identity(d: usize) -> Self {
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            a[i * d + i] = 1.0;
        }
        Self::new(d, d, a).expect("identity is well formed")
    }

    /// Deterministic Gaussian model from the documented generator; this is
    /// the model the CLI and the verification suite use.
    pub fn seeded(d_out: usize, d_in: usize, seed: u64) -> Self {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let a: Vec<f64> = (0..d_out * d_in).map(|_| rng.gaussian()).collect();
        Self::new(d_out, d_in, a).expect("gaussian entries are finite")
    }

    pub fn certified_k(&self) -> f64 {
        self.certified_k
    }

    /// `f(S) = A * maxpool(S)` for the token rows selected by `indices`.
    pub fn eval_subset(&self, tokens: &TokenMatrix, indices: &[usize]) -> Result<Vec<f64>> {
        if indices.is_empty() {
            return Err(Error::EmptySet);
        }
        if tokens.d() != self.d_in {
            return Err(Error::BadConfig(format!(
                "model expects dimension {}, tokens have {}",
                self.d_in,
                tokens.d()
            )));
        }
        let mut pool = vec![f64::NEG_INFINITY; self.d_in];
        for &i in indices {
            let row = tokens.row(i);
            for (c, slot) in pool.iter_mut().enumerate() {
                let v = row[c] as f64;
                if v > *slot {
                    *slot = v;
                }
            }
        }
        let mut out = vec![0.0f64; self.d_out];
        for (r, slot) in out.iter_mut().enumerate() {
            let row = &self.a[r * self.d_in..(r + 1) * self.d_in];
            let mut acc = 0.0f64;
            for (&a, &p) in row.iter().zip(&pool) {
                acc += a * p;
            }
            *slot = acc;
        }
        Ok(out)
    }

    /// `f` over the whole matrix.
    pub fn eval_all(&self, tokens: &TokenMatrix) -> Result<Vec<f64>> {
        let all: Vec<usize> = (0..tokens.n()).collect();
        self.eval_subset(tokens, &all)
    }
}

/// Which bound form to verify.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundMode {
    /// The `sqrt(2(1-eps))*B` form; sound when all token norms equal `B`.
    Normalized,
    /// The per-pair expansion; an exact consequence on any finite input.
    General,
}

impl BoundMode {
    pub fn name(&self) -> &'static str {
        match self {
            BoundMode::Normalized => "normalized",
            BoundMode::General => "general",
        }
    }
}

/// Outcome of a bound verification run.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// Largest token L2 norm.
    pub b: f64,
    /// Effective cut threshold realized by the budget.
    pub eps_eff: f64,
    /// Hausdorff distance between the full and retained sets.
    pub hausdorff: f64,
    pub lemma1_ok: bool,
    pub lemma2_ok: bool,
    /// `None` when no feature model was supplied.
    pub theorem1_ok: Option<bool>,
    pub mode: BoundMode,
    /// Most negative slack seen across all checks (positive slack means the
    /// bound held with room to spare).
    pub worst_margin: f64,
    /// Whether all token norms equal `b` within 1e-4 relative.
    pub norms_equal: bool,
}

impl BoundReport {
    pub fn all_ok(&self) -> bool {
        self.lemma1_ok && self.lemma2_ok && self.theorem1_ok.unwrap_or(true)
    }
}

fn require_max_aggregator(result: &RetentionResult) -> Result<()> {
    match result.method {
        ReductionMethod::Dart {
            aggregator: Aggregator::Max,
            ..
        } => Ok(()),
        _ => Err(Error::WrongAggregator),
    }
}

/// Verifies the duplication distance bound, the Hausdorff bound, and (with
/// a model) the output-difference bound for a max-aggregated reduction.
///
/// Normalized mode evaluates the equal-norm forms even when norms are
/// unequal — that is the point of the documented counterexample — and
/// records the norm check in `norms_equal`. Use
/// [`verify_bounds_strict`] to treat unequal norms as an error instead.
pub fn verify_bounds(
    tokens: &TokenMatrix,
    result: &RetentionResult,
    model: Option<&LipschitzModel>,
    mode: BoundMode,
) -> Result<BoundReport> {
    require_max_aggregator(result)?;
    let n = tokens.n();
    let norms: Vec<f64> = (0..n).map(|i| l2_norm(tokens.row(i))).collect();
    let mut b = 0.0f64;
    for &v in &norms {
        if v > b {
            b = v;
        }
    }
    let norms_equal = norms
        .iter()
        .all(|&v| (v - b).abs() <= NORM_EQUALITY_TOLERANCE * b);
    let tolerance = -MARGIN_TOLERANCE * b;

    let pruned = result.pruned();
    let eps_eff = result.eps_eff;
    let d_h = hausdorff(tokens, &result.retained)?;
    let pivot_indices = result.pivots.indices();

    // sqrt(2(1-eps)) * B, clamped for the nothing-pruned (+inf) and
    // slightly-above-one cases
    let bound_factor = if pruned.is_empty() {
        0.0
    } else {
        (2.0 * (1.0 - eps_eff)).max(0.0).sqrt()
    };
    let normalized_bound = bound_factor * b;

    let mut lemma1_margin = f64::INFINITY;
    let lemma2_margin;
    let mut theorem1_margin = f64::INFINITY;

    match mode {
        BoundMode::Normalized => {
            for &j in &pruned {
                let row = tokens.row(j);
                let mut best_sq = f64::INFINITY;
                for &p in pivot_indices {
                    let d = dist_sq(row, tokens.row(p));
                    if d < best_sq {
                        best_sq = d;
                    }
                }
                let margin = normalized_bound - best_sq.sqrt();
                if margin < lemma1_margin {
                    lemma1_margin = margin;
                }
            }
            lemma2_margin = if pruned.is_empty() {
                f64::INFINITY
            } else {
                normalized_bound - d_h
            };
            if let Some(m) = model {
                let fx = m.eval_all(tokens)?;
                let fr = m.eval_subset(tokens, &result.retained)?;
                let mut diff_sq = 0.0f64;
                for i in 0..fx.len() {
                    let e = fx[i] - fr[i];
                    diff_sq += e * e;
                }
                theorem1_margin = m.certified_k() * normalized_bound - diff_sq.sqrt();
            }
        }
        BoundMode::General => {
            // per-pair bound via the argmax pivot; also yields a general
            // Hausdorff bound as the largest per-pair distance bound
            let mut largest_pair_bound_sq = 0.0f64;
            for &j in &pruned {
                let row = tokens.row(j);
                let mut best_pivot = pivot_indices[0];
                let mut best_dup = f64::NEG_INFINITY;
                for &p in pivot_indices {
                    let dup = cosine(tokens.row(p), row);
                    if dup > best_dup {
                        best_dup = dup;
                        best_pivot = p;
                    }
                }
                let np = norms[best_pivot];
                let nx = norms[j];
                let rhs = np * np + nx * nx - 2.0 * eps_eff * np * nx;
                let lhs = dist_sq(row, tokens.row(best_pivot));
                let margin = rhs - lhs;
                if margin < lemma1_margin {
                    lemma1_margin = margin;
                }
                if rhs > largest_pair_bound_sq {
                    largest_pair_bound_sq = rhs;
                }
            }
            lemma2_margin = if pruned.is_empty() {
                f64::INFINITY
            } else {
                largest_pair_bound_sq.max(0.0).sqrt() - d_h
            };
            if let Some(m) = model {
                let fx = m.eval_all(tokens)?;
                let fr = m.eval_subset(tokens, &result.retained)?;
                let mut diff_sq = 0.0f64;
                for i in 0..fx.len() {
                    let e = fx[i] - fr[i];
                    diff_sq += e * e;
                }
                theorem1_margin = m.certified_k() * d_h - diff_sq.sqrt();
            }
        }
    }

    let worst_margin = lemma1_margin.min(lemma2_margin).min(theorem1_margin);
    Ok(BoundReport {
        b,
        eps_eff,
        hausdorff: d_h,
        lemma1_ok: lemma1_margin >= tolerance,
        lemma2_ok: lemma2_margin >= tolerance,
        theorem1_ok: model.map(|_| theorem1_margin >= tolerance),
        mode,
        worst_margin,
        norms_equal,
    })
}

/// Like [`verify_bounds`] but refuses to run the normalized form on
/// unequal-norm inputs.
pub fn verify_bounds_strict(
    tokens: &TokenMatrix,
    result: &RetentionResult,
    model: Option<&LipschitzModel>,
    mode: BoundMode,
) -> Result<BoundReport> {
    let report = verify_bounds(tokens, result, model, mode)?;
    if mode == BoundMode::Normalized && !report.norms_equal {
        return Err(Error::NotNormalized);
    }
    Ok(report)
}

/// Overlap between two retained index sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapStats {
    /// `|A ∩ B| / |A ∪ B|`.
    pub jaccard: f64,
    /// `|A ∩ B| / min(|A|, |B|)`.
    pub min_overlap: f64,
}

/// Computes overlap statistics for two sorted retained-index sets.
pub fn overlap_stats(a: &[usize], b: &[usize]) -> OverlapStats {
    let mut inter = 0usize;
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    let smaller = a.len().min(b.len());
    OverlapStats {
        jaccard: if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        },
        min_overlap: if smaller == 0 {
            1.0
        } else {
            inter as f64 / smaller as f64
        },
    }
}

/// Positional diagnostics for a retained set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionStats {
    /// Mean of `index / (n-1)` over retained tokens; 0.5 is unbiased.
    pub mean_norm_index: f64,
    /// Chi-square statistic of retained visual tokens over a 3x3 spatial
    /// bucketing of the grid, against a uniform expectation. `None` without
    /// a grid.
    pub grid_chi2: Option<f64>,
}

/// Positional bias of a retained set: normalized sequence position, plus a
/// chi-square over grid cells when the matrix carries one.
pub fn position_stats(tokens: &TokenMatrix, retained: &[usize]) -> Result<PositionStats> {
    let n = tokens.n();
    if retained.iter().any(|&i| i >= n) {
        return Err(Error::BadConfig("retained index out of range".into()));
    }
    // a singleton or empty retention has no positional information
    let mean_norm_index = if retained.is_empty() || n == 1 {
        0.5
    } else {
        let mut acc = 0.0f64;
        for &i in retained {
            acc += i as f64 / (n - 1) as f64;
        }
        acc / retained.len() as f64
    };

    let grid_chi2 = tokens.grid().map(|(rows, cols)| {
        // visual tokens in index order fill the grid row-major
        let mut visual_positions = vec![usize::MAX; n];
        let mut pos = 0usize;
        for (i, slot) in visual_positions.iter_mut().enumerate() {
            if tokens.is_prunable(i) {
                *slot = pos;
                pos += 1;
            }
        }
        let bucket = |p: usize| -> usize {
            let (r, c) = (p / cols, p % cols);
            (r * 3 / rows) * 3 + c * 3 / cols
        };
        let mut cell_total = [0usize; 9];
        for p in 0..rows * cols {
            cell_total[bucket(p)] += 1;
        }
        let mut observed = [0usize; 9];
        let mut retained_visual = 0usize;
        for &i in retained {
            let p = visual_positions[i];
            if p != usize::MAX {
                observed[bucket(p)] += 1;
                retained_visual += 1;
            }
        }
        let total_visual = rows * cols;
        let mut chi2 = 0.0f64;
        for cell in 0..9 {
            if cell_total[cell] == 0 {
                continue;
            }
            let expected = retained_visual as f64 * cell_total[cell] as f64 / total_visual as f64;
            if expected > 0.0 {
                let e = observed[cell] as f64 - expected;
                chi2 += e * e / expected;
            }
        }
        chi2
    });

    Ok(PositionStats {
        mean_norm_index,
        grid_chi2,
    })
}
