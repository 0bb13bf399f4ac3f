//! The five subcommands: `prune`, `compare`, `flops`, `verify`, `synth`.
//!
//! Each takes a clap-derived argument struct and returns the report string
//! it printed, so integration tests can drive the exact CLI surface
//! without spawning a process. Reports go to stdout; errors go to stderr
//! as `{"code", "message"}` with exit status 2; `verify` exits 1 when a
//! bound is violated.

use std::path::PathBuf;
use std::time::Instant;

use clap::Args;

use dart_core::{
    attention_received, dart_prune, flops_reduction_ratio, importance_prune, position_stats,
    post_prune_flops, random_prune, total_flops, verify_bounds, Aggregator, AttentionMap,
    AuxFeatures, BoundMode, BudgetSpec, EpsilonMode, FeatureMatrix, LipschitzModel, ModelDims,
    NormalizeRows, PivotStrategy, ReductionConfig, RetentionResult, TokenMatrix,
};

use crate::formats::{load_attention, load_tokens, write_dtok_bytes, write_file};
use crate::report::{ConfigEcho, FlopsEcho, OverlapEcho, Report};
use crate::CmdError;

/// Default feature-model seed for `verify`; any fixed value keeps runs
/// reproducible, this one is arbitrary.
pub const DEFAULT_MODEL_SEED: u64 = 0xDA7A_5EED;

fn parse_aggregator(name: &str) -> Result<Aggregator, CmdError> {
    match name {
        "max" => Ok(Aggregator::Max),
        "min" => Ok(Aggregator::Min),
        "mean" => Ok(Aggregator::Mean),
        other => Err(CmdError::bad_config(format!(
            "unknown aggregator '{other}' (expected max, min, or mean)"
        ))),
    }
}

fn parse_quota(raw: &str) -> Result<(usize, usize), CmdError> {
    let parts: Vec<&str> = raw.split(',').collect();
    if parts.len() == 2 {
        if let (Ok(v), Ok(t)) = (parts[0].trim().parse(), parts[1].trim().parse()) {
            return Ok((v, t));
        }
    }
    Err(CmdError::bad_config(format!(
        "quota must be 'visual,text', got '{raw}'"
    )))
}

fn parse_dims(raw: &str) -> Result<ModelDims, CmdError> {
    let parts: Vec<&str> = raw.split(',').collect();
    if parts.len() == 4 {
        let nums: Result<Vec<usize>, _> = parts.iter().map(|p| p.trim().parse()).collect();
        if let Ok(nums) = nums {
            return ModelDims::new(nums[0], nums[1], nums[2], nums[3]).map_err(CmdError::from);
        }
    }
    Err(CmdError::bad_config(format!(
        "dims must be 'T,d,m,L', got '{raw}'"
    )))
}

/// Shared reduction flags for `prune`, `compare`, and `verify`.
#[derive(Debug, Args, Clone)]
pub struct ReductionFlags {
    /// Token matrix (DTOK, or CSV with a `d=<int>` header)
    #[arg(long)]
    pub tokens: PathBuf,
    /// Attention map (DATT), needed by the attn strategies
    #[arg(long)]
    pub attn: Option<PathBuf>,
    /// Key features (DTOK payload), needed by knorm strategies
    #[arg(long)]
    pub keys: Option<PathBuf>,
    /// Value features (DTOK payload), needed by vnorm strategies
    #[arg(long)]
    pub values: Option<PathBuf>,
    /// Fraction of tokens to prune, in (0, 1]
    #[arg(long, conflicts_with = "budget")]
    pub ratio: Option<f64>,
    /// Number of tokens to retain
    #[arg(long)]
    pub budget: Option<usize>,
    /// Number of pivot tokens
    #[arg(long, default_value_t = 8)]
    pub pivots: usize,
    /// Pivot strategy: random, embednorm-l1/-l2, knorm, vnorm, attn, each
    /// with -max or -min
    #[arg(long, default_value = "knorm-max")]
    pub strategy: String,
    /// Score aggregation over pivots: max, min, or mean
    #[arg(long, default_value = "max")]
    pub aggregator: String,
    /// Seed for every random choice
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-pivot pruning shares instead of one global cut
    #[arg(long)]
    pub per_pivot: bool,
    /// Pivot quota as 'visual,text' (requires modality tags)
    #[arg(long)]
    pub quota: Option<String>,
}

struct LoadedInputs {
    tokens: TokenMatrix,
    aux: AuxFeatures,
    attn: Option<AttentionMap>,
    cfg: ReductionConfig,
}

impl ReductionFlags {
    fn load(&self) -> Result<LoadedInputs, CmdError> {
        let tokens = load_tokens(&self.tokens)?;
        let attn = self.attn.as_deref().map(load_attention).transpose()?;
        let to_features = |path: &PathBuf| -> Result<FeatureMatrix, CmdError> {
            let m = load_tokens(path)?;
            FeatureMatrix::new(m.n(), m.d(), m.data().to_vec()).map_err(CmdError::from)
        };
        let aux = AuxFeatures {
            keys: self.keys.as_ref().map(to_features).transpose()?,
            values: self.values.as_ref().map(to_features).transpose()?,
        };
        let budget = match (self.budget, self.ratio) {
            (Some(b), None) => BudgetSpec::Count(b),
            (None, Some(r)) => BudgetSpec::Ratio(r),
            _ => {
                return Err(CmdError::bad_config(
                    "exactly one of --budget or --ratio is required",
                ))
            }
        };
        let cfg = ReductionConfig {
            budget,
            pivot_count: self.pivots,
            pivot_strategy: PivotStrategy::parse(&self.strategy)?,
            aggregator: parse_aggregator(&self.aggregator)?,
            epsilon_mode: if self.per_pivot {
                EpsilonMode::PerPivotShare
            } else {
                EpsilonMode::Global
            },
            seed: self.seed,
            modality_quota: self.quota.as_deref().map(parse_quota).transpose()?,
        };
        Ok(LoadedInputs {
            tokens,
            aux,
            attn,
            cfg,
        })
    }
}

fn config_echo(
    cfg: &ReductionConfig,
    resolved_budget: usize,
    strategy_label: String,
) -> ConfigEcho {
    ConfigEcho {
        budget: resolved_budget,
        ratio: match cfg.budget {
            BudgetSpec::Ratio(r) => Some(r),
            BudgetSpec::Count(_) => None,
        },
        pivot_count: cfg.pivot_count,
        strategy: strategy_label,
        aggregator: cfg.aggregator.name(),
        epsilon_mode: cfg.epsilon_mode.name(),
        seed: cfg.seed,
        modality_quota: cfg.modality_quota,
    }
}

fn build_report(
    tokens: &TokenMatrix,
    cfg: &ReductionConfig,
    strategy_label: String,
    result: &RetentionResult,
    dims: &ModelDims,
    overlap: Option<OverlapEcho>,
    timing_ms: Option<f64>,
) -> Result<Report, CmdError> {
    let n = tokens.n();
    let n_hat = result.budget();
    let flops = FlopsEcho {
        total: total_flops(dims, n),
        post: post_prune_flops(dims, n, n_hat),
        ratio: flops_reduction_ratio(dims, n, n_hat),
    };
    // the bound check applies only to max-aggregated duplication runs
    let bounds = match result.method {
        dart_core::ReductionMethod::Dart {
            aggregator: Aggregator::Max,
            ..
        } => Some(verify_bounds(tokens, result, None, BoundMode::General)?),
        _ => None,
    };
    let position = position_stats(tokens, &result.retained)?;
    Ok(Report {
        config: config_echo(cfg, n_hat, strategy_label),
        retained: result.retained.clone(),
        pivots: result.pivots.indices().to_vec(),
        tau: result.tau,
        eps_eff: result.eps_eff,
        flops,
        bounds,
        overlap,
        position,
        timing_ms,
    })
}

/// `dart prune`: run the duplication reduction and emit a report.
#[derive(Debug, Args)]
pub struct PruneArgs {
    #[command(flatten)]
    pub reduction: ReductionFlags,
    /// Transformer shape for the FLOPs block, as 'T,d,m,L'
    #[arg(long, default_value = "32,4096,11008,2")]
    pub dims: String,
    /// Measure and report the pruning wall time (timing_ms is null
    /// otherwise, keeping reports byte-identical across runs)
    #[arg(long)]
    pub timing: bool,
    /// Also write the report to this path
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_prune(args: &PruneArgs) -> Result<String, CmdError> {
    let inputs = args.reduction.load()?;
    let dims = parse_dims(&args.dims)?;
    let started = Instant::now();
    let result = dart_prune(
        &inputs.tokens,
        Some(&inputs.aux),
        inputs.attn.as_ref(),
        &inputs.cfg,
    )?;
    let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
    let report = build_report(
        &inputs.tokens,
        &inputs.cfg,
        inputs.cfg.pivot_strategy.name(),
        &result,
        &dims,
        None,
        args.timing.then_some(elapsed_ms),
    )?;
    let rendered = report.render();
    if let Some(out) = &args.out {
        write_file(out, rendered.as_bytes())?;
    }
    Ok(rendered)
}

/// `dart compare`: run two retention strategies on the same input and
/// report their overlap.
#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub reduction: ReductionFlags,
    /// First side: a pivot strategy name, `baseline-random`, or
    /// `baseline-importance`
    #[arg(long = "a")]
    pub side_a: String,
    /// Second side, same grammar as --a
    #[arg(long = "b")]
    pub side_b: String,
    /// Seed for side A (defaults to --seed)
    #[arg(long)]
    pub seed_a: Option<u64>,
    /// Seed for side B (defaults to --seed)
    #[arg(long)]
    pub seed_b: Option<u64>,
    /// Transformer shape for the FLOPs block, as 'T,d,m,L'
    #[arg(long, default_value = "32,4096,11008,2")]
    pub dims: String,
    /// Measure and report total pruning wall time
    #[arg(long)]
    pub timing: bool,
    /// Also write the report to this path
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run_side(
    spec: &str,
    inputs: &LoadedInputs,
    seed: u64,
    budget: usize,
) -> Result<RetentionResult, CmdError> {
    match spec {
        "baseline-random" => random_prune(inputs.tokens.n(), budget, seed).map_err(CmdError::from),
        "baseline-importance" => {
            let attn = inputs.attn.as_ref().ok_or(CmdError {
                code: "MissingAttention".to_string(),
                message: "baseline-importance requires --attn".to_string(),
            })?;
            if attn.n() != inputs.tokens.n() {
                return Err(CmdError::from(dart_core::Error::MissingAttention));
            }
            let scores = attention_received(attn);
            importance_prune(&scores, budget).map_err(CmdError::from)
        }
        strategy => {
            let cfg = ReductionConfig {
                pivot_strategy: PivotStrategy::parse(strategy)?,
                seed,
                budget: BudgetSpec::Count(budget),
                ..inputs.cfg.clone()
            };
            dart_prune(
                &inputs.tokens,
                Some(&inputs.aux),
                inputs.attn.as_ref(),
                &cfg,
            )
            .map_err(CmdError::from)
        }
    }
}

pub fn run_compare(args: &CompareArgs) -> Result<String, CmdError> {
    let inputs = args.reduction.load()?;
    let dims = parse_dims(&args.dims)?;
    let budget = inputs.cfg.resolve_budget(inputs.tokens.n())?;
    let seed_a = args.seed_a.unwrap_or(inputs.cfg.seed);
    let seed_b = args.seed_b.unwrap_or(inputs.cfg.seed);

    let started = Instant::now();
    let result_a = run_side(&args.side_a, &inputs, seed_a, budget)?;
    let result_b = run_side(&args.side_b, &inputs, seed_b, budget)?;
    let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;

    let stats = dart_core::overlap_stats(&result_a.retained, &result_b.retained);
    let overlap = OverlapEcho {
        stats,
        retained_b: result_b.retained.clone(),
    };
    let label = format!("{} vs {}", args.side_a, args.side_b);
    let report = build_report(
        &inputs.tokens,
        &inputs.cfg,
        label,
        &result_a,
        &dims,
        Some(overlap),
        args.timing.then_some(elapsed_ms),
    )?;
    let rendered = report.render();
    if let Some(out) = &args.out {
        write_file(out, rendered.as_bytes())?;
    }
    Ok(rendered)
}

/// `dart flops`: evaluate the cost formulas for one transformer shape.
#[derive(Debug, Args)]
pub struct FlopsArgs {
    /// Transformer layer count
    #[arg(long, visible_alias = "T")]
    pub t: usize,
    /// Hidden size
    #[arg(long)]
    pub d: usize,
    /// FFN intermediate size
    #[arg(long)]
    pub m: usize,
    /// Prune layer index (first L layers run at full length)
    #[arg(long, visible_alias = "L")]
    pub l: usize,
    /// Sequence length before pruning
    #[arg(long)]
    pub n: usize,
    /// Sequence length after pruning
    #[arg(long = "n-hat")]
    pub n_hat: usize,
}

/// Returns `(stdout_json, warning)`; the warning goes to stderr.
pub fn run_flops(args: &FlopsArgs) -> Result<(String, Option<String>), CmdError> {
    if args.n_hat > args.n {
        return Err(CmdError::bad_config(format!(
            "n-hat {} exceeds n {}",
            args.n_hat, args.n
        )));
    }
    let dims = ModelDims::new(args.t, args.d, args.m, args.l)?;
    let flops = FlopsEcho {
        total: total_flops(&dims, args.n),
        post: post_prune_flops(&dims, args.n, args.n_hat),
        ratio: flops_reduction_ratio(&dims, args.n, args.n_hat),
    };
    let warning = (flops.ratio >= 1.0).then(|| {
        "{\"warning\":\"reduction ratio reached 1.0; the pruned model costs nothing (degenerate input)\"}"
            .to_string()
    });
    Ok((flops.render(), warning))
}

/// `dart verify`: run the reduction, then check the distance and output
/// bounds. Exits 1 when a bound is violated.
#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub reduction: ReductionFlags,
    /// Bound form to check: 'normalized' (equal-norm) or 'general'
    #[arg(long, default_value = "general")]
    pub mode: String,
    /// Output width of the max-pool feature model
    #[arg(long, default_value_t = 16)]
    pub dout: usize,
    /// Seed of the feature model
    #[arg(long, default_value_t = DEFAULT_MODEL_SEED)]
    pub model_seed: u64,
    /// Also write the bound report to this path
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_verify(args: &VerifyArgs) -> Result<(String, bool), CmdError> {
    let mode = match args.mode.as_str() {
        "normalized" => BoundMode::Normalized,
        "general" => BoundMode::General,
        other => {
            return Err(CmdError::bad_config(format!(
                "mode must be 'normalized' or 'general', got '{other}'"
            )))
        }
    };
    let inputs = args.reduction.load()?;
    let result = dart_prune(
        &inputs.tokens,
        Some(&inputs.aux),
        inputs.attn.as_ref(),
        &inputs.cfg,
    )?;
    let model = LipschitzModel::seeded(args.dout, inputs.tokens.d(), args.model_seed);
    let report = verify_bounds(&inputs.tokens, &result, Some(&model), mode)?;
    let rendered = crate::report::render_bounds(&report);
    if let Some(out) = &args.out {
        write_file(out, rendered.as_bytes())?;
    }
    Ok((rendered, report.all_ok()))
}

/// `dart synth`: generate a synthetic token matrix and write it as DTOK.
#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator: 'clustered' or 'oversmoothed'
    #[arg(long)]
    pub kind: String,
    /// Token count
    #[arg(long)]
    pub n: usize,
    /// Embedding dimension
    #[arg(long)]
    pub d: usize,
    /// Cluster count (clustered)
    #[arg(long, default_value_t = 4)]
    pub clusters: usize,
    /// Within-cluster spread (clustered)
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    /// Mixing rounds (oversmoothed)
    #[arg(long, default_value_t = 1)]
    pub steps: usize,
    /// Mixing strength in [0, 1] (oversmoothed)
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    /// Generator seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip the final row normalization
    #[arg(long)]
    pub no_normalize: bool,
    /// Output DTOK path
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_synth(args: &SynthArgs) -> Result<String, CmdError> {
    let normalize = if args.no_normalize {
        NormalizeRows::No
    } else {
        NormalizeRows::Yes
    };
    let tokens = match args.kind.as_str() {
        "clustered" => dart_core::gen_clustered(
            args.n,
            args.d,
            args.clusters,
            args.sigma,
            args.seed,
            normalize,
        )?,
        "oversmoothed" => dart_core::gen_oversmoothed(
            args.n,
            args.d,
            args.steps,
            args.lambda,
            args.seed,
            normalize,
        )?,
        other => {
            return Err(CmdError::bad_config(format!(
                "kind must be 'clustered' or 'oversmoothed', got '{other}'"
            )))
        }
    };
    let bytes = write_dtok_bytes(&tokens);
    write_file(&args.out, &bytes)?;
    Ok(format!(
        "{{\"written\":\"{}\",\"n\":{},\"d\":{},\"bytes\":{}}}",
        crate::json_escape(&args.out.display().to_string()),
        tokens.n(),
        tokens.d(),
        bytes.len()
    ))
}
