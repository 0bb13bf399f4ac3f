//! Deterministic JSON report rendering.
//!
//! Reports are emitted with a fixed key order and floats printed with 9
//! significant digits (`{:.8e}`), so equal inputs produce byte-identical
//! output. Non-finite values (an undefined cut threshold, the +inf
//! epsilon of a no-prune run) serialize as `null`. The schema ships at
//! `schema/report.schema.json`.

use dart_core::{BoundReport, OverlapStats, PositionStats};

/// Formats a float with 9 significant digits, or `null` when non-finite.
pub fn json_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.8e}")
    } else {
        "null".to_string()
    }
}

fn json_bool(v: bool) -> &'static str {
    if v {
        "true"
    } else {
        "false"
    }
}

fn json_usize_array(values: &[usize]) -> String {
    let mut out = String::from("[");
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&v.to_string());
    }
    out.push(']');
    out
}

/// Echo of the configuration a run used, resolved against the input.
#[derive(Debug, Clone)]
pub struct ConfigEcho {
    pub budget: usize,
    pub ratio: Option<f64>,
    pub pivot_count: usize,
    pub strategy: String,
    pub aggregator: &'static str,
    pub epsilon_mode: &'static str,
    pub seed: u64,
    pub modality_quota: Option<(usize, usize)>,
}

impl ConfigEcho {
    fn render(&self) -> String {
        let ratio = match self.ratio {
            Some(r) => json_float(r),
            None => "null".to_string(),
        };
        let quota = match self.modality_quota {
            Some((v, t)) => format!("[{v},{t}]"),
            None => "null".to_string(),
        };
        format!(
            "{{\"budget\":{},\"ratio\":{},\"pivots\":{},\"strategy\":\"{}\",\"aggregator\":\"{}\",\"epsilon_mode\":\"{}\",\"seed\":{},\"modality_quota\":{}}}",
            self.budget,
            ratio,
            self.pivot_count,
            self.strategy,
            self.aggregator,
            self.epsilon_mode,
            self.seed,
            quota
        )
    }
}

/// FLOPs block of a report.
#[derive(Debug, Clone, Copy)]
pub struct FlopsEcho {
    pub total: u128,
    pub post: u128,
    pub ratio: f64,
}

impl FlopsEcho {
    pub fn render(&self) -> String {
        format!(
            "{{\"total\":{},\"post\":{},\"ratio\":{}}}",
            self.total,
            self.post,
            json_float(self.ratio)
        )
    }
}

pub fn render_bounds(report: &BoundReport) -> String {
    let theorem = match report.theorem1_ok {
        Some(ok) => json_bool(ok).to_string(),
        None => "null".to_string(),
    };
    format!(
        "{{\"b\":{},\"eps_eff\":{},\"hausdorff\":{},\"lemma1_ok\":{},\"lemma2_ok\":{},\"theorem1_ok\":{},\"mode\":\"{}\",\"worst_margin\":{},\"norms_equal\":{}}}",
        json_float(report.b),
        json_float(report.eps_eff),
        json_float(report.hausdorff),
        json_bool(report.lemma1_ok),
        json_bool(report.lemma2_ok),
        theorem,
        report.mode.name(),
        json_float(report.worst_margin),
        json_bool(report.norms_equal)
    )
}

fn render_position(position: &PositionStats) -> String {
    let chi2 = match position.grid_chi2 {
        Some(v) => json_float(v),
        None => "null".to_string(),
    };
    format!(
        "{{\"mean_norm_index\":{},\"grid_chi2\":{}}}",
        json_float(position.mean_norm_index),
        chi2
    )
}

/// Overlap block for compare runs; carries the second run's retained set
/// so the comparison is reproducible from the report alone.
#[derive(Debug, Clone)]
pub struct OverlapEcho {
    pub stats: OverlapStats,
    pub retained_b: Vec<usize>,
}

/// Everything a `prune`/`compare` report contains.
#[derive(Debug, Clone)]
pub struct Report {
    pub config: ConfigEcho,
    pub retained: Vec<usize>,
    pub pivots: Vec<usize>,
    pub tau: f64,
    pub eps_eff: f64,
    pub flops: FlopsEcho,
    pub bounds: Option<BoundReport>,
    pub overlap: Option<OverlapEcho>,
    pub position: PositionStats,
    pub timing_ms: Option<f64>,
}

impl Report {
    pub fn render(&self) -> String {
        let bounds = match &self.bounds {
            Some(b) => render_bounds(b),
            None => "null".to_string(),
        };
        let overlap = match &self.overlap {
            Some(o) => format!(
                ",\"overlap\":{{\"jaccard\":{},\"min_overlap\":{},\"retained_b\":{}}}",
                json_float(o.stats.jaccard),
                json_float(o.stats.min_overlap),
                json_usize_array(&o.retained_b)
            ),
            None => String::new(),
        };
        let timing = match self.timing_ms {
            Some(ms) => json_float(ms),
            None => "null".to_string(),
        };
        format!(
            "{{\"config\":{},\"retained\":{},\"pivots\":{},\"tau\":{},\"eps_eff\":{},\"flops\":{}{overlap},\"bounds\":{},\"position\":{},\"timing_ms\":{}}}",
            self.config.render(),
            json_usize_array(&self.retained),
            json_usize_array(&self.pivots),
            json_float(self.tau),
            json_float(self.eps_eff),
            self.flops.render(),
            bounds,
            render_position(&self.position),
            timing
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_is_nine_significant_digits() {
        assert_eq!(json_float(0.5), "5.00000000e-1");
        assert_eq!(json_float(-123.456), "-1.23456000e2");
        assert_eq!(json_float(0.0), "0.00000000e0");
        assert_eq!(json_float(f64::INFINITY), "null");
        assert_eq!(json_float(f64::NEG_INFINITY), "null");
    }

    #[test]
    fn report_renders_stable_bytes() {
        let report = Report {
            config: ConfigEcho {
                budget: 4,
                ratio: None,
                pivot_count: 2,
                strategy: "knorm-max".to_string(),
                aggregator: "max",
                epsilon_mode: "global",
                seed: 7,
                modality_quota: None,
            },
            retained: vec![0, 1, 2, 5],
            pivots: vec![0, 1],
            tau: 0.25,
            eps_eff: 0.5,
            flops: FlopsEcho {
                total: 1000,
                post: 400,
                ratio: 0.6,
            },
            bounds: None,
            overlap: None,
            position: PositionStats {
                mean_norm_index: 0.4,
                grid_chi2: None,
            },
            timing_ms: None,
        };
        let a = report.render();
        let b = report.render();
        assert_eq!(a, b);
        assert!(a.starts_with("{\"config\":{\"budget\":4,"));
        assert!(a.contains("\"tau\":2.50000000e-1"));
        assert!(a.contains("\"timing_ms\":null"));
        assert!(!a.contains("overlap"));
    }
}
