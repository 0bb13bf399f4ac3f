//! Command-line front end: file formats, JSON reports, and the subcommand
//! implementations behind the `dart` binary.

pub mod commands;
pub mod formats;
pub mod report;

/// A command failure: machine-readable code plus a human message. Rendered
/// to stderr as JSON; the process exits with status 2.
#[derive(Debug, Clone, PartialEq)]
pub struct CmdError {
    pub code: String,
    pub message: String,
}

impl CmdError {
    pub fn bad_config(message: impl Into<String>) -> Self {
        Self {
            code: "BadConfig".to_string(),
            message: message.into(),
        }
    }

    /// `{"code":...,"message":...}` for stderr.
    pub fn to_json(&self) -> String {
        format!(
            "{{\"code\":\"{}\",\"message\":\"{}\"}}",
            json_escape(&self.code),
            json_escape(&self.message)
        )
    }
}

impl From<dart_core::Error> for CmdError {
    fn from(err: dart_core::Error) -> Self {
        use dart_core::Error as E;
        let code = match &err {
            E::NonFinite(_) => "NonFinite",
            E::GridMismatch { .. } => "GridMismatch",
            E::EmptyMatrix => "EmptyMatrix",
            E::MissingAux(_) => "MissingAux",
            E::MissingAttention => "MissingAttention",
            E::NotRowStochastic { .. } => "NotRowStochastic",
            E::QuotaExceedsModality { .. } => "QuotaExceedsModality",
            E::KExceedsN { .. } => "KExceedsN",
            E::BudgetOutOfRange { .. } => "BudgetOutOfRange",
            E::BadConfig(_) => "BadConfig",
            E::EmptyRetention => "EmptyRetention",
            E::NotNormalized => "NotNormalized",
            E::WrongAggregator => "WrongAggregator",
            E::EmptySet => "EmptySet",
            E::BadParams(_) => "BadParams",
            E::TooLarge { .. } => "TooLarge",
        };
        Self {
            code: code.to_string(),
            message: err.to_string(),
        }
    }
}

pub(crate) fn json_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out
}
