use thiserror::Error;

use crate::model::Violation;

/// Every failure the library can report.
///
/// Variants split into two families that the CLI maps onto distinct exit
/// codes: configuration problems (bad input, unknown preset, I/O) and model
/// domain problems (the input is well formed but the physics has no answer).
#[derive(Debug, Error)]
pub enum LinkError {
    #[error("unknown preset `{name}`; valid presets: {}", valid.join(", "))]
    NotFound { name: String, valid: Vec<String> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("configuration violates {} invariant(s): {}", .0.len(), join_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("schema error at `{pointer}`: {message}")]
    Schema { pointer: String, message: String },

    #[error("i/o error on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("division outside domain: {0}")]
    DivisionDomain(String),

    #[error("infidelity sum {sum} exceeds 0.75; Bell-state model does not apply")]
    ModelDomain { sum: f64 },

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("no optimum: {0}")]
    NoOptimum(String),

    #[error("target fidelity {target} unattainable (best delivered fidelity {best})")]
    Unattainable { target: f64, best: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl LinkError {
    /// Short machine-readable tag used in CLI error objects.
    pub fn kind(&self) -> &'static str {
        match self {
            LinkError::NotFound { .. } => "not_found",
            LinkError::Config(_) => "config",
            LinkError::Invalid(_) => "invalid",
            LinkError::Schema { .. } => "schema",
            LinkError::Io { .. } => "io",
            LinkError::DivisionDomain(_) => "division_domain",
            LinkError::ModelDomain { .. } => "model_domain",
            LinkError::Domain(_) => "domain",
            LinkError::NoOptimum(_) => "no_optimum",
            LinkError::Unattainable { .. } => "unattainable",
            LinkError::DegenerateInput(_) => "degenerate_input",
        }
    }

    /// True for errors caused by malformed or inconsistent input.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            LinkError::NotFound { .. }
                | LinkError::Config(_)
                | LinkError::Invalid(_)
                | LinkError::Schema { .. }
                | LinkError::Io { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, LinkError>;
