use penning_core::Error as CoreError;
use serde_json::json;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const FIT: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Line and column are 1-based; both are 0 for values from the
    /// environment.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("invalid `{key}`: {message}")]
    Validation { key: String, message: String },

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Validation { .. } | CliError::Io { .. } => exit::CONFIG,
            CliError::Core(e) => match e {
                CoreError::InvalidParameter { .. }
                | CoreError::StabilityViolation { .. }
                | CoreError::DegenerateFrequencies
                | CoreError::ZeroGradient => exit::CONFIG,
                CoreError::NotConverged { .. } | CoreError::FitFailed(_) => exit::FIT,
                _ => exit::NUMERICAL,
            },
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Parse { .. } => "parse",
            CliError::Validation { .. } => "validation",
            CliError::Io { .. } => "io",
            CliError::Core(e) => match e {
                CoreError::InvalidParameter { .. } => "invalid_parameter",
                CoreError::StabilityViolation { .. } => "stability_violation",
                CoreError::DegenerateFrequencies => "degenerate_frequencies",
                CoreError::ZeroGradient => "zero_gradient",
                CoreError::StepRejected { .. } => "step_rejected",
                CoreError::Diverged { .. } => "diverged",
                CoreError::WindowEmpty { .. } => "window_empty",
                CoreError::TruncationInsufficient { .. } => "truncation_insufficient",
                CoreError::CutoffExceeded { .. } => "cutoff_exceeded",
                CoreError::NotConverged { .. } => "not_converged",
                CoreError::FitFailed(_) => "fit_failed",
            },
        }
    }

    /// One-line JSON object for stderr.
    pub fn to_json(&self) -> String {
        let mut v = json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        match self {
            CliError::Parse { line, column, .. } => {
                v["line"] = json!(line);
                v["column"] = json!(column);
            }
            CliError::Validation { key, .. } => v["key"] = json!(key),
            _ => {}
        }
        v.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_by_class() {
        assert_eq!(CliError::Core(CoreError::ZeroGradient).exit_code(), 2);
        assert_eq!(CliError::Core(CoreError::Diverged { t: 1.0, amplitude_sq: 1.0 }).exit_code(), 3);
        assert_eq!(CliError::Core(CoreError::NotConverged { restarts: 1, residual: 1.0 }).exit_code(), 4);
        let j: serde_json::Value = serde_json::from_str(
            &CliError::Parse {
                line: 3,
                column: 4,
                message: "x".into(),
            }
            .to_json(),
        )
        .unwrap();
        assert_eq!(j["error"], "parse");
        assert_eq!(j["line"], 3);
        assert_eq!(j["exit_code"], 2);
    }
}
