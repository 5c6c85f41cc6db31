//! Error type of the driver, carrying the process exit code.
//!
//! Two failure classes map onto two exit codes:
//!
//! * [`CliError::Config`] (exit 2) - the invocation or the JSON config is
//!   unusable: unreadable file, schema mismatch, invalid field value,
//!   unsupported model/variant combination. The message names the offending
//!   field path or file.
//! * [`CliError::Numeric`] (exit 3) - the configuration was valid but a
//!   computation failed numerically (non-finite value, degenerate
//!   quadrature, singular system, diverged training) or a named check did
//!   not hold. The message names the failing computation or check.
//!
//! Success is exit 0. Argument-parsing errors (unknown subcommand, missing
//! flags) exit with code 2 via clap before this type is ever constructed.

use advsmooth_core::Error as CoreError;
use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Invalid invocation or config; `path` is a JSON field path (dot
    /// notation) or a file path.
    Config { path: String, message: String },
    /// A named computation or check failed numerically.
    Numeric { check: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Numeric { .. } => 3,
        }
    }

    pub fn config(path: impl Into<String>, message: impl fmt::Display) -> Self {
        CliError::Config {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn numeric(check: impl Into<String>, message: impl fmt::Display) -> Self {
        CliError::Numeric {
            check: check.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { path, message } => {
                write!(f, "config error at {path}: {message}")
            }
            CliError::Numeric { check, message } => {
                write!(f, "numeric failure in {check}: {message}")
            }
        }
    }
}

impl std::error::Error for CliError {}

/// Wrap a library result during the validation/setup phase: any failure is
/// the config's fault and exits with 2, pointing at `field`.
pub fn at_field<T>(field: &str, r: advsmooth_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::config(field, e))
}

/// Wrap a library result during the execution phase: numeric breakdowns exit
/// with 3 and name `check`; anything else is still a config problem.
pub fn in_check<T>(check: &str, r: advsmooth_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| match e {
        CoreError::NonFinite(_)
        | CoreError::SingularSystem { .. }
        | CoreError::UndefinedNormal
        | CoreError::QuadratureDegenerate
        | CoreError::EmptyRegion { .. }
        | CoreError::TrainingDiverged { .. } => CliError::numeric(check, e),
        other => CliError::config(check, other),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_failure_class() {
        assert_eq!(CliError::config("a.b", "bad").exit_code(), 2);
        assert_eq!(CliError::numeric("check", "nan").exit_code(), 3);
    }

    #[test]
    fn execution_phase_classifies_core_errors() {
        let num = in_check::<()>("op", Err(CoreError::NonFinite("value"))).unwrap_err();
        assert_eq!(num.exit_code(), 3);
        assert!(num.to_string().contains("op"));

        let cfg = in_check::<()>(
            "op",
            Err(CoreError::Unsupported("combination".into())),
        )
        .unwrap_err();
        assert_eq!(cfg.exit_code(), 2);
    }
}
