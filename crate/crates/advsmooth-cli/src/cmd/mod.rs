//! One module per subcommand plus the shared plumbing they all use:
//! output-directory creation and verbosity-gated stdout reporting.

pub mod entropy;
pub mod probe;
pub mod surface;
pub mod train;
pub mod verify;

use std::fmt::Display;
use std::path::Path;

use crate::error::CliError;

/// Stdout reporter: `-q` drops everything, default prints the headline
/// lines, `-v` adds per-artifact detail.
pub struct Reporter {
    verbosity: i8,
}

impl Reporter {
    pub fn new(verbose: u8, quiet: bool) -> Self {
        Reporter {
            verbosity: if quiet { -1 } else { verbose as i8 },
        }
    }

    pub fn info(&self, msg: impl Display) {
        if self.verbosity >= 0 {
            println!("{msg}");
        }
    }

    pub fn detail(&self, msg: impl Display) {
        if self.verbosity >= 1 {
            println!("{msg}");
        }
    }
}

pub fn create_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::config(dir.display().to_string(), format!("cannot create: {e}")))
}

/// Serialize the effective config for the manifest echo.
pub fn config_echo<T: serde::Serialize>(cfg: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(cfg).map_err(|e| CliError::config("config echo", e))
}

/// Write a pretty-printed JSON artifact.
pub fn write_json_artifact<T: serde::Serialize>(
    dir: &Path,
    file: &str,
    value: &T,
) -> Result<(), CliError> {
    let path = dir.join(file);
    let json = serde_json::to_string_pretty(value).map_err(|e| CliError::config(file, e))?;
    std::fs::write(&path, json).map_err(|e| CliError::config(path.display().to_string(), e))
}
