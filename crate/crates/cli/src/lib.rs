//! Config-driven runner for the `optpot` forward, inverse and verification
//! pipelines.
//!
//! A run is described by a TOML file:
//!
//! ```toml
//! mode = "inverse"        # forward | inverse | verify
//! L = "pi"                # numbers may be written as multiples of pi
//! n = 2000
//! targets = [2, 5]
//!
//! [potential]
//! kind = "zero"
//!
//! [solver]
//! homotopy_steps = 8
//! ```
//!
//! and produces `report.json` plus CSV plot data in the output directory.

pub mod config;
pub mod error;
pub mod report;
pub mod run;

pub use config::{load_config, validate_config, Mode, OracleSettings, RunConfig};
pub use error::{CliError, ConfigError};
pub use report::{RunReport, Status};
pub use run::run;
