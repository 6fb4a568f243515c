pub mod bench;
pub mod blink_eval;
pub mod chirp;
pub mod crossval;
pub mod dataset;
pub mod eval;
pub mod predict;
pub mod process;
pub mod simulate;
pub mod stream;
pub mod train;

use echoface::chirp::ChirpSpec;
use echoface::error::{Error, Result};

/// Operating band selection shared by several subcommands.
pub fn chirp_profile(name: &str) -> Result<ChirpSpec> {
    match name {
        "default" | "16-20" => Ok(ChirpSpec::default()),
        "high" | "20-24" => Ok(ChirpSpec::high_band()),
        other => Err(Error::data(format!(
            "unknown chirp profile {other:?} (use default|high)"
        ))),
    }
}
