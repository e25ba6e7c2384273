pub mod bench;
pub mod eval;
pub mod infer;
pub mod lut;
pub mod phantom;
pub mod sfdi;
pub mod ssop;
pub mod sto2;
pub mod timeseries;

use serde::Serialize;

/// Prints the subcommand's machine-readable summary to stdout.
pub fn emit_summary<T: Serialize>(summary: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string(summary)?);
    Ok(())
}
