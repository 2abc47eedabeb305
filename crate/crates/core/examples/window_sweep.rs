//! Window mode x destination sweep written as CSV and JSON, the same table
//! the bench binary produces.
//!
//! cargo run --release --example window_sweep [out_dir]

use std::path::PathBuf;

use tokmerge::bench::{emit_results, run_sweep, OutputFormat, RunConfig, SweepAxes};
use tokmerge::selector::Destination;
use tokmerge::window::{GridSpec, WindowMode};

fn main() -> tokmerge::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map_or_else(std::env::temp_dir, PathBuf::from);
    let base = RunConfig {
        grid: GridSpec::new(32, 32)?,
        dim: 16,
        timesteps: 6,
        repetitions: 1,
        ..RunConfig::default()
    };
    let axes = SweepAxes {
        window: ["fixed:2", "fixed:8", "fixed:16", "adaptive"]
            .iter()
            .map(|s| s.parse::<WindowMode>())
            .collect::<tokmerge::Result<_>>()?,
        destination: vec![Destination::Representative, Destination::Random],
        ..SweepAxes::default()
    };
    let rows = run_sweep(&base, &axes)?;
    for r in &rows {
        println!(
            "{:>14} {:>14}: flop ratio {:.3} mse {:.3e}",
            r.config.window.to_string(),
            r.config.destination.to_string(),
            r.metrics.flop_ratio,
            r.metrics.output_mse_vs_baseline
        );
    }
    emit_results(&rows, OutputFormat::Csv, &out.join("window_sweep.csv"))?;
    emit_results(&rows, OutputFormat::Json, &out.join("window_sweep.json"))?;
    println!("wrote {}", out.join("window_sweep.{csv,json}").display());
    Ok(())
}
