//! Tiles a token grid into square windows and shows the per-layer window
//! sides for fixed and adaptive modes.
//!
//! cargo run --example window_partition

use tokmerge::window::{parse_roles, partition, GridSpec, WindowMode};

fn main() -> tokmerge::Result<()> {
    let grid: GridSpec = "5x7".parse()?;
    let part = partition(grid, 3)?;
    println!("{grid} grid, side 3: {} windows", part.len());
    for (k, w) in part.windows().iter().enumerate() {
        println!("  window {k:2}: {w:?}");
    }

    let roles = parse_roles("down,down,bottleneck,up,up")?;
    for mode in ["fixed:4", "adaptive", "adaptive:2,16"] {
        let mode: WindowMode = mode.parse()?;
        println!("{mode:>14}: sides {:?}", mode.sides(&roles)?);
    }
    Ok(())
}
