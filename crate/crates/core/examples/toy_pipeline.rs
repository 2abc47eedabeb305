//! Baseline versus merged runs of the toy attention stack.
//!
//! cargo run --release --example toy_pipeline

use tokmerge::merger::MergeConfig;
use tokmerge::pipeline::{run, MergeSettings, TimingConfig, ToyPipelineSpec};
use tokmerge::selector::Destination;
use tokmerge::window::{parse_roles, GridSpec, WindowMode};

fn main() -> tokmerge::Result<()> {
    let roles = parse_roles("down,down,bottleneck,up,up")?;
    let spec = ToyPipelineSpec {
        grid: GridSpec::new(32, 32)?,
        dim: 32,
        layers: WindowMode::default().layer_specs(&roles)?,
        timesteps: 10,
        drift_scale: 0.01,
        seed: 0,
        clusters: 8,
        cluster_noise: 0.5,
    };
    for ratio in [0.0, 0.25, 0.5, 0.75] {
        let settings = MergeSettings {
            config: MergeConfig::new(ratio, 0.5, 5)?,
            destination: Destination::Representative,
            caching: true,
        };
        let m = run(
            &spec,
            settings,
            TimingConfig {
                warmup: 1,
                repetitions: 3,
            },
        )?;
        println!(
            "R={ratio:.2}: tokens/layer {:?} flop ratio {:.3} speedup {:.2}x mse {:.3e} cache {} recomputes / {} hits",
            m.tokens_after_per_layer, m.flop_ratio, m.wall_speedup, m.output_mse_vs_baseline, m.cache_recomputes, m.cache_hits
        );
    }
    Ok(())
}
