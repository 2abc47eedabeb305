//! How the similarity pattern of one window evolves as the latent field
//! drifts. Writes the sampled matrices as CSV into a temporary directory.
//!
//! cargo run --release --example drift_report

use tokmerge::pipeline::{similarity_drift_report, ToyPipelineSpec};
use tokmerge::window::{partition, GridSpec, LayerRole, WindowMode};

fn main() -> tokmerge::Result<()> {
    let spec = ToyPipelineSpec {
        grid: GridSpec::new(16, 16)?,
        dim: 16,
        layers: WindowMode::Fixed(8).layer_specs(&[LayerRole::Down])?,
        timesteps: 301,
        drift_scale: 0.01,
        seed: 7,
        clusters: 8,
        cluster_noise: 0.5,
    };
    let window = partition(spec.grid, 8)?.windows()[0].clone();
    let samples = [0, 1, 10, 100, 200, 300];
    let report = similarity_drift_report(&spec, &window, &samples)?;

    print!("{:>6}", "");
    for t in &samples {
        print!("{t:>8}");
    }
    println!();
    for (i, t) in samples.iter().enumerate() {
        print!("{t:>6}");
        for c in &report.pairwise[i] {
            print!("{c:>8.4}");
        }
        println!();
    }

    let dir = std::env::temp_dir().join("tokmerge-drift-example");
    let files = report.write_csv(&dir)?;
    println!("wrote {} files to {}", files.len(), dir.display());
    Ok(())
}
