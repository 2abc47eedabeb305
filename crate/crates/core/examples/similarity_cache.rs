//! Period-based reuse of window selections across timesteps.
//!
//! cargo run --example similarity_cache

use tokmerge::cache::{CacheKey, SimilarityCache};
use tokmerge::pipeline::{ToyPipeline, ToyPipelineSpec};
use tokmerge::window::{GridSpec, LayerRole, WindowMode};

fn main() -> tokmerge::Result<()> {
    let spec = ToyPipelineSpec {
        grid: GridSpec::new(8, 8)?,
        dim: 8,
        layers: WindowMode::Fixed(4).layer_specs(&[LayerRole::Down])?,
        timesteps: 12,
        drift_scale: 0.01,
        seed: 3,
        clusters: 4,
        cluster_noise: 0.5,
    };
    let pipeline = ToyPipeline::new(spec)?;
    let part = pipeline.partition(0).clone();
    let mut cache = SimilarityCache::new(4)?;

    for (t, x) in pipeline.latents().enumerate() {
        let x = x?;
        let mut line = format!("t={t:2}");
        for (w, window) in part.windows().iter().enumerate() {
            if let Some((sel, outcome)) = cache.get_or_select(t, CacheKey::new(0, w), &x, window)? {
                line.push_str(&format!("  w{w}: dest {:2} {outcome:?}", sel.dest));
            }
        }
        println!("{line}");
    }
    println!("{:?}", cache.stats());
    println!(
        "window 0 recomputed at {:?}",
        cache.recompute_history(CacheKey::new(0, 0))
    );
    Ok(())
}
