//! Merges a small grid window by window and compares destination rules.
//!
//! cargo run --example representative_merge

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tokmerge::merger::{build_merge_plan, merge_tokens, unmerge_tokens};
use tokmerge::numerics::TokenMatrix;
use tokmerge::selector::{select_with, Destination};
use tokmerge::window::{partition, GridSpec};

fn main() -> tokmerge::Result<()> {
    let grid = GridSpec::new(6, 6)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // two smooth halves plus noise
    let data: Vec<f64> = (0..grid.n_tokens())
        .flat_map(|i| {
            let base = if i % grid.width < 3 {
                [1.0, 0.2, 0.0, 0.1]
            } else {
                [0.0, 0.1, 1.0, 0.3]
            };
            base.map(|v| v + 0.2 * rng.sample::<f64, _>(StandardNormal))
        })
        .collect();
    let tokens = TokenMatrix::new(grid.n_tokens(), 4, data)?;
    let part = partition(grid, 3)?;

    for destination in [
        Destination::Representative,
        Destination::Least,
        Destination::Random,
    ] {
        let selections = part
            .windows()
            .iter()
            .enumerate()
            .filter_map(|(k, w)| select_with(&tokens, k, w, destination, 99 + k as u64).transpose())
            .collect::<tokmerge::Result<Vec<_>>>()?;
        let plan = build_merge_plan(&part, &selections, 0.5)?;
        let merged = merge_tokens(&tokens, &plan, 0.5)?;
        let restored = unmerge_tokens(&merged, &plan)?;
        println!(
            "{destination:>14}: {} -> {} tokens, reconstruction mse {:.5}",
            tokens.n_tokens(),
            merged.n_tokens(),
            restored.mse(&tokens)?
        );
        if destination == Destination::Representative {
            for e in plan.entries() {
                println!(
                    "    window {}: dest {:2} absorbs {:?}",
                    e.window_id, e.dest, e.sources
                );
            }
        }
    }
    Ok(())
}
