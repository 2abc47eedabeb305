//! Representative-token selection inside a window.
//!
//! Each token's score is its mean cosine similarity to the other tokens of the
//! window. The highest-scoring token becomes the merge destination, and the
//! remaining tokens are ranked by the same score to pick merge sources.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    argsort_descending, cosine_similarity_matrix, row_mean_excluding_self, validate_indices,
    TokenMatrix,
};

/// Which token of a window receives the merge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Destination {
    /// Highest average similarity.
    #[default]
    Representative,
    /// Lowest average similarity (ablation).
    Least,
    /// Uniformly random token drawn from a seeded stream (ablation).
    Random,
}

impl fmt::Display for Destination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Destination::Representative => "representative",
            Destination::Least => "least",
            Destination::Random => "random",
        })
    }
}

impl FromStr for Destination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "representative" | "rep" => Ok(Destination::Representative),
            "least" => Ok(Destination::Least),
            "random" => Ok(Destination::Random),
            other => Err(Error::invalid(
                "destination",
                format!("expected representative|least|random, got `{other}`"),
            )),
        }
    }
}

/// Selection result for one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepSelection {
    pub window_id: usize,
    /// Window token indices, ascending.
    pub window: Vec<usize>,
    pub dest: usize,
    /// Every other window token, by average similarity descending (ties to smaller index).
    pub ranked_rest: Vec<usize>,
    /// Average similarity per entry of `window`.
    pub avg_sims: Vec<f64>,
}

impl RepSelection {
    pub fn avg_sim_of(&self, token: usize) -> Option<f64> {
        self.window
            .binary_search(&token)
            .ok()
            .map(|k| self.avg_sims[k])
    }
}

/// Number of sources merged out of a window of `window_size` tokens:
/// `floor(window_size * ratio)`, capped so the destination always survives.
pub fn compute_r(window_size: usize, ratio: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::invalid(
            "ratio",
            format!("{ratio} is outside [0, 1]"),
        ));
    }
    if window_size == 0 {
        return Err(Error::invalid("window_size", "must be at least 1"));
    }
    let r = (window_size as f64 * ratio).floor() as usize;
    Ok(r.min(window_size - 1))
}

/// Picks the most representative token of `window`. Returns `Ok(None)` for
/// windows with fewer than two tokens, which are left unmerged.
pub fn select_representative(
    tokens: &TokenMatrix,
    window_id: usize,
    window: &[usize],
) -> Result<Option<RepSelection>> {
    select_with(tokens, window_id, window, Destination::Representative, 0)
}

/// Selection under any destination rule. `seed` is only consumed by
/// [`Destination::Random`].
pub fn select_with(
    tokens: &TokenMatrix,
    window_id: usize,
    window: &[usize],
    destination: Destination,
    seed: u64,
) -> Result<Option<RepSelection>> {
    validate_indices(window, tokens.n_tokens())?;
    if window.len() < 2 {
        return Ok(None);
    }
    let mut window = window.to_vec();
    window.sort_unstable();

    let sims = cosine_similarity_matrix(tokens, &window)?;
    let avg_sims = row_mean_excluding_self(&sims)?;
    // window is ascending, so position order is token-index order
    let order = argsort_descending(&avg_sims)?;

    let dest_pos = match destination {
        Destination::Representative => order[0],
        Destination::Least => {
            let mut best = 0;
            for k in 1..avg_sims.len() {
                if avg_sims[k] < avg_sims[best] {
                    best = k;
                }
            }
            best
        }
        Destination::Random => ChaCha8Rng::seed_from_u64(seed).random_range(0..window.len()),
    };

    let ranked_rest = order
        .iter()
        .filter(|&&k| k != dest_pos)
        .map(|&k| window[k])
        .collect();

    Ok(Some(RepSelection {
        window_id,
        dest: window[dest_pos],
        window,
        ranked_rest,
        avg_sims,
    }))
}

/// The first `r` ranked candidates.
pub fn select_sources(selection: &RepSelection, r: usize) -> Result<Vec<usize>> {
    if r > selection.ranked_rest.len() {
        return Err(Error::invalid(
            "r",
            format!(
                "{r} sources requested but only {} candidates in window {}",
                selection.ranked_rest.len(),
                selection.window_id
            ),
        ));
    }
    Ok(selection.ranked_rest[..r].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, prop_assume, proptest};
    use rand_distr::StandardNormal;

    fn random_tokens(seed: u64, n: usize, dim: usize) -> TokenMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * dim).map(|_| rng.sample(StandardNormal)).collect();
        TokenMatrix::new(n, dim, data).unwrap()
    }

    #[test]
    fn compute_r_examples() {
        assert_eq!(compute_r(4, 0.5).unwrap(), 2);
        assert_eq!(compute_r(4, 1.0).unwrap(), 3);
        // 9 * 0.33 = 2.97
        assert_eq!(compute_r(9, 0.33).unwrap(), 2);
        assert_eq!(compute_r(1, 1.0).unwrap(), 0);
        assert_eq!(compute_r(16, 0.0).unwrap(), 0);
        assert!(compute_r(4, 1.5).is_err());
        assert!(compute_r(4, -0.1).is_err());
        assert!(compute_r(4, f64::NAN).is_err());
    }

    #[test]
    fn compute_r_matches_arithmetic() {
        for n in 1..=64usize {
            for k in 0..=100u32 {
                let ratio = f64::from(k) / 100.0;
                let expected = ((n as f64 * ratio).floor() as usize).min(n - 1);
                assert_eq!(compute_r(n, ratio).unwrap(), expected);
            }
        }
    }

    #[test]
    fn constructed_tie_goes_to_smaller_index() {
        let t = TokenMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let sel = select_representative(&t, 0, &[0, 1, 2]).unwrap().unwrap();
        assert_eq!(sel.avg_sims, vec![0.5, 0.5, 0.0]);
        assert_eq!(sel.dest, 0);
        assert_eq!(sel.ranked_rest, vec![1, 2]);
    }

    #[test]
    fn two_token_window() {
        let t = random_tokens(3, 6, 3);
        let sel = select_representative(&t, 4, &[5, 2]).unwrap().unwrap();
        assert_eq!(sel.dest, 2);
        assert_eq!(sel.ranked_rest, vec![5]);
        assert_eq!(sel.window, vec![2, 5]);
    }

    #[test]
    fn single_token_window_is_skipped() {
        let t = random_tokens(3, 4, 3);
        assert!(select_representative(&t, 0, &[3]).unwrap().is_none());
        assert!(select_representative(&t, 0, &[4, 1]).is_err());
    }

    #[test]
    fn eight_tokens_match_exhaustive_oracle() {
        let t = random_tokens(21, 8, 4);
        let window: Vec<usize> = (0..8).collect();
        let sel = select_representative(&t, 0, &window).unwrap().unwrap();
        let (dest, rest) = oracle::oracle_select(&t.to_rows(), &window);
        assert_eq!(sel.dest, dest);
        assert_eq!(sel.ranked_rest, rest);
    }

    #[test]
    fn sources_are_prefix_of_ranking() {
        let sel = RepSelection {
            window_id: 0,
            window: vec![1, 3, 4, 7, 9],
            dest: 9,
            ranked_rest: vec![3, 7, 1, 4],
            avg_sims: vec![0.0; 5],
        };
        assert_eq!(select_sources(&sel, 2).unwrap(), vec![3, 7]);
        assert!(select_sources(&sel, 0).unwrap().is_empty());
        assert!(select_sources(&sel, 5).is_err());
    }

    #[test]
    fn top_five_of_sixteen_matches_oracle_sort() {
        let t = random_tokens(5, 16, 4);
        let window: Vec<usize> = (0..16).collect();
        let sel = select_representative(&t, 0, &window).unwrap().unwrap();
        let avg = oracle::average_similarities(&t.to_rows(), &window);
        let order = oracle::sort_descending(&avg);
        assert_eq!(select_sources(&sel, 5).unwrap(), order[1..6].to_vec());
    }

    #[test]
    fn least_flag_picks_argmin() {
        let t = random_tokens(8, 12, 3);
        let window: Vec<usize> = (0..12).collect();
        let sel = select_with(&t, 0, &window, Destination::Least, 0)
            .unwrap()
            .unwrap();
        assert_eq!(sel.dest, oracle::oracle_least(&t.to_rows(), &window));
        assert_eq!(sel.ranked_rest.len(), 11);
        assert!(!sel.ranked_rest.contains(&sel.dest));
    }

    #[test]
    fn random_flag_is_seeded() {
        let t = random_tokens(8, 16, 3);
        let window: Vec<usize> = (0..16).collect();
        let a = select_with(&t, 0, &window, Destination::Random, 42)
            .unwrap()
            .unwrap();
        let b = select_with(&t, 0, &window, Destination::Random, 42)
            .unwrap()
            .unwrap();
        assert_eq!(a, b);
        let dests: std::collections::HashSet<usize> = (0..64)
            .map(|s| {
                select_with(&t, 0, &window, Destination::Random, s)
                    .unwrap()
                    .unwrap()
                    .dest
            })
            .collect();
        assert!(dests.len() > 4);
    }

    #[test]
    fn destination_parsing() {
        assert_eq!("least".parse::<Destination>().unwrap(), Destination::Least);
        assert!("best".parse::<Destination>().is_err());
    }

    proptest! {
        #[test]
        fn dest_has_maximal_avg_sim(seed in any::<u64>(), n in 2usize..=16, dim in 1usize..=6) {
            let t = random_tokens(seed, n, dim);
            let window: Vec<usize> = (0..n).collect();
            let sel = select_representative(&t, 0, &window).unwrap().unwrap();
            let best = sel.avg_sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(sel.avg_sim_of(sel.dest).unwrap(), best);
            let mut all = sel.ranked_rest.clone();
            all.push(sel.dest);
            all.sort_unstable();
            prop_assert_eq!(all, window);
        }

        #[test]
        fn positive_scaling_keeps_choice(seed in any::<u64>(), n in 2usize..=12, which in 0usize..12, c in 1e-3f64..1e3) {
            let t = random_tokens(seed, n, 4);
            let window: Vec<usize> = (0..n).collect();
            let base = select_representative(&t, 0, &window).unwrap().unwrap();
            let mut scaled = t.clone();
            for v in scaled.row_mut(which % n) {
                *v *= c;
            }
            let after = select_representative(&scaled, 0, &window).unwrap().unwrap();
            for (a, b) in base.avg_sims.iter().zip(&after.avg_sims) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
            prop_assert_eq!(base.dest, after.dest);
            prop_assert_eq!(base.ranked_rest, after.ranked_rest);
        }

        #[test]
        fn relabeling_tokens_permutes_selection(seed in any::<u64>(), n in 2usize..=10, shift in 1usize..50) {
            let t = random_tokens(seed, n, 3);
            // place the same vectors at shuffled positions
            let perm: Vec<usize> = (0..n).map(|i| (i * 7 + shift) % n).collect();
            let mut seen = vec![false; n];
            prop_assume!(perm.iter().all(|&p| !std::mem::replace(&mut seen[p], true)));
            let mut rows = vec![vec![]; n];
            for i in 0..n {
                rows[perm[i]] = t.row(i).to_vec();
            }
            let moved = TokenMatrix::from_rows(&rows).unwrap();
            let window: Vec<usize> = (0..n).collect();
            let a = select_representative(&t, 0, &window).unwrap().unwrap();
            let mut distinct = a.avg_sims.clone();
            distinct.sort_by(|x, y| x.partial_cmp(y).unwrap());
            prop_assume!(distinct.windows(2).all(|w| w[1] - w[0] > 1e-9));
            let b = select_representative(&moved, 0, &window).unwrap().unwrap();
            prop_assert_eq!(perm[a.dest], b.dest);
            let mapped: Vec<usize> = a.ranked_rest.iter().map(|&i| perm[i]).collect();
            prop_assert_eq!(mapped, b.ranked_rest);
        }
    }
}
