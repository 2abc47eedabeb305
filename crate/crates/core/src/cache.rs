//! Period-based reuse of window selections across timesteps.
//!
//! At timesteps with `t % period == 0` every lookup recomputes; in between,
//! the stored selection is returned verbatim. Token identity across
//! timesteps is positional.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::TokenMatrix;
use crate::selector::{select_representative, RepSelection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey {
    pub layer: usize,
    pub window: usize,
}

impl CacheKey {
    pub fn new(layer: usize, window: usize) -> Self {
        Self { layer, window }
    }
}

/// How a lookup was served.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheOutcome {
    /// Scheduled recompute (`t % period == 0`).
    Computed,
    /// Stored selection returned unchanged.
    Reused,
    /// Reuse step but nothing stored for the key.
    ColdMiss,
    /// Reuse step but the stored window no longer matches; recomputed.
    Stale,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub recomputes: u64,
    pub cold_misses: u64,
    pub stale: u64,
}

#[derive(Debug, Clone)]
struct Entry {
    selection: RepSelection,
    computed_at: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvalidateScope {
    All,
    Layer(usize),
}

#[derive(Debug, Clone)]
pub struct SimilarityCache {
    period: usize,
    entries: HashMap<CacheKey, Entry>,
    stats: CacheStats,
    history: BTreeMap<CacheKey, Vec<usize>>,
}

impl SimilarityCache {
    pub fn new(period: usize) -> Result<Self> {
        if period == 0 {
            return Err(Error::invalid("period", "must be at least 1"));
        }
        Ok(Self {
            period,
            entries: HashMap::new(),
            stats: CacheStats::default(),
            history: BTreeMap::new(),
        })
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Timesteps at which `key` was (re)computed, in order.
    pub fn recompute_history(&self, key: CacheKey) -> &[usize] {
        self.history.get(&key).map_or(&[], Vec::as_slice)
    }

    /// Recompute timesteps for every key seen so far.
    pub fn histories(&self) -> &BTreeMap<CacheKey, Vec<usize>> {
        &self.history
    }

    /// Timestep the stored selection for `key` was computed at.
    pub fn computed_at(&self, key: CacheKey) -> Option<usize> {
        self.entries.get(&key).map(|e| e.computed_at)
    }

    /// Returns the selection for `key` at timestep `t`, running `compute` when
    /// the schedule (or a cold or stale entry) requires it.
    pub fn get_or_compute<F>(
        &mut self,
        t: usize,
        key: CacheKey,
        window: &[usize],
        compute: F,
    ) -> Result<(&RepSelection, CacheOutcome)>
    where
        F: FnOnce() -> Result<RepSelection>,
    {
        let outcome = if t.is_multiple_of(self.period) {
            CacheOutcome::Computed
        } else {
            match self.entries.get(&key) {
                None => CacheOutcome::ColdMiss,
                Some(e) if same_index_set(&e.selection.window, window) => CacheOutcome::Reused,
                Some(_) => {
                    log::warn!(
                        "{}; recomputing at t={t}",
                        Error::StaleCache {
                            layer: key.layer,
                            window: key.window
                        }
                    );
                    CacheOutcome::Stale
                }
            }
        };

        match outcome {
            CacheOutcome::Reused => self.stats.hits += 1,
            CacheOutcome::ColdMiss => self.stats.cold_misses += 1,
            CacheOutcome::Stale => self.stats.stale += 1,
            CacheOutcome::Computed => {}
        }
        if outcome != CacheOutcome::Reused {
            let selection = compute()?;
            self.stats.recomputes += 1;
            self.history.entry(key).or_default().push(t);
            self.entries.insert(
                key,
                Entry {
                    selection,
                    computed_at: t,
                },
            );
        }
        Ok((&self.entries[&key].selection, outcome))
    }

    /// [`get_or_compute`](Self::get_or_compute) with the representative
    /// selector. Windows of fewer than two tokens bypass the cache and yield `None`.
    pub fn get_or_select(
        &mut self,
        t: usize,
        key: CacheKey,
        tokens: &TokenMatrix,
        window: &[usize],
    ) -> Result<Option<(&RepSelection, CacheOutcome)>> {
        if window.len() < 2 {
            return Ok(None);
        }
        self.get_or_compute(t, key, window, || {
            select_representative(tokens, key.window, window)?
                .ok_or(Error::DegenerateWindow(window.len()))
        })
        .map(Some)
    }

    pub fn invalidate(&mut self, scope: InvalidateScope) {
        match scope {
            InvalidateScope::All => self.entries.clear(),
            InvalidateScope::Layer(layer) => self.entries.retain(|k, _| k.layer != layer),
        }
    }
}

fn same_index_set(stored_sorted: &[usize], window: &[usize]) -> bool {
    if stored_sorted.len() != window.len() {
        return false;
    }
    if window.is_sorted() {
        return stored_sorted == window;
    }
    let mut w = window.to_vec();
    w.sort_unstable();
    stored_sorted == w.as_slice()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::window::{partition, GridSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn field(seed: u64, n: usize, dim: usize) -> TokenMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * dim).map(|_| rng.sample(StandardNormal)).collect();
        TokenMatrix::new(n, dim, data).unwrap()
    }

    fn drift(t: &TokenMatrix, seed: u64, eps: f64) -> TokenMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = t
            .data()
            .iter()
            .map(|v| v + eps * rng.sample::<f64, _>(StandardNormal))
            .collect();
        TokenMatrix::new(t.n_tokens(), t.dim(), data).unwrap()
    }

    #[test]
    fn period_one_always_recomputes() {
        let mut cache = SimilarityCache::new(1).unwrap();
        let key = CacheKey::new(0, 0);
        let mut x = field(1, 9, 3);
        let window: Vec<usize> = (0..9).collect();
        for t in 0..6 {
            let fresh = select_representative(&x, 0, &window).unwrap().unwrap();
            let (sel, outcome) = cache.get_or_select(t, key, &x, &window).unwrap().unwrap();
            assert_eq!(outcome, CacheOutcome::Computed);
            assert_eq!(*sel, fresh);
            x = drift(&x, t as u64, 0.5);
        }
        assert_eq!(cache.stats().recomputes, 6);
        assert_eq!(cache.stats().hits, 0);
    }

    #[test]
    fn reuse_within_period() {
        let mut cache = SimilarityCache::new(5).unwrap();
        let key = CacheKey::new(0, 0);
        let window: Vec<usize> = (0..9).collect();
        let mut x = field(2, 9, 3);
        let mut first = None;
        for t in 0..5 {
            let (sel, outcome) = cache.get_or_select(t, key, &x, &window).unwrap().unwrap();
            let sel = sel.clone();
            if t == 0 {
                assert_eq!(outcome, CacheOutcome::Computed);
                first = Some(sel);
            } else {
                assert_eq!(outcome, CacheOutcome::Reused);
                assert_eq!(Some(sel), first);
            }
            x = drift(&x, 100 + t as u64, 1.0);
        }
        assert_eq!(cache.stats().recomputes, 1);
        assert_eq!(cache.stats().hits, 4);
    }

    #[test]
    fn twenty_steps_period_five_counts() {
        let grid = GridSpec::new(4, 4).unwrap();
        let p = partition(grid, 2).unwrap();
        let mut cache = SimilarityCache::new(5).unwrap();
        let mut x = field(3, 16, 4);
        for t in 0..20 {
            for (w, win) in p.windows().iter().enumerate() {
                cache
                    .get_or_select(t, CacheKey::new(0, w), &x, win)
                    .unwrap();
            }
            x = drift(&x, 7 + t as u64, 0.01);
        }
        for w in 0..p.len() {
            assert_eq!(
                cache.recompute_history(CacheKey::new(0, w)),
                &[0, 5, 10, 15]
            );
            assert_eq!(cache.computed_at(CacheKey::new(0, w)), Some(15));
        }
        assert_eq!(cache.stats().recomputes, 4 * 4);
    }

    #[test]
    fn invalidate_all_forces_recompute_off_schedule() {
        let mut cache = SimilarityCache::new(5).unwrap();
        let x = field(4, 4, 2);
        let w = [0, 1, 2, 3];
        cache.get_or_select(5, CacheKey::new(0, 0), &x, &w).unwrap();
        cache.invalidate(InvalidateScope::All);
        assert!(cache.is_empty());
        let (_, outcome) = cache
            .get_or_select(7, CacheKey::new(0, 0), &x, &w)
            .unwrap()
            .unwrap();
        assert_eq!(outcome, CacheOutcome::ColdMiss);
        assert_eq!(cache.recompute_history(CacheKey::new(0, 0)), &[5, 7]);
        let (_, outcome) = cache
            .get_or_select(8, CacheKey::new(0, 0), &x, &w)
            .unwrap()
            .unwrap();
        assert_eq!(outcome, CacheOutcome::Reused);
    }

    #[test]
    fn invalidate_layer_is_scoped() {
        let mut cache = SimilarityCache::new(5).unwrap();
        let x = field(5, 4, 2);
        let w = [0, 1, 2, 3];
        cache.get_or_select(0, CacheKey::new(1, 0), &x, &w).unwrap();
        cache.get_or_select(0, CacheKey::new(2, 0), &x, &w).unwrap();
        cache.invalidate(InvalidateScope::Layer(2));
        assert_eq!(cache.len(), 1);
        let (_, o1) = cache
            .get_or_select(1, CacheKey::new(1, 0), &x, &w)
            .unwrap()
            .unwrap();
        let (_, o2) = cache
            .get_or_select(1, CacheKey::new(2, 0), &x, &w)
            .unwrap()
            .unwrap();
        assert_eq!(o1, CacheOutcome::Reused);
        assert_eq!(o2, CacheOutcome::ColdMiss);
    }

    #[test]
    fn partition_change_is_detected_as_stale() {
        let grid = GridSpec::new(4, 4).unwrap();
        let x = field(6, 16, 3);
        let small = partition(grid, 2).unwrap();
        let large = partition(grid, 4).unwrap();
        let mut cache = SimilarityCache::new(5).unwrap();
        let key = CacheKey::new(0, 0);
        cache
            .get_or_select(0, key, &x, &small.windows()[0])
            .unwrap();
        let (sel, outcome) = cache
            .get_or_select(1, key, &x, &large.windows()[0])
            .unwrap()
            .unwrap();
        assert_eq!(outcome, CacheOutcome::Stale);
        assert_eq!(sel.window, (0..16).collect::<Vec<_>>());
        assert_eq!(cache.stats().stale, 1);
        let (_, outcome) = cache
            .get_or_select(2, key, &x, &large.windows()[0])
            .unwrap()
            .unwrap();
        assert_eq!(outcome, CacheOutcome::Reused);
    }

    #[test]
    fn single_token_windows_bypass() {
        let mut cache = SimilarityCache::new(3).unwrap();
        let x = field(7, 4, 2);
        assert!(cache
            .get_or_select(0, CacheKey::new(0, 0), &x, &[2])
            .unwrap()
            .is_none());
        assert!(cache.is_empty());
        assert!(SimilarityCache::new(0).is_err());
    }

    #[test]
    fn recompute_count_is_ceil_t_over_p() {
        let x = field(8, 4, 2);
        let w = [0, 1, 2, 3];
        for p in 1..=7 {
            for steps in 1..=23 {
                let mut cache = SimilarityCache::new(p).unwrap();
                for t in 0..steps {
                    cache.get_or_select(t, CacheKey::new(0, 0), &x, &w).unwrap();
                }
                assert_eq!(cache.stats().recomputes as usize, steps.div_ceil(p));
            }
        }
    }
}
