//! Merge plans, the weighted merge into each window's destination, and the
//! broadcast unmerge that restores the full token count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::TokenMatrix;
use crate::selector::{compute_r, select_sources, RepSelection};
use crate::window::WindowPartition;

/// Default weight on the destination token.
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    /// Fraction of each window's tokens merged away.
    pub ratio: f64,
    /// Weight of the destination token against the mean of its sources.
    pub alpha: f64,
    /// Timesteps between similarity recomputations.
    pub period: usize,
}

impl MergeConfig {
    pub fn new(ratio: f64, alpha: f64, period: usize) -> Result<Self> {
        let cfg = Self {
            ratio,
            alpha,
            period,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ratio) {
            return Err(Error::invalid(
                "ratio",
                format!("{} is outside [0, 1]", self.ratio),
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(
                "alpha",
                format!("{} is outside [0, 1]", self.alpha),
            ));
        }
        if self.period == 0 {
            return Err(Error::invalid("period", "must be at least 1"));
        }
        Ok(())
    }
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            ratio: 0.5,
            alpha: DEFAULT_ALPHA,
            period: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeEntry {
    pub window_id: usize,
    pub dest: usize,
    pub sources: Vec<usize>,
}

impl MergeEntry {
    pub fn r(&self) -> usize {
        self.sources.len()
    }
}

/// Bookkeeping for one reduction: which tokens merge where, and where every
/// old index lands in the reduced matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergePlan {
    n_tokens: usize,
    entries: Vec<MergeEntry>,
    /// Old index -> row of the reduced matrix. Sources point at their destination's row.
    target: Vec<usize>,
    /// Reduced row -> surviving old index (ascending).
    survivors: Vec<usize>,
}

impl MergePlan {
    /// A plan that merges nothing.
    pub fn identity(n_tokens: usize) -> Self {
        Self {
            n_tokens,
            entries: Vec::new(),
            target: (0..n_tokens).collect(),
            survivors: (0..n_tokens).collect(),
        }
    }

    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn entries(&self) -> &[MergeEntry] {
        &self.entries
    }

    pub fn merged_count(&self) -> usize {
        self.survivors.len()
    }

    pub fn total_sources(&self) -> usize {
        self.entries.iter().map(MergeEntry::r).sum()
    }

    /// New index of a surviving token, `None` for sources.
    pub fn survivor_index(&self, old: usize) -> Option<usize> {
        let new = *self.target.get(old)?;
        (self.survivors[new] == old).then_some(new)
    }

    /// Surviving old indices in reduced-row order.
    pub fn survivors(&self) -> &[usize] {
        &self.survivors
    }

    /// Reduced row each old index reads from after unmerge.
    pub fn targets(&self) -> &[usize] {
        &self.target
    }
}

/// Builds the plan for one layer. `selections` must hold exactly one entry per
/// window of size >= 2, matched by `window_id`, with the same index set.
pub fn build_merge_plan(
    partition: &WindowPartition,
    selections: &[RepSelection],
    ratio: f64,
) -> Result<MergePlan> {
    let n = partition.n_tokens();
    let mut by_window: Vec<Option<&RepSelection>> = vec![None; partition.len()];
    for sel in selections {
        let slot = by_window.get_mut(sel.window_id).ok_or_else(|| {
            Error::InconsistentPlan(format!("selection for unknown window {}", sel.window_id))
        })?;
        if slot.replace(sel).is_some() {
            return Err(Error::InconsistentPlan(format!(
                "two selections for window {}",
                sel.window_id
            )));
        }
    }

    let mut source_of = vec![None::<usize>; n];
    let mut entries = Vec::new();
    for (window_id, window) in partition.windows().iter().enumerate() {
        let Some(sel) = by_window[window_id] else {
            if window.len() >= 2 {
                return Err(Error::InconsistentPlan(format!(
                    "window {window_id} has {} tokens but no selection",
                    window.len()
                )));
            }
            continue;
        };
        let mut expected = window.clone();
        expected.sort_unstable();
        if sel.window != expected {
            return Err(Error::InconsistentPlan(format!(
                "selection for window {window_id} covers a different index set"
            )));
        }
        let r = compute_r(window.len(), ratio)?;
        let sources = select_sources(sel, r)?;
        if sources.contains(&sel.dest) {
            return Err(Error::InconsistentPlan(format!(
                "window {window_id}: destination {} is also a source",
                sel.dest
            )));
        }
        for &s in &sources {
            source_of[s] = Some(sel.dest);
        }
        if r > 0 {
            entries.push(MergeEntry {
                window_id,
                dest: sel.dest,
                sources,
            });
        }
    }

    let survivors: Vec<usize> = (0..n).filter(|&i| source_of[i].is_none()).collect();
    let mut target = vec![0; n];
    for (new, &old) in survivors.iter().enumerate() {
        target[old] = new;
    }
    for (old, dest) in source_of.iter().enumerate() {
        if let Some(dest) = *dest {
            target[old] = target[dest];
        }
    }
    Ok(MergePlan {
        n_tokens: n,
        entries,
        target,
        survivors,
    })
}

/// Reduces `tokens` to `plan.merged_count()` rows. A destination with sources
/// becomes `alpha * dest + (1 - alpha) * mean(sources)`; every other survivor
/// is copied unchanged.
pub fn merge_tokens(tokens: &TokenMatrix, plan: &MergePlan, alpha: f64) -> Result<TokenMatrix> {
    if tokens.n_tokens() != plan.n_tokens {
        return Err(Error::ShapeMismatch {
            what: "merge input tokens",
            expected: plan.n_tokens,
            found: tokens.n_tokens(),
        });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(
            "alpha",
            format!("{alpha} is outside [0, 1]"),
        ));
    }
    let dim = tokens.dim();
    let mut data = Vec::with_capacity(plan.merged_count() * dim);
    for &old in &plan.survivors {
        data.extend_from_slice(tokens.row(old));
    }
    let mut out = TokenMatrix::new(plan.merged_count(), dim, data)?;

    let mut mean = vec![0.0; dim];
    for entry in &plan.entries {
        mean.iter_mut().for_each(|m| *m = 0.0);
        for &s in &entry.sources {
            for (m, v) in mean.iter_mut().zip(tokens.row(s)) {
                *m += v;
            }
        }
        let r = entry.r() as f64;
        let row = out.row_mut(plan.target[entry.dest]);
        for (x, m) in row.iter_mut().zip(&mean) {
            *x = alpha * *x + (1.0 - alpha) * (m / r);
        }
    }
    Ok(out)
}

/// Restores full length: survivors return to their old index and each source
/// position receives a copy of its destination's merged row.
pub fn unmerge_tokens(merged: &TokenMatrix, plan: &MergePlan) -> Result<TokenMatrix> {
    if merged.n_tokens() != plan.merged_count() {
        return Err(Error::ShapeMismatch {
            what: "unmerge input tokens",
            expected: plan.merged_count(),
            found: merged.n_tokens(),
        });
    }
    let mut data = Vec::with_capacity(plan.n_tokens * merged.dim());
    for &row in &plan.target {
        data.extend_from_slice(merged.row(row));
    }
    TokenMatrix::new(plan.n_tokens, merged.dim(), data)
}
