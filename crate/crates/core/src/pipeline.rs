//! Deterministic stand-in for a diffusion U-Net: a stack of self-attention
//! layers with down/bottleneck/up roles, run over a latent token field that
//! drifts a little every timestep.
//!
//! Each layer computes `x + attention(h)` in baseline mode and
//! `x + unmerge(attention(merge(h)))` in merged mode, where `h = rms_norm(x)`,
//! so the residual path always sees the full token count.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cache::{CacheKey, CacheStats, SimilarityCache};
use crate::error::{Error, Result};
use crate::merger::{build_merge_plan, merge_tokens, unmerge_tokens, MergeConfig};
use crate::numerics::{
    cosine_similarity_matrix, dot, validate_indices, SimMatrix, TokenMatrix, NORM_EPSILON,
};
use crate::selector::{select_with, Destination, RepSelection};
use crate::window::{partition, validate_role_sequence, GridSpec, LayerSpec, WindowPartition};

const TAG_INIT: u64 = 0x494e_4954;
const TAG_DRIFT: u64 = 0x4452_4946;
const TAG_WEIGHTS: u64 = 0x5747_4854;
const TAG_RANDOM_DEST: u64 = 0x5244_5354;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a run seed with a tag and coordinates into an independent stream seed.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Multiply-accumulate estimate for one attention layer over `n_tokens` tokens
/// of width `dim`: `4·N·d²` for the Q, K, V and output projections plus
/// `2·N²·d` for `QKᵀ` and the weighted sum of values.
pub fn flop_model(n_tokens: usize, dim: usize) -> u64 {
    let (n, d) = (n_tokens as u64, dim as u64);
    4 * n * d * d + 2 * n * n * d
}

/// Frozen `d × d` projections of one attention layer (row-vector convention).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    dim: usize,
    query: Vec<f64>,
    key: Vec<f64>,
    value: Vec<f64>,
    output: Vec<f64>,
}

impl AttentionWeights {
    /// Query, key and value entries drawn from `N(0, 1/d)`, output entries
    /// from `N(0, 1/d²)`, so a layer fed RMS-normalized tokens adds an update
    /// of roughly unit norm.
    pub fn seeded(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (dim as f64).sqrt();
        let mut draw = |s: f64| -> Vec<f64> {
            (0..dim * dim)
                .map(|_| s * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        Self {
            dim,
            query: draw(scale),
            key: draw(scale),
            value: draw(scale),
            output: draw(scale * scale),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(query, key, value, output)` as row-major `d × d` matrices.
    pub fn to_rows(&self) -> [Vec<Vec<f64>>; 4] {
        let rows = |m: &[f64]| m.chunks(self.dim).map(<[f64]>::to_vec).collect();
        [
            rows(&self.query),
            rows(&self.key),
            rows(&self.value),
            rows(&self.output),
        ]
    }

    fn check(&self, tokens: &TokenMatrix) -> Result<()> {
        if tokens.dim() != self.dim {
            return Err(Error::ShapeMismatch {
                what: "attention input width",
                expected: self.dim,
                found: tokens.dim(),
            });
        }
        Ok(())
    }

    fn project(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let n = x.len() / d;
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            let xi = &x[i * d..(i + 1) * d];
            let oi = &mut out[i * d..(i + 1) * d];
            for (k, &xv) in xi.iter().enumerate() {
                for (o, wv) in oi.iter_mut().zip(&w[k * d..(k + 1) * d]) {
                    *o += xv * wv;
                }
            }
        }
        out
    }

    fn qkv(&self, tokens: &TokenMatrix) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let x = tokens.data();
        let q = self.project(x, &self.query);
        let k = self.project(x, &self.key);
        let v = self.project(&self.project(x, &self.value), &self.output);
        (q, k, v)
    }

    /// Softmax weights of query `i` over all keys, written into `out`.
    fn weights_row(&self, q: &[f64], k: &[f64], i: usize, out: &mut [f64]) {
        let d = self.dim;
        let scale = 1.0 / (d as f64).sqrt();
        let qi = &q[i * d..(i + 1) * d];
        let mut max = f64::NEG_INFINITY;
        for (j, o) in out.iter_mut().enumerate() {
            *o = dot(qi, &k[j * d..(j + 1) * d]) * scale;
            max = max.max(*o);
        }
        let mut z = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            z += *o;
        }
        for o in out.iter_mut() {
            *o /= z;
        }
    }
}

/// Row-major `N × N` attention weights; every row sums to 1.
pub fn attention_weights(tokens: &TokenMatrix, weights: &AttentionWeights) -> Result<Vec<f64>> {
    weights.check(tokens)?;
    let n = tokens.n_tokens();
    let (q, k, _) = weights.qkv(tokens);
    let mut out = vec![0.0; n * n];
    for (i, row) in out.chunks_mut(n).enumerate() {
        weights.weights_row(&q, &k, i, row);
    }
    Ok(out)
}

/// `softmax(QKᵀ/√d)·V` with value rows `x·Wv·Wo`. Output has the input's shape.
pub fn attention_block(tokens: &TokenMatrix, weights: &AttentionWeights) -> Result<TokenMatrix> {
    weights.check(tokens)?;
    let (n, d) = (tokens.n_tokens(), tokens.dim());
    let (q, k, v) = weights.qkv(tokens);
    let mut out = vec![0.0; n * d];
    let mut w = vec![0.0; n];
    for i in 0..n {
        weights.weights_row(&q, &k, i, &mut w);
        let oi = &mut out[i * d..(i + 1) * d];
        for (j, &wj) in w.iter().enumerate() {
            for (o, vv) in oi.iter_mut().zip(&v[j * d..(j + 1) * d]) {
                *o += wj * vv;
            }
        }
    }
    TokenMatrix::new(n, d, out)
}

/// `x + scale·η` with `η` per-entry standard normal from `rng`.
/// A zero scale returns the input unchanged and draws nothing.
pub fn drift_step<R: Rng>(tokens: &TokenMatrix, scale: f64, rng: &mut R) -> Result<TokenMatrix> {
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::invalid(
            "drift",
            format!("{scale} must be finite and >= 0"),
        ));
    }
    if scale == 0.0 {
        return Ok(tokens.clone());
    }
    let data = tokens
        .data()
        .iter()
        .map(|v| v + scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    TokenMatrix::new(tokens.n_tokens(), tokens.dim(), data)
}

/// Pearson correlation. Identical inputs give exactly 1; a constant input
/// paired with anything different gives 0.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "pearson operands differ in length");
    if a == b {
        return 1.0;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa.sqrt() * sbb.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPipelineSpec {
    pub grid: GridSpec,
    pub dim: usize,
    pub layers: Vec<LayerSpec>,
    pub timesteps: usize,
    /// Per-timestep drift scale ε.
    pub drift_scale: f64,
    pub seed: u64,
    /// Number of spatial regions in the initial field.
    pub clusters: usize,
    /// Per-token noise around its region direction, before normalization.
    pub cluster_noise: f64,
}

impl ToyPipelineSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        if self.timesteps == 0 {
            return Err(Error::invalid("timesteps", "must be at least 1"));
        }
        if !(self.drift_scale >= 0.0 && self.drift_scale.is_finite()) {
            return Err(Error::invalid("drift", "must be finite and >= 0"));
        }
        if self.clusters == 0 {
            return Err(Error::invalid("clusters", "must be at least 1"));
        }
        if !(self.cluster_noise >= 0.0 && self.cluster_noise.is_finite()) {
            return Err(Error::invalid("cluster_noise", "must be finite and >= 0"));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidLayerSequence("no layers".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.layer_id != i {
                return Err(Error::InvalidLayerSequence(format!(
                    "layer {i} has id {}",
                    layer.layer_id
                )));
            }
            if layer.window_side == 0 {
                return Err(Error::invalid(
                    "window_side",
                    format!("layer {i} has side 0"),
                ));
            }
        }
        let roles: Vec<_> = self.layers.iter().map(|l| l.role).collect();
        validate_role_sequence(&roles)
    }

    pub fn n_tokens(&self) -> usize {
        self.grid.n_tokens()
    }
}

/// How merged-mode layers behave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeSettings {
    pub config: MergeConfig,
    pub destination: Destination,
    /// With caching off, every layer recomputes every selection.
    pub caching: bool,
}

impl Default for MergeSettings {
    fn default() -> Self {
        Self {
            config: MergeConfig::default(),
            destination: Destination::Representative,
            caching: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunMode {
    Baseline,
    Merged(MergeSettings),
}

/// Result of one pass over all timesteps.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    /// Layer-stack output at the last timestep.
    pub final_output: TokenMatrix,
    pub attention_flops: u64,
    /// Token count entering attention, per layer (same every timestep).
    pub tokens_per_layer: Vec<usize>,
    /// With caching disabled, `recomputes` counts every selection computed.
    pub cache_stats: CacheStats,
    /// Timesteps at which each `(layer, window)` selection was recomputed.
    pub recompute_history: BTreeMap<CacheKey, Vec<usize>>,
    /// Wall time spent in the layer stack, excluding drift.
    pub forward_ns: u64,
}

/// Instantiated pipeline: initial field, frozen weights and per-layer partitions.
#[derive(Debug, Clone)]
pub struct ToyPipeline {
    spec: ToyPipelineSpec,
    initial: TokenMatrix,
    weights: Vec<AttentionWeights>,
    partitions: Vec<WindowPartition>,
}

impl ToyPipeline {
    pub fn new(spec: ToyPipelineSpec) -> Result<Self> {
        spec.validate()?;
        let initial = initial_field(&spec)?;
        let weights = (0..spec.layers.len())
            .map(|l| {
                AttentionWeights::seeded(spec.dim, derive_seed(spec.seed, &[TAG_WEIGHTS, l as u64]))
            })
            .collect();
        let partitions = spec
            .layers
            .iter()
            .map(|l| partition(spec.grid, l.window_side))
            .collect::<Result<_>>()?;
        Ok(Self {
            spec,
            initial,
            weights,
            partitions,
        })
    }

    pub fn spec(&self) -> &ToyPipelineSpec {
        &self.spec
    }

    pub fn initial_field(&self) -> &TokenMatrix {
        &self.initial
    }

    pub fn weights(&self, layer: usize) -> &AttentionWeights {
        &self.weights[layer]
    }

    pub fn partition(&self, layer: usize) -> &WindowPartition {
        &self.partitions[layer]
    }

    /// Latent field at each timestep `0..T`; the same sequence for every mode.
    pub fn latents(&self) -> Latents<'_> {
        Latents {
            current: Some(self.initial.clone()),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(self.spec.seed, &[TAG_DRIFT])),
            scale: self.spec.drift_scale,
            remaining: self.spec.timesteps,
            _pipeline: std::marker::PhantomData,
        }
    }

    fn baseline_layer(&self, layer: usize, x: &TokenMatrix) -> Result<(TokenMatrix, usize)> {
        let attn = attention_block(&rms_norm(x)?, &self.weights[layer])?;
        Ok((residual(x, &attn)?, x.n_tokens()))
    }

    fn merged_layer(
        &self,
        layer: usize,
        t: usize,
        x: &TokenMatrix,
        settings: &MergeSettings,
        cache: &mut Option<SimilarityCache>,
    ) -> Result<(TokenMatrix, usize)> {
        let h = rms_norm(x)?;
        let part = &self.partitions[layer];
        let mut selections = Vec::with_capacity(part.len());
        for (w, window) in part.windows().iter().enumerate() {
            if window.len() < 2 {
                continue;
            }
            let seed = derive_seed(
                self.spec.seed,
                &[TAG_RANDOM_DEST, layer as u64, w as u64, t as u64],
            );
            let compute = || -> Result<RepSelection> {
                select_with(&h, w, window, settings.destination, seed)?
                    .ok_or(Error::DegenerateWindow(window.len()))
            };
            let selection = match cache {
                Some(cache) => cache
                    .get_or_compute(t, CacheKey::new(layer, w), window, compute)?
                    .0
                    .clone(),
                None => compute()?,
            };
            selections.push(selection);
        }
        let plan = build_merge_plan(part, &selections, settings.config.ratio)?;
        let reduced = merge_tokens(&h, &plan, settings.config.alpha)?;
        let attn = attention_block(&reduced, &self.weights[layer])?;
        let restored = unmerge_tokens(&attn, &plan)?;
        Ok((residual(x, &restored)?, plan.merged_count()))
    }

    /// Runs every timestep through the layer stack in the given mode.
    pub fn simulate(&self, mode: RunMode) -> Result<Simulation> {
        if let RunMode::Merged(s) = mode {
            s.config.validate()?;
        }
        let mut cache = match mode {
            RunMode::Merged(s) if s.caching => Some(SimilarityCache::new(s.config.period)?),
            _ => None,
        };

        let n_layers = self.spec.layers.len();
        let mut flops = 0u64;
        let mut tokens_per_layer = vec![self.spec.n_tokens(); n_layers];
        let mut forward_ns = 0u64;
        let mut uncached = 0u64;
        let mut last = None;
        for (t, latent) in self.latents().enumerate() {
            let latent = latent?;
            let start = Instant::now();
            let mut x = latent;
            for (layer, slot) in tokens_per_layer.iter_mut().enumerate() {
                let (next, used) = match mode {
                    RunMode::Baseline => self.baseline_layer(layer, &x)?,
                    RunMode::Merged(ref s) => self.merged_layer(layer, t, &x, s, &mut cache)?,
                };
                if matches!(mode, RunMode::Merged(_)) && cache.is_none() {
                    uncached += self.partitions[layer]
                        .windows()
                        .iter()
                        .filter(|w| w.len() >= 2)
                        .count() as u64;
                }
                flops += flop_model(used, self.spec.dim);
                *slot = used;
                x = next;
            }
            forward_ns += start.elapsed().as_nanos() as u64;
            last = Some(x);
        }
        Ok(Simulation {
            final_output: last.expect("timesteps >= 1"),
            attention_flops: flops,
            tokens_per_layer,
            cache_stats: cache.as_ref().map_or(
                CacheStats {
                    recomputes: uncached,
                    ..Default::default()
                },
                |c| c.stats(),
            ),
            recompute_history: cache.map(|c| c.histories().clone()).unwrap_or_default(),
            forward_ns,
        })
    }

    /// Pearson correlation of the layer-0 within-window similarities between
    /// consecutive timesteps (all windows' upper triangles concatenated).
    pub fn drift_correlations(&self) -> Result<Vec<f64>> {
        let part = &self.partitions[0];
        let mut prev: Option<Vec<f64>> = None;
        let mut out = Vec::with_capacity(self.spec.timesteps.saturating_sub(1));
        for latent in self.latents() {
            let latent = latent?;
            let mut sims = Vec::new();
            for window in part.windows().iter().filter(|w| w.len() >= 2) {
                sims.extend(cosine_similarity_matrix(&latent, window)?.upper_triangle());
            }
            if let Some(p) = prev.as_ref() {
                out.push(if sims.is_empty() {
                    1.0
                } else {
                    pearson(p, &sims)
                });
            }
            prev = Some(sims);
        }
        Ok(out)
    }
}

/// Scales every row to unit root-mean-square (norm `√d`); zero rows stay zero.
pub fn rms_norm(tokens: &TokenMatrix) -> Result<TokenMatrix> {
    let d = tokens.dim() as f64;
    let mut data = Vec::with_capacity(tokens.data().len());
    for row in tokens.rows() {
        let norm = dot(row, row).sqrt();
        let scale = if norm < NORM_EPSILON {
            0.0
        } else {
            d.sqrt() / norm
        };
        data.extend(row.iter().map(|v| v * scale));
    }
    TokenMatrix::new(tokens.n_tokens(), tokens.dim(), data)
}

fn residual(x: &TokenMatrix, update: &TokenMatrix) -> Result<TokenMatrix> {
    let data = x
        .data()
        .iter()
        .zip(update.data())
        .map(|(a, b)| a + b)
        .collect();
    TokenMatrix::new(x.n_tokens(), x.dim(), data)
}

/// Iterator over the drifting latent field.
pub struct Latents<'a> {
    current: Option<TokenMatrix>,
    rng: ChaCha8Rng,
    scale: f64,
    remaining: usize,
    _pipeline: std::marker::PhantomData<&'a ToyPipeline>,
}

impl Iterator for Latents<'_> {
    type Item = Result<TokenMatrix>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let current = self.current.take()?;
        if self.remaining > 0 {
            match drift_step(&current, self.scale, &mut self.rng) {
                Ok(next) => self.current = Some(next),
                Err(e) => return Some(Err(e)),
            }
        }
        Some(Ok(current))
    }
}

/// Unit-norm tokens with spatial structure: the grid is split into Voronoi
/// regions around random seed points, each region has a random direction,
/// and every token is its region's direction plus isotropic noise.
fn initial_field(spec: &ToyPipelineSpec) -> Result<TokenMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[TAG_INIT]));
    let d = spec.dim;
    let centers: Vec<(f64, f64)> = (0..spec.clusters)
        .map(|_| {
            (
                rng.random_range(0.0..spec.grid.height as f64),
                rng.random_range(0.0..spec.grid.width as f64),
            )
        })
        .collect();
    let directions: Vec<Vec<f64>> = (0..spec.clusters)
        .map(|_| {
            unit(
                &(0..d)
                    .map(|_| rng.sample(StandardNormal))
                    .collect::<Vec<f64>>(),
            )
        })
        .collect();
    let noise = spec.cluster_noise / (d as f64).sqrt();
    let mut data = Vec::with_capacity(spec.n_tokens() * d);
    for r in 0..spec.grid.height {
        for c in 0..spec.grid.width {
            let (pr, pc) = (r as f64 + 0.5, c as f64 + 0.5);
            let nearest = centers
                .iter()
                .map(|(cr, cc)| (cr - pr).powi(2) + (cc - pc).powi(2))
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map_or(0, |(k, _)| k);
            let v: Vec<f64> = directions[nearest]
                .iter()
                .map(|x| x + noise * rng.sample::<f64, _>(StandardNormal))
                .collect();
            data.extend(unit(&v));
        }
    }
    TokenMatrix::new(spec.n_tokens(), d, data)
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = dot(v, v).sqrt();
    if n < 1e-12 {
        let mut e = vec![0.0; v.len()];
        e[0] = 1.0;
        return e;
    }
    v.iter().map(|x| x / n).collect()
}

/// Wall-clock measurement policy: `warmup` untimed passes, then the median of
/// `repetitions` timed passes. Zero repetitions disables timing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingConfig {
    pub warmup: usize,
    pub repetitions: usize,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            warmup: 1,
            repetitions: 5,
        }
    }
}

impl TimingConfig {
    pub fn disabled() -> Self {
        Self {
            warmup: 0,
            repetitions: 0,
        }
    }
}

/// Metrics of one baseline-vs-merged comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub baseline_flops: u64,
    pub merged_flops: u64,
    pub flop_ratio: f64,
    pub wall_time_baseline_ns: u64,
    pub wall_time_merged_ns: u64,
    /// Baseline over merged wall time; 0 when timing is disabled.
    pub wall_speedup: f64,
    /// Tokens entering attention summed over layers, per timestep.
    pub tokens_before: usize,
    pub tokens_after: usize,
    pub tokens_after_per_layer: Vec<usize>,
    pub cache_recomputes: u64,
    pub cache_hits: u64,
    pub output_mse_vs_baseline: f64,
    /// Layer-0 similarity correlation between timesteps `t` and `t + 1`.
    pub drift_correlations: Vec<f64>,
}

impl MetricsRecord {
    /// Copy with timing fields zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_time_baseline_ns: 0,
            wall_time_merged_ns: 0,
            wall_speedup: 0.0,
            ..self.clone()
        }
    }
}

fn median(mut v: Vec<u64>) -> u64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2
    }
}

fn timed(pipeline: &ToyPipeline, mode: RunMode, timing: TimingConfig) -> Result<(Simulation, u64)> {
    let first = pipeline.simulate(mode)?;
    if timing.repetitions == 0 {
        return Ok((first, 0));
    }
    for _ in 1..timing.warmup {
        pipeline.simulate(mode)?;
    }
    let mut samples = Vec::with_capacity(timing.repetitions);
    if timing.warmup == 0 {
        samples.push(first.forward_ns);
    }
    while samples.len() < timing.repetitions {
        samples.push(pipeline.simulate(mode)?.forward_ns);
    }
    Ok((first, median(samples)))
}

/// Runs baseline and merged modes on the same seeded pipeline and compares them.
pub fn run(
    spec: &ToyPipelineSpec,
    settings: MergeSettings,
    timing: TimingConfig,
) -> Result<MetricsRecord> {
    let pipeline = ToyPipeline::new(spec.clone())?;
    run_pipeline(&pipeline, settings, timing)
}

pub fn run_pipeline(
    pipeline: &ToyPipeline,
    settings: MergeSettings,
    timing: TimingConfig,
) -> Result<MetricsRecord> {
    let (base, base_ns) = timed(pipeline, RunMode::Baseline, timing)?;
    let (merged, merged_ns) = timed(pipeline, RunMode::Merged(settings), timing)?;
    let wall_speedup = if merged_ns > 0 {
        base_ns as f64 / merged_ns as f64
    } else {
        0.0
    };
    Ok(MetricsRecord {
        baseline_flops: base.attention_flops,
        merged_flops: merged.attention_flops,
        flop_ratio: merged.attention_flops as f64 / base.attention_flops as f64,
        wall_time_baseline_ns: base_ns,
        wall_time_merged_ns: merged_ns,
        wall_speedup,
        tokens_before: base.tokens_per_layer.iter().sum(),
        tokens_after: merged.tokens_per_layer.iter().sum(),
        tokens_after_per_layer: merged.tokens_per_layer,
        cache_recomputes: merged.cache_stats.recomputes,
        cache_hits: merged.cache_stats.hits,
        output_mse_vs_baseline: merged.final_output.mse(&base.final_output)?,
        drift_correlations: pipeline.drift_correlations()?,
    })
}

/// Within-window similarity matrices at sampled timesteps and their correlations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub window: Vec<usize>,
    pub timesteps: Vec<usize>,
    pub matrices: Vec<SimMatrix>,
    /// Correlation between sample `k` and sample `k + 1` (off-diagonal entries).
    pub consecutive: Vec<f64>,
    /// Correlation between every pair of samples.
    pub pairwise: Vec<Vec<f64>>,
}

impl DriftReport {
    /// Correlation between the samples taken at timesteps `a` and `b`.
    pub fn correlation(&self, a: usize, b: usize) -> Option<f64> {
        let i = self.timesteps.iter().position(|&t| t == a)?;
        let j = self.timesteps.iter().position(|&t| t == b)?;
        Some(self.pairwise[i][j])
    }

    /// Writes `sim_t<T>.csv` per sample plus `correlations.csv` into `dir`.
    pub fn write_csv(&self, dir: &std::path::Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (t, m) in self.timesteps.iter().zip(&self.matrices) {
            let path = dir.join(format!("sim_t{t}.csv"));
            let mut w = csv::Writer::from_path(&path)?;
            for i in 0..m.size() {
                w.write_record(m.row(i).iter().map(|v| crate::bench::format_f64(*v)))?;
            }
            w.flush()?;
            written.push(path);
        }
        let path = dir.join("correlations.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["timestep_a", "timestep_b", "pearson"])?;
        for (i, &ta) in self.timesteps.iter().enumerate() {
            for (j, &tb) in self.timesteps.iter().enumerate().skip(i + 1) {
                w.write_record([
                    ta.to_string(),
                    tb.to_string(),
                    crate::bench::format_f64(self.pairwise[i][j]),
                ])?;
            }
        }
        w.flush()?;
        written.push(path);
        Ok(written)
    }
}

/// Tracks one window's similarity matrix on the drifting latent field.
pub fn similarity_drift_report(
    spec: &ToyPipelineSpec,
    window: &[usize],
    sample_timesteps: &[usize],
) -> Result<DriftReport> {
    spec.validate()?;
    if window.len() < 2 {
        return Err(Error::DegenerateWindow(window.len()));
    }
    validate_indices(window, spec.n_tokens())?;
    if let Some(&t) = sample_timesteps.iter().find(|&&t| t >= spec.timesteps) {
        return Err(Error::invalid(
            "sample_timesteps",
            format!("{t} is outside [0, {})", spec.timesteps),
        ));
    }
    let pipeline = ToyPipeline::new(spec.clone())?;
    let last = sample_timesteps.iter().copied().max().unwrap_or(0);
    let mut by_time = std::collections::BTreeMap::new();
    for (t, latent) in pipeline.latents().enumerate().take(last + 1) {
        if sample_timesteps.contains(&t) {
            by_time.insert(t, cosine_similarity_matrix(&latent?, window)?);
        }
    }
    let matrices: Vec<SimMatrix> = sample_timesteps
        .iter()
        .map(|t| by_time[t].clone())
        .collect();
    let flat: Vec<Vec<f64>> = matrices.iter().map(SimMatrix::upper_triangle).collect();
    let pairwise: Vec<Vec<f64>> = flat
        .iter()
        .map(|a| flat.iter().map(|b| pearson(a, b)).collect())
        .collect();
    let consecutive = (1..flat.len()).map(|k| pairwise[k - 1][k]).collect();
    Ok(DriftReport {
        window: window.to_vec(),
        timesteps: sample_timesteps.to_vec(),
        matrices,
        consecutive,
        pairwise,
    })
}
