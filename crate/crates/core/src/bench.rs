//! Benchmark harness behind the `tokmerge-bench` binary: configuration from a
//! TOML file and/or flags, cross-product sweeps, and CSV/JSON output.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Parser;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::merger::MergeConfig;
use crate::pipeline::{
    run_pipeline, similarity_drift_report, MergeSettings, MetricsRecord, TimingConfig, ToyPipeline,
    ToyPipelineSpec,
};
use crate::selector::Destination;
use crate::window::{parse_roles, GridSpec, LayerRole, WindowMode};

/// Value of the `schema` column; bump when columns change.
pub const SCHEMA_VERSION: &str = "tokmerge-metrics/v1";

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "TOKMERGE_OUT_DIR";

pub const CSV_COLUMNS: [&str; 30] = [
    "schema",
    "grid",
    "dim",
    "layers",
    "window",
    "destination",
    "ratio",
    "alpha",
    "period",
    "timesteps",
    "drift",
    "seed",
    "clusters",
    "cluster_noise",
    "caching",
    "baseline_flops",
    "merged_flops",
    "flop_ratio",
    "tokens_before",
    "tokens_after",
    "tokens_after_per_layer",
    "cache_recomputes",
    "cache_hits",
    "output_mse_vs_baseline",
    "drift_corr_min",
    "drift_corr_mean",
    "drift_correlations",
    "wall_time_baseline_ns",
    "wall_time_merged_ns",
    "wall_speedup",
];

/// Columns that vary between otherwise identical runs.
pub const TIMING_COLUMNS: [&str; 3] = [
    "wall_time_baseline_ns",
    "wall_time_merged_ns",
    "wall_speedup",
];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::invalid(
                "format",
                format!("expected csv|json, got `{other}`"),
            )),
        }
    }
}

/// One fully specified run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub dim: usize,
    pub layers: Vec<LayerRole>,
    pub window: WindowMode,
    pub ratio: f64,
    pub alpha: f64,
    pub period: usize,
    pub timesteps: usize,
    pub drift: f64,
    pub seed: u64,
    pub destination: Destination,
    pub clusters: usize,
    pub cluster_noise: f64,
    pub caching: bool,
    pub warmup: usize,
    pub repetitions: usize,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
    pub drift_report: bool,
    pub drift_samples: Option<Vec<usize>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        use LayerRole::*;
        Self {
            grid: GridSpec {
                height: 32,
                width: 32,
            },
            dim: 32,
            layers: vec![Down, Down, Bottleneck, Up, Up],
            window: WindowMode::default(),
            ratio: 0.5,
            alpha: crate::merger::DEFAULT_ALPHA,
            period: 5,
            timesteps: 10,
            drift: 0.01,
            seed: 0,
            destination: Destination::Representative,
            clusters: 8,
            cluster_noise: 0.5,
            caching: true,
            warmup: 1,
            repetitions: 5,
            output: None,
            format: OutputFormat::Csv,
            drift_report: false,
            drift_samples: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        MergeConfig::new(self.ratio, self.alpha, self.period)?;
        if self.dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        if self.timesteps == 0 {
            return Err(Error::invalid("timesteps", "must be at least 1"));
        }
        if !(self.drift >= 0.0 && self.drift.is_finite()) {
            return Err(Error::invalid(
                "drift",
                format!("{} must be finite and >= 0", self.drift),
            ));
        }
        if self.layers.is_empty() {
            return Err(Error::invalid("layers", "need at least one layer"));
        }
        crate::window::validate_role_sequence(&self.layers)
            .map_err(|e| Error::invalid("layers", e.to_string()))?;
        if self.clusters == 0 {
            return Err(Error::invalid("clusters", "must be at least 1"));
        }
        if !(self.cluster_noise >= 0.0 && self.cluster_noise.is_finite()) {
            return Err(Error::invalid("cluster_noise", "must be finite and >= 0"));
        }
        if let Some(bad) = self
            .drift_samples
            .iter()
            .flatten()
            .find(|&&t| t >= self.timesteps)
        {
            return Err(Error::invalid(
                "drift_samples",
                format!("{bad} is outside [0, {})", self.timesteps),
            ));
        }
        Ok(())
    }

    pub fn pipeline_spec(&self) -> Result<ToyPipelineSpec> {
        Ok(ToyPipelineSpec {
            grid: self.grid,
            dim: self.dim,
            layers: self.window.layer_specs(&self.layers)?,
            timesteps: self.timesteps,
            drift_scale: self.drift,
            seed: self.seed,
            clusters: self.clusters,
            cluster_noise: self.cluster_noise,
        })
    }

    pub fn merge_settings(&self) -> MergeSettings {
        MergeSettings {
            config: MergeConfig {
                ratio: self.ratio,
                alpha: self.alpha,
                period: self.period,
            },
            destination: self.destination,
            caching: self.caching,
        }
    }

    pub fn timing(&self) -> TimingConfig {
        TimingConfig {
            warmup: self.warmup,
            repetitions: self.repetitions,
        }
    }

    /// Explicit output path, else `$TOKMERGE_OUT_DIR/tokmerge_results.<ext>`, else the working directory.
    pub fn output_path(&self) -> PathBuf {
        if let Some(p) = &self.output {
            return p.clone();
        }
        let dir = std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from);
        dir.join(format!("tokmerge_results.{}", self.format.extension()))
    }

    fn drift_sample_timesteps(&self) -> Vec<usize> {
        if let Some(s) = &self.drift_samples {
            return s.clone();
        }
        let last = self.timesteps - 1;
        let mut s = vec![0, last / 3, 2 * last / 3, last];
        s.dedup();
        s
    }

    fn label(&self) -> String {
        format!(
            "grid={} window={} destination={} ratio={} alpha={} period={}",
            self.grid, self.window, self.destination, self.ratio, self.alpha, self.period
        )
    }
}

/// Config file layer. Every key is optional; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    grid: Option<String>,
    dim: Option<usize>,
    layers: Option<String>,
    window: Option<String>,
    ratio: Option<f64>,
    alpha: Option<f64>,
    period: Option<usize>,
    timesteps: Option<usize>,
    drift: Option<f64>,
    seed: Option<u64>,
    destination: Option<String>,
    clusters: Option<usize>,
    cluster_noise: Option<f64>,
    caching: Option<bool>,
    warmup: Option<usize>,
    repetitions: Option<usize>,
    output: Option<PathBuf>,
    format: Option<String>,
    drift_report: Option<bool>,
    drift_samples: Option<Vec<usize>>,
    sweep: Option<FileSweep>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSweep {
    grid: Option<Vec<String>>,
    window: Option<Vec<String>>,
    destination: Option<Vec<String>>,
    ratio: Option<Vec<f64>>,
    alpha: Option<Vec<f64>>,
    period: Option<Vec<usize>>,
}

/// Token-merging benchmark on a synthetic iterative attention pipeline.
///
/// Flags override values from `--config`. Repeat a `--sweep-*` flag to add
/// values to that axis; the sweep runs the cross product of all axes.
#[derive(Debug, Parser)]
#[command(name = "tokmerge-bench", version)]
struct Cli {
    /// TOML file with any of the long option names as keys (plus a [sweep] table).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Token grid as HxW [default: 32x32].
    #[arg(long)]
    grid: Option<String>,
    /// Feature width [default: 32].
    #[arg(long)]
    dim: Option<usize>,
    /// Comma-separated layer roles [default: down,down,bottleneck,up,up].
    #[arg(long)]
    layers: Option<String>,
    /// fixed:S | adaptive | adaptive:SMALL,LARGE [default: adaptive:2,8].
    #[arg(long)]
    window: Option<String>,
    /// Merge ratio in [0, 1] [default: 0.5].
    #[arg(long)]
    ratio: Option<f64>,
    /// Destination weight in [0, 1] [default: 0.5].
    #[arg(long)]
    alpha: Option<f64>,
    /// Similarity recompute period in timesteps [default: 5].
    #[arg(long)]
    period: Option<usize>,
    /// Number of timesteps [default: 10].
    #[arg(long)]
    timesteps: Option<usize>,
    /// Per-timestep drift scale [default: 0.01].
    #[arg(long)]
    drift: Option<f64>,
    /// Run seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// representative | least | random [default: representative].
    #[arg(long)]
    destination: Option<String>,
    /// Spatial regions in the initial field [default: 8].
    #[arg(long)]
    clusters: Option<usize>,
    /// Noise around each region's direction [default: 0.5].
    #[arg(long)]
    cluster_noise: Option<f64>,
    /// Recompute selections every layer call instead of caching.
    #[arg(long)]
    no_cache: bool,
    /// Untimed warm-up passes [default: 1].
    #[arg(long)]
    warmup: Option<usize>,
    /// Timed passes; the median is reported. 0 disables timing [default: 5].
    #[arg(long)]
    repetitions: Option<usize>,
    /// Output file [default: $TOKMERGE_OUT_DIR/tokmerge_results.<format>].
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// csv | json [default: csv].
    #[arg(long)]
    format: Option<String>,
    /// Also dump per-timestep similarity matrices of one window.
    #[arg(long)]
    drift_report: bool,
    /// Timesteps sampled by --drift-report, comma-separated.
    #[arg(long, value_delimiter = ',')]
    drift_samples: Option<Vec<usize>>,
    #[arg(long = "sweep-grid")]
    sweep_grid: Vec<String>,
    #[arg(long = "sweep-window")]
    sweep_window: Vec<String>,
    #[arg(long = "sweep-destination")]
    sweep_destination: Vec<String>,
    #[arg(long = "sweep-ratio")]
    sweep_ratio: Vec<f64>,
    #[arg(long = "sweep-alpha")]
    sweep_alpha: Vec<f64>,
    #[arg(long = "sweep-period")]
    sweep_period: Vec<usize>,
}

/// Values per sweep axis. An empty axis keeps the base config's value.
/// Rows are produced in lexicographic order with `grid` outermost, then
/// `window`, `destination`, `ratio`, `alpha`, `period`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepAxes {
    pub grid: Vec<GridSpec>,
    pub window: Vec<WindowMode>,
    pub destination: Vec<Destination>,
    pub ratio: Vec<f64>,
    pub alpha: Vec<f64>,
    pub period: Vec<usize>,
}

impl SweepAxes {
    pub fn expand(&self, base: &RunConfig) -> Vec<RunConfig> {
        fn axis<T: Clone>(values: &[T], default: T) -> Vec<T> {
            if values.is_empty() {
                vec![default]
            } else {
                values.to_vec()
            }
        }
        let mut out = Vec::new();
        for grid in axis(&self.grid, base.grid) {
            for window in axis(&self.window, base.window) {
                for destination in axis(&self.destination, base.destination) {
                    for ratio in axis(&self.ratio, base.ratio) {
                        for alpha in axis(&self.alpha, base.alpha) {
                            for period in axis(&self.period, base.period) {
                                out.push(RunConfig {
                                    grid,
                                    window,
                                    destination,
                                    ratio,
                                    alpha,
                                    period,
                                    ..base.clone()
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub config: RunConfig,
    pub axes: SweepAxes,
}

fn parse_list<T: FromStr<Err = Error>>(values: &[String]) -> Result<Vec<T>> {
    values.iter().map(|s| s.parse()).collect()
}

fn read_file_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Builds the run configuration from command-line arguments (program name
/// first) and the optional `--config` file.
pub fn parse_config<I, T>(args: I) -> Result<Invocation>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            e.exit()
        }
        Err(e) => return Err(Error::Config(e.to_string())),
    };
    let mut cfg = RunConfig::default();
    let mut axes = SweepAxes::default();

    if let Some(path) = &cli.config {
        let file = read_file_config(path)?;
        apply(
            &mut cfg.grid,
            file.grid.as_deref().map(str::parse).transpose()?,
        );
        apply(&mut cfg.dim, file.dim);
        apply(
            &mut cfg.layers,
            file.layers.as_deref().map(parse_roles).transpose()?,
        );
        apply(
            &mut cfg.window,
            file.window.as_deref().map(str::parse).transpose()?,
        );
        apply(&mut cfg.ratio, file.ratio);
        apply(&mut cfg.alpha, file.alpha);
        apply(&mut cfg.period, file.period);
        apply(&mut cfg.timesteps, file.timesteps);
        apply(&mut cfg.drift, file.drift);
        apply(&mut cfg.seed, file.seed);
        apply(
            &mut cfg.destination,
            file.destination.as_deref().map(str::parse).transpose()?,
        );
        apply(&mut cfg.clusters, file.clusters);
        apply(&mut cfg.cluster_noise, file.cluster_noise);
        apply(&mut cfg.caching, file.caching);
        apply(&mut cfg.warmup, file.warmup);
        apply(&mut cfg.repetitions, file.repetitions);
        apply(
            &mut cfg.format,
            file.format.as_deref().map(str::parse).transpose()?,
        );
        apply(&mut cfg.drift_report, file.drift_report);
        if file.output.is_some() {
            cfg.output = file.output;
        }
        if file.drift_samples.is_some() {
            cfg.drift_samples = file.drift_samples;
        }
        if let Some(s) = file.sweep {
            axes.grid = parse_list(&s.grid.unwrap_or_default())?;
            axes.window = parse_list(&s.window.unwrap_or_default())?;
            axes.destination = parse_list(&s.destination.unwrap_or_default())?;
            axes.ratio = s.ratio.unwrap_or_default();
            axes.alpha = s.alpha.unwrap_or_default();
            axes.period = s.period.unwrap_or_default();
        }
    }

    apply(
        &mut cfg.grid,
        cli.grid.as_deref().map(str::parse).transpose()?,
    );
    apply(&mut cfg.dim, cli.dim);
    apply(
        &mut cfg.layers,
        cli.layers.as_deref().map(parse_roles).transpose()?,
    );
    apply(
        &mut cfg.window,
        cli.window.as_deref().map(str::parse).transpose()?,
    );
    apply(&mut cfg.ratio, cli.ratio);
    apply(&mut cfg.alpha, cli.alpha);
    apply(&mut cfg.period, cli.period);
    apply(&mut cfg.timesteps, cli.timesteps);
    apply(&mut cfg.drift, cli.drift);
    apply(&mut cfg.seed, cli.seed);
    apply(
        &mut cfg.destination,
        cli.destination.as_deref().map(str::parse).transpose()?,
    );
    apply(&mut cfg.clusters, cli.clusters);
    apply(&mut cfg.cluster_noise, cli.cluster_noise);
    apply(&mut cfg.warmup, cli.warmup);
    apply(&mut cfg.repetitions, cli.repetitions);
    apply(
        &mut cfg.format,
        cli.format.as_deref().map(str::parse).transpose()?,
    );
    if cli.no_cache {
        cfg.caching = false;
    }
    if cli.drift_report {
        cfg.drift_report = true;
    }
    if cli.output.is_some() {
        cfg.output = cli.output;
    }
    if cli.drift_samples.is_some() {
        cfg.drift_samples = cli.drift_samples;
    }
    if !cli.sweep_grid.is_empty() {
        axes.grid = parse_list(&cli.sweep_grid)?;
    }
    if !cli.sweep_window.is_empty() {
        axes.window = parse_list(&cli.sweep_window)?;
    }
    if !cli.sweep_destination.is_empty() {
        axes.destination = parse_list(&cli.sweep_destination)?;
    }
    if !cli.sweep_ratio.is_empty() {
        axes.ratio = cli.sweep_ratio;
    }
    if !cli.sweep_alpha.is_empty() {
        axes.alpha = cli.sweep_alpha;
    }
    if !cli.sweep_period.is_empty() {
        axes.period = cli.sweep_period;
    }

    cfg.validate()?;
    for point in axes.expand(&cfg) {
        point.validate()?;
    }
    Ok(Invocation { config: cfg, axes })
}

fn apply<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// One sweep point: its full configuration and measured metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub config: RunConfig,
    pub metrics: MetricsRecord,
}

/// Runs one configuration.
pub fn run_config(config: &RunConfig) -> Result<MetricsRecord> {
    config.validate()?;
    let pipeline = ToyPipeline::new(config.pipeline_spec()?)?;
    run_pipeline(&pipeline, config.merge_settings(), config.timing())
}

/// Runs every combination of `axes` over `base`, serially and in axis order.
pub fn run_sweep(base: &RunConfig, axes: &SweepAxes) -> Result<Vec<SweepRow>> {
    let points = axes.expand(base);
    let mut rows = Vec::with_capacity(points.len());
    for (index, config) in points.into_iter().enumerate() {
        log::info!("run {index}: {}", config.label());
        let metrics = run_config(&config).map_err(|e| Error::SweepRun {
            index,
            label: config.label(),
            source: Box::new(e),
        })?;
        rows.push(SweepRow { config, metrics });
    }
    Ok(rows)
}

/// Flat, serializable form of a [`SweepRow`], in the fixed column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub schema: String,
    pub grid: String,
    pub dim: usize,
    pub layers: String,
    pub window: String,
    pub destination: String,
    pub ratio: f64,
    pub alpha: f64,
    pub period: usize,
    pub timesteps: usize,
    pub drift: f64,
    pub seed: u64,
    pub clusters: usize,
    pub cluster_noise: f64,
    pub caching: bool,
    pub baseline_flops: u64,
    pub merged_flops: u64,
    pub flop_ratio: f64,
    pub tokens_before: usize,
    pub tokens_after: usize,
    pub tokens_after_per_layer: Vec<usize>,
    pub cache_recomputes: u64,
    pub cache_hits: u64,
    pub output_mse_vs_baseline: f64,
    pub drift_corr_min: f64,
    pub drift_corr_mean: f64,
    pub drift_correlations: Vec<f64>,
    pub wall_time_baseline_ns: u64,
    pub wall_time_merged_ns: u64,
    pub wall_speedup: f64,
}

impl From<&SweepRow> for ResultRow {
    fn from(row: &SweepRow) -> Self {
        let c = &row.config;
        let m = &row.metrics;
        let corr = &m.drift_correlations;
        let (corr_min, corr_mean) = if corr.is_empty() {
            (1.0, 1.0)
        } else {
            (
                corr.iter().copied().fold(f64::INFINITY, f64::min),
                corr.iter().sum::<f64>() / corr.len() as f64,
            )
        };
        ResultRow {
            schema: SCHEMA_VERSION.to_string(),
            grid: c.grid.to_string(),
            dim: c.dim,
            layers: c
                .layers
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(","),
            window: c.window.to_string(),
            destination: c.destination.to_string(),
            ratio: c.ratio,
            alpha: c.alpha,
            period: c.period,
            timesteps: c.timesteps,
            drift: c.drift,
            seed: c.seed,
            clusters: c.clusters,
            cluster_noise: c.cluster_noise,
            caching: c.caching,
            baseline_flops: m.baseline_flops,
            merged_flops: m.merged_flops,
            flop_ratio: m.flop_ratio,
            tokens_before: m.tokens_before,
            tokens_after: m.tokens_after,
            tokens_after_per_layer: m.tokens_after_per_layer.clone(),
            cache_recomputes: m.cache_recomputes,
            cache_hits: m.cache_hits,
            output_mse_vs_baseline: m.output_mse_vs_baseline,
            drift_corr_min: corr_min,
            drift_corr_mean: corr_mean,
            drift_correlations: corr.clone(),
            wall_time_baseline_ns: m.wall_time_baseline_ns,
            wall_time_merged_ns: m.wall_time_merged_ns,
            wall_speedup: m.wall_speedup,
        }
    }
}

impl ResultRow {
    fn csv_record(&self) -> Vec<String> {
        let join = |v: Vec<String>| v.join(";");
        vec![
            self.schema.clone(),
            self.grid.clone(),
            self.dim.to_string(),
            self.layers.clone(),
            self.window.clone(),
            self.destination.clone(),
            format_f64(self.ratio),
            format_f64(self.alpha),
            self.period.to_string(),
            self.timesteps.to_string(),
            format_f64(self.drift),
            self.seed.to_string(),
            self.clusters.to_string(),
            format_f64(self.cluster_noise),
            self.caching.to_string(),
            self.baseline_flops.to_string(),
            self.merged_flops.to_string(),
            format_f64(self.flop_ratio),
            self.tokens_before.to_string(),
            self.tokens_after.to_string(),
            join(
                self.tokens_after_per_layer
                    .iter()
                    .map(ToString::to_string)
                    .collect(),
            ),
            self.cache_recomputes.to_string(),
            self.cache_hits.to_string(),
            format_f64(self.output_mse_vs_baseline),
            format_f64(self.drift_corr_min),
            format_f64(self.drift_corr_mean),
            join(
                self.drift_correlations
                    .iter()
                    .map(|v| format_f64(*v))
                    .collect(),
            ),
            self.wall_time_baseline_ns.to_string(),
            self.wall_time_merged_ns.to_string(),
            format_f64(self.wall_speedup),
        ]
    }
}

/// JSON formatter that writes every float with 17 significant digits.
struct Sig17;

impl serde_json::ser::Formatter for Sig17 {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        writer.write_all(format_f64(value).as_bytes())
    }
}

pub fn write_csv<W: Write>(rows: &[ResultRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_COLUMNS)?;
    for row in rows {
        w.write_record(row.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(rows: &[ResultRow], mut writer: W) -> Result<()> {
    let mut ser = serde_json::Serializer::with_formatter(&mut writer, Sig17);
    rows.serialize(&mut ser)?;
    writer.write_all(b"\n")?;
    Ok(())
}

/// Writes the table to `path` in `format`. Returns the rows as written.
pub fn emit_results(
    rows: &[SweepRow],
    format: OutputFormat,
    path: &Path,
) -> Result<Vec<ResultRow>> {
    let table: Vec<ResultRow> = rows.iter().map(ResultRow::from).collect();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    match format {
        OutputFormat::Csv => write_csv(&table, file)?,
        OutputFormat::Json => write_json(&table, file)?,
    }
    Ok(table)
}

/// Dumps a drift report per row into `<dir>/row<k>/`, tracking the first
/// multi-token window of layer 0.
pub fn emit_drift_reports(rows: &[SweepRow], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (k, row) in rows.iter().enumerate() {
        let spec = row.config.pipeline_spec()?;
        let part = crate::window::partition(spec.grid, spec.layers[0].window_side)?;
        let Some(window) = part.windows().iter().find(|w| w.len() >= 2) else {
            log::warn!("row {k}: no window with two or more tokens, skipping drift report");
            continue;
        };
        let report = similarity_drift_report(&spec, window, &row.config.drift_sample_timesteps())?;
        written.extend(report.write_csv(&dir.join(format!("row{k}")))?);
    }
    Ok(written)
}

/// Entry point of the bench binary.
pub fn main_with_args<I, T>(args: I) -> Result<PathBuf>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let Invocation { config, axes } = parse_config(args)?;
    let rows = run_sweep(&config, &axes)?;
    let path = config.output_path();
    emit_results(&rows, config.format, &path)?;
    if config.drift_report {
        let stem = path
            .file_stem()
            .map_or_else(|| "tokmerge".into(), |s| s.to_os_string());
        let mut name = stem;
        name.push("_drift");
        let dir = path.with_file_name(name);
        emit_drift_reports(&rows, &dir)?;
    }
    for row in &rows {
        let m = &row.metrics;
        println!(
            "{}: flop_ratio={:.4} tokens {}->{} mse={:.3e} speedup={:.2}x",
            row.config.label(),
            m.flop_ratio,
            m.tokens_before,
            m.tokens_after,
            m.output_mse_vs_baseline,
            m.wall_speedup
        );
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<Invocation> {
        parse_config(std::iter::once("tokmerge-bench").chain(args.iter().copied()))
    }

    #[test]
    fn flags_build_valid_config() {
        let inv = parse(&[
            "--ratio", "0.5", "--alpha", "0.5", "--period", "5", "--window", "fixed:2", "--grid",
            "64x64", "--dim", "64", "--seed", "42",
        ])
        .unwrap();
        let c = inv.config;
        assert_eq!(c.grid, GridSpec::new(64, 64).unwrap());
        assert_eq!(c.window, WindowMode::Fixed(2));
        assert_eq!(
            (c.ratio, c.alpha, c.period, c.dim, c.seed),
            (0.5, 0.5, 5, 64, 42)
        );
        assert_eq!(inv.axes.expand(&c).len(), 1);
    }

    #[test]
    fn out_of_range_ratio_names_key() {
        let err = parse(&["--ratio", "1.5"]).unwrap_err();
        assert!(
            matches!(&err, Error::InvalidParameter { name, .. } if name == "ratio"),
            "{err}"
        );
        let err = parse(&["--sweep-alpha", "0.2", "--sweep-alpha", "2"]).unwrap_err();
        assert!(err.to_string().contains("alpha"));
    }

    #[test]
    fn flag_overrides_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "period = 3\nratio = 0.25\n").unwrap();
        let p = path.to_str().unwrap();
        let c = parse(&["--config", p, "--period", "7"]).unwrap().config;
        assert_eq!(c.period, 7);
        assert_eq!(c.ratio, 0.25);
    }

    #[test]
    fn unknown_or_malformed_file_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "periodd = 3\n").unwrap();
        let err = parse(&["--config", path.to_str().unwrap()]).unwrap_err();
        assert!(err.to_string().contains("periodd"), "{err}");
        std::fs::write(&path, "period = \n").unwrap();
        assert!(parse(&["--config", path.to_str().unwrap()]).is_err());
        assert!(parse(&["--config", "/nonexistent/run.toml"]).is_err());
        assert!(parse(&["--bogus-flag"]).is_err());
    }

    #[test]
    fn file_sweep_table() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "[sweep]\nwindow = [\"fixed:2\", \"adaptive\"]\ndestination = [\"representative\", \"random\"]\n",
        )
        .unwrap();
        let inv = parse(&["--config", path.to_str().unwrap()]).unwrap();
        let points = inv.axes.expand(&inv.config);
        assert_eq!(points.len(), 4);
        assert_eq!(points[1].window, WindowMode::Fixed(2));
        assert_eq!(points[1].destination, Destination::Random);
        assert_eq!(points[2].window, WindowMode::default());
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 2.5e-300, -7.0, 0.0, f64::MAX] {
            let s = format_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
            let mantissa = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(mantissa.len(), 17);
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("schema,grid,dim,"));
        let mut buf = Vec::new();
        write_json(&[], &mut buf).unwrap();
        assert_eq!(buf, b"[]\n");
    }

    #[test]
    fn default_output_path_uses_format_extension() {
        let c = RunConfig {
            output: None,
            format: OutputFormat::Json,
            ..RunConfig::default()
        };
        assert!(c
            .output_path()
            .to_string_lossy()
            .ends_with("tokmerge_results.json"));
    }
}
