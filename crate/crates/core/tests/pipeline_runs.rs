use tokmerge::merger::MergeConfig;
use tokmerge::pipeline::{
    run, similarity_drift_report, MergeSettings, RunMode, TimingConfig, ToyPipeline,
    ToyPipelineSpec,
};
use tokmerge::selector::Destination;
use tokmerge::window::{parse_roles, GridSpec, LayerRole, WindowMode};

fn spec(dim: usize, mode: WindowMode, timesteps: usize, drift: f64) -> ToyPipelineSpec {
    ToyPipelineSpec {
        grid: GridSpec::new(16, 16).unwrap(),
        dim,
        layers: mode
            .layer_specs(&parse_roles("down,bottleneck,up").unwrap())
            .unwrap(),
        timesteps,
        drift_scale: drift,
        seed: 21,
        clusters: 6,
        cluster_noise: 0.5,
    }
}

fn settings(destination: Destination, ratio: f64) -> MergeSettings {
    MergeSettings {
        config: MergeConfig::new(ratio, 0.5, 3).unwrap(),
        destination,
        caching: true,
    }
}

#[test]
fn records_reproduce_without_timing() {
    let s = spec(8, WindowMode::default(), 5, 0.01);
    for d in [
        Destination::Representative,
        Destination::Least,
        Destination::Random,
    ] {
        let a = run(
            &s,
            settings(d, 0.5),
            TimingConfig {
                warmup: 0,
                repetitions: 1,
            },
        )
        .unwrap();
        let b = run(
            &s,
            settings(d, 0.5),
            TimingConfig {
                warmup: 0,
                repetitions: 1,
            },
        )
        .unwrap();
        assert_eq!(a.without_timing(), b.without_timing());
        assert!(a.wall_time_baseline_ns > 0);
    }
}

#[test]
fn random_destination_depends_on_seed() {
    let mut s = spec(8, WindowMode::Fixed(4), 2, 0.01);
    let a = run(
        &s,
        settings(Destination::Random, 0.5),
        TimingConfig::disabled(),
    )
    .unwrap();
    s.seed += 1;
    let b = run(
        &s,
        settings(Destination::Random, 0.5),
        TimingConfig::disabled(),
    )
    .unwrap();
    assert_ne!(a.output_mse_vs_baseline, b.output_mse_vs_baseline);
}

#[test]
fn full_grid_halves_tokens_per_layer() {
    let s = ToyPipelineSpec {
        grid: GridSpec::new(64, 64).unwrap(),
        dim: 8,
        layers: WindowMode::Fixed(2)
            .layer_specs(&[LayerRole::Down, LayerRole::Up])
            .unwrap(),
        timesteps: 1,
        drift_scale: 0.0,
        seed: 0,
        clusters: 8,
        cluster_noise: 0.5,
    };
    let m = run(
        &s,
        settings(Destination::Representative, 0.5),
        TimingConfig::disabled(),
    )
    .unwrap();
    assert_eq!(m.tokens_after_per_layer, [2048, 2048]);
    assert_eq!(m.tokens_before, 2 * 4096);
}

#[test]
fn merged_output_error_grows_with_ratio() {
    let s = spec(16, WindowMode::Fixed(4), 3, 0.01);
    let mse: Vec<f64> = [0.0, 0.25, 0.5, 0.75]
        .iter()
        .map(|&r| {
            run(
                &s,
                settings(Destination::Representative, r),
                TimingConfig::disabled(),
            )
            .unwrap()
            .output_mse_vs_baseline
        })
        .collect();
    assert_eq!(mse[0], 0.0);
    assert!(mse.windows(2).all(|w| w[0] < w[1]), "{mse:?}");
}

#[test]
fn cache_counts_follow_period() {
    let s = spec(8, WindowMode::Fixed(4), 7, 0.01);
    let p = ToyPipeline::new(s).unwrap();
    let sim = p
        .simulate(RunMode::Merged(settings(Destination::Representative, 0.5)))
        .unwrap();
    // 16 windows per layer, 3 layers, recomputed at t = 0, 3, 6
    assert_eq!(sim.cache_stats.recomputes, 16 * 3 * 3);
    assert_eq!(sim.cache_stats.hits, 16 * 3 * 4);
}

#[test]
fn large_drift_decorrelates() {
    let s = spec(8, WindowMode::Fixed(8), 41, 10.0);
    let window: Vec<usize> = ToyPipeline::new(s.clone()).unwrap().partition(0).windows()[0].clone();
    let r = similarity_drift_report(&s, &window, &[0, 10, 20, 40]).unwrap();
    assert!(
        r.correlation(0, 40).unwrap().abs() < 0.2,
        "{:?}",
        r.pairwise
    );
    let calm = similarity_drift_report(&spec(8, WindowMode::Fixed(8), 41, 0.01), &window, &[0, 40])
        .unwrap();
    assert!(calm.correlation(0, 40).unwrap() > 0.9);
}

#[test]
fn invalid_specs_are_rejected() {
    let mut s = spec(8, WindowMode::Fixed(2), 0, 0.01);
    assert!(ToyPipeline::new(s.clone()).is_err());
    s.timesteps = 1;
    s.drift_scale = -0.5;
    assert!(ToyPipeline::new(s).is_err());
    assert!(MergeConfig::new(0.5, 1.5, 1).is_err());
    assert!(MergeConfig::new(0.5, 0.5, 0).is_err());
}
