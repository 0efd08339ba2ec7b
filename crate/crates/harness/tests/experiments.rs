//! Full-size runs through the library commands: 30 devices x 10k samples,
//! 25k training steps each.

use std::path::Path;

use orsa_harness::config::{GenerateConfig, Outliers, Overrides, SweepConfig, TrainConfig};
use orsa_harness::{report, run, sweep};

fn generate(dir: &Path, outliers: &str) {
    let mut cfg = GenerateConfig::reference(7);
    cfg.outliers = Outliers::Preset(outliers.into());
    orsa_harness::generate(&cfg, dir).unwrap();
}

fn sweep_grid(data: &Path, out: &Path, grid: &[(usize, usize)]) -> Vec<sweep::SweepRow> {
    let cfg = SweepConfig {
        grid: grid.to_vec(),
        ..SweepConfig::default()
    };
    let overrides = Overrides {
        seed: Some(7),
        ..Overrides::default()
    };
    sweep::sweep(data, &cfg, &overrides, out).unwrap().rows
}

#[test]
fn sweep_reaches_both_limits() {
    let tmp = tempfile::tempdir().unwrap();
    let (outliers, clean) = (tmp.path().join("ref"), tmp.path().join("clean"));
    generate(&outliers, "one_per_type");
    generate(&clean, "none");

    let rows = sweep_grid(&outliers, &tmp.path().join("a"), &[(1, 1)]);
    assert!(rows[0].rmse_min <= 0.05, "{:?}", rows[0]);

    let rows = sweep_grid(&clean, &tmp.path().join("b"), &[(30, 29), (12, 12)]);
    assert!(rows[0].rmse_mean <= 0.05, "{:?}", rows[0]);
    // Intermediate k trades the minimum off against the mean.
    assert!(rows[1].between_fraction >= 0.9, "{:?}", rows[1]);
    assert!(rows[1].rmse_min > rows[0].rmse_mean.min(0.01), "{:?}", rows[1]);
}

#[test]
fn reference_run_down_weights_the_constant_offset() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("ref");
    generate(&data, "one_per_type");
    let mut cfg = TrainConfig::default();
    cfg.orsa.seed = Some(7);
    let out = tmp.path().join("run");
    run::train(&data, &cfg, None, &out).unwrap();
    let (rep, _) = report::report(&out, None).unwrap();

    let most = rep
        .devices
        .iter()
        .max_by(|a, b| a.equal_over_weighted.partial_cmp(&b.equal_over_weighted).unwrap())
        .filter(|d| d.equal_over_weighted.is_some())
        .unwrap();
    assert_eq!(most.label, "type1");

    // Smoothed loss falls overall, with at most 5% excursions between
    // adjacent 500-step windows.
    let trace = &rep.loss_trace.mean_loss;
    assert_eq!(trace.len(), 50);
    assert!(trace.last().unwrap() < trace.first().unwrap());
    for (i, w) in trace.windows(2).enumerate() {
        assert!(w[1] <= 1.05 * w[0], "window {i}: {} -> {}", w[0], w[1]);
    }
}
