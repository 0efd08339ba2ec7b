//! Device tables supplied from outside: raw units, mixed feature types, no
//! labels or checksums.

use std::fs;
use std::path::Path;

use orsa_core::ensemble::predict_ensemble;
use orsa_harness::config::TrainConfig;
use orsa_harness::dataset::Dataset;
use orsa_harness::{report, run, Error};

const MANIFEST: &str = r#"{
  "format_version": 1,
  "features": [
    {"name": "temp", "kind": "real", "x_min": 20.0, "x_max": 80.0},
    {"name": "corner", "kind": "categorical", "categories": ["ss", "tt", "ff"]},
    {"name": "lot", "kind": "categorical", "categories": ["any"], "role": "metadata"}
  ],
  "devices": [
    {"device_id": "chip_a", "file": "a.csv"},
    {"device_id": "chip_b", "file": "b.csv"},
    {"device_id": "chip_c", "file": "c.csv"}
  ]
}"#;

fn write_dataset(dir: &Path, offset_c: f64) {
    fs::write(dir.join("manifest.json"), MANIFEST).unwrap();
    for (file, offset) in [("a.csv", 0.0), ("b.csv", 0.01), ("c.csv", offset_c)] {
        let mut text = String::from("temp,corner,lot,y_out\n");
        for t in [20.0, 35.0, 50.0, 65.0, 80.0] {
            for (ci, c) in ["ss", "tt", "ff"].iter().enumerate() {
                let y = t / 100.0 + ci as f64 * 0.1 + offset;
                text.push_str(&format!("{t},{c},L{ci},{y}\n"));
            }
        }
        fs::write(dir.join(file), text).unwrap();
    }
}

#[test]
fn loads_and_normalizes_mixed_features() {
    let tmp = tempfile::tempdir().unwrap();
    write_dataset(tmp.path(), -0.5);
    let ds = Dataset::load(tmp.path()).unwrap();
    assert_eq!(ds.n_devices(), 3);
    assert_eq!(ds.input_dim(), 2);
    assert_eq!(ds.clamped, 0);
    let t = &ds.tables[0];
    assert_eq!(t.samples[0].values(), &[-1.0, -1.0]);
    assert_eq!(t.samples[14].values(), &[1.0, 1.0]);
    assert_eq!(t.samples[4].values(), &[-0.5, 0.0]);

    // Nearest-neighbour members reproduce their table rows.
    let members = ds.members().unwrap();
    let y = predict_ensemble(&members, &t.samples[4]).unwrap();
    assert_eq!(y, vec![ds.tables[0].outputs[4], ds.tables[1].outputs[4], ds.tables[2].outputs[4]]);
}

#[test]
fn trains_on_external_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    fs::create_dir(&data).unwrap();
    write_dataset(&data, -0.5);
    let cfg: TrainConfig = toml::from_str("[orsa]\nk_s = 2\nk_lof = 2\nsteps = 200\nbatch_size = 8\n").unwrap();
    let out = tmp.path().join("run");
    let manifest = run::train(&data, &cfg, None, &out).unwrap();
    assert_eq!(manifest.dataset.device_ids, ["chip_a", "chip_b", "chip_c"]);
    let (rep, _) = report::report(&out, None).unwrap();
    assert!(rep.devices.iter().all(|d| d.label.is_empty()));
    // chip_c sits 0.5 below the others: always among the two lowest.
    assert_eq!(rep.devices[2].selection_frequency, 1.0);
}

#[test]
fn out_of_range_values_are_clamped_and_counted() {
    let tmp = tempfile::tempdir().unwrap();
    write_dataset(tmp.path(), 0.02);
    let mut text = fs::read_to_string(tmp.path().join("b.csv")).unwrap();
    text.push_str("95,tt,L1,0.9\n");
    fs::write(tmp.path().join("b.csv"), text).unwrap();
    let ds = Dataset::load(tmp.path()).unwrap();
    assert_eq!(ds.clamped, 1);
    assert_eq!(ds.tables[1].samples.last().unwrap().values(), &[1.0, 0.0]);
}

#[test]
fn bad_records_report_file_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    write_dataset(tmp.path(), 0.02);
    let path = tmp.path().join("c.csv");
    let good = fs::read_to_string(&path).unwrap();

    fs::write(&path, good.replacen("50,tt", "5O,tt", 1)).unwrap();
    let err = Dataset::load(tmp.path()).unwrap_err();
    assert!(matches!(err, Error::Record { line: 9, .. }), "{err}");

    fs::write(&path, good.replacen("65,ff", "65,xx", 1)).unwrap();
    let err = Dataset::load(tmp.path()).unwrap_err();
    assert!(matches!(err, Error::Record { line: 13, .. }), "{err}");
    assert!(err.to_string().contains("\"xx\""), "{err}");

    fs::write(&path, good.replacen("temp,corner", "temperature,corner", 1)).unwrap();
    let err = Dataset::load(tmp.path()).unwrap_err();
    assert!(matches!(err, Error::Record { line: 1, .. }), "{err}");
}
