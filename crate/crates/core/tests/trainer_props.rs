use orsa_core::aggnet::{AdamConfig, NetConfig};
use orsa_core::ensemble::{ConstantMember, Member, Mode};
use orsa_core::lof::{self, PointSet};
use orsa_core::preprocess::Sample;
use orsa_core::synthgen::{self, DeviceLabel, SynthConfig};
use orsa_core::trainer::{
    self, loss_contributions, orsa_loss, selection_frequency, OrsaConfig, SampleEvaluator, Trainer,
};
use proptest::prelude::*;

fn config(n: usize, k_s: usize, k_lof: usize, mode: Mode) -> OrsaConfig {
    let mut c = OrsaConfig::new(1 + (k_s - 1) % n, 1 + (k_lof - 1) % (n - 1));
    c.mode = mode;
    c
}

proptest! {
    #[test]
    fn oracle_target_minimizes_the_loss(
        y in prop::collection::vec(-3.0f64..3.0, 2..20),
        k_s in 1usize..20,
        k_lof in 1usize..19,
        max_mode in any::<bool>(),
    ) {
        let mode = if max_mode { Mode::SoftMax } else { Mode::SoftMin };
        let cfg = config(y.len(), k_s, k_lof, mode);
        let t = SampleEvaluator::default().evaluate(&y, &cfg).unwrap();
        let best = orsa_loss(t.target, &t.values, &t.weights).unwrap();
        for step in -50..=50 {
            let v = t.target + f64::from(step) * 0.01;
            prop_assert!(best <= orsa_loss(v, &t.values, &t.weights).unwrap() + 1e-15);
        }
    }

    #[test]
    fn soft_max_of_negated_is_negated_soft_min(
        y in prop::collection::vec(-3.0f64..3.0, 2..20),
        k_s in 1usize..20,
        k_lof in 1usize..19,
    ) {
        let min = config(y.len(), k_s, k_lof, Mode::SoftMin);
        let max = OrsaConfig { mode: Mode::SoftMax, ..min.clone() };
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let a = trainer::oracle_target(&y, &min).unwrap();
        let b = trainer::oracle_target(&neg, &max).unwrap();
        prop_assert!((a + b).abs() <= 1e-12, "{a} vs {b}");
    }

    #[test]
    fn target_lies_within_selected_values(
        y in prop::collection::vec(-3.0f64..3.0, 2..20),
        k_s in 1usize..20,
        k_lof in 1usize..19,
    ) {
        let cfg = config(y.len(), k_s, k_lof, Mode::SoftMin);
        let t = SampleEvaluator::default().evaluate(&y, &cfg).unwrap();
        let lo = t.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = t.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(t.target >= lo - 1e-12 && t.target <= hi + 1e-12);
        prop_assert!((t.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weight_shrinks_when_score_above_selection_mean(
        y in prop::collection::vec(-1.0f64..1.0, 3..20),
        k_s in 1usize..20,
        k_lof in 1usize..19,
    ) {
        let cfg = config(y.len(), k_s, k_lof, Mode::SoftMin);
        let t = SampleEvaluator::default().evaluate(&y, &cfg).unwrap();
        let scores = lof::lof_scores(&PointSet::new(&y).unwrap(), cfg.k_lof).unwrap();
        let sel: Vec<f64> = t.indices.iter().map(|&i| scores[i]).collect();
        let mean = sel.iter().sum::<f64>() / sel.len() as f64;
        let k = sel.len() as f64;
        for (s, w) in sel.iter().zip(&t.weights) {
            if *s > mean {
                prop_assert!(*w <= 1.0 / k + 1e-12);
            }
        }
    }

    #[test]
    fn unit_scores_give_equal_weights(values in prop::collection::vec(-2.0f64..2.0, 1..10), y_pred in -2.0f64..2.0) {
        let scores = lof::LofScores::new(vec![1.0; values.len()]).unwrap();
        let all: Vec<usize> = (0..values.len()).collect();
        let w = lof::lof_weights(&scores, &all).unwrap();
        let mse = values.iter().map(|v| (v - y_pred) * (v - y_pred)).sum::<f64>() / values.len() as f64;
        prop_assert!((orsa_loss(y_pred, &values, &w).unwrap() - mse).abs() < 1e-12);
    }
}

#[test]
fn identical_members_weigh_equally() {
    let members: Vec<ConstantMember> = (0..5)
        .map(|i| ConstantMember {
            id: format!("d{i}"),
            value: 0.4,
        })
        .collect();
    let samples: Vec<Sample> = (0..50).map(|i| Sample::new(vec![f64::from(i) / 50.0]).unwrap()).collect();
    let mut cfg = OrsaConfig::new(3, 2);
    cfg.steps = 20;
    cfg.batch_size = 8;
    cfg.metric_window = 20;
    let out = trainer::train(&members, &samples, &cfg, &NetConfig::new(1, 1)).unwrap();
    let w = out.metrics.last(20).unwrap();
    for c in loss_contributions(&out.metrics, w.clone()).unwrap() {
        assert!((c.weighted - c.equal).abs() < 1e-12);
    }
    let counts = selection_frequency(&out.metrics, w).unwrap();
    assert_eq!(counts.iter().sum::<u64>(), 20 * 8 * 3);
}

#[test]
fn full_selection_counts_every_device() {
    let members: Vec<ConstantMember> = [0.1, 0.3, -0.2, 0.0]
        .iter()
        .enumerate()
        .map(|(i, &value)| ConstantMember { id: format!("d{i}"), value })
        .collect();
    let samples: Vec<Sample> = (0..10).map(|i| Sample::new(vec![f64::from(i) / 10.0]).unwrap()).collect();
    let mut cfg = OrsaConfig::new(4, 3);
    cfg.steps = 7;
    cfg.batch_size = 5;
    let out = trainer::train(&members, &samples, &cfg, &NetConfig::new(1, 0)).unwrap();
    let counts = selection_frequency(&out.metrics, 0..7).unwrap();
    assert_eq!(counts, vec![35; 4]);
    let total: f64 = loss_contributions(&out.metrics, 0..7).unwrap().iter().map(|c| c.weighted).sum();
    let trace: f64 = out.metrics.loss_trace.iter().sum();
    assert!((total - trace).abs() < 1e-10);
}

#[test]
fn same_seed_same_run() {
    let cfg = SynthConfig::one_outlier_per_type(6, 200, 2, 4).unwrap();
    let ds = synthgen::generate_dataset(&cfg).unwrap();
    let mut oc = OrsaConfig::new(2, 2);
    oc.steps = 50;
    oc.seed = 9;
    let net = NetConfig::new(2, 3);
    let a = trainer::train(&ds.members(), &ds.pooled_samples(), &oc, &net).unwrap();
    let b = trainer::train(&ds.members(), &ds.pooled_samples(), &oc, &net).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.params, b.params);
    oc.steps = 0;
    assert!(trainer::train(&ds.members(), &ds.pooled_samples(), &oc, &net).is_err());
}

#[test]
fn toy_constant_offset_is_down_weighted() {
    let mut cfg = SynthConfig::regular(5, 400, 1, 21);
    cfg.assignment[2] = DeviceLabel::Type1;
    let ds = synthgen::generate_dataset(&cfg).unwrap();
    let members = ds.members();
    let samples = ds.pooled_samples();
    let mut oc = OrsaConfig::new(3, 3);
    oc.steps = 300;
    oc.seed = 2;
    let out = trainer::train(&members, &samples, &oc, &NetConfig::new(1, 8)).unwrap();
    let c = loss_contributions(&out.metrics, 0..300).unwrap();
    assert!(c[2].equal > c[2].weighted, "{:?}", c[2]);
    assert_eq!(members[2].device_id(), "device_002");
}

#[test]
fn trainer_step_rejects_empty_batch() {
    let members = [ConstantMember { id: "a".into(), value: 0.0 }, ConstantMember { id: "b".into(), value: 1.0 }];
    let mut t = Trainer::new(&NetConfig::new(1, 0), AdamConfig::default()).unwrap();
    assert!(trainer::train_step(&mut t, &members, &[], &OrsaConfig::new(1, 1)).is_err());
}
