use num_complex::Complex64;
use rand::Rng;

use super::*;
use crate::bitstream::BitMode;
use crate::channel::{generate_dataset, ArrayGeometry, CMatrix, DatasetConfig, SplitKind};
use crate::models::{MagnitudeArch, MagnitudeConfig, MagnitudeNet, PhaseVariant, PlaneSet};
use crate::nn::Tensor;
use crate::rng::KeyedRng;
use crate::train::{train, TrainConfig};

fn random_tensor(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = KeyedRng::new(seed).stream();
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
}

fn random_cmatrices(n: usize, seed: u64) -> Vec<CMatrix> {
    let mut rng = KeyedRng::new(seed).stream();
    (0..n)
        .map(|_| {
            CMatrix::from_fn(2, 4, |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            })
        })
        .collect()
}

#[test]
fn nmse_identities() {
    let h = random_tensor(20, 8, 1);
    assert_eq!(nmse(&h, &h).unwrap().db(), NMSE_FLOOR_DB);
    let zero = h.map(|_| 0.0);
    assert!(nmse(&h, &zero).unwrap().db().abs() < 1e-9);
    let twice = h.map(|v| 2.0 * v);
    assert!(nmse(&h, &twice).unwrap().db().abs() < 1e-9);
}

#[test]
fn nmse_is_scale_invariant() {
    let h = random_tensor(30, 8, 2);
    let g = random_tensor(30, 8, 3);
    let base = nmse(&h, &g).unwrap().linear;
    for c in [0.1, 10.0, -3.0] {
        let v = nmse(&h.map(|x| c * x), &g.map(|x| c * x)).unwrap().linear;
        assert!((v - base).abs() <= 1e-9 * base);
    }
}

#[test]
fn nmse_matches_scalar_loop() {
    let h = random_tensor(17, 5, 4);
    let g = random_tensor(17, 5, 5);
    let mut acc = 0.0;
    for r in 0..17 {
        let (mut num, mut den) = (0.0, 0.0);
        for c in 0..5 {
            let a = h.data()[r * 5 + c];
            let b = g.data()[r * 5 + c];
            num += (a - b) * (a - b);
            den += a * a;
        }
        acc += num / den;
    }
    let oracle = 10.0 * (acc / 17.0).log10();
    assert!((nmse(&h, &g).unwrap().db() - oracle).abs() < 1e-12);
}

#[test]
fn zero_norm_samples_are_excluded() {
    let mut h = random_tensor(4, 3, 6);
    h.data_mut()[3..6].fill(0.0);
    let n = nmse(&h, &h.map(|_| 0.0)).unwrap();
    assert_eq!((n.samples, n.excluded), (3, 1));
    assert!(n.db().abs() < 1e-12);
}

#[test]
fn nmse_rejects_shape_mismatch() {
    assert!(nmse(&random_tensor(2, 3, 1), &random_tensor(3, 2, 1)).is_err());
    assert!(nmse_complex(&random_cmatrices(2, 1), &random_cmatrices(3, 1)).is_err());
}

#[test]
fn complex_nmse_identities() {
    let h = random_cmatrices(10, 7);
    assert_eq!(nmse_complex(&h, &h).unwrap().db(), NMSE_FLOOR_DB);
    let zero: Vec<CMatrix> = h.iter().map(|m| m.map(|_| Complex64::new(0.0, 0.0))).collect();
    assert!(nmse_complex(&h, &zero).unwrap().db().abs() < 1e-9);
    let g = random_cmatrices(10, 8);
    let base = nmse_complex(&h, &g).unwrap().linear;
    for c in [0.1, 10.0] {
        let hs: Vec<CMatrix> = h.iter().map(|m| m.map(|z| z * c)).collect();
        let gs: Vec<CMatrix> = g.iter().map(|m| m.map(|z| z * c)).collect();
        assert!((nmse_complex(&hs, &gs).unwrap().linear - base).abs() <= 1e-9 * base);
    }
}

#[test]
fn phase_nmse_perfect_and_masked() {
    let phase = random_tensor(6, 4, 9).map(|v| v * 3.0);
    let mut mag = random_tensor(6, 4, 10).map(f64::abs);
    assert_eq!(phase_nmse(&phase, &phase, &mag).unwrap().db(), NMSE_FLOOR_DB);
    mag.data_mut()[0] = 0.0;
    mag.data_mut()[5] = 0.0;
    let mut wrong = phase.clone();
    wrong.data_mut()[0] += std::f64::consts::PI;
    wrong.data_mut()[5] -= std::f64::consts::PI;
    assert_eq!(phase_nmse(&phase, &wrong, &mag).unwrap().db(), NMSE_FLOOR_DB);
}

#[test]
fn phase_nmse_matches_unnormalized_oracle() {
    let (rows, cols) = (9, 6);
    let phase = random_tensor(rows, cols, 11).map(|v| v * 3.0);
    let est = random_tensor(rows, cols, 12).map(|v| v * 3.0);
    let scale = 37.5;
    let mag = random_tensor(rows, cols, 13).map(f64::abs);
    let h: Vec<CMatrix> = (0..rows)
        .map(|r| {
            CMatrix::from_fn(1, cols, |_, c| {
                Complex64::from_polar(scale * mag.data()[r * cols + c], phase.data()[r * cols + c])
            })
        })
        .collect();
    let mut acc = 0.0;
    for (r, hr) in h.iter().enumerate() {
        let mut num = 0.0;
        for c in 0..cols {
            let d = phase.data()[r * cols + c] - est.data()[r * cols + c];
            num += (d * hr.get(0, c).norm()).powi(2);
        }
        acc += num / hr.frobenius_sq();
    }
    let oracle = 10.0 * (acc / rows as f64).log10();
    assert!((phase_nmse(&phase, &est, &mag).unwrap().db() - oracle).abs() < 1e-9);
}

#[test]
fn report_csv_round_trip() {
    let rows = vec![
        MetricsReport {
            experiment: "x".into(),
            model: "cocsinet".into(),
            bpd: 0.1,
            nmse_db: -7.25,
            phase_nmse_db: None,
            ber: Some(0.01),
            params: 1234,
            seed: 3,
            seconds: 0.0,
        },
        MetricsReport {
            experiment: "x".into(),
            model: "naive".into(),
            bpd: 0.5,
            nmse_db: -2.0,
            phase_nmse_db: Some(-3.5),
            ber: None,
            params: 10,
            seed: 4,
            seconds: 1.5,
        },
    ];
    let mut buf = Vec::new();
    write_reports(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), REPORT_HEADER.join(","));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    std::fs::write(&path, &buf).unwrap();
    assert_eq!(read_reports(&path).unwrap(), rows);
    let means = mean_by_model(&rows);
    assert_eq!(means[0], ("cocsinet".to_string(), -7.25));
}

#[test]
fn empty_report_csv_has_header() {
    let mut buf = Vec::new();
    write_reports(&[], &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().trim(), REPORT_HEADER.join(","));
}

#[test]
fn attention_of_constant_weights_is_flat() {
    let p = AttentionProfile::from_weight(&Tensor::full(&[5, 3], 1.0)).unwrap();
    assert_eq!(p.weights, vec![1.0; 5]);
}

#[test]
fn attention_of_single_row_is_one_hot() {
    let mut w = Tensor::zeros(&[4, 3]);
    w.data_mut()[6..9].copy_from_slice(&[0.5, -2.0, 1.0]);
    let p = AttentionProfile::from_weight(&w).unwrap();
    assert_eq!(p.weights, vec![0.0, 0.0, 1.0, 0.0]);
}

#[test]
fn attention_csv_round_trip_and_distance() {
    let p = AttentionProfile::from_weight(&random_tensor(8, 5, 20)).unwrap();
    assert!(p.weights.iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert_eq!(p.weights.iter().copied().fold(0.0, f64::max), 1.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.csv");
    p.save_csv(&path).unwrap();
    let back = AttentionProfile::read_csv(&path).unwrap();
    assert_eq!(back, p);
    assert_eq!(p.l1_distance(&back).unwrap(), 0.0);
    let q = AttentionProfile { weights: vec![0.0; 8] };
    let expect = p.weights.iter().sum::<f64>() / 8.0;
    assert!((p.l1_distance(&q).unwrap() - expect).abs() < 1e-15);
    assert!(p.l1_distance(&AttentionProfile { weights: vec![0.0; 3] }).is_err());
}

#[test]
fn attention_reads_the_encoder_first_layer() {
    let net = MagnitudeNet::build(mag_cfg(MagnitudeArch::CoCsiNet, 8), 3).unwrap();
    let a = weight_attention(&net.encoders[0], &net.params).unwrap();
    assert_eq!(a.len(), 8);
    let b = weight_attention(&net.encoders[1], &net.params).unwrap();
    assert!(a.l1_distance(&b).unwrap() > 0.0);
}

#[test]
fn bpd_budget_rounds_down() {
    assert_eq!(bits_for_bpd(0.1, 32, BitMode::Binarize).unwrap(), 3);
    assert_eq!(bits_for_bpd(0.5, 32, BitMode::quantize(4).unwrap()).unwrap(), 16);
    assert_eq!(bits_for_bpd(0.3, 128, BitMode::Binarize).unwrap(), 38);
    assert_eq!(bits_for_bpd(0.3, 128, BitMode::quantize(4).unwrap()).unwrap(), 36);
    assert!(bits_for_bpd(0.01, 32, BitMode::Binarize).is_err());
    assert!(bits_for_bpd(-1.0, 32, BitMode::Binarize).is_err());
}

#[test]
fn suite_names_round_trip() {
    for s in Suite::ALL {
        assert_eq!(s.name().parse::<Suite>().unwrap(), s);
    }
    assert!("nope".parse::<Suite>().is_err());
}

fn toy_config() -> DatasetConfig {
    DatasetConfig {
        geometry: ArrayGeometry::new(8, 1),
        n_groups: 143,
        seed: 5,
        ..DatasetConfig::default()
    }
}

fn toy_splits() -> (PlaneSet, PlaneSet, PlaneSet) {
    let ds = generate_dataset(&toy_config()).unwrap();
    (
        PlaneSet::from_dataset(&ds, SplitKind::Train),
        PlaneSet::from_dataset(&ds, SplitKind::Val),
        PlaneSet::from_dataset(&ds, SplitKind::Test),
    )
}

fn mag_cfg(arch: MagnitudeArch, bits: usize) -> MagnitudeConfig {
    MagnitudeConfig {
        n_rx: 1,
        n_tx: 8,
        users: 2,
        feedback_bits: bits,
        bit_mode: BitMode::Binarize,
        arch,
        lstm_refine: false,
        tied: false,
    }
}

fn quick_train(epochs: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 25,
        lr: 3e-3,
        epochs,
        seed: 2,
        deterministic: true,
        ..TrainConfig::default()
    }
}

fn trained_net() -> (MagnitudeNet, PlaneSet) {
    let (tr, va, te) = toy_splits();
    let mut net = MagnitudeNet::build(mag_cfg(MagnitudeArch::CoCsiNet, 4), 1).unwrap();
    train(&mut net, &tr, &va, &quick_train(20)).unwrap();
    (net, te)
}

#[test]
fn ber_sweep_shape_and_zero_rate() {
    let (net, te) = trained_net();
    let clean = evaluate_magnitude(&net, &te, None).unwrap();
    let pts = ber_sweep(&net, &te, &[0.0, 0.001, 0.1], 10, 4).unwrap();
    assert_eq!(pts.len(), 3);
    assert_eq!(pts[0].nmse, clean);
    assert_eq!(pts[1].seeds, 10);
    assert!(pts[2].nmse.linear >= pts[1].nmse.linear);
    assert!(ber_sweep(&net, &te, &[0.1], 0, 4).is_err());
    let again = ber_sweep(&net, &te, &[0.1], 10, 4).unwrap();
    assert_eq!(again[0].nmse, pts[2].nmse);
}

#[test]
fn allocation_rejects_bad_splits() {
    let (tr, va, te) = toy_splits();
    let mut cfg = AllocationConfig {
        magnitude: mag_cfg(MagnitudeArch::Alone, 0),
        phase_variant: PhaseVariant::Mdpf1,
        phase_bit_mode: BitMode::Binarize,
        total_bits: 8,
        splits: Vec::new(),
        train: quick_train(1),
    };
    assert!(allocate_bits(&cfg, &tr, &va, &te).is_err());
    cfg.splits = vec![(4, 3)];
    assert!(allocate_bits(&cfg, &tr, &va, &te).is_err());
}

#[test]
fn allocation_table_and_argmin() {
    let (tr, va, te) = toy_splits();
    let cfg = AllocationConfig {
        magnitude: MagnitudeConfig {
            users: 1,
            ..mag_cfg(MagnitudeArch::Alone, 0)
        },
        phase_variant: PhaseVariant::Mdpf1,
        phase_bit_mode: BitMode::Binarize,
        total_bits: 8,
        splits: vec![(8, 0), (4, 4), (0, 8)],
        train: quick_train(15),
    };
    let t = allocate_bits(&cfg, &tr, &va, &te).unwrap();
    assert_eq!(t.rows.len(), 3);
    let min = t.rows.iter().map(|r| r.nmse.linear).fold(f64::INFINITY, f64::min);
    assert_eq!(t.rows[t.best].nmse.linear, min);
    // Zero phase bits leaves the full phase error in place.
    assert!(t.rows[0].nmse.linear > min);
    let dir = tempfile::tempdir().unwrap();
    t.save_csv(dir.path().join("alloc.csv")).unwrap();
}

fn tiny_comparison() -> ComparisonConfig {
    ComparisonConfig {
        dataset: toy_config(),
        train: quick_train(3),
        bpd_list: vec![0.5],
        seeds: vec![1, 2],
        bit_mode: BitMode::Binarize,
    }
}

#[test]
fn comparison_rows_and_files() {
    let c = run_comparison(Suite::CoopVsAlone, &tiny_comparison()).unwrap();
    assert_eq!(c.arms.len(), 8);
    assert_eq!(c.reports().len(), 16);
    let tags: Vec<&str> = c.arms[..4].iter().map(|a| a.arm.as_str()).collect();
    assert_eq!(tags, ["cocsinet", "benchmark1", "benchmark2", "benchmark3"]);
    assert!(c.arms.iter().all(|a| a.best.seconds == 0.0));
    let dir = tempfile::tempdir().unwrap();
    let paths = c.save(dir.path()).unwrap();
    assert_eq!(paths.len(), 5);
    assert_eq!(read_reports(&paths[0]).unwrap().len(), 16);
    assert_eq!(read_reports(&paths[1]).unwrap().len(), 4);
    let script = gnuplot_script(&paths[..1], "out.png").unwrap();
    assert!(script.contains("'benchmark3'"));
}

#[test]
fn comparison_is_deterministic() {
    let cfg = ComparisonConfig {
        seeds: vec![1],
        ..tiny_comparison()
    };
    let a = run_comparison(Suite::Mdpf, &cfg).unwrap();
    let b = run_comparison(Suite::Mdpf, &cfg).unwrap();
    assert_eq!(a.reports(), b.reports());
    assert!(a.arms.iter().all(|r| r.best.phase_nmse_db.is_some()));
}

#[test]
fn solo_suites_use_one_user() {
    let cfg = ComparisonConfig {
        seeds: vec![1],
        ..tiny_comparison()
    };
    let c = run_comparison(Suite::QuantVsBinary, &cfg).unwrap();
    let tags: Vec<&str> = c.arms.iter().map(|a| a.arm.as_str()).collect();
    assert_eq!(tags, ["binarize", "quantize1", "quantize4"]);
    match &c.arms[0].model {
        crate::models::AnyModel::Magnitude(m) => assert_eq!(m.cfg.users, 1),
        _ => panic!("expected a magnitude model"),
    }
}

#[test]
fn fine_tune_rows() {
    let (net, te) = trained_net();
    let shifted = generate_dataset(&DatasetConfig {
        n_paths: 6,
        seed: 77,
        ..toy_config()
    })
    .unwrap();
    let rows = fine_tune_mismatch(&net, &te, &shifted, &[0, 50], &quick_train(2)).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0].model, online_tag(0));
    assert_eq!(rows[2].experiment, "finetune_original");
    let untouched = evaluate_magnitude(&net, &te, None).unwrap();
    assert_eq!(rows[2].nmse_db, untouched.db());
}

#[test]
fn bpd_sweep_of_one_template() {
    let cfg = ComparisonConfig {
        seeds: vec![1],
        bpd_list: vec![0.25, 0.5],
        ..tiny_comparison()
    };
    let template = ModelTemplate::Phase(crate::models::PhaseConfig {
        n_rx: 1,
        n_tx: 8,
        feedback_bits: 0,
        bit_mode: BitMode::Binarize,
        variant: PhaseVariant::Mdpf2,
        user: 1,
    });
    let c = sweep_bpd(template, &cfg).unwrap();
    assert_eq!(c.experiment, "sweep_bpd");
    let bpds: Vec<f64> = c.arms.iter().map(|a| a.best.bpd).collect();
    assert_eq!(bpds, [0.25, 0.5]);
    let wrong_users = ModelTemplate::Magnitude(MagnitudeConfig {
        users: 3,
        ..mag_cfg(MagnitudeArch::Alone, 0)
    });
    assert!(sweep_bpd(wrong_users, &cfg).is_err());
}
