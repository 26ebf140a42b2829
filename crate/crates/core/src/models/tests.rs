use std::cell::RefCell;
use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use rand::Rng;

use super::*;
use crate::bitstream::QuantizerSpec;
use crate::channel::{generate_dataset, ArrayGeometry, DatasetConfig, SplitKind};
use crate::nn::{grad_check, LayerKind, Mode, Tape, Tensor};
use crate::rng::KeyedRng;

fn rng(seed: u64) -> StreamRng {
    KeyedRng::new(seed).stream()
}

fn random_planes(users: usize, n_rx: usize, n_tx: usize, samples: usize, seed: u64) -> PlaneSet {
    let mut r = rng(seed);
    let d = n_rx * n_tx;
    let mag = (0..users)
        .map(|_| (0..samples * d).map(|_| r.random_range(0.0..1.0)).collect())
        .collect();
    let phase = (0..users)
        .map(|_| (0..samples * d).map(|_| r.random_range(-PI..PI)).collect())
        .collect();
    PlaneSet::from_planes(n_rx, n_tx, 2.0, mag, phase).unwrap()
}

fn mag_cfg(arch: MagnitudeArch, n_rx: usize, n_tx: usize, bits: usize) -> MagnitudeConfig {
    MagnitudeConfig {
        n_rx,
        n_tx,
        users: 2,
        feedback_bits: bits,
        bit_mode: BitMode::Binarize,
        arch,
        lstm_refine: false,
        tied: false,
    }
}

fn widths(specs: &[crate::nn::LayerSpec]) -> Vec<usize> {
    let fcs: Vec<_> = specs.iter().filter(|s| s.kind == LayerKind::Fc).collect();
    std::iter::once(fcs[0].fan_in)
        .chain(fcs.iter().map(|s| s.fan_out))
        .collect()
}

#[test]
fn encoder_widths_follow_the_layer_table() {
    let cfg = EncoderConfig {
        n_rx: 1,
        n_tx: 32,
        in_planes: 1,
        feedback_bits: 64,
        bit_mode: BitMode::Binarize,
    };
    assert_eq!(widths(&cfg.specs().unwrap()), vec![32, 64, 64, 64]);
    let q = EncoderConfig {
        bit_mode: BitMode::Quantize(QuantizerSpec::new(4).unwrap()),
        ..cfg
    };
    assert_eq!(q.code_width().unwrap(), 16);
    let ragged = EncoderConfig { feedback_bits: 62, ..q };
    assert!(matches!(ragged.validate(), Err(Error::Config(_))));
}

#[test]
fn decoder_widths_follow_the_layer_table() {
    let cfg = DecoderConfig {
        n_rx: 4,
        n_tx: 64,
        input_width: 77,
        width_factor: 1,
        output: OutputKind::Magnitude,
        lstm_refine: false,
    };
    assert_eq!(widths(&cfg.specs().unwrap()), vec![77, 1024, 1024, 256]);
    let wide = DecoderConfig { width_factor: 2, ..cfg };
    assert_eq!(widths(&wide.specs().unwrap()), vec![77, 2048, 2048, 256]);
}

#[test]
fn lstm_refinement_needs_several_receive_antennas() {
    let cfg = DecoderConfig {
        n_rx: 1,
        n_tx: 8,
        input_width: 4,
        width_factor: 1,
        output: OutputKind::Magnitude,
        lstm_refine: true,
    };
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    assert!(DecoderConfig { n_rx: 2, ..cfg }.validate().is_ok());
}

#[test]
fn encoder_zero_input_is_bounded() {
    let cfg = EncoderConfig {
        n_rx: 1,
        n_tx: 8,
        in_planes: 1,
        feedback_bits: 6,
        bit_mode: BitMode::Binarize,
    };
    let mut p = ParamSet::new();
    let enc = Encoder::build(&mut p, "enc", cfg, &mut rng(1)).unwrap();
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::zeros(&[3, 8]));
    let s = enc.soft(&mut tape, &p, x, Mode::Infer).unwrap();
    assert!(tape.value(s).data().iter().all(|v| v.is_finite() && v.abs() <= 1.0));
}

#[test]
fn decoder_output_ranges() {
    let mut p = ParamSet::new();
    for (output, lo, hi) in [(OutputKind::Magnitude, 0.0, 1.0), (OutputKind::Phase, -PI, PI)] {
        for lstm in [false, true] {
            let cfg = DecoderConfig {
                n_rx: 2,
                n_tx: 4,
                input_width: 5,
                width_factor: 1,
                output,
                lstm_refine: lstm,
            };
            let name = format!("{output:?}{lstm}");
            let dec = Decoder::build(&mut p, &name, cfg, &mut rng(2)).unwrap();
            let mut tape = Tape::new();
            let x = tape.leaf(Tensor::matrix(4, 5, (0..20).map(|i| (i as f64 - 10.0) * 3.0).collect()));
            for mode in [Mode::Train, Mode::Infer] {
                let y = dec.forward(&mut tape, &p, x, mode).unwrap();
                assert_eq!(tape.value(y).shape(), &[4, 8]);
                assert!(tape.value(y).data().iter().all(|&v| v >= lo && v <= hi));
            }
        }
    }
}

#[test]
fn cocsinet_shapes_and_bit_accounting() {
    let cfg = mag_cfg(MagnitudeArch::CoCsiNet, 1, 8, 6);
    let net = MagnitudeNet::build(cfg, 3).unwrap();
    let data = random_planes(2, 1, 8, 5, 4);
    let rows: Vec<usize> = (0..5).collect();
    let out = net.reconstruct(&data, &rows, None).unwrap();
    assert_eq!(out.len(), 2);
    assert!(out.iter().all(|t| t.shape() == [5, 8]));
    assert!(out.iter().flat_map(|t| t.data()).all(|&v| (0.0..=1.0).contains(&v)));
    let bits = net.emit_bits(&data, &rows).unwrap();
    let total: usize = bits.iter().map(|u| u[0].len()).sum();
    assert_eq!(total, 2 * cfg.feedback_bits);
    assert!(bits.iter().flatten().all(|b| b.len() == cfg.feedback_bits));
}

#[test]
fn quantized_bit_accounting() {
    let cfg = MagnitudeConfig {
        bit_mode: BitMode::quantize(4).unwrap(),
        ..mag_cfg(MagnitudeArch::CoCsiNet, 1, 8, 12)
    };
    let net = MagnitudeNet::build(cfg, 3).unwrap();
    assert_eq!(net.encoders[0].cfg.code_width().unwrap(), 3);
    let data = random_planes(2, 1, 8, 2, 4);
    let bits = net.emit_bits(&data, &[0, 1]).unwrap();
    assert!(bits.iter().flatten().all(|b| b.len() == 12));
}

#[test]
fn user_count_mismatch_is_a_contract_error() {
    let net = MagnitudeNet::build(mag_cfg(MagnitudeArch::CoCsiNet, 1, 8, 6), 3).unwrap();
    let data = random_planes(1, 1, 8, 2, 4);
    assert!(matches!(net.reconstruct(&data, &[0], None), Err(Error::Contract(_))));
    let mut tape = Tape::new();
    let c = tape.leaf(Tensor::zeros(&[1, 6]));
    assert!(matches!(
        net.decode(&mut tape, &[c], Mode::Infer),
        Err(Error::Contract(_))
    ));
}

#[test]
fn tied_model_is_symmetric_under_user_swap() {
    let cfg = MagnitudeConfig {
        tied: true,
        ..mag_cfg(MagnitudeArch::CoCsiNet, 1, 8, 6)
    };
    let net = MagnitudeNet::build(cfg, 5).unwrap();
    let data = random_planes(2, 1, 8, 4, 6);
    let rows = [0, 1, 2, 3];
    let swapped = PlaneSet::from_planes(
        1,
        8,
        data.mag_scale,
        vec![
            data.gather_magnitude(1, &rows).into_data(),
            data.gather_magnitude(0, &rows).into_data(),
        ],
        vec![
            data.gather_phase(1, &rows).into_data(),
            data.gather_phase(0, &rows).into_data(),
        ],
    )
    .unwrap();
    let a = net.reconstruct(&data, &rows, None).unwrap();
    let b = net.reconstruct(&swapped, &rows, None).unwrap();
    for (x, y) in a[0].data().iter().zip(b[1].data()) {
        assert_abs_diff_eq!(*x, *y, epsilon = 1e-12);
    }
    for (x, y) in a[1].data().iter().zip(b[0].data()) {
        assert_abs_diff_eq!(*x, *y, epsilon = 1e-12);
    }
}

fn sq_oracle(pred: &[f64], target: &[f64], weight: Option<&[f64]>, batch: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..pred.len() {
        let w = weight.map_or(1.0, |w| w[i]);
        s += (w * (pred[i] - target[i])).powi(2);
    }
    s / batch as f64
}

#[test]
fn mse_loss_identities_and_oracle() {
    let h = Tensor::matrix(3, 4, (0..12).map(|i| (i as f64 * 0.37).sin()).collect());
    let mut tape = Tape::new();
    let same = tape.leaf(h.clone());
    let l = loss_mse(&mut tape, same, &h).unwrap();
    assert_eq!(tape.value(l).data()[0], 0.0);
    let zero = tape.leaf(Tensor::zeros(&[3, 4]));
    let l = loss_mse(&mut tape, zero, &h).unwrap();
    assert_abs_diff_eq!(tape.value(l).data()[0], h.norm_sq() / 3.0, epsilon = 1e-12);
    let p = Tensor::matrix(3, 4, (0..12).map(|i| (i as f64 * 0.91).cos()).collect());
    let pv = tape.leaf(p.clone());
    let l = loss_mse(&mut tape, pv, &h).unwrap();
    assert_abs_diff_eq!(
        tape.value(l).data()[0],
        sq_oracle(p.data(), h.data(), None, 3),
        epsilon = 1e-12
    );
}

#[test]
fn coop_loss_is_sum_of_user_losses() {
    let mut r = rng(8);
    let mut tensor = || Tensor::matrix(2, 5, (0..10).map(|_| r.random_range(-1.0..1.0)).collect());
    let targets: Vec<Tensor> = (0..4).map(|_| tensor()).collect();
    let preds: Vec<Tensor> = (0..4).map(|_| tensor()).collect();
    let mut tape = Tape::new();
    let vars: Vec<Var> = preds.iter().map(|p| tape.leaf(p.clone())).collect();
    let two = loss_coop(&mut tape, &vars[..2], &targets[..2]).unwrap();
    let a = loss_mse(&mut tape, vars[0], &targets[0]).unwrap();
    let b = loss_mse(&mut tape, vars[1], &targets[1]).unwrap();
    assert_eq!(
        tape.value(two).data()[0],
        tape.value(a).data()[0] + tape.value(b).data()[0]
    );
    let four = loss_coop(&mut tape, &vars, &targets).unwrap();
    let oracle: f64 = (0..4)
        .map(|k| sq_oracle(preds[k].data(), targets[k].data(), None, 2))
        .sum();
    assert_abs_diff_eq!(tape.value(four).data()[0], oracle, epsilon = 1e-12);
    let perfect: Vec<Var> = targets.iter().map(|t| tape.leaf(t.clone())).collect();
    let zero = loss_coop(&mut tape, &perfect, &targets).unwrap();
    assert_eq!(tape.value(zero).data()[0], 0.0);
    assert!(loss_coop(&mut tape, &vars[..3], &targets).is_err());
}

#[test]
fn phase_weighted_loss_properties() {
    let mut r = rng(9);
    let phase = Tensor::matrix(2, 6, (0..12).map(|_| r.random_range(-PI..PI)).collect());
    let pred = Tensor::matrix(2, 6, (0..12).map(|_| r.random_range(-PI..PI)).collect());
    let mag = Tensor::matrix(2, 6, (0..12).map(|_| r.random_range(0.0..1.0)).collect());
    let mut tape = Tape::new();
    let pv = tape.leaf(pred.clone());
    let l = loss_phase_weighted(&mut tape, pv, &phase, &Tensor::zeros(&[2, 6])).unwrap();
    assert_eq!(tape.value(l).data()[0], 0.0);
    let exact = tape.leaf(phase.clone());
    let l = loss_phase_weighted(&mut tape, exact, &phase, &mag).unwrap();
    assert_eq!(tape.value(l).data()[0], 0.0);
    let l = loss_phase_weighted(&mut tape, pv, &phase, &mag).unwrap();
    let base = tape.value(l).data()[0];
    assert_abs_diff_eq!(
        base,
        sq_oracle(pred.data(), phase.data(), Some(mag.data()), 2),
        epsilon = 1e-12
    );
    let l2 = loss_phase_weighted(&mut tape, pv, &phase, &mag.map(|m| 2.0 * m)).unwrap();
    assert_abs_diff_eq!(tape.value(l2).data()[0], 4.0 * base, epsilon = 1e-12);

    let c = 0.3;
    let naive = loss_mse(&mut tape, pv, &phase).unwrap();
    let uniform = loss_phase_weighted(&mut tape, pv, &phase, &Tensor::full(&[2, 6], c)).unwrap();
    assert_abs_diff_eq!(
        tape.value(uniform).data()[0],
        c * c * tape.value(naive).data()[0],
        epsilon = 1e-12
    );

    let g = tape.backward(l).unwrap();
    assert!(g.get(pv).unwrap().iter().any(|&v| v != 0.0));
}

#[test]
fn mdpf2_encoder_reads_both_planes() {
    let base = PhaseConfig {
        n_rx: 1,
        n_tx: 8,
        feedback_bits: 4,
        bit_mode: BitMode::Binarize,
        variant: PhaseVariant::Mdpf1,
        user: 0,
    };
    let m1 = PhaseNet::build(base, 1).unwrap();
    let m2 = PhaseNet::build(
        PhaseConfig {
            variant: PhaseVariant::Mdpf2,
            ..base
        },
        1,
    )
    .unwrap();
    assert_eq!(m2.encoder.first_layer().fan_in, 2 * m1.encoder.first_layer().fan_in);
    let data = random_planes(1, 1, 8, 3, 2);
    for m in [&m1, &m2] {
        let y = m.reconstruct(&data, &[0, 1, 2], None).unwrap();
        assert!(y.data().iter().all(|v| v.abs() <= PI));
        assert!(m.emit_bits(&data, &[0]).unwrap()[0].len() == 4);
    }
}

#[test]
fn combine_complex_cases() {
    let z = combine_complex(&[0.0; 4], &[1.0, 2.0, 3.0, -1.0], 5.0, 2, 2).unwrap();
    assert!(z.as_slice().iter().all(|c| c.norm() == 0.0));
    let r = combine_complex(&[0.5, 1.0], &[0.0, 0.0], 4.0, 1, 2).unwrap();
    assert_eq!(r.as_slice(), &[Complex64::new(2.0, 0.0), Complex64::new(4.0, 0.0)]);
    assert!(combine_complex(&[1.0], &[0.0, 1.0], 1.0, 1, 2).is_err());
}

#[test]
fn combine_complex_reproduces_dataset_sample() {
    let cfg = DatasetConfig {
        geometry: ArrayGeometry::new(16, 2),
        n_groups: 20,
        ..DatasetConfig::default()
    };
    let ds = generate_dataset(&cfg).unwrap();
    for g in &ds.groups {
        for u in &g.users {
            let z = combine_complex(u.magnitude.as_slice(), u.phase.as_slice(), ds.mag_scale, 2, 16).unwrap();
            for (a, b) in z.as_slice().iter().zip(u.angular.as_slice()) {
                assert!((a - b).norm() <= 1e-6 * b.norm().max(1.0));
            }
        }
    }
}

fn enc_count(l: usize, c: usize, planes: usize) -> usize {
    (planes * l * 2 * l + 2 * l) + 4 * l + (2 * l * 2 * l + 2 * l) + 4 * l + (2 * l * c + c) + 2 * c
}

fn dec_count(input: usize, l: usize, f: usize) -> usize {
    let h = 4 * f * l;
    (input * h + h) + 2 * h + (h * h + h) + 2 * h + (h * l + l) + 2 * l
}

fn comb_count(l: usize) -> usize {
    2 * l * l + l
}

#[test]
fn parameter_counts_match_closed_form() {
    let (l, c) = (32, 3);
    let cfg = mag_cfg(MagnitudeArch::CoCsiNet, 1, 32, c);
    let co = MagnitudeNet::build(cfg, 1).unwrap();
    let want = 2 * enc_count(l, c, 1) + 2 * dec_count(c, l, 1) + dec_count(2 * c, l, 1) + 2 * comb_count(l);
    assert_eq!(co.param_count(), want);

    let b1 = build_benchmark(1, cfg, 1).unwrap();
    let b2 = build_benchmark(2, cfg, 1).unwrap();
    let b3 = build_benchmark(3, cfg, 1).unwrap();
    assert_eq!(b1.param_count(), 2 * (enc_count(l, c, 1) + dec_count(c, l, 1)));
    assert_eq!(b2.param_count(), 2 * (enc_count(l, c, 1) + dec_count(c, l, 2)));
    assert_eq!(
        b3.param_count(),
        2 * (enc_count(l, c, 1) + 2 * dec_count(c, l, 1) + comb_count(l))
    );
    assert!(b2.param_count() > b1.param_count());
    assert!(co.per_user_params() < b2.per_user_params());
    assert!(co.per_user_params() < b3.per_user_params());
    assert!(co.param_count() < 2 * b3.param_count());
    assert!(build_benchmark(4, cfg, 1).is_err());
}

#[test]
fn phase_and_lstm_param_counts() {
    let p = PhaseNet::build(
        PhaseConfig {
            n_rx: 1,
            n_tx: 16,
            feedback_bits: 8,
            bit_mode: BitMode::Binarize,
            variant: PhaseVariant::Mdpf2,
            user: 0,
        },
        1,
    )
    .unwrap();
    assert_eq!(p.param_count(), enc_count(16, 8, 2) + dec_count(8, 16, 1));

    let cfg = MagnitudeConfig {
        lstm_refine: true,
        ..mag_cfg(MagnitudeArch::Alone, 4, 8, 8)
    };
    let net = MagnitudeNet::build(cfg, 1).unwrap();
    let lstm = |input: usize, h: usize| 4 * h * (input + h) + 4 * h;
    let per_user = enc_count(32, 8, 1) + dec_count(8, 32, 1) + lstm(8, 8) + 2 * lstm(8, 8);
    assert_eq!(net.param_count(), 2 * per_user);
}

#[test]
fn benchmark_one_and_three_spend_equal_bits() {
    let cfg = mag_cfg(MagnitudeArch::CoCsiNet, 1, 8, 5);
    let data = random_planes(2, 1, 8, 3, 2);
    let b1 = build_benchmark(1, cfg, 1)
        .unwrap()
        .emit_bits(&data, &[0, 1, 2])
        .unwrap();
    let b3 = build_benchmark(3, cfg, 1)
        .unwrap()
        .emit_bits(&data, &[0, 1, 2])
        .unwrap();
    let len = |b: &Vec<Vec<crate::bitstream::BitVector>>| b.iter().flatten().map(|v| v.len()).collect::<Vec<_>>();
    assert_eq!(len(&b1), len(&b3));
}

#[test]
fn every_parameter_receives_gradient() {
    for arch in MagnitudeArch::ALL {
        let net = MagnitudeNet::build(mag_cfg(arch, 1, 8, 6), 2).unwrap();
        let data = random_planes(2, 1, 8, 6, 3);
        let mut tape = Tape::new();
        let loss = net
            .loss(&mut tape, &data, &[0, 1, 2, 3, 4, 5], Mode::Train, &mut rng(4))
            .unwrap();
        let g = tape.backward(loss).unwrap();
        let mut p = net.params.clone();
        tape.accumulate_param_grads(&g, &mut p).unwrap();
        for id in p.trainable_ids() {
            let norm: f64 = p.grad(id).map_or(0.0, |t| t.norm_sq());
            assert!(norm > 0.0, "{arch}: {} has no gradient", p.name(id));
        }
    }
}

#[test]
fn lstm_model_gradients_reach_every_parameter() {
    let cfg = MagnitudeConfig {
        lstm_refine: true,
        ..mag_cfg(MagnitudeArch::CoCsiNet, 2, 4, 4)
    };
    let net = MagnitudeNet::build(cfg, 2).unwrap();
    let data = random_planes(2, 2, 4, 4, 3);
    let mut tape = Tape::new();
    let loss = net
        .loss(&mut tape, &data, &[0, 1, 2, 3], Mode::Train, &mut rng(4))
        .unwrap();
    let g = tape.backward(loss).unwrap();
    let mut p = net.params.clone();
    tape.accumulate_param_grads(&g, &mut p).unwrap();
    assert!(p
        .trainable_ids()
        .all(|id| p.grad(id).is_some_and(|t| t.norm_sq() > 0.0)));
}

#[test]
fn cooperative_loss_gradient_check() {
    let cfg = MagnitudeConfig {
        bit_mode: BitMode::quantize(2).unwrap(),
        ..mag_cfg(MagnitudeArch::CoCsiNet, 1, 3, 4)
    };
    let net = RefCell::new(MagnitudeNet::build(cfg, 7).unwrap());
    let data = random_planes(2, 1, 3, 4, 8);
    let mut params = net.borrow().params.clone();
    let report = grad_check(
        &mut params,
        |tape, p| {
            net.borrow_mut().params = p.clone();
            net.borrow().loss(tape, &data, &[0, 1, 2, 3], Mode::Train, &mut rng(1))
        },
        1e-4,
    );
    let report = report.unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn phase_loss_gradient_check() {
    let cfg = PhaseConfig {
        n_rx: 1,
        n_tx: 3,
        feedback_bits: 2,
        bit_mode: BitMode::Binarize,
        variant: PhaseVariant::Mdpf2,
        user: 0,
    };
    let net = RefCell::new(PhaseNet::build(cfg, 3).unwrap());
    let data = random_planes(1, 1, 3, 5, 4);
    let mut params = net.borrow().params.clone();
    let report = grad_check(
        &mut params,
        |tape, p| {
            net.borrow_mut().params = p.clone();
            net.borrow()
                .loss(tape, &data, &[0, 1, 2, 3, 4], Mode::Train, &mut rng(1))
        },
        1e-4,
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn zero_ber_matches_clean_reconstruction() {
    let net = MagnitudeNet::build(mag_cfg(MagnitudeArch::CoCsiNet, 1, 8, 6), 2).unwrap();
    let data = random_planes(2, 1, 8, 4, 3);
    let rows = [0, 1, 2, 3];
    let clean = net.reconstruct(&data, &rows, None).unwrap();
    let mut r = rng(5);
    let mut errs = BitErrors { ber: 0.0, rng: &mut r };
    assert_eq!(net.reconstruct(&data, &rows, Some(&mut errs)).unwrap(), clean);
    let mut errs = BitErrors { ber: 0.5, rng: &mut r };
    assert_ne!(net.reconstruct(&data, &rows, Some(&mut errs)).unwrap(), clean);
}

#[test]
fn topology_round_trip_rebuilds_model() {
    let cfg = MagnitudeConfig {
        bit_mode: BitMode::quantize(3).unwrap(),
        lstm_refine: true,
        ..mag_cfg(MagnitudeArch::OwnCoDecoder, 2, 4, 6)
    };
    let net = AnyModel::Magnitude(MagnitudeNet::build(cfg, 4).unwrap());
    let text = net.topology().to_string();
    let back: Topology = text.parse().unwrap();
    assert_eq!(MagnitudeConfig::from_topology(&back).unwrap(), cfg);

    let mut bytes = Vec::new();
    crate::nn::write_checkpoint(&net.to_checkpoint(), &mut bytes).unwrap();
    let ck = crate::nn::read_checkpoint(&bytes).unwrap();
    let rebuilt = AnyModel::from_checkpoint(&ck).unwrap();
    assert_eq!(rebuilt.param_count(), net.param_count());
    let (AnyModel::Magnitude(a), AnyModel::Magnitude(b)) = (&net, &rebuilt) else {
        panic!("kind changed");
    };
    let data = random_planes(2, 2, 4, 3, 1);
    let ya = a.reconstruct(&data, &[0, 1, 2], None).unwrap();
    let yb = b.reconstruct(&data, &[0, 1, 2], None).unwrap();
    for (x, y) in ya[0].data().iter().zip(yb[0].data()) {
        assert!((x - y).abs() < 1e-5);
    }

    let phase = PhaseConfig {
        n_rx: 1,
        n_tx: 4,
        feedback_bits: 2,
        bit_mode: BitMode::Binarize,
        variant: PhaseVariant::Naive,
        user: 1,
    };
    assert_eq!(PhaseConfig::from_topology(&phase.topology()).unwrap(), phase);
    assert!(parse_bit_mode("quantize0").is_err());
    assert!(parse_bit_mode("ternary").is_err());
}

#[test]
fn plane_set_follows_dataset_split() {
    let cfg = DatasetConfig {
        geometry: ArrayGeometry::new(8, 1),
        n_groups: 30,
        ..DatasetConfig::default()
    };
    let ds = generate_dataset(&cfg).unwrap();
    let train = PlaneSet::from_dataset(&ds, SplitKind::Train);
    assert_eq!(train.len(), ds.split.train.len());
    let g = ds.split.train[2];
    assert_eq!(train.magnitude(1, 2), ds.groups[g].users[1].magnitude.as_slice());
    assert_eq!(train.take(3).unwrap().len(), 3);
    assert!(train.take(1000).is_err());
}
