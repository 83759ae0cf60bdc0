mod common;

use std::sync::Arc;

use common::{feature_set, small_config, toy_dataset, windows};
use distnet::eval::smape_metric;
use distnet::features::{FeatureSet, SampleWindow, CHANNELS};
use distnet::models::{Forecaster, ModelConfig, ModelKind};
use distnet::nn::{Bound, ParamSet};
use distnet::tensor::{grad_check_many, Tape, Tensor, SELU_LAMBDA};
use distnet::training::smape_loss;
use proptest::prelude::*;

fn model(cfg: ModelConfig, fs: &FeatureSet) -> Forecaster {
    Forecaster::new(cfg, fs.pollutant, fs.normalization.clone()).unwrap()
}

fn forward(m: &Forecaster, ws: &[SampleWindow]) -> Vec<f64> {
    let refs: Vec<&SampleWindow> = ws.iter().collect();
    let mut tape = Tape::new();
    let p = m.params.bind(&mut tape, false);
    let y = m.forward(&mut tape, &p, &refs).unwrap();
    assert_eq!(tape.shape(y), [ws.len(), m.config.horizon]);
    tape.value(y).to_vec()
}

fn zero_params(ps: &mut ParamSet) {
    let ids: Vec<_> = ps.ids().collect();
    for id in ids {
        ps.get_mut(id).data_mut().fill(0.0);
    }
}

fn set_param(ps: &mut ParamSet, name: &str, values: &[f64]) {
    let id = ps
        .ids()
        .find(|&id| ps.name(id) == name)
        .unwrap_or_else(|| panic!("no param {name}"));
    ps.get_mut(id).data_mut().copy_from_slice(values);
}

fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * 1.67326 * (x.exp() - 1.0)
    }
}

#[test]
fn default_distnet_outputs_forty_eight_steps() {
    let ds = toy_dataset(11, 12, 6, 200, 1);
    let fs = feature_set(&ds, 199);
    let split = windows(&fs, 72, 48, 199);
    let m = model(ModelConfig::default(), &fs);
    let y = forward(&m, &split.train[..1]);
    assert_eq!(y.len(), 48);
    assert!(y.iter().all(|v| v.is_finite()));
}

#[test]
fn head_bias_only_gives_constant_forecast() {
    let ds = toy_dataset(6, 6, 4, 120, 2);
    let fs = feature_set(&ds, 119);
    let split = windows(&fs, 12, 6, 119);
    let mut m = model(small_config(ModelKind::Distnet, 12, 6), &fs);
    zero_params(&mut m.params);
    let c = 0.37;
    set_param(&mut m.params, "head.bias", &[c]);
    let r = fs.target_range();
    let expected = selu(c) * (r.max - r.min) + r.min;
    for v in forward(&m, &split.train[..3]) {
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
    }
}

#[test]
fn zero_mlp_gives_affine_of_zero() {
    let ds = toy_dataset(6, 6, 4, 120, 2);
    let fs = feature_set(&ds, 119);
    let split = windows(&fs, 12, 6, 119);
    let mut m = model(small_config(ModelKind::Mlp, 12, 6), &fs);
    zero_params(&mut m.params);
    for v in forward(&m, &split.train[..2]) {
        assert_eq!(v, fs.target_range().min);
    }
}

#[test]
fn mlp_default_head_has_forty_eight_units() {
    let ds = toy_dataset(6, 6, 4, 200, 2);
    let fs = feature_set(&ds, 199);
    let split = windows(&fs, 72, 48, 199);
    let cfg = ModelConfig {
        kind: ModelKind::Mlp,
        ..ModelConfig::default()
    };
    let m = model(cfg, &fs);
    assert_eq!(
        m.params.by_name("mlp.head.weight").unwrap().shape(),
        [64, 48]
    );
    assert_eq!(forward(&m, &split.train[..1]).len(), 48);
}

#[test]
fn cropped_spatial_path_matches_full_frames() {
    let ds = toy_dataset(7, 9, 8, 80, 3);
    let fs = feature_set(&ds, 79);
    let split = windows(&fs, 5, 3, 79);
    for layers in [1, 2, 3] {
        let cfg = ModelConfig {
            conv_layers: layers,
            ..small_config(ModelKind::Distnet, 5, 3)
        };
        let m = model(cfg, &fs);
        let ws: Vec<&SampleWindow> = split.train.iter().step_by(37).collect();
        let mut t1 = Tape::new();
        let p1 = m.params.bind(&mut t1, false);
        let a = m.forward(&mut t1, &p1, &ws).unwrap();
        let mut t2 = Tape::new();
        let p2 = m.params.bind(&mut t2, false);
        let b = m.forward_reference(&mut t2, &p2, &ws).unwrap();
        for (x, y) in t1.value(a).iter().zip(t2.value(b)) {
            assert!(
                (x - y).abs() <= 1e-12 * x.abs().max(1.0),
                "K={layers}: {x} vs {y}"
            );
        }
    }
}

#[test]
fn zero_layer_distnet_is_the_local_model() {
    let ds = toy_dataset(6, 6, 4, 100, 4);
    let fs = feature_set(&ds, 99);
    let split = windows(&fs, 8, 4, 99);
    let d = model(
        ModelConfig {
            conv_layers: 0,
            ..small_config(ModelKind::Distnet, 8, 4)
        },
        &fs,
    );
    let l = model(small_config(ModelKind::LocalSeq2seq, 8, 4), &fs);
    assert_eq!(
        forward(&d, &split.train[..5]),
        forward(&l, &split.train[..5])
    );
}

#[test]
fn identity_one_by_one_conv_reduces_to_local_model() {
    let ds = toy_dataset(6, 6, 4, 100, 4);
    let fs = feature_set(&ds, 99);
    let split = windows(&fs, 8, 4, 99);
    let cfg = ModelConfig {
        conv_layers: 1,
        kernel_size: 1,
        conv_channels: CHANNELS,
        ..small_config(ModelKind::Distnet, 8, 4)
    };
    let mut d = model(cfg, &fs);
    let l = model(small_config(ModelKind::LocalSeq2seq, 8, 4), &fs);
    let mut k = vec![0.0; CHANNELS * CHANNELS];
    for c in 0..CHANNELS {
        k[c * CHANNELS + c] = 1.0 / SELU_LAMBDA;
    }
    set_param(&mut d.params, "conv0.kernels", &k);
    set_param(&mut d.params, "conv0.bias", &vec![0.0; CHANNELS]);
    for (name, t) in l.params.iter() {
        set_param(&mut d.params, name, t.data());
    }
    // training-span inputs are min-max scaled into [0, 1], where selu is linear
    let ws = &split.train[..6];
    for w in ws {
        assert!((0..8).all(|t| w.spot(t).iter().all(|&v| v >= 0.0)));
    }
    for (a, b) in forward(&d, ws).iter().zip(forward(&l, ws)) {
        assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn neighbor_model_without_neighbors_repeats_center_features() {
    let ds = toy_dataset(6, 6, 5, 100, 5);
    let fs = feature_set(&ds, 99);
    let split = windows(&fs, 8, 4, 99);
    let n = model(
        ModelConfig {
            neighbor_radius_km: 1e-9,
            ..small_config(ModelKind::NeighborSeq2seq, 8, 4)
        },
        &fs,
    );
    // g = [c; c; ...; c (9 times); s], so folding the nine weight blocks
    // of the centre features gives an equivalent local model
    let mut l = model(small_config(ModelKind::LocalSeq2seq, 8, 4), &fs);
    for (name, t) in n.params.iter() {
        if name.starts_with("encoder.w_") {
            let d = t.shape()[1];
            let w = t.data();
            let mut folded = vec![0.0; (CHANNELS + distnet::features::GAMMA) * d];
            for block in 0..9 {
                for i in 0..CHANNELS * d {
                    folded[i] += w[block * CHANNELS * d + i];
                }
            }
            folded[CHANNELS * d..].copy_from_slice(&w[9 * CHANNELS * d..]);
            set_param(&mut l.params, name, &folded);
        } else {
            set_param(&mut l.params, name, t.data());
        }
    }
    let ws = &split.train[..6];
    for (a, b) in forward(&n, ws).iter().zip(forward(&l, ws)) {
        assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "{a} vs {b}");
    }
}

fn perturbed(fs: &Arc<FeatureSet>, hour: usize, row: usize, col: usize) -> Arc<FeatureSet> {
    let mut f = (**fs).clone();
    for v in f.cell_features_mut(hour, row, col) {
        *v += 0.75;
    }
    Arc::new(f)
}

fn rebind(w: &SampleWindow, data: &Arc<FeatureSet>) -> SampleWindow {
    SampleWindow {
        data: Arc::clone(data),
        ..w.clone()
    }
}

#[test]
fn identity_spatial_path_ignores_other_cells() {
    let ds = toy_dataset(6, 6, 4, 100, 6);
    let fs = feature_set(&ds, 99);
    let split = windows(&fs, 8, 4, 99);
    let d = model(
        ModelConfig {
            conv_layers: 0,
            ..small_config(ModelKind::Distnet, 8, 4)
        },
        &fs,
    );
    let w = &split.train[10];
    let base = forward(&d, std::slice::from_ref(w));
    let (tr, tc) = w.cell();
    for (r, c) in [(0, 0), (5, 5), ((tr + 1) % 6, tc), (tr, (tc + 3) % 6)] {
        if (r, c) == (tr, tc) {
            continue;
        }
        let moved = perturbed(&fs, w.start + 3, r, c);
        assert_eq!(forward(&d, &[rebind(w, &moved)]), base);
    }
}

#[test]
fn receptive_field_is_k_cells() {
    let ds = toy_dataset(12, 12, 6, 100, 7);
    let fs = feature_set(&ds, 99);
    let split = windows(&fs, 6, 3, 99);
    let k = 2;
    let d = model(small_config(ModelKind::Distnet, 6, 3), &fs);
    let w = split.train.iter().find(|w| {
        let (r, c) = w.cell();
        (3..9).contains(&r) && (3..9).contains(&c)
    });
    let w = w.expect("a station away from the border");
    let (tr, tc) = w.cell();
    let base = forward(&d, std::slice::from_ref(w));
    let far = perturbed(&fs, w.start + 2, tr + k + 1, tc);
    let after = forward(&d, &[rebind(w, &far)]);
    for (a, b) in base.iter().zip(&after) {
        assert!((a - b).abs() <= 1e-12);
    }
    let near = perturbed(&fs, w.start + 2, tr + k, tc - k);
    assert_ne!(forward(&d, &[rebind(w, &near)]), base);
}

#[test]
fn persistence_repeats_last_value() {
    let ds = toy_dataset(6, 6, 4, 100, 8);
    let fs = feature_set(&ds, 99);
    let split = windows(&fs, 8, 48, 99);
    let m = model(small_config(ModelKind::Persistence, 8, 48), &fs);
    let w = &split.train[3];
    let y = m.predict(std::slice::from_ref(w)).unwrap();
    assert_eq!(y[0], vec![w.last_observed(); 48]);
    assert_eq!(y[0].len(), 48);
}

#[test]
fn persistence_step_change_smape() {
    let (y, d) = (10.0, 4.0);
    let preds = vec![y; 4];
    let truths = vec![y, y, y + d, y + d];
    let s = smape_metric(&preds, &truths, 1.0).unwrap();
    assert!((s - 0.5 * 2.0 * d / (2.0 * y + d)).abs() < 1e-15);
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let ds = toy_dataset(6, 6, 4, 100, 9);
    let fs = feature_set(&ds, 99);
    let split = windows(&fs, 8, 4, 99);
    let dir = tempfile::tempdir().unwrap();
    for kind in ModelKind::ALL {
        let m = model(small_config(kind, 8, 4), &fs);
        let path = dir.path().join(format!("{kind}.json"));
        m.save(&path).unwrap();
        let back = Forecaster::load(&path).unwrap();
        assert_eq!(back.config, m.config);
        assert_eq!(
            m.predict(&split.train[..4]).unwrap(),
            back.predict(&split.train[..4]).unwrap()
        );
    }
    let mut ck = model(small_config(ModelKind::Mlp, 8, 4), &fs).to_checkpoint();
    ck.format = "distnet-model/0".into();
    assert!(matches!(
        Forecaster::from_checkpoint(&ck),
        Err(distnet::Error::Version(_))
    ));
}

#[test]
fn window_shape_mismatch_is_config_error() {
    let ds = toy_dataset(6, 6, 4, 100, 9);
    let fs = feature_set(&ds, 99);
    let split = windows(&fs, 8, 4, 99);
    let m = model(small_config(ModelKind::Distnet, 9, 4), &fs);
    assert!(matches!(
        m.predict(&split.train[..1]),
        Err(distnet::Error::Config(_))
    ));
}

/// Max relative finite-difference error over all parameter groups of the
/// batch SMAPE loss.
pub fn loss_grad_error(m: &Forecaster, ws: &[SampleWindow]) -> f64 {
    let refs: Vec<&SampleWindow> = ws.iter().collect();
    let truth: Vec<f64> = ws.iter().flat_map(|w| w.target()).collect();
    let shape = vec![ws.len(), m.config.horizon];
    let errs = grad_check_many(
        |t, v| {
            let p = Bound::from_vars(v.to_vec());
            let y = m.forward(t, &p, &refs)?;
            let truth = t.constant(Tensor::new(shape.clone(), truth.clone())?);
            smape_loss(t, y, truth, 1.0)
        },
        &m.params.tensors(),
        1e-5,
    )
    .unwrap();
    for (e, (name, _)) in errs.iter().zip(m.params.iter()) {
        assert!(*e <= 1e-4, "{name}: relative error {e}");
    }
    errs.into_iter().fold(0.0, f64::max)
}

#[test]
fn loss_gradients_match_finite_differences() {
    let ds = toy_dataset(4, 4, 4, 60, 10);
    let fs = feature_set(&ds, 59);
    let split = windows(&fs, 6, 4, 59);
    for kind in [
        ModelKind::Distnet,
        ModelKind::Mlp,
        ModelKind::LocalSeq2seq,
        ModelKind::NeighborSeq2seq,
    ] {
        // seed chosen so no selu input sits within the difference stencil of its kink
        let cfg = ModelConfig {
            conv_layers: 3,
            seed: 1,
            ..small_config(kind, 6, 4)
        };
        let m = model(cfg, &fs);
        let ws: Vec<SampleWindow> = split.train.iter().step_by(41).take(2).cloned().collect();
        let e = loss_grad_error(&m, &ws);
        assert!(e <= 1e-4, "{kind}: {e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn forward_shape_for_random_configs(m in 3usize..=16, n in 3usize..=16, t in 4usize..=96, tau in 1usize..=48, k in 0usize..=3) {
        let ds = toy_dataset(m, n, 3, t + tau + 2, 12);
        let fs = feature_set(&ds, t + tau + 1);
        let split = windows(&fs, t, tau, t + tau + 1);
        let cfg = ModelConfig {
            conv_layers: k,
            conv_channels: 3,
            hidden: 4,
            ..small_config(ModelKind::Distnet, t, tau)
        };
        let d = model(cfg, &fs);
        let y = forward(&d, &split.train[..2]);
        prop_assert_eq!(y.len(), 2 * tau);
        prop_assert!(y.iter().all(|v| v.is_finite()));
    }
}
