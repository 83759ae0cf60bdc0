use distnet::nn::{
    conv_stack_forward, Activation, Adam, AdamConfig, Bound, ConvLayer, DenseLayer, Embedding,
    GruCell, Initializer, ParamSet,
};
use distnet::tensor::{grad_check_many, Padding, Tape, Tensor, Var, SELU_LAMBDA};
use distnet::{Error, Result};
use proptest::prelude::*;

fn weighted_sum(t: &mut Tape, y: Var) -> Result<Var> {
    let n = t.value(y).len();
    let w: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.613).cos()).collect();
    let wv = t.constant(Tensor::new(t.shape(y).to_vec(), w)?);
    let p = t.mul(y, wv)?;
    t.sum(p)
}

fn zero_all(params: &mut ParamSet) {
    for id in params.ids().collect::<Vec<_>>() {
        params.get_mut(id).data_mut().fill(0.0);
    }
}

/// Max relative error over parameters and extra inputs of `f`.
fn check_layer(
    params: &ParamSet,
    extra: Vec<Tensor>,
    f: impl Fn(&mut Tape, &Bound, &[Var]) -> Result<Var>,
) -> f64 {
    let n = params.len();
    let mut xs = params.tensors();
    xs.extend(extra);
    let errs = grad_check_many(
        |t, v| {
            let b = Bound::from_vars(v[..n].to_vec());
            let y = f(t, &b, &v[n..])?;
            weighted_sum(t, y)
        },
        &xs,
        1e-5,
    )
    .unwrap();
    errs.into_iter().fold(0.0, f64::max)
}

#[test]
fn identity_conv_scales_nonnegative_input_by_lambda() {
    let mut ps = ParamSet::new();
    let mut init = Initializer::new(0);
    let layer = ConvLayer::new(&mut ps, &mut init, "c", 1, 2, 2, Padding::Same).unwrap();
    let k = ps.get_mut(layer.kernels);
    k.data_mut().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
    let input = Tensor::new(vec![3, 2, 2], (0..12).map(|i| i as f64 * 0.5).collect()).unwrap();
    let mut t = Tape::new();
    let b = ps.bind(&mut t, false);
    let x = t.constant(input.clone());
    let y = conv_stack_forward(&mut t, &b, &[layer], x).unwrap();
    for (o, i) in t.value(y).iter().zip(input.data()) {
        assert!((o - SELU_LAMBDA * i).abs() < 1e-12);
    }
}

#[test]
fn zero_input_and_bias_gives_zero_output() {
    let mut ps = ParamSet::new();
    let mut init = Initializer::new(1);
    let layers = vec![
        ConvLayer::new(&mut ps, &mut init, "c0", 3, 4, 5, Padding::Same).unwrap(),
        ConvLayer::new(&mut ps, &mut init, "c1", 3, 5, 5, Padding::Same).unwrap(),
    ];
    let mut t = Tape::new();
    let b = ps.bind(&mut t, false);
    let x = t.constant(Tensor::zeros(&[5, 4, 4]));
    let y = conv_stack_forward(&mut t, &b, &layers, x).unwrap();
    assert!(t.value(y).iter().all(|&v| v == 0.0));
}

#[test]
fn conv_stack_keeps_grid_extent() {
    let mut ps = ParamSet::new();
    let mut init = Initializer::new(2);
    let layers: Vec<ConvLayer> = (0..3)
        .map(|k| {
            ConvLayer::new(
                &mut ps,
                &mut init,
                &format!("c{k}"),
                3,
                if k == 0 { 11 } else { 32 },
                32,
                Padding::Same,
            )
            .unwrap()
        })
        .collect();
    let mut t = Tape::new();
    let b = ps.bind(&mut t, false);
    let x = t.constant(Tensor::full(&[11, 12, 11], 0.3));
    let y = conv_stack_forward(&mut t, &b, &layers, x).unwrap();
    assert_eq!(t.shape(y), &[11, 12, 32]);
}

#[test]
fn conv_stack_rejects_channel_mismatch() {
    let mut ps = ParamSet::new();
    let mut init = Initializer::new(3);
    let layers = vec![
        ConvLayer::new(&mut ps, &mut init, "c0", 3, 2, 4, Padding::Same).unwrap(),
        ConvLayer::new(&mut ps, &mut init, "c1", 3, 3, 4, Padding::Same).unwrap(),
    ];
    let mut t = Tape::new();
    let b = ps.bind(&mut t, false);
    let x = t.constant(Tensor::zeros(&[4, 4, 2]));
    assert!(matches!(
        conv_stack_forward(&mut t, &b, &layers, x),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        ConvLayer::new(&mut ps, &mut init, "even", 2, 1, 1, Padding::Same),
        Err(Error::Config(_))
    ));
}

fn zero_gru(input: usize, hidden: usize) -> (ParamSet, GruCell) {
    let mut ps = ParamSet::new();
    let cell = GruCell::new(&mut ps, &mut Initializer::new(0), "gru", input, hidden).unwrap();
    zero_all(&mut ps);
    (ps, cell)
}

#[test]
fn zero_gru_from_zero_state_stays_zero() {
    let (ps, cell) = zero_gru(3, 4);
    let mut t = Tape::new();
    let b = ps.bind(&mut t, false);
    let x = t.constant(Tensor::matrix(1, 3, vec![0.4, -1.0, 2.0]).unwrap());
    let h = t.constant(Tensor::zeros(&[1, 4]));
    let h1 = cell.step(&mut t, &b, x, h).unwrap();
    assert!(t.value(h1).iter().all(|&v| v == 0.0));
}

#[test]
fn zero_gru_halves_unit_state() {
    let (ps, cell) = zero_gru(3, 4);
    let mut t = Tape::new();
    let b = ps.bind(&mut t, false);
    let x = t.constant(Tensor::matrix(1, 3, vec![0.4, -1.0, 2.0]).unwrap());
    let h = t.constant(Tensor::ones(&[1, 4]));
    let h1 = cell.step(&mut t, &b, x, h).unwrap();
    // z = σ(0) = 0.5 and h~ = tanh(0) = 0
    assert!(t.value(h1).iter().all(|&v| (v - 0.5).abs() < 1e-15));
}

#[test]
fn unroll_of_one_step_is_a_step() {
    let mut ps = ParamSet::new();
    let cell = GruCell::new(&mut ps, &mut Initializer::new(5), "gru", 3, 4).unwrap();
    let mut t = Tape::new();
    let b = ps.bind(&mut t, false);
    let x = t.constant(Tensor::matrix(1, 3, vec![0.1, 0.2, -0.3]).unwrap());
    let h0 = t.constant(Tensor::matrix(1, 4, vec![0.5, -0.5, 0.1, 0.0]).unwrap());
    let states = cell.unroll(&mut t, &b, x, 1, Some(h0)).unwrap();
    let direct = cell.step(&mut t, &b, x, h0).unwrap();
    assert_eq!(states.len(), 1);
    assert_eq!(t.value(states[0]), t.value(direct));
}

#[test]
fn long_unroll_reaches_a_fixed_point() {
    let mut ps = ParamSet::new();
    let cell = GruCell::new(&mut ps, &mut Initializer::new(6), "gru", 2, 3).unwrap();
    // shrink recurrent weights so the map is a contraction
    for id in [cell.u_z, cell.u_r, cell.u_h] {
        ps.get_mut(id).data_mut().iter_mut().for_each(|v| *v *= 0.3);
    }
    let x = Tensor::matrix(1, 2, vec![0.7, -0.2]).unwrap();
    let mut t = Tape::new();
    let b = ps.bind(&mut t, false);
    let xs = t.constant(Tensor::matrix(400, 2, x.data().repeat(400)).unwrap());
    let states = cell.unroll(&mut t, &b, xs, 1, None).unwrap();
    let last = *states.last().unwrap();
    let x1 = t.constant(x);
    let again = cell.step(&mut t, &b, x1, last).unwrap();
    for (a, c) in t.value(again).iter().zip(t.value(last)) {
        assert!((a - c).abs() < 1e-8, "{a} vs {c}");
    }
}

#[test]
fn unroll_keeps_every_state() {
    let mut ps = ParamSet::new();
    let cell = GruCell::new(&mut ps, &mut Initializer::new(7), "gru", 41, 64).unwrap();
    let mut t = Tape::new();
    let b = ps.bind(&mut t, false);
    let xs = t.constant(Tensor::full(&[72, 41], 0.1));
    let states = cell.unroll(&mut t, &b, xs, 1, None).unwrap();
    let all = t.concat(&states, 0).unwrap();
    assert_eq!(t.shape(all), &[72, 64]);
    let xs0 = t.constant(Tensor::full(&[3, 41], 0.1));
    assert!(matches!(
        cell.unroll(&mut t, &b, xs0, 2, None),
        Err(Error::Contract(_))
    ));
}

#[test]
fn adam_ignores_zero_gradient() {
    let mut ps = ParamSet::new();
    ps.add("w", Tensor::vector(vec![1.0, -2.0, 3.0])).unwrap();
    let before = ps.tensors();
    let mut adam = Adam::new(AdamConfig::default(), &ps);
    adam.step(&mut ps, &[vec![0.0; 3]]).unwrap();
    assert_eq!(ps.tensors()[0].data(), before[0].data());
}

#[test]
fn adam_first_step_moves_by_lr_times_sign() {
    let mut ps = ParamSet::new();
    ps.add("w", Tensor::vector(vec![0.0; 4])).unwrap();
    let mut adam = Adam::new(AdamConfig::default(), &ps);
    let g = vec![0.5, -3.0, 1e-2, -40.0];
    adam.step(&mut ps, &[g.clone()]).unwrap();
    // m_hat = g, v_hat = g^2 at t = 1
    for (w, g) in ps.tensors()[0].data().iter().zip(&g) {
        let expected = -1e-3 * g / (g.abs() + 1e-8);
        assert!((w - expected).abs() < 1e-12, "{w} vs {expected}");
        assert!((w.abs() - 1e-3).abs() < 1e-8);
    }
}

#[test]
fn adam_descends_a_quadratic_bowl() {
    let mut ps = ParamSet::new();
    let id = ps.add("w", Tensor::vector(vec![0.8, -0.3, 0.5])).unwrap();
    let mut adam = Adam::new(AdamConfig::default(), &ps);
    let loss = |w: &[f64]| w.iter().map(|v| v * v).sum::<f64>();
    let mut prev = loss(ps.get(id).data());
    for _ in 0..100 {
        let g: Vec<f64> = ps.get(id).data().iter().map(|v| 2.0 * v).collect();
        adam.step(&mut ps, &[g]).unwrap();
        let now = loss(ps.get(id).data());
        assert!(now < prev);
        prev = now;
    }
}

#[test]
fn adam_names_the_bad_parameter() {
    let mut ps = ParamSet::new();
    ps.add("a", Tensor::vector(vec![1.0])).unwrap();
    ps.add("b", Tensor::vector(vec![1.0])).unwrap();
    let mut adam = Adam::new(AdamConfig::default(), &ps);
    match adam.step(&mut ps, &[vec![1.0], vec![f64::NAN]]) {
        Err(Error::Training(msg)) => assert!(msg.contains('b')),
        other => panic!("{other:?}"),
    }
    assert_eq!(ps.tensors()[0].data(), &[1.0]);
    assert_eq!(adam.steps(), 0);
}

#[test]
fn init_is_seeded() {
    let build = |seed| {
        let mut ps = ParamSet::new();
        let mut init = Initializer::new(seed);
        DenseLayer::new(&mut ps, &mut init, "d", 5, 7, Activation::Selu).unwrap();
        GruCell::new(&mut ps, &mut init, "g", 3, 4).unwrap();
        ps.tensors()
    };
    let (a, b, c) = (build(11), build(11), build(12));
    assert!(a.iter().zip(&b).all(|(x, y)| x.data() == y.data()));
    assert!(a.iter().zip(&c).any(|(x, y)| x.data() != y.data()));
    assert!(
        a[1].data().iter().all(|&v| v == 0.0),
        "biases start at zero"
    );
}

#[test]
fn init_weights_are_centered() {
    let mut init = Initializer::new(99);
    let fan_in = 25;
    let w = init.fan_in_uniform(&[100, 100], fan_in);
    let n = w.len() as f64;
    let bound = (3.0 / fan_in as f64).sqrt();
    let sd = bound / 3f64.sqrt();
    let mean = w.data().iter().sum::<f64>() / n;
    assert!(mean.abs() < 3.0 * sd / n.sqrt());
    assert!(w.data().iter().all(|v| v.abs() <= bound));
}

#[test]
fn embedding_grad_touches_only_looked_up_rows() {
    let mut ps = ParamSet::new();
    let emb = Embedding::new(&mut ps, &mut Initializer::new(4), "e", 6, 3).unwrap();
    let mut t = Tape::new();
    let b = ps.bind(&mut t, true);
    let rows = emb.lookup(&mut t, &b, &[4, 1, 4]).unwrap();
    let loss = weighted_sum(&mut t, rows).unwrap();
    t.backward(loss).unwrap();
    let g = &b.grads(&t)[0];
    for r in 0..6 {
        let touched = g[r * 3..r * 3 + 3].iter().any(|&v| v != 0.0);
        assert_eq!(touched, r == 1 || r == 4, "row {r}");
    }
    assert!(matches!(
        emb.lookup(&mut t, &b, &[6]),
        Err(Error::Bounds(_))
    ));
}

#[test]
fn checkpoint_round_trips_bits() {
    let mut ps = ParamSet::new();
    let mut init = Initializer::new(8);
    GruCell::new(&mut ps, &mut init, "g", 2, 3).unwrap();
    ps.add(
        "odd",
        Tensor::vector(vec![0.1 + 0.2, -0.0, f64::MIN_POSITIVE, 1e300]),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("params.json");
    ps.to_manifest().save_json(&path).unwrap();

    let mut fresh = ParamSet::new();
    let mut other = Initializer::new(9);
    GruCell::new(&mut fresh, &mut other, "g", 2, 3).unwrap();
    fresh.add("odd", Tensor::zeros(&[4])).unwrap();
    fresh
        .load_manifest(&distnet::nn::ParamManifest::load_json(&path).unwrap())
        .unwrap();
    for ((_, a), (_, b)) in ps.iter().zip(fresh.iter()) {
        let abits: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
        let bbits: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(abits, bbits);
    }

    let mut wrong = ParamSet::new();
    GruCell::new(&mut wrong, &mut Initializer::new(1), "g", 2, 4).unwrap();
    assert!(matches!(
        wrong.load_manifest(&ps.to_manifest()),
        Err(Error::Version(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dense_grad(seed in 0u64..1000, x in prop::collection::vec(-1.5f64..1.5, 6), selu in any::<bool>()) {
        let mut ps = ParamSet::new();
        let act = if selu { Activation::Selu } else { Activation::Identity };
        let layer = DenseLayer::new(&mut ps, &mut Initializer::new(seed), "d", 3, 4, act).unwrap();
        // nudge biases off zero so selu kinks are unlikely to sit on a probe
        ps.get_mut(layer.bias).data_mut().copy_from_slice(&[0.11, -0.07, 0.05, 0.2]);
        let err = check_layer(&ps, vec![Tensor::matrix(2, 3, x).unwrap()], |t, b, v| layer.forward(t, b, v[0]));
        prop_assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn conv_grad(seed in 0u64..1000, x in prop::collection::vec(-1.0f64..1.0, 4 * 4 * 2)) {
        let mut ps = ParamSet::new();
        let mut init = Initializer::new(seed);
        let layers = vec![
            ConvLayer::new(&mut ps, &mut init, "c0", 3, 2, 3, Padding::Same).unwrap(),
            ConvLayer::new(&mut ps, &mut init, "c1", 3, 3, 2, Padding::Same).unwrap(),
        ];
        for l in &layers {
            ps.get_mut(l.bias).data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = 0.03 * (i as f64 + 1.0));
        }
        let err = check_layer(&ps, vec![Tensor::new(vec![4, 4, 2], x).unwrap()], |t, b, v| {
            conv_stack_forward(t, b, &layers, v[0])
        });
        prop_assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn gru_grad(seed in 0u64..1000, x in prop::collection::vec(-1.0f64..1.0, 4 * 2 * 3)) {
        let mut ps = ParamSet::new();
        let cell = GruCell::new(&mut ps, &mut Initializer::new(seed), "g", 3, 4).unwrap();
        let h0 = Tensor::matrix(2, 4, vec![0.1, -0.2, 0.3, 0.0, 0.5, 0.5, -0.5, 0.2]).unwrap();
        let err = check_layer(&ps, vec![Tensor::matrix(8, 3, x).unwrap(), h0], |t, b, v| {
            let states = cell.unroll(t, b, v[0], 2, Some(v[1]))?;
            t.concat(&states, 0)
        });
        prop_assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn embedding_grad(seed in 0u64..1000, ids in prop::collection::vec(0usize..5, 1..6)) {
        let mut ps = ParamSet::new();
        let emb = Embedding::new(&mut ps, &mut Initializer::new(seed), "e", 5, 2).unwrap();
        let err = check_layer(&ps, vec![], |t, b, _| {
            let rows = emb.lookup(t, b, &ids)?;
            t.tanh(rows)
        });
        prop_assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn gru_state_stays_in_convex_bound(
        seed in 0u64..1000,
        x in prop::collection::vec(-3.0f64..3.0, 3),
        h in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        let mut ps = ParamSet::new();
        let cell = GruCell::new(&mut ps, &mut Initializer::new(seed), "g", 3, 4).unwrap();
        let mut t = Tape::new();
        let b = ps.bind(&mut t, false);
        let xv = t.constant(Tensor::matrix(1, 3, x).unwrap());
        let hv = t.constant(Tensor::matrix(1, 4, h.clone()).unwrap());
        let out = cell.step(&mut t, &b, xv, hv).unwrap();
        for (o, hi) in t.value(out).iter().zip(&h) {
            prop_assert!(*o >= hi.min(-1.0) && *o <= hi.max(1.0));
            if hi.abs() < 1.0 {
                prop_assert!(o.abs() < 1.0);
            }
        }
    }

    #[test]
    fn adam_first_update_is_scale_free(g in prop::collection::vec(prop_oneof![1e-3f64..10.0, -10.0f64..-1e-3], 5)) {
        let first = |scale: f64| {
            let mut ps = ParamSet::new();
            ps.add("w", Tensor::vector(vec![0.0; 5])).unwrap();
            let mut adam = Adam::new(AdamConfig::default(), &ps);
            let gs: Vec<f64> = g.iter().map(|v| v * scale).collect();
            adam.step(&mut ps, &[gs]).unwrap();
            ps.tensors()[0].data().to_vec()
        };
        let (a, b) = (first(1.0), first(10.0));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 0.01 * x.abs());
        }
    }
}
