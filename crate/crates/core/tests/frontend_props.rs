mod common;

use std::f64::consts::PI;

use adaptft::dsp::dft;
use adaptft::frontends::{argmax, double_softmax, FrontEndKind, GateMode, Model, ModelConfig};
use adaptft::ops::{conv1d_same, pool_over_time, softmax, PoolMode};
use adaptft::Tensor;
use common::{rng, uniform};
use proptest::prelude::*;

fn adaptive(seed: u64, expert: FrontEndKind) -> Model {
    Model::new(&ModelConfig {
        frontend: FrontEndKind::Adaptive,
        expert,
        input_len: 24,
        kernels: 5,
        kernel_len: 7,
        router_width: 6,
        experts: 3,
        classes: 4,
        seed,
        ..Default::default()
    })
    .unwrap()
}

/// Reverses the order of the experts: their parameters and the router's
/// output rows.
fn reverse_experts(model: &Model, names: &[&str]) -> Model {
    let mut out = model.clone();
    let k = model.config().experts;
    for name in names {
        for i in 0..k {
            let src = model.params.lookup(&format!("expert{i}.{name}")).unwrap();
            let dst = out.params.lookup(&format!("expert{}.{name}", k - 1 - i)).unwrap();
            *out.params.tensor_mut(dst) = model.params.tensor(src).clone();
        }
    }
    for id in ["router.l3.weights", "router.l3.bias"] {
        let pid = model.params.lookup(id).unwrap();
        let t = model.params.tensor(pid);
        let width = t.len() / k;
        let rows: Vec<f64> = (0..k).rev().flat_map(|r| t.data()[r * width..(r + 1) * width].to_vec()).collect();
        *out.params.tensor_mut(pid) = Tensor::new(t.shape().to_vec(), rows).unwrap();
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn softmax_is_a_distribution(x in prop::collection::vec(-50.0f64..50.0, 1..32)) {
        let p = softmax(&x);
        prop_assert!(p.iter().all(|&v| v > 0.0 && v <= 1.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_ignores_constant_shift(x in prop::collection::vec(-50.0f64..50.0, 1..32), c in -1e3f64..1e3) {
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        for (a, b) in softmax(&x).iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gates_are_a_distribution(s in prop::collection::vec(-1e6f64..1e6, 1..8), alpha in 0.0f64..200.0) {
        let g = double_softmax(&s, alpha);
        prop_assert!(g.iter().all(|&v| v >= 0.0 && v.is_finite()));
        prop_assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gates_follow_a_permutation(s in prop::collection::vec(-10.0f64..10.0, 2..8), alpha in 0.0f64..200.0, seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut perm: Vec<usize> = (0..s.len()).collect();
        perm.shuffle(&mut rng(seed));
        let permuted: Vec<f64> = perm.iter().map(|&i| s[i]).collect();
        let g = double_softmax(&s, alpha);
        let gp = double_softmax(&permuted, alpha);
        for (j, &i) in perm.iter().enumerate() {
            prop_assert!((gp[j] - g[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn gate_argmax_ignores_shift(s in prop::collection::vec(-10.0f64..10.0, 2..8), c in -1e4f64..1e4) {
        let shifted: Vec<f64> = s.iter().map(|v| v + c).collect();
        let (a, b) = (double_softmax(&s, 100.0), double_softmax(&shifted, 100.0));
        // A shift can only reorder exact ties, which argmax breaks the same way
        // unless rounding splits them; skip near-ties.
        let mut sorted = a.clone();
        sorted.sort_by(|x, y| y.total_cmp(x));
        prop_assume!(sorted[0] - sorted[1] > 1e-9);
        prop_assert_eq!(argmax(&a), argmax(&b));
    }

    #[test]
    fn conv_with_delta_is_identity(x in prop::collection::vec(-1.0f64..1.0, 1..64), half in 0usize..5) {
        let taps = 2 * half + 1;
        prop_assume!(taps <= x.len());
        let mut h = vec![0.0; taps];
        h[half] = 1.0;
        let y = conv1d_same(&Tensor::vector(&x), &Tensor::vector(&h)).unwrap();
        prop_assert_eq!(y.data(), x.as_slice());
    }

    #[test]
    fn router_is_overflow_safe(scale in 1.0f64..1e150, seed in 0u64..50) {
        let model = adaptive(seed, FrontEndKind::Conv);
        let x: Vec<f64> = uniform(&mut rng(seed), 24, -1.0, 1.0).iter().map(|v| v * scale).collect();
        let g = model.gates(&x).unwrap().unwrap();
        prop_assert!(g.iter().all(|v| v.is_finite() && *v >= 0.0));
        prop_assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn reordering_experts_reorders_gates() {
    for (expert, names) in [(FrontEndKind::Conv, &["filters"][..]), (FrontEndKind::Multiplicative, &["weights", "bias"][..])] {
        for seed in 0..10 {
            let model = adaptive(seed, expert);
            let flipped = reverse_experts(&model, names);
            let x = uniform(&mut rng(seed + 100), 24, -1.0, 1.0);
            let g = model.gates(&x).unwrap().unwrap();
            let gf = flipped.gates(&x).unwrap().unwrap();
            let k = g.len();
            for i in 0..k {
                assert!((g[i] - gf[k - 1 - i]).abs() < 1e-15);
            }
            // Same mixture, so the same logits up to summation order.
            let (l, lf) = (model.logits(&x).unwrap(), flipped.logits(&x).unwrap());
            for (a, b) in l.iter().zip(&lf) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }
}

#[test]
fn forced_one_hot_equals_expert() {
    let model = adaptive(3, FrontEndKind::Conv);
    let x = uniform(&mut rng(4), 24, -1.0, 1.0);
    let hard = model.features(&x, &GateMode::Hard).unwrap();
    let pick = argmax(&model.gates(&x).unwrap().unwrap());
    let mut onehot = vec![0.0; 3];
    onehot[pick] = 1.0;
    assert_eq!(model.features(&x, &GateMode::Forced(onehot)).unwrap(), hard);
}

#[test]
fn sharp_router_fixture() {
    let g = double_softmax(&[1.0, 0.0], 100.0);
    let inner = softmax(&[1.0, 0.0]);
    let gap = 100.0 * (inner[0] - inner[1]);
    assert!((gap - 46.21).abs() < 0.01);
    assert!((g[1] - (-gap).exp() / (1.0 + (-gap).exp())).abs() < 1e-30);
    assert!(g[0] > 0.999);
}

#[test]
fn dft_basis_bank_gives_rectified_projections() {
    let n = 32;
    let half = n / 2;
    let mut rows = Vec::new();
    for m in 0..=half {
        rows.push((0..n).map(|t| (2.0 * PI * (m * t) as f64 / n as f64).cos()).collect::<Vec<_>>());
    }
    for m in 0..=half {
        rows.push((0..n).map(|t| (2.0 * PI * (m * t) as f64 / n as f64).sin()).collect::<Vec<_>>());
    }
    let kernels = rows.len();
    let mut model = Model::new(&ModelConfig {
        frontend: FrontEndKind::Multiplicative,
        input_len: n,
        kernels,
        classes: 3,
        ..Default::default()
    })
    .unwrap();
    let w = model.params.lookup("frontend.weights").unwrap();
    *model.params.tensor_mut(w) = Tensor::from_rows(&rows);
    let b = model.params.lookup("frontend.bias").unwrap();
    model.params.tensor_mut(b).fill(0.0);

    let mut r = rng(9);
    for _ in 0..20 {
        let x = uniform(&mut r, n, -1.0, 1.0);
        let spec = dft(&x);
        let feats = model.features(&x, &GateMode::Soft).unwrap();
        for m in 0..=half {
            // sin rows give −Im X.
            assert!((feats[m] - spec.re[m].max(0.0)).abs() < 1e-9);
            assert!((feats[half + 1 + m] - (-spec.im[m]).max(0.0)).abs() < 1e-9);
        }
    }
}

#[test]
fn shifted_burst_keeps_max_pooled_features() {
    let model = Model::new(&ModelConfig {
        frontend: FrontEndKind::Conv,
        input_len: 128,
        kernels: 8,
        kernel_len: 9,
        classes: 3,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let mut r = rng(6);
    // Quiet edges make the circular shift a plain delay.
    let mut x = vec![0.0; 128];
    for v in &mut x[30..90] {
        *v = common::uniform(&mut r, 1, -0.9, 0.9)[0];
    }
    let mut shifted = x.clone();
    shifted.rotate_right(10);
    let a = model.features(&x, &GateMode::Soft).unwrap();
    let b = model.features(&shifted, &GateMode::Soft).unwrap();
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() < 1e-9);
    }

    // Broadband input: filters whose peak response sits away from both the
    // edges and the wrap point are unchanged.
    let filters = model.kernel_banks()[0].clone();
    let x = uniform(&mut r, 128, -0.9, 0.9);
    let mut shifted = x.clone();
    shifted.rotate_right(10);
    let (ya, yb) = (conv1d_same(&Tensor::vector(&x), &filters).unwrap(), conv1d_same(&Tensor::vector(&shifted), &filters).unwrap());
    let (pa, ia) = pool_over_time(&ya, PoolMode::Max).unwrap();
    let (pb, ib) = pool_over_time(&yb, PoolMode::Max).unwrap();
    let (edge, n) = (4, 128);
    let mut interior = 0;
    for row in 0..8 {
        if ia[row] >= edge && ia[row] + 10 + edge < n && ib[row] >= 10 + edge && ib[row] + edge < n {
            interior += 1;
            assert!((pa.data()[row] - pb.data()[row]).abs() < 1e-9);
        }
    }
    assert!(interior > 0);
}
