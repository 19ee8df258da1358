//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use adaptft::autodiff::{Graph, NodeId};
use adaptft::frontends::{FrontEndKind, Model, ModelConfig};
use adaptft::grad_check::{check_inputs, check_params, GradCheckConfig, GradCheckReport};
use adaptft::ops::PoolMode;
use adaptft::params::ParamSet;
use adaptft::train::{loss_node, LossKind};
use adaptft::{Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}

/// Differentiable ops checked one at a time.
pub const OPS: &[&str] = &[
    "affine",
    "relu",
    "conv1d_same",
    "pool_max",
    "pool_avg",
    "log_compress",
    "softmax",
    "scale",
    "add",
    "weighted_sum",
    "sum",
    "cross_entropy",
    "huber",
];

/// Contracts a vector node with a fixed random direction, giving a scalar.
fn project(g: &mut Graph, v: NodeId, dir: &[f64]) -> Result<NodeId> {
    let w = g.input(Tensor::new(vec![1, dir.len()], dir.to_vec())?, false);
    let b = g.input(Tensor::vector(&[0.0]), false);
    let y = g.affine(w, v, b)?;
    Ok(g.sum(y))
}

/// Central-difference check of a single op at a random point.
pub fn op_grad_check(op: &str, rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let params = ParamSet::new();
    let cfg = GradCheckConfig::default();
    let n = rng.random_range(3..=9);
    let m = rng.random_range(2..=5);
    let dir_n = uniform(rng, n, -1.0, 1.0);
    let dir_m = uniform(rng, m, -1.0, 1.0);
    let vec_n = |rng: &mut ChaCha8Rng| Tensor::vector(&uniform(rng, n, -1.0, 1.0));
    match op {
        "affine" => {
            let point = [
                Tensor::new(vec![m, n], uniform(rng, m * n, -1.0, 1.0))?,
                vec_n(rng),
                Tensor::vector(&uniform(rng, m, -1.0, 1.0)),
            ];
            check_inputs(&params, &point, |g, ids| {
                let y = g.affine(ids[0], ids[1], ids[2])?;
                project(g, y, &dir_m)
            }, cfg)
        }
        "relu" => check_inputs(&params, &[vec_n(rng)], |g, ids| {
            let y = g.relu(ids[0]);
            project(g, y, &dir_n)
        }, cfg),
        "conv1d_same" | "pool_max" | "pool_avg" => {
            let taps = 2 * rng.random_range(0..=2) + 1;
            let len = n.max(taps);
            let point = [
                Tensor::vector(&uniform(rng, len, -1.0, 1.0)),
                Tensor::new(vec![m, taps], uniform(rng, m * taps, -1.0, 1.0))?,
            ];
            let mode = if op == "pool_avg" { PoolMode::Avg } else { PoolMode::Max };
            check_inputs(&params, &point, |g, ids| {
                let y = g.conv1d_same(ids[0], ids[1])?;
                let p = g.pool_over_time(y, mode)?;
                project(g, p, &dir_m)
            }, cfg)
        }
        "log_compress" => {
            let eps = 10f64.powf(rng.random_range(-5.0..-1.0));
            let point = [Tensor::vector(&uniform(rng, n, 0.05, 2.0))];
            check_inputs(&params, &point, |g, ids| {
                let y = g.log_compress(ids[0], eps)?;
                project(g, y, &dir_n)
            }, cfg)
        }
        "softmax" => {
            let point = [Tensor::vector(&uniform(rng, n, -3.0, 3.0))];
            check_inputs(&params, &point, |g, ids| {
                let y = g.softmax(ids[0]);
                project(g, y, &dir_n)
            }, cfg)
        }
        "scale" => {
            let factor = rng.random_range(-5.0..5.0);
            check_inputs(&params, &[vec_n(rng)], |g, ids| {
                let y = g.scale(ids[0], factor);
                project(g, y, &dir_n)
            }, cfg)
        }
        "add" => check_inputs(&params, &[vec_n(rng), vec_n(rng)], |g, ids| {
            let y = g.add(ids[0], ids[1])?;
            project(g, y, &dir_n)
        }, cfg),
        "weighted_sum" => {
            let point: Vec<Tensor> = std::iter::once(Tensor::vector(&uniform(rng, m, -1.0, 1.0)))
                .chain((0..m).map(|_| vec_n(rng)))
                .collect();
            check_inputs(&params, &point, |g, ids| {
                let y = g.weighted_sum(ids[0], &ids[1..])?;
                project(g, y, &dir_n)
            }, cfg)
        }
        "sum" => check_inputs(&params, &[vec_n(rng)], |g, ids| Ok(g.sum(ids[0])), cfg),
        "cross_entropy" => {
            let target = rng.random_range(0..n);
            let point = [Tensor::vector(&uniform(rng, n, -3.0, 3.0))];
            check_inputs(&params, &point, |g, ids| g.cross_entropy(ids[0], target), cfg)
        }
        "huber" => {
            let delta = rng.random_range(0.1..2.0);
            let target = Tensor::vector(&uniform(rng, n, -2.0, 2.0));
            let point = [Tensor::vector(&uniform(rng, n, -2.0, 2.0))];
            check_inputs(&params, &point, |g, ids| g.huber(ids[0], target.clone(), delta), cfg)
        }
        other => panic!("unknown op {other}"),
    }
}

/// Small models of each front-end kind. The adaptive one keeps the
/// default router sharpness.
pub fn small_models() -> Vec<(&'static str, ModelConfig)> {
    let base = ModelConfig {
        input_len: 16,
        kernels: 6,
        kernel_len: 5,
        classes: 4,
        router_width: 5,
        experts: 2,
        ..Default::default()
    };
    vec![
        ("multiplicative", ModelConfig { frontend: FrontEndKind::Multiplicative, ..base.clone() }),
        ("conv", ModelConfig { frontend: FrontEndKind::Conv, ..base.clone() }),
        ("adaptive", ModelConfig { frontend: FrontEndKind::Adaptive, expert: FrontEndKind::Conv, ..base }),
    ]
}

/// Parameter gradient check of a whole model on a random input and label.
pub fn model_grad_check(mc: &ModelConfig, rng: &mut ChaCha8Rng, loss: LossKind) -> Result<GradCheckReport> {
    let mc = ModelConfig { seed: rng.random(), ..mc.clone() };
    let x = uniform(rng, mc.input_len, -1.0, 1.0);
    let label = rng.random_range(0..mc.classes);
    let mut model = Model::new(&mc)?;
    let arch = model.clone();
    check_params(
        &mut model.params,
        |g: &mut Graph| {
            let xi = g.input(Tensor::vector(&x), false);
            loss_node(&arch, g, xi, label, loss)
        },
        GradCheckConfig::default(),
    )
}
