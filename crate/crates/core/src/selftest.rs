//! Oracle suites run by `adaptft selftest`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, NodeId};
use crate::dsp::{dft, make_window, stft, stft_via_filterbank, WindowKind};
use crate::error::Result;
use crate::frontends::{FrontEndKind, Model, ModelConfig};
use crate::grad_check::{check_params, GradCheckConfig};
use crate::ops::PoolMode;
use crate::tensor::Tensor;
use crate::train::{loss_node, LossKind};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_signal(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Parseval's identity on random signals plus small hand-checked spectra.
pub fn dft_suite(signals: usize, seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..signals {
        let len = rng.random_range(1..=256);
        let x = random_signal(&mut rng, len);
        let time: f64 = x.iter().map(|v| v * v).sum();
        let freq = dft(&x).energy() / len as f64;
        worst = worst.max((time - freq).abs() / time.max(f64::MIN_POSITIVE));
    }
    // impulse → flat ones; constant → N at DC
    let impulse = dft(&[1.0, 0.0, 0.0, 0.0]);
    let constant = dft(&[1.0; 4]);
    let fixtures = impulse.re == vec![1.0; 4]
        && impulse.im.iter().all(|&v| v == 0.0)
        && (constant.re[0] - 4.0).abs() < 1e-12
        && constant.re[1..].iter().chain(&constant.im).all(|v| v.abs() < 1e-12);
    SuiteResult {
        name: "dft",
        passed: worst < 1e-9 && fixtures,
        detail: format!("max Parseval rel err {worst:.3e} over {signals} signals, fixtures {}", if fixtures { "ok" } else { "FAILED" }),
    }
}

/// STFT computed frame by frame against its filter-bank form.
pub fn stft_suite(trials: usize, seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds = [WindowKind::Rectangular, WindowKind::Hann, WindowKind::Hamming];
    let mut worst = 0.0f64;
    let mut failure = None;
    for _ in 0..trials {
        let n = rng.random_range(2..=32);
        let hop = rng.random_range(1..=n);
        let len = rng.random_range(n..=n + 64);
        let x = random_signal(&mut rng, len);
        let kind = kinds[rng.random_range(0..kinds.len())];
        let run = || -> Result<f64> {
            let window = make_window(kind, n)?;
            let frames = stft(&x, &window, hop)?;
            let mut err = 0.0f64;
            for bin in 0..n {
                let bank = stft_via_filterbank(&x, &window, hop, bin)?;
                for (frame, &(re, im)) in frames.iter().zip(&bank) {
                    err = err.max((frame.re[bin] - re).abs()).max((frame.im[bin] - im).abs());
                }
            }
            Ok(err)
        };
        match run() {
            Ok(e) => worst = worst.max(e),
            Err(e) => failure = Some(e.to_string()),
        }
    }
    SuiteResult {
        name: "stft",
        passed: failure.is_none() && worst < 1e-9,
        detail: match failure {
            Some(e) => format!("error: {e}"),
            None => format!("max abs err {worst:.3e} over {trials} triples"),
        },
    }
}

fn harmonic_input(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let f = rng.random_range(0.02..0.2);
    let phase = rng.random_range(0.0..2.0 * PI);
    (0..len)
        .map(|t| 0.7 * (2.0 * PI * f * t as f64 + phase).sin() + 0.1 * rng.random_range(-1.0..1.0))
        .collect()
}

/// Small configurations of every front-end kind.
pub fn grad_check_configs() -> Vec<(&'static str, ModelConfig)> {
    let base = ModelConfig {
        input_len: 16,
        kernels: 6,
        kernel_len: 5,
        classes: 4,
        router_width: 5,
        experts: 2,
        alpha: 1.0,
        ..Default::default()
    };
    vec![
        ("multiplicative", ModelConfig { frontend: FrontEndKind::Multiplicative, ..base.clone() }),
        ("conv/max", ModelConfig { frontend: FrontEndKind::Conv, ..base.clone() }),
        ("conv/avg", ModelConfig { frontend: FrontEndKind::Conv, pool: PoolMode::Avg, ..base.clone() }),
        ("adaptive/conv", ModelConfig { frontend: FrontEndKind::Adaptive, expert: FrontEndKind::Conv, ..base.clone() }),
        ("adaptive/multiplicative", ModelConfig { frontend: FrontEndKind::Adaptive, expert: FrontEndKind::Multiplicative, ..base }),
    ]
}

/// Central-difference checks of whole models on random inputs and labels.
pub fn grad_suite(points: usize, seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = GradCheckConfig::default();
    let mut worst = (0.0f64, String::new());
    let mut failure = None;
    let configs = grad_check_configs();
    for p in 0..points {
        let (name, mc) = &configs[p % configs.len()];
        let mc = ModelConfig { seed: rng.random(), ..mc.clone() };
        let x = harmonic_input(mc.input_len, &mut rng);
        let label = rng.random_range(0..mc.classes);
        let loss = if p % 2 == 0 { LossKind::CrossEntropy } else { LossKind::Huber { delta: 0.05 } };
        let run = || -> Result<f64> {
            let mut model = Model::new(&mc)?;
            let arch = model.clone();
            let report = check_params(
                &mut model.params,
                |g: &mut Graph| -> Result<NodeId> {
                    let xi = g.input(Tensor::vector(&x), false);
                    loss_node(&arch, g, xi, label, loss)
                },
                cfg,
            )?;
            Ok(report.max_rel_err)
        };
        match run() {
            Ok(e) if e > worst.0 => worst = (e, name.to_string()),
            Ok(_) => {}
            Err(e) => failure = Some(format!("{name}: {e}")),
        }
    }
    SuiteResult {
        name: "grad",
        passed: failure.is_none() && worst.0 < 1e-4,
        detail: match failure {
            Some(e) => format!("error: {e}"),
            None => format!("max rel err {:.3e} ({}) over {points} points", worst.0, worst.1),
        },
    }
}

pub fn run_all() -> Vec<SuiteResult> {
    vec![dft_suite(200, 1), stft_suite(50, 2), grad_suite(20, 3)]
}
