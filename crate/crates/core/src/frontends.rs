//! Learnable front-ends and the classifier they feed.
//!
//! * [`MultiplicativeFrontEnd`]: a bank of kernels, each projected onto the
//!   whole input, `relu(W x + b)`. Each row of `W` plays the role of one
//!   DFT basis row.
//! * [`ConvFrontEnd`]: same-padded correlation with M filters, rectified
//!   pooling across time, then a log.
//! * [`AdaptiveFrontEnd`]: K experts of one kind mixed by a
//!   [`SparseRouter`] whose gates go through two softmaxes, so the mix is
//!   close to a hard choice of a single expert.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::ops::PoolMode;
use crate::params::{ParamId, ParamSet};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrontEndKind {
    Multiplicative,
    Conv,
    Adaptive,
}

/// Architecture hyperparameters. Flat so every field can be overridden
/// from the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub frontend: FrontEndKind,
    /// Kind of each expert when `frontend` is adaptive.
    pub expert: FrontEndKind,
    pub input_len: usize,
    /// Number of kernels/filters M.
    pub kernels: usize,
    /// Convolution filter length L (odd).
    pub kernel_len: usize,
    pub pool: PoolMode,
    pub log_eps: f64,
    /// Number of experts K.
    pub experts: usize,
    /// Sharpening constant between the two router softmaxes.
    pub alpha: f64,
    pub router_width: usize,
    pub classes: usize,
    /// Seed for weight initialisation.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            frontend: FrontEndKind::Multiplicative,
            expert: FrontEndKind::Conv,
            input_len: 640,
            kernels: 512,
            kernel_len: 401,
            pool: PoolMode::Max,
            log_eps: 1e-5,
            experts: 2,
            alpha: 100.0,
            router_width: 256,
            classes: 79,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.input_len == 0 || self.kernels == 0 || self.classes == 0 {
            return err("input_len, kernels and classes must be positive".into());
        }
        let uses_conv = self.frontend == FrontEndKind::Conv
            || (self.frontend == FrontEndKind::Adaptive && self.expert == FrontEndKind::Conv);
        if uses_conv {
            if self.kernel_len % 2 == 0 {
                return err(format!("kernel_len must be odd, got {}", self.kernel_len));
            }
            if self.kernel_len > self.input_len {
                return err(format!(
                    "kernel_len {} exceeds input_len {}",
                    self.kernel_len, self.input_len
                ));
            }
            if !(self.log_eps > 0.0) {
                return err(format!("log_eps must be positive, got {}", self.log_eps));
            }
        }
        if self.frontend == FrontEndKind::Adaptive {
            if self.expert == FrontEndKind::Adaptive {
                return err("experts cannot themselves be adaptive".into());
            }
            if self.experts == 0 || self.router_width == 0 {
                return err("adaptive front-end needs experts >= 1 and router_width >= 1".into());
            }
            if !(self.alpha >= 0.0 && self.alpha <= f64::MAX.ln()) {
                return err(format!("alpha {} would overflow the outer softmax", self.alpha));
            }
        }
        Ok(())
    }
}

/// `uniform(-1/√fan_in, 1/√fan_in)` initialisation.
fn init(params: &mut ParamSet, id: String, shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Result<ParamId> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    params.add(id, Tensor::uniform(shape, bound, rng), true)
}

#[derive(Debug, Clone)]
pub struct MultiplicativeFrontEnd {
    pub weights: ParamId,
    pub bias: ParamId,
}

impl MultiplicativeFrontEnd {
    pub fn init(params: &mut ParamSet, prefix: &str, kernels: usize, input_len: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            weights: init(params, format!("{prefix}.weights"), &[kernels, input_len], input_len, rng)?,
            bias: init(params, format!("{prefix}.bias"), &[kernels], input_len, rng)?,
        })
    }

    /// `relu(W x + b)`.
    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let (w, b) = (g.param(self.weights), g.param(self.bias));
        let y = g.affine(w, x, b)?;
        Ok(g.relu(y))
    }

    pub fn feature_dim(&self, params: &ParamSet) -> usize {
        params.tensor(self.weights).shape()[0]
    }
}

#[derive(Debug, Clone)]
pub struct ConvFrontEnd {
    pub filters: ParamId,
    pub pool: PoolMode,
    pub eps: f64,
}

impl ConvFrontEnd {
    pub fn init(
        params: &mut ParamSet,
        prefix: &str,
        filters: usize,
        taps: usize,
        pool: PoolMode,
        eps: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            filters: init(params, format!("{prefix}.filters"), &[filters, taps], taps, rng)?,
            pool,
            eps,
        })
    }

    /// `ln(pool_t |x ⋆ h_m| + eps)` per filter.
    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let h = g.param(self.filters);
        let y = g.conv1d_same(x, h)?;
        let pooled = g.pool_over_time(y, self.pool)?;
        g.log_compress(pooled, self.eps)
    }

    pub fn feature_dim(&self, params: &ParamSet) -> usize {
        params.tensor(self.filters).shape()[0]
    }
}

/// One expert of an adaptive bank.
#[derive(Debug, Clone)]
pub enum Expert {
    Multiplicative(MultiplicativeFrontEnd),
    Conv(ConvFrontEnd),
}

impl Expert {
    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        match self {
            Expert::Multiplicative(fe) => fe.forward(g, x),
            Expert::Conv(fe) => fe.forward(g, x),
        }
    }

    pub fn feature_dim(&self, params: &ParamSet) -> usize {
        match self {
            Expert::Multiplicative(fe) => fe.feature_dim(params),
            Expert::Conv(fe) => fe.feature_dim(params),
        }
    }

    /// The kernel bank parameter (`[M×N]` or `[M×L]`).
    pub fn kernels(&self) -> ParamId {
        match self {
            Expert::Multiplicative(fe) => fe.weights,
            Expert::Conv(fe) => fe.filters,
        }
    }
}

/// Three affine layers with relu between them, followed by
/// `softmax(alpha · softmax(x_sr))`.
#[derive(Debug, Clone)]
pub struct SparseRouter {
    pub layers: [(ParamId, ParamId); 3],
    pub alpha: f64,
}

impl SparseRouter {
    pub fn init(
        params: &mut ParamSet,
        prefix: &str,
        input_len: usize,
        width: usize,
        experts: usize,
        alpha: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let dims = [(input_len, width), (width, width), (width, experts)];
        let mut layers = Vec::with_capacity(3);
        for (i, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let w = init(params, format!("{prefix}.l{}.weights", i + 1), &[fan_out, fan_in], fan_in, rng)?;
            let b = init(params, format!("{prefix}.l{}.bias", i + 1), &[fan_out], fan_in, rng)?;
            layers.push((w, b));
        }
        Ok(Self {
            layers: [layers[0], layers[1], layers[2]],
            alpha,
        })
    }

    /// Output of the last router layer, `x_sr`.
    pub fn scores(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let (wn, bn) = (g.param(w), g.param(b));
            h = g.affine(wn, h, bn)?;
            if i < 2 {
                h = g.relu(h);
            }
        }
        Ok(h)
    }

    /// Gate weights from router scores.
    pub fn gates_from_scores(&self, g: &mut Graph, scores: NodeId) -> NodeId {
        let inner = g.softmax(scores);
        let sharpened = g.scale(inner, self.alpha);
        g.softmax(sharpened)
    }

    pub fn route(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let scores = self.scores(g, x)?;
        Ok(self.gates_from_scores(g, scores))
    }

    pub fn experts(&self, params: &ParamSet) -> usize {
        params.tensor(self.layers[2].0).shape()[0]
    }
}

/// `softmax(alpha · softmax(scores))` without a graph.
pub fn double_softmax(scores: &[f64], alpha: f64) -> Vec<f64> {
    let inner = crate::ops::softmax(scores);
    let scaled: Vec<f64> = inner.iter().map(|p| alpha * p).collect();
    crate::ops::softmax(&scaled)
}

/// How an adaptive front-end combines its experts.
#[derive(Debug, Clone, PartialEq)]
pub enum GateMode {
    /// Weighted sum with the router's gates (training and default inference).
    Soft,
    /// Only the arg-max expert is evaluated.
    Hard,
    /// Gates supplied by the caller.
    Forced(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct AdaptiveFrontEnd {
    pub experts: Vec<Expert>,
    pub router: SparseRouter,
}

impl AdaptiveFrontEnd {
    pub fn new(experts: Vec<Expert>, router: SparseRouter, params: &ParamSet) -> Result<Self> {
        let first = experts
            .first()
            .ok_or_else(|| Error::Config("adaptive front-end needs at least one expert".into()))?
            .feature_dim(params);
        if let Some(bad) = experts.iter().find(|e| e.feature_dim(params) != first) {
            return Err(Error::Config(format!(
                "expert feature dims differ: {first} vs {}",
                bad.feature_dim(params)
            )));
        }
        if router.experts(params) != experts.len() {
            return Err(Error::Config(format!(
                "router has {} outputs for {} experts",
                router.experts(params),
                experts.len()
            )));
        }
        Ok(Self { experts, router })
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId, mode: &GateMode) -> Result<NodeId> {
        match mode {
            GateMode::Soft => {
                let gates = self.router.route(g, x)?;
                self.mix(g, x, gates)
            }
            GateMode::Forced(weights) => {
                if weights.len() != self.experts.len() {
                    return Err(Error::dim("forced gates", &[weights.len()], &[self.experts.len()]));
                }
                let gates = g.input(Tensor::vector(weights), false);
                self.mix(g, x, gates)
            }
            GateMode::Hard => {
                let gates = self.router.route(g, x)?;
                let pick = argmax(g.value(gates).data());
                self.experts[pick].forward(g, x)
            }
        }
    }

    fn mix(&self, g: &mut Graph, x: NodeId, gates: NodeId) -> Result<NodeId> {
        let feats = self
            .experts
            .iter()
            .map(|e| e.forward(g, x))
            .collect::<Result<Vec<_>>>()?;
        g.weighted_sum(gates, &feats)
    }
}

#[derive(Debug, Clone)]
pub struct ClassifierHead {
    pub weights: ParamId,
    pub bias: ParamId,
}

impl ClassifierHead {
    pub fn init(params: &mut ParamSet, classes: usize, features: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            weights: init(params, "head.weights".into(), &[classes, features], features, rng)?,
            bias: init(params, "head.bias".into(), &[classes], features, rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, features: NodeId) -> Result<NodeId> {
        let (w, b) = (g.param(self.weights), g.param(self.bias));
        g.affine(w, features, b)
    }
}

#[derive(Debug, Clone)]
pub enum FrontEnd {
    Multiplicative(MultiplicativeFrontEnd),
    Conv(ConvFrontEnd),
    Adaptive(AdaptiveFrontEnd),
}

impl FrontEnd {
    pub fn forward(&self, g: &mut Graph, x: NodeId, mode: &GateMode) -> Result<NodeId> {
        match self {
            FrontEnd::Multiplicative(fe) => fe.forward(g, x),
            FrontEnd::Conv(fe) => fe.forward(g, x),
            FrontEnd::Adaptive(fe) => fe.forward(g, x, mode),
        }
    }
}

/// Parameter handles of a front-end plus head; evaluated against any
/// compatible [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Architecture {
    pub config: ModelConfig,
    pub frontend: FrontEnd,
    pub head: ClassifierHead,
}

impl Architecture {
    pub fn logits(&self, g: &mut Graph, x: NodeId, mode: &GateMode) -> Result<NodeId> {
        let features = self.frontend.forward(g, x, mode)?;
        self.head.forward(g, features)
    }

    /// Router gates for an adaptive front-end.
    pub fn gates(&self, g: &mut Graph, x: NodeId) -> Result<Option<NodeId>> {
        match &self.frontend {
            FrontEnd::Adaptive(fe) => fe.router.route(g, x).map(Some),
            _ => Ok(None),
        }
    }
}

/// An architecture together with its parameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub arch: Architecture,
    pub params: ParamSet,
}

impl Model {
    /// Builds and initialises a model from its configuration.
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        let c = config;
        let make_expert = |kind: FrontEndKind, prefix: &str, params: &mut ParamSet, rng: &mut ChaCha8Rng| -> Result<Expert> {
            Ok(match kind {
                FrontEndKind::Multiplicative => {
                    Expert::Multiplicative(MultiplicativeFrontEnd::init(params, prefix, c.kernels, c.input_len, rng)?)
                }
                _ => Expert::Conv(ConvFrontEnd::init(params, prefix, c.kernels, c.kernel_len, c.pool, c.log_eps, rng)?),
            })
        };
        let frontend = match c.frontend {
            FrontEndKind::Multiplicative => {
                FrontEnd::Multiplicative(MultiplicativeFrontEnd::init(&mut params, "frontend", c.kernels, c.input_len, &mut rng)?)
            }
            FrontEndKind::Conv => FrontEnd::Conv(ConvFrontEnd::init(
                &mut params,
                "frontend",
                c.kernels,
                c.kernel_len,
                c.pool,
                c.log_eps,
                &mut rng,
            )?),
            FrontEndKind::Adaptive => {
                let experts = (0..c.experts)
                    .map(|i| make_expert(c.expert, &format!("expert{i}"), &mut params, &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                let router = SparseRouter::init(&mut params, "router", c.input_len, c.router_width, c.experts, c.alpha, &mut rng)?;
                FrontEnd::Adaptive(AdaptiveFrontEnd::new(experts, router, &params)?)
            }
        };
        let head = ClassifierHead::init(&mut params, c.classes, c.kernels, &mut rng)?;
        Ok(Self {
            arch: Architecture {
                config: config.clone(),
                frontend,
                head,
            },
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.arch.config
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.config.input_len {
            return Err(Error::dim("model input", &[x.len()], &[self.arch.config.input_len]));
        }
        Ok(())
    }

    pub fn logits_with(&self, x: &[f64], mode: &GateMode) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut g = Graph::new(&self.params);
        let xi = g.input(Tensor::vector(x), false);
        let out = self.arch.logits(&mut g, xi, mode)?;
        Ok(g.value(out).data().to_vec())
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.logits_with(x, &GateMode::Soft)
    }

    pub fn features(&self, x: &[f64], mode: &GateMode) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut g = Graph::new(&self.params);
        let xi = g.input(Tensor::vector(x), false);
        let out = self.arch.frontend.forward(&mut g, xi, mode)?;
        Ok(g.value(out).data().to_vec())
    }

    /// Gate weights, or `None` for non-adaptive models.
    pub fn gates(&self, x: &[f64]) -> Result<Option<Vec<f64>>> {
        self.check_input(x)?;
        let mut g = Graph::new(&self.params);
        let xi = g.input(Tensor::vector(x), false);
        Ok(self.arch.gates(&mut g, xi)?.map(|id| g.value(id).data().to_vec()))
    }

    /// Router output before the softmaxes, for adaptive models.
    pub fn router_scores(&self, x: &[f64]) -> Result<Option<Vec<f64>>> {
        self.check_input(x)?;
        let FrontEnd::Adaptive(fe) = &self.arch.frontend else {
            return Ok(None);
        };
        let mut g = Graph::new(&self.params);
        let xi = g.input(Tensor::vector(x), false);
        let s = fe.router.scores(&mut g, xi)?;
        Ok(Some(g.value(s).data().to_vec()))
    }

    /// Gates plus soft- and hard-routed logits from a single evaluation of
    /// every expert. `None` for non-adaptive models.
    pub fn adaptive_outputs(&self, x: &[f64]) -> Result<Option<AdaptiveOutputs>> {
        self.check_input(x)?;
        let FrontEnd::Adaptive(fe) = &self.arch.frontend else {
            return Ok(None);
        };
        let mut g = Graph::new(&self.params);
        let xi = g.input(Tensor::vector(x), false);
        let gates = fe.router.route(&mut g, xi)?;
        let feats = fe.experts.iter().map(|e| e.forward(&mut g, xi)).collect::<Result<Vec<_>>>()?;
        let mixed = g.weighted_sum(gates, &feats)?;
        let soft = self.arch.head.forward(&mut g, mixed)?;
        let pick = argmax(g.value(gates).data());
        let hard = self.arch.head.forward(&mut g, feats[pick])?;
        Ok(Some(AdaptiveOutputs {
            gates: g.value(gates).data().to_vec(),
            soft_logits: g.value(soft).data().to_vec(),
            hard_logits: g.value(hard).data().to_vec(),
        }))
    }

    /// Kernel banks `[M×N]`/`[M×L]`: one for single front-ends, one per expert
    /// for adaptive ones.
    pub fn kernel_banks(&self) -> Vec<&Tensor> {
        match &self.arch.frontend {
            FrontEnd::Multiplicative(fe) => vec![self.params.tensor(fe.weights)],
            FrontEnd::Conv(fe) => vec![self.params.tensor(fe.filters)],
            FrontEnd::Adaptive(fe) => fe.experts.iter().map(|e| self.params.tensor(e.kernels())).collect(),
        }
    }

    pub fn head_weights(&self) -> &Tensor {
        self.params.tensor(self.arch.head.weights)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveOutputs {
    pub gates: Vec<f64>,
    pub soft_logits: Vec<f64>,
    pub hard_logits: Vec<f64>,
}

/// Index of the largest value, first on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops;
    use std::f64::consts::PI;

    fn mult_config(kernels: usize, input_len: usize, classes: usize) -> ModelConfig {
        ModelConfig {
            frontend: FrontEndKind::Multiplicative,
            kernels,
            input_len,
            classes,
            ..Default::default()
        }
    }

    #[test]
    fn multiplicative_matches_affine_relu() {
        let model = Model::new(&mult_config(6, 10, 3)).unwrap();
        let x: Vec<f64> = (0..10).map(|i| (i as f64 * 0.37).cos()).collect();
        let FrontEnd::Multiplicative(fe) = &model.arch.frontend else { unreachable!() };
        let expected = ops::relu(
            &ops::affine(model.params.tensor(fe.weights), &Tensor::vector(&x), model.params.tensor(fe.bias)).unwrap(),
        );
        assert_eq!(model.features(&x, &GateMode::Soft).unwrap(), expected.data());
        let zero = model.features(&[0.0; 10], &GateMode::Soft).unwrap();
        assert_eq!(zero, ops::relu(model.params.tensor(fe.bias)).data());
    }

    #[test]
    fn cosine_bank_peaks_at_matching_row() {
        let n = 64;
        let mut model = Model::new(&mult_config(8, n, 2)).unwrap();
        let FrontEnd::Multiplicative(fe) = model.arch.frontend.clone() else { unreachable!() };
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|k| (0..n).map(|t| (2.0 * PI * (k + 1) as f64 * t as f64 / n as f64).cos()).collect())
            .collect();
        *model.params.tensor_mut(fe.weights) = Tensor::from_rows(&rows);
        model.params.tensor_mut(fe.bias).fill(0.0);
        let feats = model.features(&rows[4], &GateMode::Soft).unwrap();
        assert_eq!(argmax(&feats), 4);
        assert!((feats[4] - n as f64 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn wrong_input_length_is_dimension_error() {
        let model = Model::new(&mult_config(4, 10, 3)).unwrap();
        assert!(matches!(model.logits(&[0.0; 9]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn conv_frontend_impulse_filter() {
        let cfg = ModelConfig {
            frontend: FrontEndKind::Conv,
            kernels: 3,
            kernel_len: 5,
            input_len: 32,
            classes: 2,
            ..Default::default()
        };
        let mut model = Model::new(&cfg).unwrap();
        let FrontEnd::Conv(fe) = model.arch.frontend.clone() else { unreachable!() };
        let mut filters = Tensor::zeros(&[3, 5]);
        for m in 0..3 {
            filters.data_mut()[m * 5 + 2] = 1.0;
        }
        *model.params.tensor_mut(fe.filters) = filters;
        let x: Vec<f64> = (0..32).map(|i| 0.9 * (i as f64 * 0.5).sin()).collect();
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let feats = model.features(&x, &GateMode::Soft).unwrap();
        assert!(feats.iter().all(|&f| (f - (peak + 1e-5).ln()).abs() < 1e-12));
        let silent = model.features(&[0.0; 32], &GateMode::Soft).unwrap();
        assert!(silent.iter().all(|&f| f == 1e-5f64.ln()));
    }

    #[test]
    fn conv_input_shorter_than_filter_is_size_error() {
        let cfg = ModelConfig {
            frontend: FrontEndKind::Conv,
            kernels: 2,
            kernel_len: 5,
            input_len: 8,
            classes: 2,
            ..Default::default()
        };
        let model = Model::new(&cfg).unwrap();
        let FrontEnd::Conv(fe) = &model.arch.frontend else { unreachable!() };
        let mut g = Graph::new(&model.params);
        let x = g.input(Tensor::vector(&[0.1; 3]), false);
        assert!(matches!(fe.forward(&mut g, x), Err(Error::Size(_))));
        let bad = ModelConfig { kernel_len: 4, ..cfg };
        assert!(matches!(Model::new(&bad), Err(Error::Config(_))));
    }

    fn adaptive_config(experts: usize, alpha: f64) -> ModelConfig {
        ModelConfig {
            frontend: FrontEndKind::Adaptive,
            expert: FrontEndKind::Multiplicative,
            experts,
            alpha,
            kernels: 5,
            input_len: 12,
            router_width: 7,
            classes: 3,
            ..Default::default()
        }
    }

    #[test]
    fn single_expert_equals_expert() {
        let model = Model::new(&adaptive_config(1, 100.0)).unwrap();
        let FrontEnd::Adaptive(fe) = &model.arch.frontend else { unreachable!() };
        let x: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let mut g = Graph::new(&model.params);
        let xi = g.input(Tensor::vector(&x), false);
        let direct = fe.experts[0].forward(&mut g, xi).unwrap();
        assert_eq!(model.features(&x, &GateMode::Soft).unwrap(), g.value(direct).data());
    }

    #[test]
    fn forced_one_hot_selects_expert() {
        let model = Model::new(&adaptive_config(3, 100.0)).unwrap();
        let FrontEnd::Adaptive(fe) = &model.arch.frontend else { unreachable!() };
        let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.9).cos()).collect();
        for pick in 0..3 {
            let mut gates = vec![0.0; 3];
            gates[pick] = 1.0;
            let mixed = model.features(&x, &GateMode::Forced(gates)).unwrap();
            let mut g = Graph::new(&model.params);
            let xi = g.input(Tensor::vector(&x), false);
            let direct = fe.experts[pick].forward(&mut g, xi).unwrap();
            assert_eq!(mixed, g.value(direct).data());
        }
    }

    #[test]
    fn adaptive_outputs_match_separate_passes() {
        let model = Model::new(&adaptive_config(2, 3.0)).unwrap();
        let x: Vec<f64> = (0..12).map(|i| (i as f64 * 1.3).sin()).collect();
        let out = model.adaptive_outputs(&x).unwrap().unwrap();
        assert_eq!(out.soft_logits, model.logits(&x).unwrap());
        assert_eq!(out.hard_logits, model.logits_with(&x, &GateMode::Hard).unwrap());
        assert_eq!(Some(out.gates), model.gates(&x).unwrap());
    }

    #[test]
    fn alpha_zero_is_uniform() {
        let model = Model::new(&adaptive_config(4, 0.0)).unwrap();
        let gates = model.gates(&[0.3; 12]).unwrap().unwrap();
        assert!(gates.iter().all(|&w| w == 0.25));
    }

    #[test]
    fn double_softmax_cases() {
        let g = double_softmax(&[0.7, 0.7], 100.0);
        assert_eq!(g, vec![0.5, 0.5]);
        let g = double_softmax(&[1.0, 0.0], 100.0);
        // inner gap = tanh(1/2), outer logit gap = 100·tanh(1/2) ≈ 46.21
        let gap = 100.0 * 0.5f64.tanh();
        assert!((g[1] - 1.0 / (1.0 + gap.exp())).abs() < 1e-30);
        assert!(g[0] > 0.999);
        let g = double_softmax(&[1e300, -1e300, 3.0], 700.0);
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn expert_dims_must_agree() {
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = Expert::Multiplicative(MultiplicativeFrontEnd::init(&mut params, "a", 4, 8, &mut rng).unwrap());
        let b = Expert::Multiplicative(MultiplicativeFrontEnd::init(&mut params, "b", 5, 8, &mut rng).unwrap());
        let router = SparseRouter::init(&mut params, "r", 8, 3, 2, 10.0, &mut rng).unwrap();
        assert!(matches!(AdaptiveFrontEnd::new(vec![a, b], router, &params), Err(Error::Config(_))));
    }

    #[test]
    fn zero_input_zero_head_gives_bias() {
        let mut model = Model::new(&mult_config(4, 10, 3)).unwrap();
        let head = model.arch.head.clone();
        model.params.tensor_mut(head.weights).fill(0.0);
        let logits = model.logits(&[0.0; 10]).unwrap();
        assert_eq!(logits, model.params.tensor(head.bias).data());
    }

    #[test]
    fn init_is_seeded() {
        let a = Model::new(&mult_config(4, 10, 3)).unwrap();
        let b = Model::new(&mult_config(4, 10, 3)).unwrap();
        assert_eq!(a.params.checksum(), b.params.checksum());
        let c = Model::new(&ModelConfig { seed: 1, ..mult_config(4, 10, 3) }).unwrap();
        assert_ne!(a.params.checksum(), c.params.checksum());
        let bound = 1.0 / 10f64.sqrt();
        assert!(a.params.iter().next().unwrap().tensor.data().iter().all(|v| v.abs() <= bound));
    }
}
