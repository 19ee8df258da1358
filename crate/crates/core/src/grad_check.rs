//! Central-difference verification of analytic gradients.

use std::fmt;

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

/// Step and error normalisation for a gradient check.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Central-difference half step.
    pub step: f64,
    /// Lower bound on the relative-error denominator, so coordinates whose
    /// true gradient is zero compare absolutely.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-6,
        }
    }
}

/// Location of one checked scalar.
#[derive(Debug, Clone, PartialEq)]
pub enum Coordinate {
    Input { input: usize, index: usize },
    Param { id: String, index: usize },
}

impl fmt::Display for Coordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coordinate::Input { input, index } => write!(f, "input {input}[{index}]"),
            Coordinate::Param { id, index } => write!(f, "{id}[{index}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst: Option<Coordinate>,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    /// Coordinates whose ±step probe crossed a relu/max-pool kink.
    pub skipped: usize,
}

impl GradCheckReport {
    fn empty() -> Self {
        Self {
            max_rel_err: 0.0,
            worst: None,
            analytic: 0.0,
            numeric: 0.0,
            checked: 0,
            skipped: 0,
        }
    }

    fn record(&mut self, coord: Coordinate, analytic: f64, numeric: f64, floor: f64) {
        let denom = analytic.abs().max(numeric.abs()).max(floor);
        let err = (analytic - numeric).abs() / denom;
        self.checked += 1;
        if err > self.max_rel_err || self.worst.is_none() {
            self.max_rel_err = err;
            self.worst = Some(coord);
            self.analytic = analytic;
            self.numeric = numeric;
        }
    }

    /// Folds another report in, keeping the worse coordinate.
    pub fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        self.skipped += other.skipped;
        if other.worst.is_some() && (self.worst.is_none() || other.max_rel_err > self.max_rel_err) {
            self.max_rel_err = other.max_rel_err;
            self.worst = other.worst;
            self.analytic = other.analytic;
            self.numeric = other.numeric;
        }
    }
}

fn scalar(graph: &Graph, out: NodeId) -> Result<f64> {
    graph
        .value(out)
        .item()
        .ok_or_else(|| Error::Contract("gradient check needs a scalar output".into()))
}

/// Checks gradients with respect to graph inputs built from `point`.
pub fn check_inputs<F>(params: &ParamSet, point: &[Tensor], build: F, cfg: GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let eval = |pt: &[Tensor]| -> Result<(f64, u64)> {
        let mut g = Graph::new(params);
        let ids: Vec<NodeId> = pt.iter().map(|t| g.input(t.clone(), false)).collect();
        let out = build(&mut g, &ids)?;
        Ok((scalar(&g, out)?, g.kink_signature()))
    };

    let mut g = Graph::new(params);
    let ids: Vec<NodeId> = point.iter().map(|t| g.input(t.clone(), true)).collect();
    let out = build(&mut g, &ids)?;
    scalar(&g, out)?;
    let base_sig = g.kink_signature();
    let grads = g.backward(out)?;

    let mut report = GradCheckReport::empty();
    let mut probe = point.to_vec();
    for (input, id) in ids.iter().enumerate() {
        let analytic = grads.wrt(*id).expect("input requires grad").data().to_vec();
        for index in 0..point[input].len() {
            let orig = point[input].data()[index];
            probe[input].data_mut()[index] = orig + cfg.step;
            let (plus, sig_plus) = eval(&probe)?;
            probe[input].data_mut()[index] = orig - cfg.step;
            let (minus, sig_minus) = eval(&probe)?;
            probe[input].data_mut()[index] = orig;
            if sig_plus != base_sig || sig_minus != base_sig {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * cfg.step);
            report.record(Coordinate::Input { input, index }, analytic[index], numeric, cfg.floor);
        }
    }
    Ok(report)
}

/// Checks gradients with respect to every trainable parameter.
///
/// `params` is perturbed in place and restored before returning.
pub fn check_params<F>(params: &mut ParamSet, build: F, cfg: GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<NodeId>,
{
    let (analytic, base_sig) = {
        let mut g = Graph::new(params);
        let out = build(&mut g)?;
        scalar(&g, out)?;
        (g.backward(out)?.params, g.kink_signature())
    };
    let eval = |p: &ParamSet| -> Result<(f64, u64)> {
        let mut g = Graph::new(p);
        let out = build(&mut g)?;
        Ok((scalar(&g, out)?, g.kink_signature()))
    };

    let mut report = GradCheckReport::empty();
    let ids: Vec<_> = params.ids().collect();
    for pid in ids {
        if !params.get(pid).trainable {
            continue;
        }
        let name = params.get(pid).id.clone();
        for index in 0..params.tensor(pid).len() {
            let orig = params.tensor(pid).data()[index];
            params.tensor_mut(pid).data_mut()[index] = orig + cfg.step;
            let (plus, sig_plus) = eval(params)?;
            params.tensor_mut(pid).data_mut()[index] = orig - cfg.step;
            let (minus, sig_minus) = eval(params)?;
            params.tensor_mut(pid).data_mut()[index] = orig;
            if sig_plus != base_sig || sig_minus != base_sig {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * cfg.step);
            report.record(
                Coordinate::Param {
                    id: name.clone(),
                    index,
                },
                analytic.get(pid).data()[index],
                numeric,
                cfg.floor,
            );
        }
    }
    Ok(report)
}
