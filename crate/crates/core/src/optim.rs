//! Gradient-based optimizers and the stagewise learning-rate schedule.
//!
//! The schedule multiplies the base rate by `decay_factor` at each milestone
//! fraction of the total steps. Adaptive-rule constants default to the
//! canonical values (betas 0.9/0.999, eps 1e-8, rmsprop decay 0.99) and are
//! recorded in run metadata.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Gradients, Network};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimKind {
    #[default]
    Sgd,
    Adagrad,
    Rmsprop,
    Adam,
    Adamax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSpec {
    pub kind: OptimKind,
    pub base_lr: f64,
    /// SGD velocity coefficient.
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub rms_decay: f64,
    pub total_steps: usize,
    /// Fractions of `total_steps` at which the rate decays.
    pub milestones: Vec<f64>,
    pub decay_factor: f64,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        OptimizerSpec {
            kind: OptimKind::Sgd,
            base_lr: 0.01,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            rms_decay: 0.99,
            total_steps: 200_000,
            milestones: vec![0.3, 0.6, 0.8],
            decay_factor: 0.2,
        }
    }
}

impl OptimizerSpec {
    pub fn plain_gd(lr: f64, total_steps: usize) -> Self {
        OptimizerSpec {
            base_lr: lr,
            momentum: 0.0,
            total_steps,
            milestones: vec![],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0) {
            return Err(Error::invalid("OptimizerSpec", format!("base_lr = {}", self.base_lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(
                "OptimizerSpec",
                format!("momentum = {}", self.momentum),
            ));
        }
        let mut prev = 0.0;
        for &m in &self.milestones {
            if !(m > prev && m < 1.0) {
                return Err(Error::invalid(
                    "OptimizerSpec",
                    format!("milestones must be strictly increasing in (0,1), got {:?}", self.milestones),
                ));
            }
            prev = m;
        }
        Ok(())
    }

    /// Learning rate at step `t`:
    /// `base_lr · decay_factor^(#{m : t ≥ ⌊m·total_steps⌋})`.
    pub fn lr_at_step(&self, t: usize) -> Result<f64> {
        if t >= self.total_steps {
            return Err(Error::invalid(
                "lr_at_step",
                format!("step {t} outside 0..{}", self.total_steps),
            ));
        }
        let decays = self
            .milestones
            .iter()
            .filter(|&&m| t >= (m * self.total_steps as f64).floor() as usize)
            .count();
        Ok(self.base_lr * self.decay_factor.powi(decays as i32))
    }
}

/// Per-parameter accumulator: first slot plus an optional second slot for the
/// squared-gradient statistics.
#[derive(Clone, Debug)]
struct Slot {
    m: Tensor,
    v: Option<Tensor>,
}

/// Optimizer accumulators, mirroring the network's trainable tensors.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    slots: Vec<Vec<Slot>>,
    step: usize,
}

impl OptimizerState {
    /// Zero-initialized state matching the network layout.
    pub fn new(spec: &OptimizerSpec, net: &Network) -> Self {
        let second = !matches!(spec.kind, OptimKind::Sgd);
        let slots = net
            .params()
            .iter()
            .enumerate()
            .map(|(li, p)| {
                if !net.layer_spec(li).trainable {
                    return vec![];
                }
                p.tensors()
                    .iter()
                    .map(|t| Slot {
                        m: Tensor::zeros(t.shape()),
                        v: second.then(|| Tensor::zeros(t.shape())),
                    })
                    .collect()
            })
            .collect();
        OptimizerState { slots, step: 0 }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }
}

/// Applies one update. `lr` is the scheduled rate for this step.
///
/// Gradients with NaN/Inf entries abort with a divergence error naming the
/// step.
pub fn optimizer_step(
    spec: &OptimizerSpec,
    state: &mut OptimizerState,
    net: &mut Network,
    grads: &Gradients,
    lr: f64,
) -> Result<()> {
    if grads.has_non_finite() {
        return Err(Error::Divergence {
            step: state.step,
            detail: "non-finite gradient".into(),
        });
    }
    state.step += 1;
    let t = state.step as i32;

    for (li, maybe_grads) in grads.layers.iter().enumerate() {
        let Some(layer_grads) = maybe_grads else {
            continue;
        };
        let g_tensors = layer_grads.tensors();
        let slots = &mut state.slots[li];
        debug_assert_eq!(g_tensors.len(), slots.len());
        for ((param, g), slot) in net.params_mut()[li]
            .tensors_mut()
            .into_iter()
            .zip(g_tensors)
            .zip(slots.iter_mut())
        {
            match spec.kind {
                OptimKind::Sgd => {
                    for ((p, &gv), m) in param
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(slot.m.data_mut())
                    {
                        *m = spec.momentum * *m + gv;
                        *p -= lr * *m;
                    }
                }
                OptimKind::Adagrad => {
                    for ((p, &gv), acc) in param
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(slot.m.data_mut())
                    {
                        *acc += gv * gv;
                        *p -= lr * gv / (acc.sqrt() + spec.eps);
                    }
                }
                OptimKind::Rmsprop => {
                    for ((p, &gv), acc) in param
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(slot.m.data_mut())
                    {
                        *acc = spec.rms_decay * *acc + (1.0 - spec.rms_decay) * gv * gv;
                        *p -= lr * gv / (acc.sqrt() + spec.eps);
                    }
                }
                OptimKind::Adam => {
                    let c1 = 1.0 - spec.beta1.powi(t);
                    let c2 = 1.0 - spec.beta2.powi(t);
                    let v = slot.v.as_mut().expect("second moment allocated");
                    for (((p, &gv), m), vv) in param
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(slot.m.data_mut())
                        .zip(v.data_mut())
                    {
                        *m = spec.beta1 * *m + (1.0 - spec.beta1) * gv;
                        *vv = spec.beta2 * *vv + (1.0 - spec.beta2) * gv * gv;
                        let mhat = *m / c1;
                        let vhat = *vv / c2;
                        *p -= lr * mhat / (vhat.sqrt() + spec.eps);
                    }
                }
                OptimKind::Adamax => {
                    let c1 = 1.0 - spec.beta1.powi(t);
                    let u = slot.v.as_mut().expect("infinity norm allocated");
                    for (((p, &gv), m), uv) in param
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(slot.m.data_mut())
                        .zip(u.data_mut())
                    {
                        *m = spec.beta1 * *m + (1.0 - spec.beta1) * gv;
                        *uv = (spec.beta2 * *uv).max(gv.abs());
                        *p -= lr / c1 * *m / (*uv + spec.eps);
                    }
                }
            }
        }
    }
    Ok(())
}
