//! Loss functions with optional L1/L2 penalties.

use super::{NnError, NnResult};
use crate::autodiff::{NodeId, TapeBuilder};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Mean of the squared component differences.
    Mse,
    /// `−Σ p_i ln q_i` against a one-hot (or probability) target.
    CategoricalCrossEntropy,
}

/// Base loss plus `l1·Σ|θ| + l2·Σθ²` over the trainable parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub l1: f64,
    pub l2: f64,
}

impl LossSpec {
    pub fn new(kind: LossKind, l1: f64, l2: f64) -> Self {
        assert!(l1 >= 0.0 && l1.is_finite(), "l1 coefficient");
        assert!(l2 >= 0.0 && l2.is_finite(), "l2 coefficient");
        LossSpec { kind, l1, l2 }
    }

    pub fn mse() -> Self {
        Self::new(LossKind::Mse, 0.0, 0.0)
    }

    pub fn cross_entropy() -> Self {
        Self::new(LossKind::CategoricalCrossEntropy, 0.0, 0.0)
    }

    pub fn with_l1(mut self, l1: f64) -> Self {
        assert!(l1 >= 0.0 && l1.is_finite());
        self.l1 = l1;
        self
    }

    pub fn with_l2(mut self, l2: f64) -> Self {
        assert!(l2 >= 0.0 && l2.is_finite());
        self.l2 = l2;
        self
    }
}

/// Penalised loss of a single prediction; `params` are all trainable
/// weights entering the regularisation terms.
pub fn loss(pred: &Tensor, target: &Tensor, spec: &LossSpec, params: &[f64]) -> NnResult<f64> {
    if pred.shape() != target.shape() {
        return Err(NnError::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let base = match spec.kind {
        LossKind::Mse => {
            pred.data()
                .iter()
                .zip(target.data())
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / pred.len() as f64
        }
        LossKind::CategoricalCrossEntropy => {
            let mut acc = 0.0;
            for (p, t) in pred.data().iter().zip(target.data()) {
                if *t != 0.0 {
                    if *p <= 0.0 {
                        return Err(NnError::LogOfZero);
                    }
                    acc -= t * p.ln();
                }
            }
            acc
        }
    };
    Ok(base + penalty(spec, params))
}

fn penalty(spec: &LossSpec, params: &[f64]) -> f64 {
    let mut acc = 0.0;
    if spec.l1 > 0.0 {
        acc += spec.l1 * params.iter().map(|p| p.abs()).sum::<f64>();
    }
    if spec.l2 > 0.0 {
        acc += spec.l2 * params.iter().map(|p| p * p).sum::<f64>();
    }
    acc
}

/// Tape MSE against target input nodes.
pub fn mse_on(b: &mut TapeBuilder, pred: &[NodeId], target: &[NodeId]) -> NodeId {
    debug_assert_eq!(pred.len(), target.len());
    let sq: Vec<NodeId> = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = b.sub(p, t);
            b.mul(d, d)
        })
        .collect();
    let total = b.sum(&sq);
    b.scale(total, 1.0 / pred.len() as f64)
}

/// Softmax fused with cross-entropy on the tape:
/// `−Σ t_i z_i + m + ln Σ exp(z_i − m)` with `m = max z`, so no
/// intermediate probability can underflow to an invalid `ln`.
pub fn softmax_cross_entropy_on(
    b: &mut TapeBuilder,
    logits: &[NodeId],
    target: &[NodeId],
) -> NodeId {
    debug_assert_eq!(logits.len(), target.len());
    let mut m = logits[0];
    for &z in &logits[1..] {
        m = b.max(m, z);
    }
    let exps: Vec<NodeId> = logits
        .iter()
        .map(|&z| {
            let s = b.sub(z, m);
            b.exp(s)
        })
        .collect();
    let total = b.sum(&exps);
    let lse = b.ln(total);
    let log_norm = b.add(lse, m);
    let tz = b.dot(target, logits);
    b.sub(log_norm, tz)
}

/// `l1·Σ|θ| + l2·Σθ²` appended to `base` on the tape. `|θ|` is expressed
/// as `relu(θ) + relu(−θ)` to stay inside the tape op set.
pub fn penalty_on(b: &mut TapeBuilder, base: NodeId, params: &[NodeId], spec: &LossSpec) -> NodeId {
    let mut out = base;
    if spec.l1 > 0.0 {
        let absolutes: Vec<NodeId> = params
            .iter()
            .map(|&p| {
                let pos = b.relu(p);
                let np = b.neg(p);
                let neg = b.relu(np);
                b.add(pos, neg)
            })
            .collect();
        let total = b.sum(&absolutes);
        let scaled = b.scale(total, spec.l1);
        out = b.add(out, scaled);
    }
    if spec.l2 > 0.0 {
        let squares: Vec<NodeId> = params.iter().map(|&p| b.mul(p, p)).collect();
        let total = b.sum(&squares);
        let scaled = b.scale(total, spec.l2);
        out = b.add(out, scaled);
    }
    out
}
