//! Scalar automatic differentiation.
//!
//! A computation is recorded once on an append-only [`Tape`] whose nodes
//! reference only earlier nodes, then evaluated repeatedly with fresh inputs.
//! Gradients come in two flavours:
//!
//! * forward mode — [`Dual`] numbers propagated in sync with the values,
//!   one directional derivative per pass;
//! * reverse mode — a single backward sweep accumulating adjoints, all
//!   partials at once. This is the mode every training loop in the crate
//!   uses.
//!
//! [`Tape::check_grad`] compares reverse-mode output against central finite
//! differences and is wired into the layer tests of [`crate::nn`].

mod dual;
mod tape;

pub use dual::Dual;
pub use tape::{Gradient, NodeId, Op, Tape, TapeBuilder, TapeScratch};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdError {
    #[error("tape expects {expected} inputs, got {got}")]
    InputCount { expected: usize, got: usize },
    #[error("domain error at node {node}: {what}")]
    Domain { node: NodeId, what: &'static str },
    #[error("direction {0} is not a valid input index")]
    BadDirection(usize),
}

pub type AdResult<T> = Result<T, AdError>;

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
