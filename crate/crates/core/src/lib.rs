//! Deep-learning building blocks and variational solvers for classical and
//! quantum spin systems.
//!
//! The crate is organised around a scalar automatic-differentiation tape
//! ([`autodiff`]) that powers the neural-network stack ([`nn`], [`optim`]) and
//! the differentiable statevector simulator ([`quantum`], [`variational`]).
//! On top of these sit four solvers:
//!
//! * [`ising`] — Metropolis sampling of the 2D Ising model and a
//!   confidence-based critical-temperature estimator,
//! * [`variational`] — VQE for the XXZ chain and QAOA for Max-Cut,
//! * [`nqs`] — neural-quantum-state ground-state search with variational
//!   Monte Carlo,
//! * [`rbm`] — restricted Boltzmann machines trained by contrastive
//!   divergence.
//!
//! [`data`] handles MNIST IDX ingestion, batching and evaluation metrics.

pub mod autodiff;
pub mod data;
pub mod ising;
pub mod nn;
// pub mod nqs;
pub mod optim;
pub mod quantum;
// pub mod rbm;
pub mod rng;
pub mod tensor;
pub mod variational;

pub use tensor::Tensor;
