//! Learning continuous-time dynamics from noisy trajectories with ODE
//! networks, separable Hamiltonian ODE networks, and a time-reversal
//! symmetry regularizer.
//!
//! The crate provides:
//!
//! - a small reverse-mode autodiff engine over dense `f64` tensors
//!   ([`autodiff`]), including second-order support for networks whose
//!   *input gradients* define the dynamics;
//! - classical Runge-Kutta and leapfrog integrators that can record their
//!   arithmetic on the tape so whole rollouts stay differentiable
//!   ([`integrators`]);
//! - benchmark dynamical systems and dataset generation ([`dynamics`]);
//! - the ODE-network models ([`models`]), training losses built around
//!   reversing operators ([`losses`]), and evaluation metrics
//!   ([`metrics`]);
//! - dataset/checkpoint I/O, experiment configuration, the training loop,
//!   and the command-line interface ([`dataio`], [`config`], [`train`],
//!   [`cli`]).

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod dataio;
pub mod dynamics;
pub mod error;
pub mod integrators;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod train;

pub use error::{Error, Result};
