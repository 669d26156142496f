//! Growing ReLU multilayer perceptrons while they train.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every piece of the
//! algorithmic core:
//!
//! - [`matrix`]: row-major `f64` matrices backed by `matrixmultiply`.
//! - [`nn`]: dense networks, forward/backward passes, losses, Adam and the
//!   mini-batch training loop.
//! - [`growth`]: extenders that insert neurons into a hidden layer (shared
//!   weights, Kaiming, Frobenius-preserving, candidate-pool) and distributors
//!   that split a neuron budget across layers (probe voting, random).
//! - [`diagnostics`]: inactive-neuron audits, evaluation and gradient checks.
//! - [`data`]: in-memory datasets, synthetic blobs, splits and batching.
//!
//! IO, file formats and the experiment harness live in the `neurogrow` crate.
//! Enable the `std` feature to let the matrix kernels detect CPU features at
//! runtime.

#![no_std]

extern crate alloc;

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod growth;
pub mod matrix;
pub mod nn;

pub use error::{Error, Result};
pub use matrix::Matrix;
