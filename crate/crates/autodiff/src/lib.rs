//! Minimal dense-tensor numeric core.
//!
//! Tensors are row-major with an explicit shape. Differentiable programs are
//! recorded on a [`Graph`] (a Wengert tape): forward ops push nodes, and
//! [`Graph::backward`] replays them in reverse to produce [`Gradients`] keyed
//! by parameter name. Learnable state lives in a [`ParameterSet`] and is
//! updated by [`AdamW`].
//!
//! Everything is generic over [`Real`] so the same network code runs in `f32`
//! for training and in `f64` for finite-difference checks.

mod adamw;
pub mod checkpoint;
mod conv;
mod denormal;
mod error;
pub mod gradcheck;
mod graph;
mod params;
mod real;
mod tensor;

pub use adamw::{AdamW, AdamWConfig};
pub use denormal::flush_subnormals;
pub use error::{Result, TensorError};
pub use graph::{Gradients, Graph, Var};
pub use params::ParameterSet;
pub use real::Real;
pub use tensor::Tensor;
