//! Dense-tensor reverse-mode automatic differentiation.
//!
//! The crate provides just enough machinery to train small policy networks on
//! the CPU: a [`Tape`] recording a fixed set of primitives, named
//! [`ParamSet`]s with fan-in scaled initialisation, the [`adam_step`]
//! optimizer, deterministic [`RngStream`]s, text [`Checkpoint`]s and a
//! [`finite_diff_check`] oracle for verifying gradients.
//!
//! Everything is generic over [`Scalar`]; train in `f32` and verify in `f64`.

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, clip_grad_norm, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use error::{Result, TensorError};
pub use gradcheck::{finite_diff_check, is_kink, GradCheckReport};
pub use params::{Bound, ParamId, ParamSet};
pub use rng::RngStream;
pub use scalar::Scalar;
pub use tape::{apply_primitive, OpKind, Tape, Var};
pub use tensor::Tensor;
