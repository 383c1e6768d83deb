//! Minimal deterministic reverse-mode autodiff.
//!
//! The design is a classic Wengert tape: a forward pass records ops into a
//! [`Tape`] arena, `backward` replays them in reverse accumulating vector-
//! Jacobian products, and the tape is dropped afterwards. All arithmetic is
//! f64 and single-threaded, so identical inputs give bit-identical outputs.

mod checkpoint;
mod gradcheck;
mod store;
mod tape;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::finite_diff_check;
pub use store::{AdamParams, ParameterStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
