//! Minimal reverse-mode automatic differentiation over dense f64 matrices.
//!
//! A [`Tape`] records every forward operation into an arena; [`Tape::backward`]
//! replays the arena in reverse topological order (which is creation order)
//! and accumulates gradients. Trainable parameters live outside the tape in a
//! [`ParamStore`] and are re-bound as leaves each step, so the tape can be
//! dropped and rebuilt every epoch while optimizer state persists.

mod optim;
mod sparse;
mod tape;

pub use optim::{Adam, ParamGroup, ParamStore};
pub(crate) use optim::uniform_init;
pub use sparse::SparseMatrix;
pub use tape::{PoolMode, Tape, Value};
