//! Minimal reverse-mode automatic differentiation.
//!
//! Values live on a [`Tape`]; each primitive records its inputs and the
//! intermediates it needs, and [`Tape::backward`] replays them in reverse.

mod adam;
mod array;
pub mod container;
pub mod gradcheck;
pub mod kernels;
mod lstm;
mod ops;
pub mod suite;
mod tape;

pub use adam::Adam;
pub use array::Tensor;
pub use container::Container;
pub use gradcheck::{grad_check, GradCheckReport};
pub use ops::LstmWeights;
pub use tape::{Tape, Var};
