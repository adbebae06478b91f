//! Dense f64 tensors, reverse-mode autodiff, the recurrent cell, and Adam.

mod adam;
mod array;
pub mod checkpoint;
mod graph;
mod gru;
mod params;

pub use adam::{adam_step, AdamState};
pub use array::Tensor;
pub use graph::{Gradients, Graph, Var};
pub use gru::{gru_cell, GruVars};
pub use params::{Init, ParameterSet};
