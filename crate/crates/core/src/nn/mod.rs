//! Numeric building blocks: matrices, a reverse-mode tape, recurrent cells
//! and the Adamax optimizer.

pub mod graph;
pub mod matrix;
pub mod optim;
pub mod params;
pub mod rnn;

pub use graph::{Graph, Var};
pub use matrix::Matrix;
pub use optim::Adamax;
pub use params::{Gradients, ParamId, ParamStore};
