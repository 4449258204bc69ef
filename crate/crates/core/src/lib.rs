pub mod array;
pub mod autodiff;
pub mod error;

pub use array::Array;
pub use autodiff::{backward, Graph, Tensor};
pub use error::{Error, Result};
pub mod models;
pub mod rng;
pub mod linalg;
pub mod tasks;
pub mod baselines;
pub mod rule;
pub mod dco;
pub mod meta;
pub mod theorem;
pub mod harness;
