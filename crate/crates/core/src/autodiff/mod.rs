//! Reverse-mode differentiation, Adam, Gumbel-softmax and a finite-difference checker.

mod adam;
pub mod gradcheck;
mod graph;
mod gumbel;
mod params;

pub use adam::{AdamConfig, AdamState};
pub use graph::{sigmoid, softmax_in_place, Graph, Node, Primitive, Var, GUMBEL_CLAMP, PROB_CLAMP};
pub use gumbel::{argmax_one_hot, gumbel_softmax};
pub(crate) use params::hex;
pub use params::{Param, ParamId, ParamStore};
