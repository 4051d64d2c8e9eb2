//! Embedding tables, fully-connected stacks, a Transformer encoder block and
//! trigger-aware attention pooling.

mod attention;
mod embedding;
mod fcn;
mod transformer;

pub use attention::{trigger_attention, TriggerAttention};
pub use embedding::Embedding;
pub use fcn::{Activation, Fcn};
pub use transformer::{Encoded, TransformerBlock};
