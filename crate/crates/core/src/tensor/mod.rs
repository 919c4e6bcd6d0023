//! Full-precision tensors, reverse-mode autodiff, AdamW, and allocation
//! accounting.

pub mod arena;
mod kernels;
pub mod optim;
mod params;
mod tape;
#[allow(clippy::module_inception)]
mod tensor;

pub use arena::{Buffer, ScopeGuard, Watermark};
pub use optim::{AdamW, AdamWConfig};
pub use params::ParamStore;
pub use tape::{Gradients, NodeId, Tape, Var};
pub use tensor::{numel, Tensor};

