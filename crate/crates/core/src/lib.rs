//! Desk-scale few-shot adaptation lab.
//!
//! Tiny OPT-style decoder-only transformers trained from scratch in full
//! precision, adapted to a binary NLI task three ways:
//!
//! * **ICL**: labelled support examples prepended to the query, no updates.
//! * **PBFT**: fine-tuning on the full prompt, supervising the answer token.
//! * **CD**: a student sees only the query and learns to match a teacher
//!   that sees the supports, with loss `α·KL + (1−α)·CE`.
//!
//! LoRA and BitFit adapters restrict what PBFT and CD may update. The
//! [`bench`] module measures accuracy, peak tensor memory and wall time
//! across methods, support counts and seeds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapters;
pub mod bench;
pub mod cli;
pub mod data;
pub mod error;
pub mod methods;
pub mod model;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
