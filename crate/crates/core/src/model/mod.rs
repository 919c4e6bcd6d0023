//! Miniature OPT-style decoder and its on-disk format.

mod checkpoint;
mod config;
mod transformer;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, FORMAT_VERSION};
pub use config::{Init, ModelConfig, ParamSpec, LINEAR_LAYERS, MIN_VOCAB, PRESETS};
pub use transformer::{MiniTransformer, Mode, INIT_STD};
