//! Dense f64 tensors, a reverse-mode tape, MLPs and optimizers.

mod checkpoint;
pub mod gradcheck;
pub mod kernels;
mod mlp;
mod optim;
mod tape;
mod tensor;

pub use checkpoint::{load_json, save_json, MlpCheckpoint};
pub use mlp::{Gradients, Layer, Mlp, MlpVars};
pub use optim::{Adam, AdamConfig, Optimizer, OptimizerConfig, Sgd, SgdConfig};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
