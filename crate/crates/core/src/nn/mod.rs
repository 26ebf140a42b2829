//! Dense reverse-mode automatic differentiation with the layer set the
//! feedback networks use, plus Adam and finite-difference checking.

mod adam;
mod checkpoint;
mod gradcheck;
mod layers;
mod linalg;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION, META_TOPOLOGY,
};
pub use gradcheck::{grad_check, grad_check_with_step, GradCheckReport, DEFAULT_FD_STEP};
pub use layers::{
    Activation, BatchNorm, Layer, LayerKind, LayerSpec, Linear, Lstm, Sequential, DEFAULT_BN_EPSILON,
    DEFAULT_BN_MOMENTUM, DEFAULT_LEAKY_ALPHA,
};
pub use params::{ParamId, ParamSet};
pub use tape::{Gradients, Mode, Tape, Var};
pub use tensor::Tensor;
