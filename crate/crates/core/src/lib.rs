//! Cooperative deep-learning CSI feedback for massive MIMO.
//!
//! The crate is split the way the system is: [`channel`] synthesizes correlated
//! multi-user angular-domain CSI, [`nn`] is a small reverse-mode autodiff
//! engine with the layers the feedback networks need, [`bitstream`] turns
//! encoder outputs into feedback bits, [`models`] wires encoders, decoders and
//! the cooperative BS-side networks, [`train`] runs mini-batch training and
//! [`eval`] computes the reported metrics and comparison sweeps.

pub mod bitstream;
pub mod channel;
pub mod config;
pub mod error;
pub mod eval;
pub mod models;
pub mod nn;
pub mod rng;
pub mod train;

pub use channel::{
    generate_dataset, load_dataset, save_dataset, AngularChannelSample, ArrayGeometry, ChannelDataset, DatasetConfig,
    PathSet, PerturbSpec, SplitKind, UeGroup,
};
pub use error::{Error, Result};
pub use rng::KeyedRng;
