//! Neural network stack for blood pressure regression from pulse waveforms.
//!
//! Everything numerical is built on a small reverse-mode automatic
//! differentiation tape ([`graph::Graph`]): convolutions, pooling, batch
//! normalization, linear layers, and a diagonal state-space kernel. On top of
//! the tape sit five one-dimensional backbones (LeNet, two residual networks,
//! an Inception variant, and a structured state-space model), an optional
//! demographics encoder fused after global pooling, an Adam optimizer, a
//! finite-difference gradient checker, and a self-describing binary
//! checkpoint format.

pub mod adam;
pub mod build;
pub mod checkpoint;
pub mod element;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod params;
pub mod s4;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use element::Element;
pub use error::{Error, Result};
pub use gradcheck::{grad_check, grad_check_named, max_rel_err};
pub use graph::{Graph, NodeId};
pub use model::{
    demographic_features, Backbone, Model, ModelSpec, NormStats, Target, TrainBatch,
};
pub use params::{ParamSet, ParamTensor};
pub use s4::StateSpace;
