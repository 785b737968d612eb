//! Numeric core: tensors, a reverse-mode tape with higher-order gradients,
//! the entropy and Wasserstein losses, network definitions, Adam and
//! checkpoint storage.

pub mod checkpoint;
pub mod error;
pub mod graph;
pub mod losses;
pub mod nets;
pub mod optim;
pub mod scalar;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use nets::{ArchConfig, Mode, NetworkHandle, NetworkName, NetworkSpec};
pub use optim::{Adam, AdamConfig};
pub use scalar::Scalar;
pub use tensor::{ConvGeom, Tensor};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Graph32 = Graph<f32>;
pub type Graph64 = Graph<f64>;
pub type Network32 = NetworkHandle<f32>;
pub type Network64 = NetworkHandle<f64>;
