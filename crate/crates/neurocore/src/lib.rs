//! Minimal reverse-mode automatic differentiation for small policy and
//! sequence networks.
//!
//! The crate provides a [`Graph`] tape over dense `f64` [`Tensor`]s, the
//! [`Dense`], [`Mlp`] and [`GruCell`] layers, the losses the agents train
//! on (masked softmax, supervised contrastive, clipped PPO, double-Q
//! targets, action cross-entropy), an [`AdamState`] optimizer, bit-exact
//! JSON [`Checkpoint`]s and a finite-difference [`gradcheck`] suite.
//!
//! ```
//! use neurocore::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.leaf(Tensor::scalar(3.0));
//! let y = g.mul(x, x);
//! let grads = g.backward(y).unwrap();
//! assert_eq!(grads.get(x), vec![6.0]);
//! ```

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod loss;
pub mod rng;
pub mod tensor;

pub use adam::{clip_global_norm, AdamState};
pub use checkpoint::Checkpoint;
pub use error::NeuroError;
pub use graph::{Gradients, Graph, NodeId};
pub use layers::{Activation, Dense, GruCell, LayerSpec, Mlp, Parameterized};
pub use loss::{
    argmax, contrastive_loss, contrastive_pair, double_q_target, masked_argmax, masked_log_softmax,
    masked_softmax, ContrastiveConfig, PpoCoefficients,
};
pub use rng::{stream, StreamRng};
pub use tensor::Tensor;
