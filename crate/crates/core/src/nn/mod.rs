//! Dense tensors, a reverse-mode tape, and the layer types used by the
//! encoder, decoder, actor and critic.

pub mod graph;
pub mod layers;
pub mod optim;
pub mod tensor;

pub use graph::{Gradients, Graph, ParamId, ParamStore, Var};
pub use layers::{Affine, GaussianHead, GruCell, InitScheme, Mlp};
pub use optim::{clip_grad_norm, Adam};
pub use tensor::Tensor;
