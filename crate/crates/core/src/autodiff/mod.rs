//! Minimal reverse-mode differentiation over dense `f64` tensors.
//!
//! Operations record themselves on a [`Graph`] tape. Convolution is
//! cross-correlation (no kernel flip) and there is no broadcasting beyond the
//! per-channel bias of `conv3d` and `linear`.

pub(crate) mod conv;
mod gemm;
mod gradcheck;
mod graph;
mod tensor;

pub use conv::ConvGeom;
pub use gradcheck::grad_check;
pub use graph::{softmax_values, Graph, Var};
pub use tensor::Tensor;
