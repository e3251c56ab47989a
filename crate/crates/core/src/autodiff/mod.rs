//! Network evaluation and the derivatives the residual loss needs: the exact
//! time derivative of the output (forward mode) and the exact parameter
//! gradient of the loss built on it (reverse mode over the forward-mode pass).

mod dual;
mod grad;
mod mlp;

pub use dual::{DualScalar, Scalar};
pub use grad::{loss, loss_and_gradient, loss_and_gradient_sharded};
pub use mlp::{MlpModel, INPUT_WIDTH};
