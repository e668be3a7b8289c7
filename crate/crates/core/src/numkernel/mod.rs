//! Dense numeric primitives: matrices, layers with explicit backward
//! passes, losses, AdamW, cosine similarity and seeded random streams.

mod layers;
mod loss;
mod matrix;
mod optim;
mod rng;
mod similarity;

pub use layers::{
    dropout, relu, relu_backward, tanh, tanh_backward, Dropout, DropoutCache, ForwardCache,
    LinearLayer, Mode,
};
pub use loss::{mse_loss, softmax_cross_entropy};
pub(crate) use loss::{row_nll, squared_error_sum};
pub use matrix::{matmul, matmul_at, matmul_bt, Matrix};
pub use optim::{AdamW, AdamWConfig, Param};
pub use rng::{fnv1a64, RngStream};
pub use similarity::{cosine_similarity, Cosine};
