//! Small feed-forward networks with exact Jacobians and hand-written
//! reverse passes, plus the optimizer and clustering used to train them.

mod adam;
mod kmeans;
mod mlp;
mod rbf;

pub use adam::{Adam, AdamConfig};
pub use kmeans::{kmeans, KMeans};
pub use mlp::{Activation, Dense, Mlp, MlpGradients, MlpTape};
pub use rbf::{RbfNet, RbfTape};
