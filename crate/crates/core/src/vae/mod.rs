//! Variational model over positions and sign-ambiguous orientations.

pub mod bessel;
mod elbo;
mod model;
mod train;
pub mod vmf;

pub use elbo::{
    elbo, elbo_with_likelihood, elbo_with_noise, mean_loss, orientation_loglik, ElboOutput,
    ElboTerms, ModelGradients, OrientationLikelihood, Trainable,
};
pub use model::{Decoded, Dims, ManifoldModel, TrainingRecord};
pub use train::{reconstruction_rmse, train, TrainConfig};
pub use vmf::{
    antipodal_vmf_log_density, log_normalizer, mean_resultant_length, vmf_log_density, VmfParams,
};
