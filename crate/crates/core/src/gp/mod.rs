//! Dense Gaussian-process regression.

mod fit;
mod info;
mod kernel;
mod posterior;
mod rff;

pub use fit::{fit_hyperparams, HyperFit, AMPLITUDE_BOUNDS, LENGTHSCALE_BOUNDS, RESTARTS};
pub use info::information_gain;
pub use kernel::{kernel_eval, KernelKind, KernelSpec};
pub use posterior::{
    fit_posterior, log_marginal_likelihood, posterior_mean_var, GpPosterior, Prediction, StageDataset,
};
pub use rff::{sample_path, RffSample};

/// GP noise variance used throughout the experiments.
pub const DEFAULT_NOISE: f64 = 1e-4;
