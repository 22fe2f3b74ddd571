//! Marginal-likelihood fitting of kernel hyperparameters.
//!
//! Parameters are optimized in log space inside fixed bounds; the noise
//! variance is never fitted.

use log::warn;
use rand::Rng;

use super::kernel::KernelSpec;
use super::posterior::{factorize, lml_from_factor, log_marginal_likelihood, StageDataset};
use crate::error::Result;
use crate::inner_opt::{refine_from, Bounds};
use crate::rng::{substream, Stream};

pub const LENGTHSCALE_BOUNDS: (f64, f64) = (1e-2, 1e3);
pub const AMPLITUDE_BOUNDS: (f64, f64) = (1e-3, 1e4);
pub const RESTARTS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct HyperFit {
    pub kernel: KernelSpec,
    pub log_marginal_likelihood: f64,
    pub initial_log_marginal_likelihood: f64,
    /// Set when every restart failed numerically and `init` was returned.
    pub fell_back: bool,
}

fn log_bounds(kernel: &KernelSpec) -> Bounds {
    let d = kernel.input_dim();
    let mut lo = vec![AMPLITUDE_BOUNDS.0.ln()];
    let mut hi = vec![AMPLITUDE_BOUNDS.1.ln()];
    lo.extend(std::iter::repeat_n(LENGTHSCALE_BOUNDS.0.ln(), d));
    hi.extend(std::iter::repeat_n(LENGTHSCALE_BOUNDS.1.ln(), d));
    Bounds::new(lo, hi).expect("static bounds are valid")
}

/// Maximizes the log marginal likelihood from `init` plus random restarts.
///
/// The result never has a lower evidence than `init`.
pub fn fit_hyperparams(data: &StageDataset, init: &KernelSpec, noise: f64, seed: u64) -> Result<HyperFit> {
    let init_lml = log_marginal_likelihood(data, init, noise)?;
    if data.is_empty() {
        return Ok(HyperFit {
            kernel: init.clone(),
            log_marginal_likelihood: init_lml,
            initial_log_marginal_likelihood: init_lml,
            fell_back: false,
        });
    }
    let bounds = log_bounds(init);
    let objective = |theta: &[f64]| -> f64 {
        let k = init.with_log_params(theta);
        match factorize(&k, data.inputs(), noise) {
            Ok((chol, _)) => lml_from_factor(&chol, data),
            Err(_) => f64::NEG_INFINITY,
        }
    };

    let mut start = init.log_params();
    bounds.clamp(&mut start);
    let mut starts = vec![start];
    let mut rng = substream(seed, Stream::Hyperparameters, 0);
    for _ in 0..RESTARTS {
        starts.push(
            (0..bounds.dim())
                .map(|i| bounds.lower()[i] + rng.random::<f64>() * bounds.width(i))
                .collect(),
        );
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in &starts {
        let (theta, v) = refine_from(&objective, &bounds, s, 1e-7, 400);
        if v.is_finite() && best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((theta, v));
        }
    }
    match best {
        Some((theta, v)) if v >= init_lml => Ok(HyperFit {
            kernel: init.with_log_params(&theta),
            log_marginal_likelihood: v,
            initial_log_marginal_likelihood: init_lml,
            fell_back: false,
        }),
        Some(_) => Ok(HyperFit {
            kernel: init.clone(),
            log_marginal_likelihood: init_lml,
            initial_log_marginal_likelihood: init_lml,
            fell_back: false,
        }),
        None => {
            warn!("all hyperparameter restarts failed; keeping the initial kernel");
            Ok(HyperFit {
                kernel: init.clone(),
                log_marginal_likelihood: init_lml,
                initial_log_marginal_likelihood: init_lml,
                fell_back: true,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::posterior::kernel_matrix;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn recovers_generating_lengthscale() {
        let truth = KernelSpec::gaussian(1.0, vec![], vec![3.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.random_range(-10.0..10.0)]).collect();
        let mut k = kernel_matrix(&truth, &xs);
        for i in 0..50 {
            k[(i, i)] += 1e-8;
        }
        let l = k.cholesky().unwrap().l();
        let z = DVector::from_iterator(50, (0..50).map(|_| StandardNormal.sample(&mut rng)));
        let y = l * z;
        let mut data = StageDataset::new(0, 1, 1);
        for (x, v) in xs.iter().zip(y.iter()) {
            data.push(&[], x, &[*v]).unwrap();
        }
        let init = KernelSpec::gaussian(1.0, vec![], vec![1.0]).unwrap();
        let fit = fit_hyperparams(&data, &init, 1e-4, 0).unwrap();
        let l_hat = fit.kernel.x_lengthscales[0];
        assert!(l_hat > 1.5 && l_hat < 6.0, "fitted lengthscale {l_hat}");
        assert!(fit.log_marginal_likelihood >= fit.initial_log_marginal_likelihood - 1e-9);
    }

    #[test]
    fn never_worse_than_init() {
        let mut data = StageDataset::new(0, 1, 1);
        data.push(&[], &[0.5], &[0.3]).unwrap();
        let init = KernelSpec::gaussian(0.09, vec![], vec![2.0]).unwrap();
        let fit = fit_hyperparams(&data, &init, 1e-4, 3).unwrap();
        assert!(fit.log_marginal_likelihood >= fit.initial_log_marginal_likelihood - 1e-9);
        let recomputed = log_marginal_likelihood(&data, &fit.kernel, 1e-4).unwrap();
        assert!((recomputed - fit.log_marginal_likelihood).abs() < 1e-9);
    }

    #[test]
    fn constant_outputs_stay_finite_and_bounded() {
        let mut data = StageDataset::new(1, 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..15 {
            data.push(&[rng.random_range(-1.0..1.0)], &[rng.random_range(-1.0..1.0)], &[2.0])
                .unwrap();
        }
        let init = KernelSpec::gaussian(1.0, vec![1.0], vec![1.0]).unwrap();
        let fit = fit_hyperparams(&data, &init, 1e-4, 1).unwrap();
        assert!(fit.log_marginal_likelihood.is_finite());
        let k = &fit.kernel;
        assert!(k.amplitude >= AMPLITUDE_BOUNDS.0 * (1.0 - 1e-12) && k.amplitude <= AMPLITUDE_BOUNDS.1 * (1.0 + 1e-12));
        for l in k.lengthscales() {
            assert!(l >= LENGTHSCALE_BOUNDS.0 * (1.0 - 1e-12) && l <= LENGTHSCALE_BOUNDS.1 * (1.0 + 1e-12));
        }
    }
}
