//! Diagonal Gaussian policy head: log density, entropy, sampling, and the
//! closed-form gradients the PPO loss needs.

use std::f64::consts::{PI, TAU};

use rand::Rng;

/// Number of action dimensions (left and right wheel commands).
pub const ACTION_DIM: usize = 2;

/// Draw one standard normal via Box-Muller.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        if u1 > 0.0 {
            let u2: f64 = rng.gen();
            return (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos();
        }
    }
}

/// Sample an action from N(mean, exp(log_std)^2), componentwise.
pub fn sample<R: Rng>(mean: &[f64; 2], log_std: &[f64; 2], rng: &mut R) -> [f64; 2] {
    [
        mean[0] + log_std[0].exp() * standard_normal(rng),
        mean[1] + log_std[1].exp() * standard_normal(rng),
    ]
}

/// Log density of `action` under the diagonal Gaussian, summed over the two
/// action dimensions.
pub fn log_prob(mean: &[f64; 2], log_std: &[f64; 2], action: &[f64; 2]) -> f64 {
    let mut lp = 0.0;
    for d in 0..ACTION_DIM {
        let z = (action[d] - mean[d]) / log_std[d].exp();
        lp += -0.5 * z * z - log_std[d] - 0.5 * (2.0 * PI).ln();
    }
    lp
}

/// (d log_prob / d mean, d log_prob / d log_std).
pub fn log_prob_grad(mean: &[f64; 2], log_std: &[f64; 2], action: &[f64; 2]) -> ([f64; 2], [f64; 2]) {
    let mut d_mean = [0.0; 2];
    let mut d_log_std = [0.0; 2];
    for d in 0..ACTION_DIM {
        let sigma = log_std[d].exp();
        let z = (action[d] - mean[d]) / sigma;
        d_mean[d] = z / sigma;
        d_log_std[d] = z * z - 1.0;
    }
    (d_mean, d_log_std)
}

/// Differential entropy, summed over dimensions: 0.5 ln(2 pi e) + log_std
/// per dimension. Independent of the mean.
pub fn entropy(log_std: &[f64; 2]) -> f64 {
    log_std.iter().map(|ls| 0.5 * (TAU * std::f64::consts::E).ln() + ls).sum()
}
