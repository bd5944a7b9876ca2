use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::shapley::check_game;
use super::{mean_update, AttributionError, AttributionMap, Window};
use crate::nn::{ModelSpec, Tensor};

fn masked(x: &Tensor, xbar: &Tensor, window: &Window) -> Vec<f64> {
    let mut buf = xbar.data().to_vec();
    for &i in window.indices() {
        buf[i] = x.data()[i];
    }
    buf
}

/// Riemann-sum integrated gradients along the straight path from `xbar` to
/// `x` restricted to `window`:
/// `map[i] = (x[i] - xbar[i]) * mean_{k=1..K} d logit / d x_i (xbar + k/K (x_w - xbar))`.
pub fn integrated_gradients(
    model: &ModelSpec,
    x: &Tensor,
    xbar: &Tensor,
    class: usize,
    steps: usize,
    window: &Window,
) -> Result<AttributionMap, AttributionError> {
    check_game(model, x, xbar, class, window)?;
    if steps == 0 {
        return Err(AttributionError::InvalidConfig("steps must be at least 1".into()));
    }
    let target = masked(x, xbar, window);
    let diff: Vec<f64> = target.iter().zip(xbar.data()).map(|(a, b)| a - b).collect();
    let mut mean_grad = vec![0.0; x.len()];
    let mut point = vec![0.0; x.len()];
    for k in 1..=steps {
        let alpha = k as f64 / steps as f64;
        for ((p, b), d) in point.iter_mut().zip(xbar.data()).zip(&diff) {
            *p = b + alpha * d;
        }
        let grad = model.gradient_unchecked(&point, class);
        for (m, g) in mean_grad.iter_mut().zip(grad) {
            mean_update(m, g, k);
        }
    }
    let mut values = vec![0.0; x.len()];
    for &i in window.indices() {
        values[i] = diff[i] * mean_grad[i];
    }
    Ok(AttributionMap::from_parts(x.shape(), values))
}

/// SmoothGrad: input gradient of the target logit averaged over `count`
/// Gaussian perturbations (standard deviation `sigma`) of the window-masked
/// input. Zero outside the window.
#[allow(clippy::too_many_arguments)]
pub fn smoothgrad(
    model: &ModelSpec,
    x: &Tensor,
    class: usize,
    count: usize,
    sigma: f64,
    seed: u64,
    window: &Window,
    xbar: &Tensor,
) -> Result<AttributionMap, AttributionError> {
    check_game(model, x, xbar, class, window)?;
    if count == 0 {
        return Err(AttributionError::InvalidConfig(
            "noise_count must be at least 1".into(),
        ));
    }
    let noise = Normal::new(0.0, sigma)
        .map_err(|e| AttributionError::InvalidConfig(format!("noise_sigma: {e}")))?;
    let base = masked(x, xbar, window);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean_grad = vec![0.0; x.len()];
    let mut noisy = base.clone();
    for t in 1..=count {
        if sigma > 0.0 {
            for (n, b) in noisy.iter_mut().zip(&base) {
                *n = b + noise.sample(&mut rng);
            }
        }
        let grad = model.gradient_unchecked(&noisy, class);
        for (m, g) in mean_grad.iter_mut().zip(grad) {
            mean_update(m, g, t);
        }
    }
    let mut values = vec![0.0; x.len()];
    for &i in window.indices() {
        values[i] = mean_grad[i];
    }
    Ok(AttributionMap::from_parts(x.shape(), values))
}
