use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{mean_update, AttributionError, AttributionMap, Window, MAX_EXACT_WINDOW};
use crate::nn::{ModelSpec, NnError, Tensor};

/// Shared argument checks for the coalition kernels.
pub(super) fn check_game(
    model: &ModelSpec,
    x: &Tensor,
    xbar: &Tensor,
    class: usize,
    window: &Window,
) -> Result<(), AttributionError> {
    x.ensure_shape(model.input_shape())?;
    xbar.ensure_shape(model.input_shape())?;
    if class >= model.num_classes() {
        return Err(NnError::ClassOutOfRange {
            class,
            classes: model.num_classes(),
        }
        .into());
    }
    window.check_len(x.len())
}

pub(super) fn check_compatible(f: &ModelSpec, f2: &ModelSpec) -> Result<(), AttributionError> {
    if f.input_shape() != f2.input_shape() {
        return Err(AttributionError::ModelMismatch(format!(
            "input shapes {:?} and {:?} differ",
            f.input_shape(),
            f2.input_shape()
        )));
    }
    if f.num_classes() != f2.num_classes() {
        return Err(AttributionError::ModelMismatch(format!(
            "{} and {} classes",
            f.num_classes(),
            f2.num_classes()
        )));
    }
    Ok(())
}

/// `v(S)` for every coalition `S` of window players, indexed by bitmask over
/// the window's positions.
fn coalition_values(model: &ModelSpec, x: &Tensor, xbar: &Tensor, class: usize, players: &[usize]) -> Vec<f64> {
    let mut buf = xbar.data().to_vec();
    (0..1usize << players.len())
        .map(|mask| {
            for (bit, &feature) in players.iter().enumerate() {
                buf[feature] = if mask >> bit & 1 == 1 {
                    x.data()[feature]
                } else {
                    xbar.data()[feature]
                };
            }
            model.logit_unchecked(&buf, class)
        })
        .collect()
}

/// `phi_j = mean_k mean_{|S| = k, j not in S} (with[S + j] - without[S])`,
/// i.e. the average over coalition sizes of the average marginal
/// contribution at that size.
fn shapley_from_tables(players: usize, with: &[f64], without: &[f64]) -> Vec<f64> {
    let mut phi = vec![0.0; players];
    let mut size_means = vec![0.0; players];
    let mut size_counts = vec![0usize; players];
    for (j, out) in phi.iter_mut().enumerate() {
        let bit = 1usize << j;
        size_means.fill(0.0);
        size_counts.fill(0);
        for mask in (0..1usize << players).filter(|m| m & bit == 0) {
            let k = mask.count_ones() as usize;
            size_counts[k] += 1;
            mean_update(&mut size_means[k], with[mask | bit] - without[mask], size_counts[k]);
        }
        for (k, &m) in size_means.iter().enumerate() {
            mean_update(out, m, k + 1);
        }
    }
    phi
}

fn scatter(shape: &[usize], players: &[usize], phi: &[f64]) -> AttributionMap {
    let mut values = vec![0.0; shape.iter().product()];
    for (&feature, &v) in players.iter().zip(phi) {
        values[feature] = v;
    }
    AttributionMap::from_parts(shape, values)
}

fn check_exact_size(window: &Window) -> Result<(), AttributionError> {
    if window.len() > MAX_EXACT_WINDOW {
        return Err(AttributionError::WindowTooLarge {
            size: window.len(),
            max: MAX_EXACT_WINDOW,
        });
    }
    Ok(())
}

/// Exact Shapley values of the game `v(S) = logit_class(x on S, xbar
/// elsewhere)` over the players in `window`, by enumerating all coalitions.
pub fn shapley_exact(
    model: &ModelSpec,
    x: &Tensor,
    xbar: &Tensor,
    class: usize,
    window: &Window,
) -> Result<AttributionMap, AttributionError> {
    check_game(model, x, xbar, class, window)?;
    check_exact_size(window)?;
    let players = window.indices();
    let values = coalition_values(model, x, xbar, class, players);
    let phi = shapley_from_tables(players.len(), &values, &values);
    Ok(scatter(x.shape(), players, &phi))
}

/// Exact cross-model contrast: marginal terms are
/// `f(x on S + i) - f2(x on S)`. Reduces to [`shapley_exact`] when both
/// models agree.
pub fn shapley_exact_cross(
    f: &ModelSpec,
    f2: &ModelSpec,
    x: &Tensor,
    xbar: &Tensor,
    class: usize,
    window: &Window,
) -> Result<AttributionMap, AttributionError> {
    check_compatible(f, f2)?;
    check_game(f, x, xbar, class, window)?;
    check_exact_size(window)?;
    let players = window.indices();
    let with = coalition_values(f, x, xbar, class, players);
    let without = coalition_values(f2, x, xbar, class, players);
    let phi = shapley_from_tables(players.len(), &with, &without);
    Ok(scatter(x.shape(), players, &phi))
}

/// Permutation walk shared by the sampled estimators. `f2 = None` means the
/// plain game.
fn sampled_walk(
    f: &ModelSpec,
    f2: Option<&ModelSpec>,
    x: &Tensor,
    xbar: &Tensor,
    class: usize,
    window: &Window,
    permutations: usize,
    seed: u64,
) -> AttributionMap {
    let players = window.indices();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..players.len()).collect();
    let mut phi = vec![0.0; players.len()];
    let mut buf = xbar.data().to_vec();
    let empty_value = f2.unwrap_or(f).logit_unchecked(&buf, class);
    for t in 1..=permutations {
        order.shuffle(&mut rng);
        buf.copy_from_slice(xbar.data());
        let mut previous = empty_value;
        for &p in &order {
            let feature = players[p];
            buf[feature] = x.data()[feature];
            let current = f.logit_unchecked(&buf, class);
            mean_update(&mut phi[p], current - previous, t);
            previous = match f2 {
                Some(other) => other.logit_unchecked(&buf, class),
                None => current,
            };
        }
    }
    scatter(x.shape(), players, &phi)
}

/// Monte-Carlo Shapley estimate from `permutations` uniformly random orderings
/// of the window; each ordering contributes one marginal per player.
pub fn shapley_sampled(
    model: &ModelSpec,
    x: &Tensor,
    xbar: &Tensor,
    class: usize,
    window: &Window,
    permutations: usize,
    seed: u64,
) -> Result<AttributionMap, AttributionError> {
    check_game(model, x, xbar, class, window)?;
    if permutations == 0 {
        return Err(AttributionError::InvalidConfig(
            "samples must be at least 1".into(),
        ));
    }
    Ok(sampled_walk(model, None, x, xbar, class, window, permutations, seed))
}

/// Sampled cross-model contrast; both models see the same coalition draws.
#[allow(clippy::too_many_arguments)]
pub fn shapley_sampled_cross(
    f: &ModelSpec,
    f2: &ModelSpec,
    x: &Tensor,
    xbar: &Tensor,
    class: usize,
    window: &Window,
    permutations: usize,
    seed: u64,
) -> Result<AttributionMap, AttributionError> {
    check_compatible(f, f2)?;
    check_game(f, x, xbar, class, window)?;
    if permutations == 0 {
        return Err(AttributionError::InvalidConfig(
            "samples must be at least 1".into(),
        ));
    }
    Ok(sampled_walk(f, Some(f2), x, xbar, class, window, permutations, seed))
}
