use super::shapley::check_compatible;
use super::{
    integrated_gradients, shapley_exact, shapley_exact_cross, shapley_sampled,
    shapley_sampled_cross, smoothgrad, AttributionError, AttributionMap, AttributionResult,
    Backend, BackendConfig, TargetPolicy, Window,
};
use crate::nn::{ModelSpec, NnError, Tensor};

/// Input taking `x` on `coalition` and `xbar` elsewhere.
pub fn masked_input(x: &Tensor, xbar: &Tensor, coalition: &[usize]) -> Result<Tensor, AttributionError> {
    xbar.ensure_shape(x.shape())?;
    let mut data = xbar.data().to_vec();
    for &i in coalition {
        if i >= data.len() {
            return Err(AttributionError::IndexOutOfRange {
                index: i,
                len: data.len(),
            });
        }
        data[i] = x.data()[i];
    }
    Ok(Tensor::from_parts_unchecked(x.shape().to_vec(), data))
}

/// Class whose logit is attributed for `x` under `model`.
pub fn target_class(cfg: &BackendConfig, model: &ModelSpec, x: &Tensor) -> Result<usize, AttributionError> {
    match cfg.target {
        TargetPolicy::Argmax => Ok(model.forward(x)?.argmax()),
        TargetPolicy::Class(class) if class < model.num_classes() => Ok(class),
        TargetPolicy::Class(class) => Err(NnError::ClassOutOfRange {
            class,
            classes: model.num_classes(),
        }
        .into()),
    }
}

/// Dispatches to the configured backend for one (model, input, baseline,
/// class, window).
pub fn attribute(
    cfg: &BackendConfig,
    model: &ModelSpec,
    x: &Tensor,
    xbar: &Tensor,
    class: usize,
    window: &Window,
) -> Result<AttributionMap, AttributionError> {
    cfg.validate()?;
    match cfg.backend {
        Backend::ShapleyExact => shapley_exact(model, x, xbar, class, window),
        Backend::ShapleySampled => shapley_sampled(model, x, xbar, class, window, cfg.samples, cfg.seed),
        Backend::IntegratedGradients => integrated_gradients(model, x, xbar, class, cfg.steps, window),
        Backend::Smoothgrad => smoothgrad(
            model,
            x,
            class,
            cfg.noise_count,
            cfg.noise_sigma,
            cfg.seed,
            window,
            xbar,
        ),
    }
}

/// Identity operator: full-window attribution of the target logit.
pub fn identity_attr(
    cfg: &BackendConfig,
    model: &ModelSpec,
    x: &Tensor,
    xbar: &Tensor,
) -> Result<AttributionMap, AttributionError> {
    project_attr(cfg, model, x, xbar, &Window::full(x.len()))
}

/// Projection operator: attribution restricted to `window`, features outside
/// held at the baseline.
pub fn project_attr(
    cfg: &BackendConfig,
    model: &ModelSpec,
    x: &Tensor,
    xbar: &Tensor,
    window: &Window,
) -> Result<AttributionMap, AttributionError> {
    let class = target_class(cfg, model, x)?;
    attribute(cfg, model, x, xbar, class, window)
}

/// Selection operator: identity attribution against a truncated model.
pub fn select_attr(
    cfg: &BackendConfig,
    truncated: &ModelSpec,
    x: &Tensor,
    xbar: &Tensor,
) -> Result<AttributionMap, AttributionError> {
    identity_attr(cfg, truncated, x, xbar)
}

/// Join: `epsilon * m + (1 - epsilon) * m2`.
pub fn join_maps(m: &AttributionMap, m2: &AttributionMap, epsilon: f64) -> Result<AttributionMap, AttributionError> {
    if m.shape() != m2.shape() {
        return Err(NnError::ShapeMismatch {
            expected: m.shape().to_vec(),
            actual: m2.shape().to_vec(),
        }
        .into());
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(AttributionError::EpsilonOutOfRange(epsilon));
    }
    let values = m
        .values()
        .iter()
        .zip(m2.values())
        .map(|(a, b)| epsilon * a + (1.0 - epsilon) * b)
        .collect();
    Ok(AttributionMap::from_parts(m.shape(), values))
}

/// Anti-join over the full window: `(phi(x; x2), phi(x2; x))`.
pub fn antijoin(
    cfg: &BackendConfig,
    model: &ModelSpec,
    x: &Tensor,
    x2: &Tensor,
) -> Result<AttributionResult, AttributionError> {
    let shared = Tensor::zeros(x.shape());
    antijoin_projected(cfg, model, x, x2, &Window::full(x.len()), &shared)
}

/// Windowed anti-join. Each side attributes its own predicted class with the
/// other input as baseline; with `ig_antijoin_shared_baseline` under
/// integrated gradients both sides use `shared_baseline` instead.
pub fn antijoin_projected(
    cfg: &BackendConfig,
    model: &ModelSpec,
    x: &Tensor,
    x2: &Tensor,
    window: &Window,
    shared_baseline: &Tensor,
) -> Result<AttributionResult, AttributionError> {
    x2.ensure_shape(x.shape())?;
    let shared = cfg.ig_antijoin_shared_baseline && cfg.backend == Backend::IntegratedGradients;
    let (base_left, base_right) = if shared {
        (shared_baseline, shared_baseline)
    } else {
        (x2, x)
    };
    let left = project_attr(cfg, model, x, base_left, window)?;
    let right = project_attr(cfg, model, x2, base_right, window)?;
    Ok(AttributionResult::Pair { left, right })
}

/// Cross-model anti-join on one input: which features of `x` separate `f`'s
/// target logit from `f2`'s. Shapley backends only; target is `f`'s class.
pub fn antijoin_cross_model(
    cfg: &BackendConfig,
    f: &ModelSpec,
    f2: &ModelSpec,
    x: &Tensor,
    xbar: &Tensor,
) -> Result<AttributionMap, AttributionError> {
    cross_model_projected(cfg, f, f2, x, xbar, &Window::full(x.len()))
}

pub fn cross_model_projected(
    cfg: &BackendConfig,
    f: &ModelSpec,
    f2: &ModelSpec,
    x: &Tensor,
    xbar: &Tensor,
    window: &Window,
) -> Result<AttributionMap, AttributionError> {
    let class = target_class(cfg, f, x)?;
    attribute_cross(cfg, f, f2, x, xbar, class, window)
}

/// Cross-model attribution of `class` with an explicit target.
pub fn attribute_cross(
    cfg: &BackendConfig,
    f: &ModelSpec,
    f2: &ModelSpec,
    x: &Tensor,
    xbar: &Tensor,
    class: usize,
    window: &Window,
) -> Result<AttributionMap, AttributionError> {
    cfg.validate()?;
    check_compatible(f, f2)?;
    match cfg.backend {
        Backend::ShapleyExact => shapley_exact_cross(f, f2, x, xbar, class, window),
        Backend::ShapleySampled => {
            shapley_sampled_cross(f, f2, x, xbar, class, window, cfg.samples, cfg.seed)
        }
        backend => Err(AttributionError::UnsupportedBackend {
            op: "cross-model anti-join",
            backend,
        }),
    }
}
