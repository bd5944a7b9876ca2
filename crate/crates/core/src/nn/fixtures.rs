//! Seeded generators for demo models and synthetic data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, LayerSpec, ModelSpec, Tensor};

fn class_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("class{i}")).collect()
}

/// Dense/relu stack with layer widths `dims` (input first, classes last).
/// Weights are uniform in `[-1, 1]`, biases uniform in `[-0.1, 0.1]`.
pub fn random_mlp(name: &str, dims: &[usize], seed: u64) -> ModelSpec {
    assert!(dims.len() >= 2, "need at least input and output widths");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    for (i, pair) in dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let w = (0..fan_out)
            .map(|_| (0..fan_in).map(|_| rng.random_range(-1.0..=1.0)).collect())
            .collect();
        let b = (0..fan_out).map(|_| rng.random_range(-0.1..=0.1)).collect();
        layers.push(LayerSpec::Dense { w, b });
        if i + 2 < dims.len() {
            layers.push(LayerSpec::Relu);
        }
    }
    let boundaries = ModelSpec::activation_boundaries(&layers);
    ModelSpec::new(
        name,
        vec![dims[0]],
        class_labels(*dims.last().unwrap()),
        layers,
        boundaries,
    )
    .expect("generated MLP is well formed")
}

/// Single dense layer `logits = w x + b`.
pub fn linear_model(name: &str, w: Vec<Vec<f64>>, b: Vec<f64>) -> ModelSpec {
    let d = w[0].len();
    let classes = w.len();
    ModelSpec::new(
        name,
        vec![d],
        class_labels(classes),
        vec![LayerSpec::Dense { w, b }],
        vec![0],
    )
    .expect("linear model is well formed")
}

/// Small conv net over a `1 x side x side` grid:
/// conv(3x3, `channels`) -> relu -> maxpool2 -> flatten -> dense.
pub fn random_cnn(name: &str, side: usize, channels: usize, classes: usize, seed: u64) -> ModelSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kernel = (0..channels)
        .map(|_| {
            vec![(0..3)
                .map(|_| (0..3).map(|_| rng.random_range(-1.0..=1.0)).collect())
                .collect()]
        })
        .collect();
    let bias = (0..channels).map(|_| rng.random_range(-0.1..=0.1)).collect();
    let pooled = (side - 2) / 2;
    let flat = channels * pooled * pooled;
    let w = (0..classes)
        .map(|_| (0..flat).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect();
    let b = (0..classes).map(|_| rng.random_range(-0.1..=0.1)).collect();
    let layers = vec![
        LayerSpec::Conv2d { w: kernel, b: bias },
        LayerSpec::Relu,
        LayerSpec::Maxpool2,
        LayerSpec::Flatten,
        LayerSpec::Dense { w, b },
    ];
    let boundaries = ModelSpec::activation_boundaries(&layers);
    ModelSpec::new(name, vec![1, side, side], class_labels(classes), layers, boundaries)
        .expect("generated CNN is well formed")
}

/// Tensor of the given shape with entries uniform in `[lo, hi]`.
pub fn random_tensor(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.random_range(lo..=hi)).collect();
    Tensor::new(shape.to_vec(), data).expect("finite uniform draws")
}

/// `per_class` isotropic Gaussian points around each center; class `k` is
/// the k-th center. Points are interleaved by class.
pub fn gaussian_blobs(centers: &[Vec<f64>], per_class: usize, sd: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sd).expect("valid standard deviation");
    let mut inputs = Vec::with_capacity(centers.len() * per_class);
    let mut labels = Vec::with_capacity(centers.len() * per_class);
    for _ in 0..per_class {
        for (k, c) in centers.iter().enumerate() {
            let data = c.iter().map(|m| m + normal.sample(&mut rng)).collect();
            inputs.push(Tensor::from_vec(data).expect("finite samples"));
            labels.push(k);
        }
    }
    Dataset::new(inputs, labels).expect("consistent blobs")
}
