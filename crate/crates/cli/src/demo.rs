//! Bundled demo: a 3-stage MLP over 8x8 images and a patch-location dataset.

use attrql_core::nn::{self, Dataset, HeadHyper, LayerSpec, ModelSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const SIDE: usize = 8;
const PATCH: usize = 3;
/// Top-left corner of each class's bright patch.
const CORNERS: [(usize, usize); 3] = [(0, 0), (0, 5), (5, 2)];

pub struct Demo {
    pub model: ModelSpec,
    pub data: Dataset,
    /// One fresh example per class.
    pub inputs: Vec<Tensor>,
}

fn image(class: usize, rng: &mut ChaCha8Rng, noise: &Normal<f64>) -> Tensor {
    let (r0, c0) = CORNERS[class];
    let data = (0..SIDE * SIDE)
        .map(|i| {
            let (r, c) = (i / SIDE, i % SIDE);
            let inside = (r0..r0 + PATCH).contains(&r) && (c0..c0 + PATCH).contains(&c);
            f64::from(u8::from(inside)) + noise.sample(rng)
        })
        .collect();
    Tensor::new(vec![SIDE, SIDE], data).expect("finite pixels")
}

/// `per_class` noisy images per class, interleaved by class.
pub fn patch_dataset(per_class: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.2).expect("valid sd");
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..per_class {
        for class in 0..CORNERS.len() {
            inputs.push(image(class, &mut rng, &noise));
            labels.push(class);
        }
    }
    Dataset::new(inputs, labels).expect("consistent shapes")
}

fn dense(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> LayerSpec {
    let scale = (1.0 / fan_in as f64).sqrt() * 1.7;
    LayerSpec::Dense {
        w: (0..fan_out)
            .map(|_| (0..fan_in).map(|_| rng.random_range(-scale..=scale)).collect())
            .collect(),
        b: (0..fan_out).map(|_| rng.random_range(0.0..=0.1)).collect(),
    }
}

/// Random hidden layers with a head trained on the patch dataset.
pub fn demo(seed: u64) -> Demo {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = vec![
        LayerSpec::Flatten,
        dense(SIDE * SIDE, 16, &mut rng),
        LayerSpec::Relu,
        dense(16, 12, &mut rng),
        LayerSpec::Relu,
        dense(12, CORNERS.len(), &mut rng),
    ];
    let labels = (0..CORNERS.len()).map(|k| format!("patch{k}")).collect();
    let boundaries = ModelSpec::activation_boundaries(&layers);
    let raw = ModelSpec::new("demo", vec![SIDE, SIDE], labels, layers, boundaries).expect("well-formed demo");
    let data = patch_dataset(60, seed + 1);
    let trained = nn::truncate(&raw, 2, &data, &HeadHyper { seed, ..HeadHyper::default() })
        .expect("demo head trains");
    let model = ModelSpec::new(
        "demo",
        trained.input_shape().to_vec(),
        trained.class_labels().to_vec(),
        trained.layers().to_vec(),
        trained.stage_boundaries().to_vec(),
    )
    .expect("renamed copy is well formed");
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
    let noise = Normal::new(0.0, 0.2).expect("valid sd");
    let inputs = (0..CORNERS.len()).map(|k| image(k, &mut rng, &noise)).collect();
    Demo { model, data, inputs }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_is_accurate_and_three_stage() {
        let d = demo(0);
        assert_eq!(d.model.stage_count(), 3);
        assert!(nn::accuracy(&d.model, &d.data).unwrap() >= 0.95);
        let held_out = patch_dataset(20, 99);
        assert!(nn::accuracy(&d.model, &held_out).unwrap() >= 0.95);
        for (k, x) in d.inputs.iter().enumerate() {
            assert_eq!(d.model.forward(x).unwrap().argmax(), k);
        }
    }
}
