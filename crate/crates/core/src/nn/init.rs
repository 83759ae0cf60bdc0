use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

/// Seeded source of initial parameter values.
///
/// Weights are drawn from `U(-b, b)` with `b = sqrt(3 / fan_in)`, which gives
/// unit-variance pre-activations for unit-variance inputs. Biases start at zero.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn fan_in_uniform(&mut self, shape: &[usize], fan_in: usize) -> Tensor {
        let bound = (3.0 / fan_in.max(1) as f64).sqrt();
        self.uniform(shape, bound)
    }

    pub fn uniform(&mut self, shape: &[usize], bound: f64) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| self.rng.random_range(-bound..bound))
            .collect();
        Tensor::new(shape.to_vec(), data).expect("shape product matches data length")
    }

    pub fn zeros(&mut self, shape: &[usize]) -> Tensor {
        Tensor::zeros(shape)
    }
}
