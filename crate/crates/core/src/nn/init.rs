//! Weight initialisation schemes.

use crate::rng::Rng;
use crate::tensor::Tensor;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, Uniform};

/// Sampling scheme for fresh weights. Biases are always zeroed by the layer
/// constructors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// Normal with variance `2 / (n_in + n_out)`; suits sigmoid/tanh.
    Xavier,
    /// Normal with variance `2 / n_in`; suits relu.
    He,
    /// Uniform on `±1/√n_in`.
    Uniform,
}

// fan-in/fan-out from the weight shape: [out × in] for dense layers,
// [oc × ic × k × k] for convolution kernels
fn fans(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        1 => (shape[0], shape[0]),
        2 => (shape[1], shape[0]),
        4 => (shape[1] * shape[2] * shape[3], shape[0] * shape[2] * shape[3]),
        _ => {
            let n: usize = shape.iter().product();
            (n, n)
        }
    }
}

/// Samples a weight tensor of `shape` under `scheme`.
pub fn init_weights(shape: impl Into<Vec<usize>>, scheme: InitScheme, rng: &mut Rng) -> Tensor {
    let shape = shape.into();
    assert!(shape.iter().all(|&e| e > 0), "extents must be positive");
    let (fan_in, fan_out) = fans(&shape);
    let mut t = Tensor::zeros(shape);
    match scheme {
        InitScheme::Xavier => {
            let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Normal::new(0.0, std).unwrap();
            for v in t.data_mut() {
                *v = dist.sample(rng);
            }
        }
        InitScheme::He => {
            let std = (2.0 / fan_in as f64).sqrt();
            let dist = Normal::new(0.0, std).unwrap();
            for v in t.data_mut() {
                *v = dist.sample(rng);
            }
        }
        InitScheme::Uniform => {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).unwrap();
            for v in t.data_mut() {
                *v = rng.sample(dist);
            }
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_variance(scheme: InitScheme, shape: &[usize], n: usize, seed: u64) -> f64 {
        let mut rng = crate::rng::seeded(seed);
        let mut values = Vec::with_capacity(n);
        while values.len() < n {
            let t = init_weights(shape.to_vec(), scheme, &mut rng);
            values.extend_from_slice(t.data());
        }
        values.truncate(n);
        let mean: f64 = values.iter().sum::<f64>() / n as f64;
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64
    }

    #[test]
    fn xavier_unit_fans_has_unit_variance() {
        let var = sample_variance(InitScheme::Xavier, &[1, 1], 100_000, 80);
        assert!((var - 1.0).abs() <= 0.05, "variance {var}");
    }

    #[test]
    fn he_fan_in_two_has_unit_variance() {
        let var = sample_variance(InitScheme::He, &[5, 2], 100_000, 81);
        assert!((var - 1.0).abs() <= 0.05, "variance {var}");
    }

    #[test]
    fn fixed_seed_reproduces_tensors() {
        for scheme in [InitScheme::Xavier, InitScheme::He, InitScheme::Uniform] {
            let a = init_weights([4, 3], scheme, &mut crate::rng::seeded(82));
            let b = init_weights([4, 3], scheme, &mut crate::rng::seeded(82));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn uniform_respects_bound() {
        let t = init_weights([10, 4], InitScheme::Uniform, &mut crate::rng::seeded(83));
        let bound = 0.5; // 1/√4
        assert!(t.data().iter().all(|v| v.abs() <= bound));
    }
}
