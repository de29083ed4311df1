use rand::Rng as _;

use super::rng::{self, Rng};
use super::Tensor;
use crate::error::{Error, Result};

/// Glorot-uniform samples in `±√(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(shape: &[usize], rng: &mut Rng) -> Result<Tensor> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::contract(format!("cannot initialise shape {shape:?}")));
    }
    let (fan_in, fan_out) = match shape {
        [n] => (*n, *n),
        [r, rest @ ..] => (*r, rest.iter().product()),
        [] => unreachable!(),
    };
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data)
}

/// Seeded convenience wrapper over [`glorot_uniform`].
pub fn init_params(shape: &[usize], seed: u64) -> Result<Tensor> {
    glorot_uniform(shape, &mut rng::stream(seed, "init_params"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_bitwise_identical() {
        let a = init_params(&[7, 5], 11).unwrap();
        let b = init_params(&[7, 5], 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_params(&[7, 5], 12).unwrap());
    }

    #[test]
    fn samples_within_bound() {
        let t = init_params(&[100, 100], 3).unwrap();
        let bound = (6.0f64 / 200.0).sqrt();
        assert!(t.data().iter().all(|x| x.abs() <= bound));
        // the bound is actually approached
        assert!(t.data().iter().any(|x| x.abs() > 0.95 * bound));
    }

    #[test]
    fn empty_dimension_rejected() {
        assert!(init_params(&[3, 0], 1).is_err());
        assert!(init_params(&[], 1).is_err());
    }
}
