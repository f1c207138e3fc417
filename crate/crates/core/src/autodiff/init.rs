use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Glorot/Xavier uniform initialization on `[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_init<R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Result<Tensor> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::InvalidShape(format!(
            "fan_in and fan_out must be positive, got {fan_in} and {fan_out}"
        )));
    }
    let mut t = Tensor::zeros(shape)?;
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    for v in t.data_mut() {
        *v = dist.sample(rng);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn values_within_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = xavier_init(&[4], 2, 2, &mut rng).unwrap();
        let a = 1.5f64.sqrt();
        assert!((a - 1.2247).abs() < 1e-4);
        assert!(t.data().iter().all(|v| v.abs() <= a));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = xavier_init(&[8, 3], 3, 8, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = xavier_init(&[8, 3], 3, 8, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_mean_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = xavier_init(&[96, 32, 3], 96, 96, &mut rng).unwrap();
        assert_eq!(t.len(), 9216);
        let mean = t.data().iter().sum::<f64>() / t.len() as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn zero_extent_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            xavier_init(&[0, 3], 1, 1, &mut rng),
            Err(Error::InvalidShape(_))
        ));
        assert!(xavier_init(&[2], 0, 1, &mut rng).is_err());
    }
}
