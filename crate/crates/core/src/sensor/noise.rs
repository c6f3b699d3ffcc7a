use crate::error::{Error, Result};
use crate::rng::{sample_poisson, stream_rng};

/// Independent Poisson draws around `mean`, reproducible for a given `(seed, stream)`.
pub fn add_poisson_noise(mean: &[f64], seed: u64, stream: u64) -> Result<Vec<f64>> {
    if let Some(bad) = mean.iter().find(|m| !(**m >= 0.0) || !m.is_finite()) {
        return Err(Error::invalid(format!("Poisson mean must be finite and >= 0, got {bad}")));
    }
    let mut rng = stream_rng(seed, stream);
    Ok(mean.iter().map(|&m| sample_poisson(&mut rng, m) as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_mean_zero_counts() {
        let y = add_poisson_noise(&[0.0; 1000], 1, 0).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn negative_mean_rejected() {
        assert!(add_poisson_noise(&[1.0, -0.5], 1, 0).is_err());
    }

    #[test]
    fn reproducible() {
        let m: Vec<f64> = (0..500).map(|i| i as f64 * 0.37).collect();
        assert_eq!(add_poisson_noise(&m, 9, 4).unwrap(), add_poisson_noise(&m, 9, 4).unwrap());
        assert_ne!(add_poisson_noise(&m, 9, 4).unwrap(), add_poisson_noise(&m, 9, 5).unwrap());
    }
}
