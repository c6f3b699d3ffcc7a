//! Generalized Kullback-Leibler data term `sum_m z_m - y_m log(z_m + beta)`.

use crate::error::{Error, Result};

pub const DEFAULT_BETA: f64 = 1e-8;

pub fn kl_divergence(z: &[f64], y: &[f64], beta: f64) -> Result<f64> {
    if z.len() != y.len() {
        return Err(Error::invalid("model and data lengths differ"));
    }
    if !(beta > 0.0) {
        return Err(Error::invalid(format!("beta must be > 0, got {beta}")));
    }
    let mut acc = 0.0;
    for (i, (&zm, &ym)) in z.iter().zip(y).enumerate() {
        let arg = zm + beta;
        if !(arg > 0.0) {
            return Err(Error::Domain(format!("z[{i}] + beta = {arg} is not positive")));
        }
        acc += zm;
        if ym != 0.0 {
            acc -= ym * arg.ln();
        }
    }
    Ok(acc)
}

/// `dD/dz_m = 1 - y_m / (z_m + beta)`.
pub fn kl_gradient(z: &[f64], y: &[f64], beta: f64) -> Vec<f64> {
    z.iter().zip(y).map(|(&zm, &ym)| 1.0 - ym / (zm + beta)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_counts_reduce_to_sum() {
        let z = [1.0, 2.5, 0.0];
        assert_eq!(kl_divergence(&z, &[0.0; 3], 1e-8).unwrap(), 3.5);
    }

    #[test]
    fn zero_model() {
        let y = [3.0, 1.0];
        let d = kl_divergence(&[0.0, 0.0], &y, 0.5).unwrap();
        assert!((d + 4.0 * 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let z = [0.7, 12.0, 300.0, 5.0];
        let y = [1.0, 10.0, 320.0, 0.0];
        let beta = 1e-8;
        let g = kl_gradient(&z, &y, beta);
        for m in 0..z.len() {
            let h = 1e-5 * z[m];
            let mut zp = z;
            let mut zm = z;
            zp[m] += h;
            zm[m] -= h;
            let fd = (kl_divergence(&zp, &y, beta).unwrap() - kl_divergence(&zm, &y, beta).unwrap())
                / (2.0 * h);
            assert!((fd - g[m]).abs() <= 1e-6 * g[m].abs().max(1e-3), "m={m}: {fd} vs {}", g[m]);
        }
    }

    #[test]
    fn domain_errors() {
        assert!(kl_divergence(&[1.0], &[1.0], 0.0).is_err());
        assert!(matches!(
            kl_divergence(&[-1.0], &[1.0], 1e-8),
            Err(Error::Domain(_))
        ));
    }
}
