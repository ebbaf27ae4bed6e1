//! Deterministic sampling helpers shared by the null-distribution
//! simulator and the scenario experiments.
//!
//! Reproducibility contract: every draw is a fixed function of the raw
//! 64-bit output stream of the generator, so samples are identical across
//! platforms and thread counts up to documented floating-point caveats
//! (`ln`, `exp`, and the inverse normal cdf are the only transcendental
//! steps involved).

use rand::RngCore;
use statrs::distribution::ContinuousCDF;

use crate::{Error, Result};

/// Uniform draw strictly inside (0, 1): the top 53 bits of one 64-bit word
/// scaled to [0, 1), shifted by half an ulp so 0 is never returned.
pub(crate) fn unit_open<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0) + 1.0 / 18014398509481984.0
}

/// Standard normal draw via the inverse cdf applied to `unit_open`.
pub(crate) fn std_normal<R: RngCore>(rng: &mut R) -> f64 {
    let u = unit_open(rng);
    statrs::distribution::Normal::standard().inverse_cdf(u)
}

/// Poisson draw by cdf inversion. Exact walk; linear in the mean, which is
/// why large means are rejected rather than approximated.
pub(crate) fn poisson<R: RngCore>(rng: &mut R, mu: f64) -> Result<u64> {
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Error::InvalidInput(format!("poisson mean must be >= 0, got {mu}")));
    }
    if mu > 500.0 {
        return Err(Error::InvalidInput(format!(
            "poisson simulation supports means up to 500 (exact cdf inversion), got {mu}"
        )));
    }
    let u = unit_open(rng);
    let mut k = 0u64;
    let mut p = (-mu).exp();
    let mut acc = p;
    while u > acc {
        k += 1;
        p *= mu / k as f64;
        acc += p;
        // Past ~mu + 40 sqrt(mu) the tail mass is below f64 resolution;
        // the loop cannot run away because acc stops changing only when p
        // underflows, at which point u > acc would mean u is within one ulp
        // of 1, excluded by construction. Keep a hard stop anyway.
        if k > 10_000_000 {
            break;
        }
    }
    Ok(k)
}

/// Bernoulli draw: success iff the uniform falls below `p`.
pub(crate) fn bernoulli<R: RngCore>(rng: &mut R, p: f64) -> bool {
    unit_open(rng) < p
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_open_stays_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let u = unit_open(&mut rng);
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn normal_moments_roughly_standard() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = 20_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..m {
            let z = std_normal(&mut rng);
            s1 += z;
            s2 += z * z;
        }
        let mean = s1 / m as f64;
        let var = s2 / m as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn poisson_mean_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 20_000;
        let mu = 3.7;
        let mut acc = 0u64;
        for _ in 0..m {
            acc += poisson(&mut rng, mu).unwrap();
        }
        let mean = acc as f64 / m as f64;
        assert!((mean - mu).abs() < 0.06, "mean {mean}");

        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            assert_eq!(poisson(&mut a, 2.5).unwrap(), poisson(&mut b, 2.5).unwrap());
        }
        assert!(poisson(&mut a, -1.0).is_err());
        assert!(poisson(&mut a, 501.0).is_err());
        assert_eq!(poisson(&mut a, 0.0).unwrap(), 0);
    }

    #[test]
    fn bernoulli_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let m = 20_000;
        let hits = (0..m).filter(|_| bernoulli(&mut rng, 0.3)).count();
        let f = hits as f64 / m as f64;
        assert!((f - 0.3).abs() < 0.02, "freq {f}");
    }
}
