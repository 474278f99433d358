//! Variate generation and density helpers used by every sampler.
//!
//! All samplers use the shape–rate convention: `Gamma(a, b)` has mean `a / b`.

use rand_distr::{Distribution, Gamma, Poisson};

use crate::error::{invalid, Error, Result};
use crate::math;
use crate::rng::RngStream;

/// Smallest value a gamma draw is allowed to take.
pub const GAMMA_FLOOR: f64 = f64::MIN_POSITIVE;

/// Draws from `Gamma(shape, rate)`. Draws that underflow to zero are clamped
/// to [`GAMMA_FLOOR`].
pub fn sample_gamma(shape: f64, rate: f64, rng: &mut RngStream) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(invalid(alloc::format!("gamma shape must be positive and finite, got {shape}")));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(invalid(alloc::format!("gamma rate must be positive and finite, got {rate}")));
    }
    let dist = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| invalid(alloc::format!("gamma({shape}, {rate}): {e}")))?;
    let x: f64 = dist.sample(rng);
    if x < GAMMA_FLOOR {
        log::trace!("gamma({shape}, {rate}) underflowed; clamping");
        return Ok(GAMMA_FLOOR);
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("gamma draw"));
    }
    Ok(x)
}

/// Draws from `Poisson(rate)`; a zero rate returns zero.
pub fn sample_poisson(rate: f64, rng: &mut RngStream) -> Result<u64> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(invalid(alloc::format!("poisson rate must be finite and non-negative, got {rate}")));
    }
    if rate == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(rate).map_err(|e| invalid(alloc::format!("poisson({rate}): {e}")))?;
    let x: f64 = dist.sample(rng);
    Ok(x as u64)
}

/// Draws index `k` with probability `weights[k] / sum(weights)`.
pub fn sample_categorical(weights: &[f64], rng: &mut RngStream) -> Result<usize> {
    let mut total = 0.0;
    for &w in weights {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(invalid(alloc::format!("categorical weight {w} is negative or non-finite")));
        }
        total += w;
    }
    if !(total > 0.0) {
        return Err(Error::ZeroNormalizer);
    }
    Ok(draw_index(weights, total, rng))
}

/// Inverse-CDF draw from unnormalized weights whose sum is `total`.
#[inline]
pub(crate) fn draw_index(weights: &[f64], total: f64, rng: &mut RngStream) -> usize {
    let u = rng.uniform() * total;
    let mut acc = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    // rounding left `u` past the running sum; take the last positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Draws from a categorical given log-weights (in place: the slice is
/// overwritten with the exponentiated, max-shifted weights).
pub(crate) fn sample_log_categorical(log_weights: &mut [f64], rng: &mut RngStream) -> Result<usize> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::ZeroNormalizer);
    }
    let mut total = 0.0;
    for w in log_weights.iter_mut() {
        *w = math::exp(*w - max);
        total += *w;
    }
    Ok(draw_index(log_weights, total, rng))
}

/// Chinese restaurant table count: the number of tables occupied by `count`
/// customers under concentration `concentration`.
pub fn sample_crt(count: u64, concentration: f64, rng: &mut RngStream) -> Result<u64> {
    if !(concentration > 0.0 && concentration.is_finite()) {
        return Err(invalid(alloc::format!("CRT concentration must be positive, got {concentration}")));
    }
    Ok(crt_unchecked(count, concentration, rng))
}

#[inline]
pub(crate) fn crt_unchecked(count: u64, concentration: f64, rng: &mut RngStream) -> u64 {
    let mut tables = 0;
    for n in 0..count {
        if rng.uniform() * (concentration + n as f64) < concentration {
            tables += 1;
        }
    }
    tables
}

/// `ln Poisson(y; mu)`.
pub fn ln_poisson_pmf(y: u64, mu: f64) -> f64 {
    if y == 0 {
        return -mu;
    }
    if mu <= 0.0 {
        return f64::NEG_INFINITY;
    }
    y as f64 * math::ln(mu) - mu - math::ln_gamma(y as f64 + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn gamma_exponential_mean() {
        let mut rng = RngStream::new(11);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_gamma(1.0, 2.0, &mut rng).unwrap()).collect();
        let (m, _) = moments(&xs);
        // Exp(2): mean 0.5, sd 0.5
        let se = 0.5 / (1e5f64).sqrt();
        assert!((m - 0.5).abs() < 3.0 * se, "mean {m}");
    }

    #[test]
    fn gamma_small_shape_moments() {
        let mut rng = RngStream::new(12);
        let xs: Vec<f64> = (0..1_000_000).map(|_| sample_gamma(0.1, 0.1, &mut rng).unwrap()).collect();
        let (m, v) = moments(&xs);
        // mean a/b = 1, variance a/b^2 = 10
        let se_mean = (10.0f64 / 1e6).sqrt();
        assert!((m - 1.0).abs() < 3.0 * se_mean, "mean {m}");
        // Var(s^2) ~ (mu4 - sigma^4)/n, gamma central fourth moment 3a(a+2)/b^4
        let a: f64 = 0.1;
        let b: f64 = 0.1;
        let mu4 = 3.0 * a * (a + 2.0) / b.powi(4);
        let se_var = ((mu4 - 100.0) / 1e6).sqrt();
        assert!((v - 10.0).abs() < 3.0 * se_var, "var {v} se {se_var}");
        assert!(xs.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn gamma_is_deterministic() {
        let mut a = RngStream::new(5);
        let mut b = RngStream::new(5);
        for _ in 0..1000 {
            let x = sample_gamma(0.3, 1.7, &mut a).unwrap();
            let y = sample_gamma(0.3, 1.7, &mut b).unwrap();
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn gamma_rejects_bad_parameters() {
        let mut rng = RngStream::new(0);
        assert!(sample_gamma(0.0, 1.0, &mut rng).is_err());
        assert!(sample_gamma(1.0, -1.0, &mut rng).is_err());
        assert!(sample_gamma(f64::NAN, 1.0, &mut rng).is_err());
    }

    #[test]
    fn gamma_tiny_shape_is_clamped_positive() {
        let mut rng = RngStream::new(3);
        for _ in 0..1000 {
            let x = sample_gamma(1e-30, 1.0, &mut rng).unwrap();
            assert!(x >= GAMMA_FLOOR);
        }
    }

    #[test]
    fn poisson_zero_rate() {
        let mut rng = RngStream::new(0);
        assert_eq!(sample_poisson(0.0, &mut rng).unwrap(), 0);
        assert!(sample_poisson(-1.0, &mut rng).is_err());
        assert!(sample_poisson(f64::INFINITY, &mut rng).is_err());
    }

    #[test]
    fn poisson_moments() {
        let mut rng = RngStream::new(21);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_poisson(4.0, &mut rng).unwrap() as f64).collect();
        let (m, v) = moments(&xs);
        let se_mean = (4.0f64 / 1e5).sqrt();
        // Var(s^2) = (mu4 - sigma^4)/n, mu4 = lambda(1 + 3 lambda)
        let se_var = ((4.0 * 13.0 - 16.0) / 1e5f64).sqrt();
        assert!((m - 4.0).abs() < 3.0 * se_mean, "mean {m}");
        assert!((v - 4.0).abs() < 3.0 * se_var, "var {v}");
    }

    #[test]
    fn poisson_large_rate() {
        let mut rng = RngStream::new(22);
        let xs: Vec<f64> = (0..20_000).map(|_| sample_poisson(1000.0, &mut rng).unwrap() as f64).collect();
        let (m, _) = moments(&xs);
        let se = (1000.0f64 / 2e4).sqrt();
        assert!((m - 1000.0).abs() < 3.0 * se, "mean {m}");
    }

    fn chi_square(counts: &[u64], probs: &[f64]) -> f64 {
        let n: u64 = counts.iter().sum();
        counts
            .iter()
            .zip(probs)
            .map(|(&o, &p)| {
                let e = p * n as f64;
                (o as f64 - e) * (o as f64 - e) / e
            })
            .sum()
    }

    #[test]
    fn categorical_single_weight() {
        let mut rng = RngStream::new(0);
        for _ in 0..100 {
            assert_eq!(sample_categorical(&[1.0], &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn categorical_uniform_frequencies() {
        let mut rng = RngStream::new(31);
        let mut counts = [0u64; 4];
        for _ in 0..100_000 {
            counts[sample_categorical(&[1.0; 4], &mut rng).unwrap()] += 1;
        }
        let se = (0.25f64 * 0.75 / 1e5).sqrt();
        for c in counts {
            assert!((c as f64 / 1e5 - 0.25).abs() < 3.0 * se);
        }
    }

    #[test]
    fn categorical_chi_square() {
        let mut rng = RngStream::new(32);
        let mut counts = [0u64; 3];
        for _ in 0..100_000 {
            counts[sample_categorical(&[1.0, 2.0, 7.0], &mut rng).unwrap()] += 1;
        }
        // chi-square(2) 0.99 quantile
        assert!(chi_square(&counts, &[0.1, 0.2, 0.7]) < 9.2103);
    }

    #[test]
    fn categorical_errors() {
        let mut rng = RngStream::new(0);
        assert_eq!(sample_categorical(&[0.0, 0.0], &mut rng), Err(Error::ZeroNormalizer));
        assert!(sample_categorical(&[1.0, -1.0], &mut rng).is_err());
        assert!(sample_categorical(&[], &mut rng).is_err());
    }

    #[test]
    fn crt_edge_cases() {
        let mut rng = RngStream::new(0);
        assert_eq!(sample_crt(0, 0.5, &mut rng).unwrap(), 0);
        for _ in 0..100 {
            assert_eq!(sample_crt(1, 0.01, &mut rng).unwrap(), 1);
        }
        assert!(sample_crt(3, 0.0, &mut rng).is_err());
    }

    #[test]
    fn crt_mean_is_harmonic_number() {
        let mut rng = RngStream::new(41);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_crt(50, 1.0, &mut rng).unwrap() as f64).collect();
        let (m, _) = moments(&xs);
        // H_50 and sum(1/n - 1/n^2)
        let h50 = 4.499205338329423;
        let var = 2.8740726047078953f64;
        assert!((m - h50).abs() < 3.0 * (var / 1e5).sqrt(), "mean {m}");
    }

    #[test]
    fn poisson_pmf_matches_definition() {
        let direct = |y: u64, mu: f64| {
            let mut f = 1.0;
            for k in 1..=y {
                f *= k as f64;
            }
            libm::exp(-mu) * libm::pow(mu, y as f64) / f
        };
        for &(y, mu) in &[(0u64, 0.3), (1, 0.3), (4, 2.5), (10, 7.0)] {
            let lp = ln_poisson_pmf(y, mu);
            assert!((libm::exp(lp) - direct(y, mu)).abs() < 1e-14);
        }
        assert_eq!(ln_poisson_pmf(2, 0.0), f64::NEG_INFINITY);
    }

    proptest::proptest! {
        #[test]
        fn crt_within_bounds(m in 0u64..200, a in 0.01f64..50.0, seed in 0u64..1000) {
            let mut rng = RngStream::new(seed);
            let l = sample_crt(m, a, &mut rng).unwrap();
            proptest::prop_assert!(l <= m);
            proptest::prop_assert!(l >= m.min(1));
        }

        #[test]
        fn gamma_strictly_positive(a in 1e-6f64..20.0, b in 1e-3f64..1e3, seed in 0u64..1000) {
            let mut rng = RngStream::new(seed);
            let x = sample_gamma(a, b, &mut rng).unwrap();
            proptest::prop_assert!(x > 0.0 && x.is_finite());
        }
    }
}
