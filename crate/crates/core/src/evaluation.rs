//! Held-out predictive evaluation: temporal split, activity masks, training,
//! clamped inference of time factors on the test window, and inverse
//! perplexity of the held-out cells.

use alloc::vec;
use alloc::vec::Vec;

use crate::distributions::ln_poisson_pmf;
use crate::error::{invalid, Error, Result};
use crate::events::{CountTensor, EventToken};
use crate::math;
use crate::rng::RngStream;
use crate::sampler::Sampler;

/// Splits off the last `holdout_steps` time steps as the test tensor.
pub fn split_train_test(tensor: &CountTensor, holdout_steps: usize) -> Result<(CountTensor, CountTensor)> {
    let t = tensor.dims().steps;
    if holdout_steps == 0 || t <= holdout_steps {
        return Err(invalid(alloc::format!(
            "cannot hold out {holdout_steps} of {t} time steps"
        )));
    }
    let cut = t - holdout_steps;
    Ok((tensor.time_slice(0..cut)?, tensor.time_slice(cut..t)?))
}

/// Set of ordered dyads whose test-window cells are held out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeldOutMask {
    countries: usize,
    held: Vec<bool>,
}

impl HeldOutMask {
    pub fn from_pairs(countries: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut held = vec![false; countries * countries];
        for &(i, j) in pairs {
            if i >= countries || j >= countries || i == j {
                return Err(invalid(alloc::format!("bad dyad ({i}, {j})")));
            }
            held[i * countries + j] = true;
        }
        Ok(Self { countries, held })
    }

    pub fn countries(&self) -> usize {
        self.countries
    }

    pub fn is_held(&self, i: usize, j: usize) -> bool {
        self.held[i * self.countries + j]
    }

    pub fn held_pairs(&self) -> Vec<(usize, usize)> {
        let v = self.countries;
        (0..v)
            .flat_map(|i| (0..v).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && self.is_held(i, j))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.held.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The complementary mask over all `i ≠ j` dyads.
    pub fn inverted(&self) -> Self {
        let v = self.countries;
        let mut held = vec![false; v * v];
        for i in 0..v {
            for j in 0..v {
                if i != j {
                    held[i * v + j] = !self.is_held(i, j);
                }
            }
        }
        Self { countries: v, held }
    }

    /// Every cell under a held dyad, over all actions and the `steps` steps
    /// of the test window.
    pub fn cells(&self, actions: usize, steps: usize) -> Vec<EventToken> {
        let mut out = Vec::with_capacity(self.len() * actions * steps);
        for t in 0..steps {
            for a in 0..actions {
                for (i, j) in self.held_pairs() {
                    out.push(EventToken::new(i, j, a, t));
                }
            }
        }
        out
    }
}

/// Countries ranked by involvement (tokens sent plus received), most active
/// first; ties go to the lower index.
pub fn rank_by_activity(tensor: &CountTensor) -> Vec<usize> {
    let inv = tensor.involvement();
    let mut order: Vec<usize> = (0..inv.len()).collect();
    order.sort_by(|&a, &b| inv[b].cmp(&inv[a]).then(a.cmp(&b)));
    order
}

/// Holds out every dyad touching one of the `n` most active countries, or
/// with `invert` every dyad touching none of them.
pub fn mask_top_active(tensor: &CountTensor, n: usize, invert: bool) -> Result<HeldOutMask> {
    let v = tensor.dims().countries;
    if n == 0 || n >= v {
        return Err(invalid(alloc::format!("need 0 < n < {v}, got {n}")));
    }
    let mut top = vec![false; v];
    for &i in rank_by_activity(tensor).iter().take(n) {
        top[i] = true;
    }
    let pairs: Vec<(usize, usize)> = (0..v)
        .flat_map(|i| (0..v).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && (top[i] || top[j]))
        .collect();
    let mask = HeldOutMask::from_pairs(v, &pairs)?;
    Ok(if invert { mask.inverted() } else { mask })
}

/// Sweep counts of the clamp-and-infer protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Protocol {
    pub train_sweeps: usize,
    pub test_sweeps: usize,
    /// Test sweeps discarded before saving.
    pub burn_in: usize,
    /// Save every `thin`-th test sweep after burn-in.
    pub thin: usize,
    /// Score zero cells under held dyads as well as nonzero ones.
    pub include_zeros: bool,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            train_sweeps: 5000,
            test_sweeps: 1000,
            burn_in: 500,
            thin: 10,
            include_zeros: true,
        }
    }
}

impl Protocol {
    /// 500 training and 200 test sweeps.
    pub fn reduced() -> Self {
        Self {
            train_sweeps: 500,
            test_sweeps: 200,
            burn_in: 100,
            thin: 10,
            include_zeros: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.burn_in >= self.test_sweeps {
            return Err(invalid("protocol must save at least one test sample"));
        }
        Ok(())
    }
}

/// Per-cell averaged rates and plug-in probabilities of the held-out cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    pub cells: Vec<EventToken>,
    pub counts: Vec<u64>,
    pub mean_rates: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub samples: usize,
    pub inverse_perplexity: f64,
}

impl PredictionResult {
    pub fn probabilities(&self) -> Vec<f64> {
        self.log_probs.iter().map(|&l| math::exp(l)).collect()
    }
}

/// Geometric mean of probabilities given as logs.
pub fn inverse_perplexity(log_probs: &[f64]) -> Result<f64> {
    if log_probs.is_empty() {
        return Err(Error::Empty("held-out cells"));
    }
    Ok(math::exp(log_probs.iter().sum::<f64>() / log_probs.len() as f64))
}

/// Scores `cells` of `test` under averaged rates.
pub fn score(cells: Vec<EventToken>, test: &CountTensor, mean_rates: Vec<f64>, samples: usize) -> Result<PredictionResult> {
    let counts: Vec<u64> = cells.iter().map(|c| test.get(c)).collect();
    let log_probs: Vec<f64> = counts.iter().zip(&mean_rates).map(|(&y, &mu)| ln_poisson_pmf(y, mu)).collect();
    let inverse_perplexity = inverse_perplexity(&log_probs)?;
    Ok(PredictionResult {
        cells,
        counts,
        mean_rates,
        log_probs,
        samples,
        inverse_perplexity,
    })
}

/// Trains `model` (already bound to the training tensor), clamps it to the
/// observed part of `test` and scores the held-out part.
pub fn strong_generalization(
    model: &mut dyn Sampler,
    test: &CountTensor,
    mask: &HeldOutMask,
    protocol: &Protocol,
    rng: &mut RngStream,
) -> Result<PredictionResult> {
    protocol.validate()?;
    let d = test.dims();
    if mask.countries() != d.countries {
        return Err(Error::DimensionMismatch("mask and test tensor disagree on countries".into()));
    }
    let mut cells = mask.cells(d.actions, d.steps);
    if !protocol.include_zeros {
        cells.retain(|c| test.get(c) > 0);
    }
    if cells.is_empty() {
        return Err(Error::Empty("held-out cells"));
    }

    for _ in 0..protocol.train_sweeps {
        model.sweep(rng)?;
    }
    let observed = test.filter_dyads(|i, j| !mask.is_held(i, j));
    model.clamp_for_test(observed, &mask.held_pairs(), rng)?;

    let mut sums = vec![0.0; cells.len()];
    let mut buf = vec![0.0; cells.len()];
    let mut samples = 0;
    for s in 0..protocol.test_sweeps {
        model.sweep(rng)?;
        if s >= protocol.burn_in && (s - protocol.burn_in) % protocol.thin == 0 {
            model.rates(&cells, &mut buf);
            for (a, b) in sums.iter_mut().zip(&buf) {
                *a += b;
            }
            samples += 1;
        }
    }
    let means = sums.into_iter().map(|x| x / samples as f64).collect();
    score(cells, test, means, samples)
}

/// Divides every value by the largest one.
pub fn scale_by_max(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        values.iter().map(|v| v / max).collect()
    } else {
        values.to_vec()
    }
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch("labelings differ in length".into()));
    }
    if a.len() < 2 {
        return Err(invalid("adjusted Rand index needs at least two items"));
    }
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![0u64; ka * kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
    }
    let pairs = |n: u64| (n * n.saturating_sub(1) / 2) as f64;
    let index: f64 = table.iter().map(|&n| pairs(n)).sum();
    let rows: f64 = table.chunks(kb).map(|r| pairs(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| pairs((0..ka).map(|i| table[i * kb + j]).sum())).sum();
    let expected = rows * cols / pairs(a.len() as u64);
    let max = 0.5 * (rows + cols);
    if max == expected {
        // both labelings trivial (all one cluster or all singletons)
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::TensorDims;

    fn tensor() -> CountTensor {
        let mut t = CountTensor::new(TensorDims::new(3, 2, 12));
        t.add(EventToken::new(0, 1, 0, 0), 6).unwrap();
        t.add(EventToken::new(1, 0, 1, 10), 4).unwrap();
        t.add(EventToken::new(2, 1, 0, 11), 1).unwrap();
        t
    }

    #[test]
    fn split_examples() {
        let t = tensor();
        let (train, test) = split_train_test(&t, 3).unwrap();
        assert_eq!(train.dims().steps, 9);
        assert_eq!(test.dims().steps, 3);
        assert_eq!(train.total() + test.total(), t.total());
        assert_eq!(test.get(&EventToken::new(1, 0, 1, 1)), 4);

        let small = t.time_slice(0..4).unwrap();
        let (train, test) = split_train_test(&small, 3).unwrap();
        assert_eq!((train.dims().steps, test.dims().steps), (1, 3));
        assert!(split_train_test(&t.time_slice(0..3).unwrap(), 3).is_err());
    }

    #[test]
    fn top_active_mask() {
        let t = tensor();
        // involvement: country 0 → 10, 1 → 11, 2 → 1
        let m = mask_top_active(&t, 1, false).unwrap();
        assert_eq!(m.held_pairs(), vec![(0, 1), (1, 0), (1, 2), (2, 1)]);
        let inv = mask_top_active(&t, 1, true).unwrap();
        assert_eq!(inv.held_pairs(), vec![(0, 2), (2, 0)]);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(m.is_held(i, j) ^ inv.is_held(i, j));
                }
            }
        }
    }

    #[test]
    fn ranking_ties_by_index() {
        let mut t = CountTensor::new(TensorDims::new(3, 1, 1));
        t.add(EventToken::new(0, 1, 0, 0), 10).unwrap();
        t.add(EventToken::new(1, 2, 0, 0), 5).unwrap();
        t.add(EventToken::new(2, 0, 0, 0), 1).unwrap();
        // involvements (11, 15, 6)
        assert_eq!(rank_by_activity(&t), vec![1, 0, 2]);
        let mut t = CountTensor::new(TensorDims::new(3, 1, 1));
        t.add(EventToken::new(2, 1, 0, 0), 3).unwrap();
        assert_eq!(rank_by_activity(&t), vec![1, 2, 0]);
    }

    #[test]
    fn rand_index_examples() {
        let ari = |a: &[usize], b: &[usize]| adjusted_rand_index(a, b).unwrap();
        assert!((ari(&[0, 0, 1, 1], &[0, 0, 1, 2]) - 4.0 / 7.0).abs() < 1e-12);
        assert_eq!(ari(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        assert!((ari(&[0, 0, 1, 1], &[0, 1, 0, 1]) + 0.5).abs() < 1e-12);
        assert_eq!(ari(&[0, 0, 0], &[0, 0, 0]), 1.0);
        assert!(adjusted_rand_index(&[0], &[0]).is_err());
        assert!(adjusted_rand_index(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn perplexity_examples() {
        assert_eq!(inverse_perplexity(&[0.0, 0.0]).unwrap(), 1.0);
        let g = inverse_perplexity(&[0.1f64.ln(), 0.9f64.ln()]).unwrap();
        assert!((g - 0.3).abs() < 1e-12);
        assert!(inverse_perplexity(&[]).is_err());
        assert_eq!(scale_by_max(&[0.2]), vec![1.0]);
        assert_eq!(scale_by_max(&[0.2, 0.4]), vec![0.5, 1.0]);
    }
}
