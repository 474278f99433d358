//! Token allocation: the exact joint draw over all `C·C·K·R` classes and the
//! compositional coordinate-wise draw over `C + C + K + R` weights.

use alloc::vec;
use alloc::vec::Vec;

use super::{LatentSources, TokenAssignment};
use crate::distributions::{draw_index, sample_log_categorical};
use crate::error::{Error, Result};
use crate::events::EventToken;
use crate::math;
use crate::model::{ModelDims, TuckerParams};
use crate::rng::RngStream;

const RESCALE_HIGH: f64 = 1e300;
const RESCALE_LOW: f64 = 1e-300;

/// Cost of computing one token's normalizing constant under each scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationCost {
    /// `C·C·K·R` classes enumerated by the joint draw.
    pub joint_classes: u64,
    /// `2C + K + R` weights evaluated by one compositional pass.
    pub compositional_weights: u64,
    pub ratio: f64,
}

pub fn allocation_cost(dims: &ModelDims) -> AllocationCost {
    let (c, k, r) = (dims.communities as u64, dims.topics as u64, dims.regimes as u64);
    let joint_classes = c * c * k * r;
    let compositional_weights = 2 * c + k + r;
    AllocationCost {
        joint_classes,
        compositional_weights,
        ratio: joint_classes as f64 / compositional_weights as f64,
    }
}

/// Scratch buffers and an instrumented weight counter for one worker.
#[derive(Debug, Clone)]
pub struct Allocator {
    weights: Vec<f64>,
    scaled: [Vec<f64>; 4],
    /// Number of categorical weights evaluated so far.
    pub weight_evals: u64,
}

impl Allocator {
    pub fn new(dims: &ModelDims) -> Self {
        let n = dims.communities.max(dims.topics).max(dims.regimes);
        Self {
            weights: Vec::with_capacity(n),
            scaled: [
                vec![0.0; dims.communities],
                vec![0.0; dims.communities],
                vec![0.0; dims.topics],
                vec![0.0; dims.regimes],
            ],
            weight_evals: 0,
        }
    }

    /// Resamples each coordinate of `z` given the other three.
    pub fn compositional(
        &mut self,
        p: &TuckerParams,
        e: &EventToken,
        z: &mut TokenAssignment,
        rng: &mut RngStream,
    ) -> Result<()> {
        let c_n = p.theta.cols();
        let k_n = p.phi.cols();
        let r_n = p.psi.cols();
        let core = &p.core;

        // sender community
        let ti = p.theta.row(e.sender);
        z.c = self.pick(c_n, rng, |c| ti[c], |c| core.get(c, z.d, z.k, z.r))?;
        // receiver community
        let tj = p.theta.row(e.receiver);
        z.d = self.pick(c_n, rng, |d| tj[d], |d| core.get(z.c, d, z.k, z.r))?;
        // topic
        let fa = p.phi.row(e.action);
        z.k = self.pick(k_n, rng, |k| fa[k], |k| core.get(z.c, z.d, k, z.r))?;
        // regime
        let pt = p.psi.row(e.time);
        z.r = self.pick(r_n, rng, |r| pt[r], |r| core.get(z.c, z.d, z.k, r))?;
        Ok(())
    }

    /// Draws index `x` with probability proportional to `factor(x)·core(x)`.
    #[inline]
    fn pick(
        &mut self,
        n: usize,
        rng: &mut RngStream,
        factor: impl Fn(usize) -> f64,
        core: impl Fn(usize) -> f64,
    ) -> Result<usize> {
        self.weight_evals += n as u64;
        self.weights.clear();
        let mut total = 0.0;
        for x in 0..n {
            let w = factor(x) * core(x);
            total += w;
            self.weights.push(w);
        }
        if total.is_finite() && total > RESCALE_LOW && total < RESCALE_HIGH {
            return Ok(draw_index(&self.weights, total, rng));
        }
        for x in 0..n {
            self.weights[x] = math::ln(factor(x)) + math::ln(core(x));
        }
        sample_log_categorical(&mut self.weights, rng)
    }

    /// Writes `u_c v_d f_k s_r λ_cdkr · scale` for every class into the
    /// weight buffer and returns the total.
    fn fill_joint(&mut self, core: &[f64], scale: f64) -> f64 {
        let [u, v, f, s] = &self.scaled;
        let mut total = 0.0;
        let mut idx = 0;
        for &sr in s.iter() {
            for &fk in f.iter() {
                let fs = fk * sr * scale;
                for &uc in u.iter() {
                    let w = uc * fs;
                    for &vd in v.iter() {
                        let x = w * vd * core[idx];
                        self.weights[idx] = x;
                        total += x;
                        idx += 1;
                    }
                }
            }
        }
        total
    }

    /// Exact draw from the full class posterior by enumerating every class.
    pub fn joint(&mut self, p: &TuckerParams, e: &EventToken, rng: &mut RngStream) -> Result<TokenAssignment> {
        let c_n = p.theta.cols();
        let k_n = p.phi.cols();
        let r_n = p.psi.cols();
        let n_classes = c_n * c_n * k_n * r_n;
        self.weight_evals += n_classes as u64;

        let [u, v, f, s] = &mut self.scaled;
        let su = scale_into(p.theta.row(e.sender), u);
        let sv = scale_into(p.theta.row(e.receiver), v);
        let sf = scale_into(p.phi.row(e.action), f);
        let ss = scale_into(p.psi.row(e.time), s);

        self.weights.clear();
        self.weights.resize(n_classes, 0.0);
        let core = p.core.as_slice();
        let mut total = 0.0;
        if su && sv && sf && ss {
            total = self.fill_joint(core, 1.0);
            if total <= RESCALE_LOW {
                // small cores: retry with the core scaled to a unit maximum
                let max = core.iter().copied().fold(0.0, f64::max);
                if max > 0.0 && max.is_finite() {
                    total = self.fill_joint(core, 1.0 / max);
                }
            }
        }
        let index = if total.is_finite() && total > RESCALE_LOW && total < RESCALE_HIGH {
            draw_index(&self.weights, total, rng)
        } else {
            let (ti, tj) = (p.theta.row(e.sender), p.theta.row(e.receiver));
            let (fa, pt) = (p.phi.row(e.action), p.psi.row(e.time));
            let mut idx = 0;
            for r in 0..r_n {
                for k in 0..k_n {
                    for c in 0..c_n {
                        for d in 0..c_n {
                            self.weights[idx] = math::ln(ti[c])
                                + math::ln(tj[d])
                                + math::ln(fa[k])
                                + math::ln(pt[r])
                                + math::ln(p.core.get(c, d, k, r));
                            idx += 1;
                        }
                    }
                }
            }
            sample_log_categorical(&mut self.weights, rng)?
        };
        Ok(decode(index, c_n, k_n))
    }
}

/// Copies `src / max(src)` into `dst`; false if the maximum is not positive.
fn scale_into(src: &[f64], dst: &mut [f64]) -> bool {
    let max = src.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0 && max.is_finite()) {
        return false;
    }
    for (d, s) in dst.iter_mut().zip(src) {
        *d = s / max;
    }
    true
}

#[inline]
fn decode(index: usize, c_n: usize, k_n: usize) -> TokenAssignment {
    let d = index % c_n;
    let rest = index / c_n;
    let c = rest % c_n;
    let rest = rest / c_n;
    let k = rest % k_n;
    let r = rest / k_n;
    TokenAssignment { c, d, k, r }
}

/// Uniformly random classes, used before the first compositional pass.
pub fn random_assignments(n: usize, dims: &ModelDims, rng: &mut RngStream) -> Vec<TokenAssignment> {
    (0..n)
        .map(|_| TokenAssignment {
            c: rng.below(dims.communities),
            d: rng.below(dims.communities),
            k: rng.below(dims.topics),
            r: rng.below(dims.regimes),
        })
        .collect()
}

/// Exact joint allocation of every token.
pub fn allocate_joint(
    params: &TuckerParams,
    tokens: &[EventToken],
    rng: &mut RngStream,
) -> Result<(Vec<TokenAssignment>, LatentSources)> {
    let dims = params.dims();
    let mut alloc = Allocator::new(&dims);
    let mut sources = LatentSources::new(&dims);
    let mut out = Vec::with_capacity(tokens.len());
    for e in tokens {
        let z = alloc.joint(params, e, rng)?;
        sources.add(e, &z);
        out.push(z);
    }
    Ok((out, sources))
}

/// One compositional pass over every token, updating `assignments` in place.
pub fn allocate_compositional(
    params: &TuckerParams,
    tokens: &[EventToken],
    assignments: &mut [TokenAssignment],
    rng: &mut RngStream,
) -> Result<LatentSources> {
    if tokens.len() != assignments.len() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "{} tokens but {} assignments",
            tokens.len(),
            assignments.len()
        )));
    }
    let dims = params.dims();
    let mut alloc = Allocator::new(&dims);
    let mut sources = LatentSources::new(&dims);
    for (e, z) in tokens.iter().zip(assignments.iter_mut()) {
        alloc.compositional(params, e, z, rng)?;
        sources.add(e, z);
    }
    Ok(sources)
}

/// Normalized class probabilities of one token, by brute-force enumeration.
/// Indexed like the core tensor.
pub fn class_probabilities(params: &TuckerParams, e: &EventToken) -> Vec<f64> {
    let d = params.dims();
    let mut w = Vec::with_capacity(d.classes());
    for r in 0..d.regimes {
        for k in 0..d.topics {
            for c in 0..d.communities {
                for dd in 0..d.communities {
                    w.push(
                        params.theta.get(e.sender, c)
                            * params.theta.get(e.receiver, dd)
                            * params.phi.get(e.action, k)
                            * params.psi.get(e.time, r)
                            * params.core.get(c, dd, k, r),
                    );
                }
            }
        }
    }
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_prior, Hyperparams};

    fn state(seed: u64, dims: ModelDims) -> TuckerParams {
        let mut rng = RngStream::new(seed);
        sample_prior(dims, Hyperparams::new(1.0, 4.0).unwrap(), &mut rng).unwrap().params
    }

    #[test]
    fn cost_examples() {
        let d = ModelDims::new(2, 1, 1, 1, 1, 1).unwrap();
        let c = allocation_cost(&d);
        assert_eq!((c.joint_classes, c.compositional_weights), (1, 4));
        assert_eq!(c.ratio, 0.25);

        let d = ModelDims::new(2, 1, 1, 50, 10, 5).unwrap();
        let c = allocation_cost(&d);
        assert_eq!((c.joint_classes, c.compositional_weights), (125_000, 115));
        assert!((c.ratio - 1086.9565217391305).abs() < 1e-9);

        let d = ModelDims::new(2, 1, 1, 20, 6, 3).unwrap();
        let c = allocation_cost(&d);
        assert_eq!((c.joint_classes, c.compositional_weights), (7_200, 49));
        assert!((c.ratio - 146.93877551020407).abs() < 1e-9);
    }

    #[test]
    fn single_class_allocation() {
        let dims = ModelDims::new(3, 2, 2, 1, 1, 1).unwrap();
        let p = state(1, dims);
        let tokens = [EventToken::new(0, 1, 0, 0), EventToken::new(2, 1, 1, 1)];
        let mut rng = RngStream::new(2);
        let (z, s) = allocate_joint(&p, &tokens, &mut rng).unwrap();
        assert!(z.iter().all(|z| *z == TokenAssignment::default()));
        let mut zc = random_assignments(2, &dims, &mut rng);
        let sc = allocate_compositional(&p, &tokens, &mut zc, &mut rng).unwrap();
        assert_eq!(z, zc);
        assert_eq!(s, sc);
    }

    #[test]
    fn weight_evaluations_per_token() {
        let dims = ModelDims::new(4, 3, 3, 3, 2, 2).unwrap();
        let p = state(3, dims);
        let mut alloc = Allocator::new(&dims);
        let mut rng = RngStream::new(0);
        let mut z = TokenAssignment::default();
        let e = EventToken::new(0, 1, 2, 1);
        alloc.compositional(&p, &e, &mut z, &mut rng).unwrap();
        assert_eq!(alloc.weight_evals, 2 * 3 + 2 + 2);
        alloc.weight_evals = 0;
        alloc.joint(&p, &e, &mut rng).unwrap();
        assert_eq!(alloc.weight_evals, 36);
    }

    #[test]
    fn joint_matches_enumeration() {
        let dims = ModelDims::new(4, 3, 3, 2, 2, 2).unwrap();
        let p = state(4, dims);
        let e = EventToken::new(1, 3, 2, 0);
        let probs = class_probabilities(&p, &e);
        let mut alloc = Allocator::new(&dims);
        let mut rng = RngStream::new(9);
        let n = 100_000;
        let mut counts = vec![0u64; probs.len()];
        for _ in 0..n {
            let z = alloc.joint(&p, &e, &mut rng).unwrap();
            counts[p.core.index(z.c, z.d, z.k, z.r)] += 1;
        }
        let chi: f64 = counts
            .iter()
            .zip(&probs)
            .map(|(&o, &q)| {
                let ex = q * n as f64;
                (o as f64 - ex).powi(2) / ex
            })
            .sum();
        // chi-square(15) 0.99 quantile
        assert!(chi < 30.5779, "chi {chi}");
    }

    #[test]
    fn extreme_scales_fall_back_to_log_space() {
        let dims = ModelDims::new(3, 1, 1, 2, 1, 1).unwrap();
        let mut p = state(5, dims);
        for x in p.theta.as_mut_slice() {
            *x = 1e-200;
        }
        for x in p.core.as_mut_slice() {
            *x = 1e-200;
        }
        p.core.set(1, 0, 0, 0, 3e-200);
        let mut alloc = Allocator::new(&dims);
        let mut rng = RngStream::new(0);
        let e = EventToken::new(0, 1, 0, 0);
        let mut hits = 0;
        for _ in 0..2000 {
            let z = alloc.joint(&p, &e, &mut rng).unwrap();
            if z.c == 1 && z.d == 0 {
                hits += 1;
            }
        }
        // class (1,0) carries half the mass: 3 / (1 + 1 + 3 + 1)
        assert!((hits as f64 / 2000.0 - 0.5).abs() < 0.05);
        let mut z = TokenAssignment::default();
        alloc.compositional(&p, &e, &mut z, &mut rng).unwrap();
    }

    #[test]
    fn subnormal_core_is_rescaled() {
        let dims = ModelDims::new(3, 1, 1, 2, 1, 1).unwrap();
        let mut p = state(6, dims);
        for x in p.core.as_mut_slice() {
            *x = 1e-310;
        }
        p.core.set(0, 1, 0, 0, 5e-310);
        let probs = class_probabilities(&p, &EventToken::new(2, 0, 0, 0));
        let mut alloc = Allocator::new(&dims);
        let mut rng = RngStream::new(1);
        let mut counts = [0usize; 4];
        let n = 20_000;
        for _ in 0..n {
            let z = alloc.joint(&p, &EventToken::new(2, 0, 0, 0), &mut rng).unwrap();
            counts[z.c * 2 + z.d] += 1;
        }
        for (c, q) in counts.iter().zip(&probs) {
            assert!((*c as f64 / n as f64 - q).abs() < 0.02, "{counts:?} vs {probs:?}");
        }
    }
}
