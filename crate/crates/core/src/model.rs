//! BPTD parameter state, prior sampling, Poisson rates and forward simulation.
//!
//! Each count `y[i→j, a, t]` (with `i ≠ j`) is Poisson with rate
//! `Σ_c θ[i,c] Σ_d θ[j,d] Σ_k φ[a,k] Σ_r ψ[t,r] λ[c,d,k,r]`.

use alloc::vec::Vec;

use crate::distributions::{sample_gamma, sample_poisson, GAMMA_FLOOR};
use crate::error::{invalid, Error, Result};
use crate::events::{CountTensor, EventToken, TensorDims};
use crate::linalg::{pair_mass, CoreTensor, Matrix};
use crate::math;
use crate::rng::RngStream;

/// `ε₀` (uninformative gamma shape and rate) and `γ₀` (shrinkage mass).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub eps0: f64,
    pub gamma0: f64,
}

impl Hyperparams {
    pub fn new(eps0: f64, gamma0: f64) -> Result<Self> {
        let h = Self { eps0, gamma0 };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps0 > 0.0 && self.eps0.is_finite() && self.gamma0 > 0.0 && self.gamma0.is_finite()) {
            return Err(invalid(alloc::format!(
                "hyperparameters must be positive: eps0={}, gamma0={}",
                self.eps0,
                self.gamma0
            )));
        }
        Ok(())
    }
}

/// Solves `(γ₀/C)² (γ₀/K) (γ₀/R) = target` for `γ₀`.
pub fn resolve_gamma0(communities: usize, topics: usize, regimes: usize, target: f64) -> f64 {
    let cells = (communities * communities * topics * regimes) as f64;
    math::powf(target * cells, 0.25)
}

/// Observed and latent dimension sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub countries: usize,
    pub actions: usize,
    pub steps: usize,
    pub communities: usize,
    pub topics: usize,
    pub regimes: usize,
}

impl ModelDims {
    pub fn new(
        countries: usize,
        actions: usize,
        steps: usize,
        communities: usize,
        topics: usize,
        regimes: usize,
    ) -> Result<Self> {
        let d = Self {
            countries,
            actions,
            steps,
            communities,
            topics,
            regimes,
        };
        d.validate()?;
        Ok(d)
    }

    /// Tensor shape plus latent sizes `(C, K, R)`.
    pub fn for_tensor(t: TensorDims, communities: usize, topics: usize, regimes: usize) -> Result<Self> {
        Self::new(t.countries, t.actions, t.steps, communities, topics, regimes)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.countries,
            self.actions,
            self.steps,
            self.communities,
            self.topics,
            self.regimes,
        ];
        if all.iter().any(|&x| x == 0) {
            return Err(invalid(alloc::format!("all dimensions must be at least 1: {self:?}")));
        }
        if self.countries < 2 {
            return Err(invalid("at least two countries are required"));
        }
        Ok(())
    }

    pub fn tensor(&self) -> TensorDims {
        TensorDims::new(self.countries, self.actions, self.steps)
    }

    /// Number of latent classes `C·C·K·R`.
    pub fn classes(&self) -> usize {
        self.communities * self.communities * self.topics * self.regimes
    }
}

/// The Tucker factors that define Poisson rates. Unlike [`BptdState`] this
/// allows zero entries, so one-hot embeddings can be expressed.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerParams {
    /// `V × C` country–community factors.
    pub theta: Matrix,
    /// `A × K` action–topic factors.
    pub phi: Matrix,
    /// `T × R` time-step–regime factors.
    pub psi: Matrix,
    /// `C × C × K × R` core.
    pub core: CoreTensor,
}

impl TuckerParams {
    pub fn new(theta: Matrix, phi: Matrix, psi: Matrix, core: CoreTensor) -> Result<Self> {
        let c = theta.cols();
        if core.communities() != c || core.topics() != phi.cols() || core.regimes() != psi.cols() {
            return Err(Error::DimensionMismatch(alloc::format!(
                "core is {}x{}x{}x{} but factors give C={}, K={}, R={}",
                core.communities(),
                core.communities(),
                core.topics(),
                core.regimes(),
                c,
                phi.cols(),
                psi.cols()
            )));
        }
        Ok(Self {
            theta,
            phi,
            psi,
            core,
        })
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            countries: self.theta.rows(),
            actions: self.phi.rows(),
            steps: self.psi.rows(),
            communities: self.theta.cols(),
            topics: self.phi.cols(),
            regimes: self.psi.cols(),
        }
    }

    /// Poisson rate of cell `(i → j, a, t)`.
    pub fn poisson_rate(&self, i: usize, j: usize, a: usize, t: usize) -> Result<f64> {
        let d = self.dims();
        for (what, index, limit) in [
            ("sender", i, d.countries),
            ("receiver", j, d.countries),
            ("action", a, d.actions),
            ("time", t, d.steps),
        ] {
            if index >= limit {
                return Err(Error::OutOfBounds { what, index, limit });
            }
        }
        if i == j {
            return Err(invalid("rates are defined only for i != j"));
        }
        Ok(self.rate_unchecked(i, j, a, t))
    }

    /// Nested-sum rate evaluation without bounds checks.
    pub fn rate_unchecked(&self, i: usize, j: usize, a: usize, t: usize) -> f64 {
        let (ti, tj) = (self.theta.row(i), self.theta.row(j));
        let (fa, pt) = (self.phi.row(a), self.psi.row(t));
        let c_n = ti.len();
        let mut rate = 0.0;
        for (r, &p) in pt.iter().enumerate() {
            for (k, &f) in fa.iter().enumerate() {
                let fp = f * p;
                let slice = self.core.slice(k, r);
                let mut s = 0.0;
                for (c, &x) in ti.iter().enumerate() {
                    let row = &slice[c * c_n..(c + 1) * c_n];
                    let inner: f64 = row.iter().zip(tj).map(|(l, y)| l * y).sum();
                    s += x * inner;
                }
                rate += fp * s;
            }
        }
        rate
    }

    /// `B[c][d] = Σ_k φ[a,k] Σ_r ψ[t,r] λ[c,d,k,r]` for one `(a, t)`, so that
    /// `rate(i, j, a, t) = θ_i B θ_jᵀ`.
    pub fn action_time_network(&self, a: usize, t: usize) -> Matrix {
        let c_n = self.theta.cols();
        let mut b = Matrix::zeros(c_n, c_n);
        for (r, &p) in self.psi.row(t).iter().enumerate() {
            for (k, &f) in self.phi.row(a).iter().enumerate() {
                let w = f * p;
                for (o, l) in b.as_mut_slice().iter_mut().zip(self.core.slice(k, r)) {
                    *o += w * l;
                }
            }
        }
        b
    }

    /// Sum of rates over every cell with `i ≠ j`.
    pub fn total_rate(&self) -> f64 {
        let x = pair_mass(&self.theta, &self.theta, &[]);
        let f = self.phi.col_sums();
        let p = self.psi.col_sums();
        let d = self.dims();
        let mut total = 0.0;
        for r in 0..d.regimes {
            for k in 0..d.topics {
                let fp = f[k] * p[r];
                let slice = self.core.slice(k, r);
                let s: f64 = slice.iter().zip(x.as_slice()).map(|(l, m)| l * m).sum();
                total += fp * s;
            }
        }
        total
    }

    /// Poisson log-likelihood of `tensor`.
    pub fn log_likelihood(&self, tensor: &CountTensor) -> f64 {
        let mut ll = -self.total_rate();
        for (e, n) in tensor.entries() {
            let mu = self.rate_unchecked(e.sender, e.receiver, e.action, e.time);
            ll += n as f64 * math::ln(mu) - math::ln_gamma(n as f64 + 1.0);
        }
        ll
    }

    /// Draws `y ~ Poisson(rate)` for every cell with `i ≠ j`.
    pub fn simulate(&self, rng: &mut RngStream) -> Result<CountTensor> {
        let d = self.dims();
        let mut out = CountTensor::new(d.tensor());
        let c_n = d.communities;
        let mut u = alloc::vec![0.0; c_n];
        for a in 0..d.actions {
            for t in 0..d.steps {
                let b = self.action_time_network(a, t);
                for i in 0..d.countries {
                    let ti = self.theta.row(i);
                    for (d_idx, ud) in u.iter_mut().enumerate() {
                        *ud = (0..c_n).map(|c| ti[c] * b.get(c, d_idx)).sum();
                    }
                    for j in 0..d.countries {
                        if j == i {
                            continue;
                        }
                        let mu: f64 = u.iter().zip(self.theta.row(j)).map(|(x, y)| x * y).sum();
                        let y = sample_poisson(mu, rng)?;
                        if y > 0 {
                            out.add(EventToken::new(i, j, a, t), y)?;
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// All latent parameters of BPTD.
#[derive(Debug, Clone, PartialEq)]
pub struct BptdState {
    pub params: TuckerParams,
    /// `η↻_c`, within-community weights.
    pub eta_within: Vec<f64>,
    /// `η↔_c`, between-community weights.
    pub eta_between: Vec<f64>,
    /// `ν_k`, topic weights.
    pub nu: Vec<f64>,
    /// `ρ_r`, regime weights.
    pub rho: Vec<f64>,
    /// Rate of the core elements.
    pub delta: f64,
    /// Rate shared by the shrinkage priors.
    pub zeta: f64,
    /// Per-country shape of `θ_i·`.
    pub alpha: Vec<f64>,
    /// Per-country rate of `θ_i·`.
    pub beta: Vec<f64>,
    pub hyper: Hyperparams,
}

/// Scalars to hold fixed instead of drawing from their priors.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PriorOverrides {
    pub zeta: Option<f64>,
    pub delta: Option<f64>,
}

impl BptdState {
    pub fn dims(&self) -> ModelDims {
        self.params.dims()
    }

    /// Prior shape of core cell `(c, d, k, r)`.
    #[inline]
    pub fn core_shape(&self, c: usize, d: usize, k: usize, r: usize) -> f64 {
        let community = if c == d {
            self.eta_within[c] * self.eta_between[c]
        } else {
            self.eta_between[c] * self.eta_between[d]
        };
        community * self.nu[k] * self.rho[r]
    }

    pub fn poisson_rate(&self, i: usize, j: usize, a: usize, t: usize) -> Result<f64> {
        self.params.poisson_rate(i, j, a, t)
    }

    /// Checks that every parameter is strictly positive and finite.
    pub fn validate(&self) -> Result<()> {
        let check = |name: &'static str, xs: &[f64]| {
            if xs.iter().all(|&x| x > 0.0 && x.is_finite()) {
                Ok(())
            } else {
                Err(Error::NonFinite(name))
            }
        };
        check("theta", self.params.theta.as_slice())?;
        check("phi", self.params.phi.as_slice())?;
        check("psi", self.params.psi.as_slice())?;
        check("core", self.params.core.as_slice())?;
        check("eta_within", &self.eta_within)?;
        check("eta_between", &self.eta_between)?;
        check("nu", &self.nu)?;
        check("rho", &self.rho)?;
        check("alpha", &self.alpha)?;
        check("beta", &self.beta)?;
        check("delta/zeta", &[self.delta, self.zeta])?;
        Ok(())
    }
}

/// Draws a full state from the generative prior.
pub fn sample_prior(dims: ModelDims, hyper: Hyperparams, rng: &mut RngStream) -> Result<BptdState> {
    sample_prior_with(dims, hyper, PriorOverrides::default(), rng)
}

/// [`sample_prior`] with optional fixed `ζ` and `δ`.
pub fn sample_prior_with(
    dims: ModelDims,
    hyper: Hyperparams,
    overrides: PriorOverrides,
    rng: &mut RngStream,
) -> Result<BptdState> {
    dims.validate()?;
    hyper.validate()?;
    let e = hyper.eps0;
    let (v, a_n, t_n) = (dims.countries, dims.actions, dims.steps);
    let (c_n, k_n, r_n) = (dims.communities, dims.topics, dims.regimes);

    let mut alpha = Vec::with_capacity(v);
    let mut beta = Vec::with_capacity(v);
    for _ in 0..v {
        alpha.push(sample_gamma(e, e, rng)?);
        beta.push(sample_gamma(e, e, rng)?);
    }
    let mut theta = Matrix::zeros(v, c_n);
    for i in 0..v {
        for c in 0..c_n {
            theta.set(i, c, sample_gamma(alpha[i], beta[i], rng)?);
        }
    }
    let phi = gamma_matrix(a_n, k_n, e, e, rng)?;
    let psi = gamma_matrix(t_n, r_n, e, e, rng)?;

    let zeta = match overrides.zeta {
        Some(z) => z,
        None => sample_gamma(e, e, rng)?,
    };
    let delta = match overrides.delta {
        Some(d) => d,
        None => sample_gamma(e, e, rng)?,
    };
    let eta_within = gamma_vec(c_n, e, e, rng)?;
    let eta_between = gamma_vec(c_n, hyper.gamma0 / c_n as f64, zeta, rng)?;
    let nu = gamma_vec(k_n, hyper.gamma0 / k_n as f64, zeta, rng)?;
    let rho = gamma_vec(r_n, hyper.gamma0 / r_n as f64, zeta, rng)?;

    let mut state = BptdState {
        params: TuckerParams {
            theta,
            phi,
            psi,
            core: CoreTensor::filled(c_n, k_n, r_n, 1.0),
        },
        eta_within,
        eta_between,
        nu,
        rho,
        delta,
        zeta,
        alpha,
        beta,
        hyper,
    };
    for r in 0..r_n {
        for k in 0..k_n {
            for c in 0..c_n {
                for d in 0..c_n {
                    let shape = state.core_shape(c, d, k, r);
                    let x = sample_gamma(shape.max(GAMMA_FLOOR), delta, rng)?;
                    state.params.core.set(c, d, k, r, x);
                }
            }
        }
    }
    Ok(state)
}

/// Starting point for fitting. Factor matrices and `α`, `β` are unit scale,
/// `ζ = δ = 1`, the shrinkage weights and the core are drawn from their
/// priors given those, and the core is then scaled so the expected total
/// matches `target_total`. Avoids the extreme scales of a raw prior draw
/// under vague `ε₀` while keeping the uneven weights that favour few
/// components.
pub fn initial_state(dims: ModelDims, hyper: Hyperparams, target_total: f64, rng: &mut RngStream) -> Result<BptdState> {
    dims.validate()?;
    hyper.validate()?;
    let (v, c_n, k_n, r_n) = (dims.countries, dims.communities, dims.topics, dims.regimes);
    let g = hyper.gamma0;
    let mut state = BptdState {
        params: TuckerParams {
            theta: gamma_matrix(v, c_n, 1.0, 1.0, rng)?,
            phi: gamma_matrix(dims.actions, k_n, 1.0, 1.0, rng)?,
            psi: gamma_matrix(dims.steps, r_n, 1.0, 1.0, rng)?,
            core: CoreTensor::filled(c_n, k_n, r_n, 1.0),
        },
        eta_within: gamma_vec(c_n, 1.0, 1.0, rng)?,
        eta_between: gamma_vec(c_n, g / c_n as f64, 1.0, rng)?,
        nu: gamma_vec(k_n, g / k_n as f64, 1.0, rng)?,
        rho: gamma_vec(r_n, g / r_n as f64, 1.0, rng)?,
        delta: 1.0,
        zeta: 1.0,
        alpha: alloc::vec![1.0; v],
        beta: alloc::vec![1.0; v],
        hyper,
    };
    for r in 0..r_n {
        for k in 0..k_n {
            for c in 0..c_n {
                for d in 0..c_n {
                    let shape = state.core_shape(c, d, k, r).max(GAMMA_FLOOR);
                    state.params.core.set(c, d, k, r, sample_gamma(shape, 1.0, rng)?);
                }
            }
        }
    }
    let total = state.params.total_rate();
    if target_total > 0.0 && total > 0.0 && total.is_finite() {
        let scale = target_total / total;
        state.params.core.as_mut_slice().iter_mut().for_each(|x| *x = (*x * scale).max(GAMMA_FLOOR));
    }
    Ok(state)
}

pub(crate) fn gamma_vec(n: usize, shape: f64, rate: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    (0..n).map(|_| sample_gamma(shape, rate, rng)).collect()
}

pub(crate) fn gamma_matrix(rows: usize, cols: usize, shape: f64, rate: f64, rng: &mut RngStream) -> Result<Matrix> {
    let data = gamma_vec(rows * cols, shape, rate, rng)?;
    Ok(Matrix::from_vec(rows, cols, data).expect("sized"))
}

/// Prior expectation of the core sum with `C` communities (independent of
/// `K` and `R`): `(1/δ)(γ₀³/ζ³ + ((C−1)/C) γ₀⁴/ζ⁴)`.
pub fn expected_core_sum(gamma0: f64, zeta: f64, delta: f64, communities: usize) -> Result<f64> {
    check_positive(gamma0, zeta, delta)?;
    if communities == 0 {
        return Err(invalid("communities must be at least 1"));
    }
    let g = gamma0 / zeta;
    let c = communities as f64;
    Ok((g * g * g + (c - 1.0) / c * g * g * g * g) / delta)
}

/// The `C → ∞` limit `(1/δ)(γ₀³/ζ³ + γ₀⁴/ζ⁴)`.
pub fn expected_core_sum_limit(gamma0: f64, zeta: f64, delta: f64) -> Result<f64> {
    check_positive(gamma0, zeta, delta)?;
    let g = gamma0 / zeta;
    Ok((g * g * g + g * g * g * g) / delta)
}

fn check_positive(gamma0: f64, zeta: f64, delta: f64) -> Result<()> {
    if [gamma0, zeta, delta].iter().all(|&x| x > 0.0 && x.is_finite()) {
        Ok(())
    } else {
        Err(invalid(alloc::format!(
            "gamma0, zeta, delta must be positive: {gamma0}, {zeta}, {delta}"
        )))
    }
}

/// Number of weights above `fraction × max(weights)`.
pub fn count_active(weights: &[f64], fraction: f64) -> usize {
    let max = weights.iter().copied().fold(0.0, f64::max);
    weights.iter().filter(|&&w| w > fraction * max).count()
}

/// Effective `(C, K, R)`: the number of `η↔`, `ν` and `ρ` weights above
/// `threshold_fraction` of their respective maxima.
pub fn effective_dims(state: &BptdState, threshold_fraction: f64) -> Result<(usize, usize, usize)> {
    if !(threshold_fraction > 0.0 && threshold_fraction < 1.0) {
        return Err(invalid(alloc::format!(
            "threshold fraction must lie in (0, 1), got {threshold_fraction}"
        )));
    }
    Ok((
        count_active(&state.eta_between, threshold_fraction),
        count_active(&state.nu, threshold_fraction),
        count_active(&state.rho, threshold_fraction),
    ))
}

/// Default threshold for [`effective_dims`].
pub const DEFAULT_ACTIVE_FRACTION: f64 = 0.05;

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn small_dims() -> ModelDims {
        ModelDims::new(5, 4, 3, 3, 2, 2).unwrap()
    }

    fn ones(dims: ModelDims) -> TuckerParams {
        TuckerParams {
            theta: Matrix::filled(dims.countries, dims.communities, 1.0),
            phi: Matrix::filled(dims.actions, dims.topics, 1.0),
            psi: Matrix::filled(dims.steps, dims.regimes, 1.0),
            core: CoreTensor::filled(dims.communities, dims.topics, dims.regimes, 1.0),
        }
    }

    fn brute_rate(p: &TuckerParams, i: usize, j: usize, a: usize, t: usize) -> f64 {
        let d = p.dims();
        let mut s = 0.0;
        for c in 0..d.communities {
            for dd in 0..d.communities {
                for k in 0..d.topics {
                    for r in 0..d.regimes {
                        s += p.theta.get(i, c)
                            * p.theta.get(j, dd)
                            * p.phi.get(a, k)
                            * p.psi.get(t, r)
                            * p.core.get(c, dd, k, r);
                    }
                }
            }
        }
        s
    }

    #[test]
    fn unit_rate() {
        let d = ModelDims::new(2, 1, 1, 1, 1, 1).unwrap();
        assert_eq!(ones(d).poisson_rate(0, 1, 0, 0).unwrap(), 1.0);
    }

    #[test]
    fn rate_errors() {
        let p = ones(small_dims());
        assert!(p.poisson_rate(5, 0, 0, 0).is_err());
        assert!(p.poisson_rate(0, 1, 4, 0).is_err());
        assert!(p.poisson_rate(0, 1, 0, 3).is_err());
        assert!(p.poisson_rate(1, 1, 0, 0).is_err());
    }

    #[test]
    fn rate_matches_nested_loops() {
        let mut rng = RngStream::new(3);
        let st = sample_prior(small_dims(), Hyperparams::new(1.0, 2.0).unwrap(), &mut rng).unwrap();
        let p = &st.params;
        for i in 0..5 {
            for j in 0..5 {
                if i == j {
                    continue;
                }
                for a in 0..4 {
                    for t in 0..3 {
                        let want = brute_rate(p, i, j, a, t);
                        let got = p.poisson_rate(i, j, a, t).unwrap();
                        assert!(((got - want) / want).abs() < 1e-12);
                        let b = p.action_time_network(a, t);
                        let mut via_b = 0.0;
                        for c in 0..3 {
                            for d in 0..3 {
                                via_b += p.theta.get(i, c) * b.get(c, d) * p.theta.get(j, d);
                            }
                        }
                        assert!(((via_b - want) / want).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn doubling_theta_row_doubles_rate() {
        let mut rng = RngStream::new(4);
        let st = sample_prior(small_dims(), Hyperparams::new(1.0, 2.0).unwrap(), &mut rng).unwrap();
        let mut p2 = st.params.clone();
        for v in p2.theta.row_mut(1) {
            *v *= 2.0;
        }
        for j in [0, 2, 3, 4] {
            for a in 0..4 {
                for t in 0..3 {
                    let r1 = st.params.rate_unchecked(1, j, a, t);
                    let r2 = p2.rate_unchecked(1, j, a, t);
                    assert!((r2 / r1 - 2.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn symmetric_core_gives_symmetric_rates() {
        let mut rng = RngStream::new(5);
        let st = sample_prior(small_dims(), Hyperparams::new(1.0, 2.0).unwrap(), &mut rng).unwrap();
        let mut p = st.params.clone();
        for r in 0..2 {
            for k in 0..2 {
                for c in 0..3 {
                    for d in 0..c {
                        let v = p.core.get(c, d, k, r);
                        p.core.set(d, c, k, r, v);
                    }
                }
            }
        }
        let (x, y) = (p.rate_unchecked(0, 3, 1, 2), p.rate_unchecked(3, 0, 1, 2));
        assert!(((x - y) / x).abs() < 1e-12);
        // the unsymmetrized core is directional
        let (x, y) = (st.params.rate_unchecked(0, 3, 1, 2), st.params.rate_unchecked(3, 0, 1, 2));
        assert!(((x - y) / x).abs() > 1e-6);
    }

    #[test]
    fn total_rate_matches_cellwise_sum() {
        let mut rng = RngStream::new(6);
        let st = sample_prior(small_dims(), Hyperparams::new(1.0, 2.0).unwrap(), &mut rng).unwrap();
        let mut want = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    for a in 0..4 {
                        for t in 0..3 {
                            want += st.params.rate_unchecked(i, j, a, t);
                        }
                    }
                }
            }
        }
        assert!(((st.params.total_rate() - want) / want).abs() < 1e-12);
    }

    #[test]
    fn single_class_core_has_one_cell() {
        let d = ModelDims::new(3, 2, 2, 1, 1, 1).unwrap();
        let mut rng = RngStream::new(7);
        let st = sample_prior(d, Hyperparams::new(0.1, 1.0).unwrap(), &mut rng).unwrap();
        assert_eq!(st.params.core.as_slice().len(), 1);
        let shape = st.eta_within[0] * st.eta_between[0] * st.nu[0] * st.rho[0];
        assert_eq!(st.core_shape(0, 0, 0, 0), shape);
    }

    #[test]
    fn prior_draws_strictly_positive() {
        let hyper = Hyperparams::new(0.1, 1.0).unwrap();
        for seed in 0..1000 {
            let mut rng = RngStream::new(seed);
            let st = sample_prior(small_dims(), hyper, &mut rng).unwrap();
            st.validate().unwrap();
        }
    }

    #[test]
    fn expected_core_sum_values() {
        assert_eq!(expected_core_sum_limit(1.0, 1.0, 1.0).unwrap(), 2.0);
        assert_eq!(expected_core_sum(1.0, 1.0, 1.0, 2).unwrap(), 1.5);
        let a = expected_core_sum(2.0, 0.7, 1.0, 5).unwrap();
        let b = expected_core_sum(2.0, 0.7, 2.0, 5).unwrap();
        assert!((b - a / 2.0).abs() < 1e-12);
        assert!(expected_core_sum(0.0, 1.0, 1.0, 2).is_err());
        assert!(expected_core_sum(1.0, 1.0, -1.0, 2).is_err());
        // monotone convergence towards the limit
        let limit = expected_core_sum_limit(1.3, 0.9, 1.1).unwrap();
        let mut prev = 0.0;
        for c in 1..200 {
            let x = expected_core_sum(1.3, 0.9, 1.1, c).unwrap();
            assert!(x > prev && x < limit);
            prev = x;
        }
    }

    #[test]
    fn prior_core_sum_matches_expectation() {
        // gamma0 = zeta = delta = 1 held fixed, C = 2, K = R = 1
        let dims = ModelDims::new(2, 1, 1, 2, 1, 1).unwrap();
        let hyper = Hyperparams::new(1.0, 1.0).unwrap();
        let fixed = PriorOverrides {
            zeta: Some(1.0),
            delta: Some(1.0),
        };
        let mut rng = RngStream::new(2016);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += sample_prior_with(dims, hyper, fixed, &mut rng).unwrap().params.core.sum();
        }
        let mean = sum / n as f64;
        let want = expected_core_sum(1.0, 1.0, 1.0, 2).unwrap();
        assert!((mean / want - 1.0).abs() < 0.02, "mean {mean} want {want}");
    }

    #[test]
    fn simulate_zero_rates_is_empty() {
        let d = small_dims();
        let mut p = ones(d);
        p.core = CoreTensor::filled(3, 2, 2, 0.0);
        let mut rng = RngStream::new(0);
        assert!(p.simulate(&mut rng).unwrap().is_empty());
    }

    #[test]
    fn simulated_total_matches_rate_sum() {
        let d = ModelDims::new(4, 2, 2, 2, 1, 1).unwrap();
        let mut rng = RngStream::new(8);
        let mut p = ones(d);
        p.theta = Matrix::from_vec(4, 2, vec![0.5, 1.0, 0.2, 0.3, 1.5, 0.1, 0.7, 0.7]).unwrap();
        let mu = p.total_rate();
        let n = 100;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += p.simulate(&mut rng).unwrap().total() as f64;
        }
        let se = (mu / n as f64).sqrt();
        assert!((sum / n as f64 - mu).abs() < 3.0 * se);
    }

    #[test]
    fn effective_dims_thresholding() {
        assert_eq!(count_active(&[10.0, 9.0, 0.01], 0.05), 2);
        assert_eq!(count_active(&[1.0; 6], 0.05), 6);
        let mut rng = RngStream::new(0);
        let st = sample_prior(small_dims(), Hyperparams::new(1.0, 1.0).unwrap(), &mut rng).unwrap();
        assert!(effective_dims(&st, 0.0).is_err());
        assert!(effective_dims(&st, 1.0).is_err());
        let (c, k, r) = effective_dims(&st, 0.05).unwrap();
        assert!(c >= 1 && c <= 3 && k >= 1 && k <= 2 && r >= 1 && r <= 2);
    }

    #[test]
    fn gamma0_resolution() {
        let g = resolve_gamma0(20, 6, 3, 0.01);
        assert!((g - 72f64.powf(0.25)).abs() < 1e-12);
        assert!((g - 2.9130).abs() < 1e-4);
        assert_eq!(resolve_gamma0(1, 1, 1, 1.0), 1.0);
        let check = (g / 20.0).powi(2) * (g / 6.0) * (g / 3.0);
        assert!((check - 0.01).abs() < 1e-12);
    }
}
