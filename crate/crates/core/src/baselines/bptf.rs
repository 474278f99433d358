//! Bayesian Poisson tensor factorization: a CP decomposition with separate
//! sender and receiver factors and a gamma-shrunk weight per component.

use alloc::vec;
use alloc::vec::Vec;

use crate::distributions::{draw_index, sample_gamma, sample_log_categorical};
use crate::error::{invalid, Error, Result};
use crate::events::{CountTensor, EventToken, TensorDims};
use crate::linalg::Matrix;
use crate::math;
use crate::model::{gamma_matrix, gamma_vec, Hyperparams};
use crate::rng::RngStream;
use crate::sampler::{ModelKind, NamedArray, Sampler, TraceRecord};

/// Number of BPTF components whose factor count matches BPTD's:
/// `⌈(VC + AK + TR + C²KR) / (2V + A + T + 1)⌉`.
pub fn bptf_q_for_parity(
    countries: usize,
    actions: usize,
    steps: usize,
    communities: usize,
    topics: usize,
    regimes: usize,
) -> usize {
    let bptd = countries * communities
        + actions * topics
        + steps * regimes
        + communities * communities * topics * regimes;
    let per_component = 2 * countries + actions + steps + 1;
    bptd.div_ceil(per_component).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BptfState {
    /// `V × Q`.
    pub sender: Matrix,
    /// `V × Q`.
    pub receiver: Matrix,
    /// `A × Q`.
    pub action: Matrix,
    /// `T × Q`.
    pub time: Matrix,
    /// Per-component weight `λ_q`.
    pub lambda: Vec<f64>,
    pub zeta: f64,
    pub hyper: Hyperparams,
}

impl BptfState {
    pub fn components(&self) -> usize {
        self.lambda.len()
    }

    pub fn sample_prior(dims: TensorDims, components: usize, hyper: Hyperparams, rng: &mut RngStream) -> Result<Self> {
        hyper.validate()?;
        if components == 0 {
            return Err(invalid("BPTF needs at least one component"));
        }
        let e = hyper.eps0;
        let q = components;
        let sender = gamma_matrix(dims.countries, q, e, e, rng)?;
        let receiver = gamma_matrix(dims.countries, q, e, e, rng)?;
        let action = gamma_matrix(dims.actions, q, e, e, rng)?;
        let time = gamma_matrix(dims.steps, q, e, e, rng)?;
        let zeta = sample_gamma(e, e, rng)?;
        let lambda = gamma_vec(q, hyper.gamma0 / q as f64, zeta, rng)?;
        Ok(Self {
            sender,
            receiver,
            action,
            time,
            lambda,
            zeta,
            hyper,
        })
    }

    /// Unit-mean factors with weights scaled so the expected total matches
    /// `target_total`.
    pub fn initial(dims: TensorDims, components: usize, hyper: Hyperparams, target_total: f64, rng: &mut RngStream) -> Result<Self> {
        hyper.validate()?;
        if components == 0 {
            return Err(invalid("BPTF needs at least one component"));
        }
        let q = components;
        let mut state = Self {
            sender: gamma_matrix(dims.countries, q, 1.0, 1.0, rng)?,
            receiver: gamma_matrix(dims.countries, q, 1.0, 1.0, rng)?,
            action: gamma_matrix(dims.actions, q, 1.0, 1.0, rng)?,
            time: gamma_matrix(dims.steps, q, 1.0, 1.0, rng)?,
            lambda: vec![1.0; q],
            zeta: 1.0,
            hyper,
        };
        let total = state.total_rate();
        if target_total > 0.0 && total > 0.0 {
            let scale = target_total / total;
            state.lambda.iter_mut().for_each(|l| *l *= scale);
        }
        Ok(state)
    }

    #[inline]
    pub fn rate(&self, i: usize, j: usize, a: usize, t: usize) -> f64 {
        let (s, r) = (self.sender.row(i), self.receiver.row(j));
        let (f, p) = (self.action.row(a), self.time.row(t));
        let mut total = 0.0;
        for q in 0..self.lambda.len() {
            total += s[q] * r[q] * f[q] * p[q] * self.lambda[q];
        }
        total
    }

    /// `Σ_{i≠j} s_iq r_jq` per component, minus `held` ordered pairs.
    fn pair_mass(&self, held: &[(usize, usize)]) -> Vec<f64> {
        let ss = self.sender.col_sums();
        let rs = self.receiver.col_sums();
        let mut x: Vec<f64> = ss.iter().zip(&rs).map(|(a, b)| a * b).collect();
        for i in 0..self.sender.rows() {
            for (q, xq) in x.iter_mut().enumerate() {
                *xq -= self.sender.get(i, q) * self.receiver.get(i, q);
            }
        }
        for &(i, j) in held {
            for (q, xq) in x.iter_mut().enumerate() {
                *xq -= self.sender.get(i, q) * self.receiver.get(j, q);
            }
        }
        x.iter().map(|v| v.max(0.0)).collect()
    }

    pub fn total_rate(&self) -> f64 {
        let x = self.pair_mass(&[]);
        let f = self.action.col_sums();
        let p = self.time.col_sums();
        (0..self.lambda.len()).map(|q| self.lambda[q] * x[q] * f[q] * p[q]).sum()
    }

    pub fn log_likelihood(&self, data: &CountTensor) -> f64 {
        let mut ll = -self.total_rate();
        for (e, n) in data.entries() {
            let mu = self.rate(e.sender, e.receiver, e.action, e.time);
            ll += n as f64 * math::ln(mu) - math::ln_gamma(n as f64 + 1.0);
        }
        ll
    }

    pub fn simulate(&self, rng: &mut RngStream) -> Result<CountTensor> {
        let dims = TensorDims::new(self.sender.rows(), self.action.rows(), self.time.rows());
        let mut out = CountTensor::new(dims);
        for i in 0..dims.countries {
            for j in 0..dims.countries {
                if i == j {
                    continue;
                }
                for a in 0..dims.actions {
                    for t in 0..dims.steps {
                        let y = crate::distributions::sample_poisson(self.rate(i, j, a, t), rng)?;
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

/// Token counts per component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BptfSources {
    q: usize,
    pub sender: Vec<u64>,
    pub receiver: Vec<u64>,
    pub action: Vec<u64>,
    pub time: Vec<u64>,
    pub component: Vec<u64>,
}

impl BptfSources {
    fn new(dims: TensorDims, q: usize) -> Self {
        Self {
            q,
            sender: vec![0; dims.countries * q],
            receiver: vec![0; dims.countries * q],
            action: vec![0; dims.actions * q],
            time: vec![0; dims.steps * q],
            component: vec![0; q],
        }
    }

    fn add(&mut self, e: &EventToken, q: usize) {
        self.sender[e.sender * self.q + q] += 1;
        self.receiver[e.receiver * self.q + q] += 1;
        self.action[e.action * self.q + q] += 1;
        self.time[e.time * self.q + q] += 1;
        self.component[q] += 1;
    }
}

/// A BPTF Markov chain bound to one count tensor.
#[derive(Debug, Clone)]
pub struct BptfChain {
    state: BptfState,
    data: CountTensor,
    tokens: Vec<EventToken>,
    held: Vec<(usize, usize)>,
    test_phase: bool,
}

impl BptfChain {
    pub fn new(data: CountTensor, components: usize, hyper: Hyperparams, rng: &mut RngStream) -> Result<Self> {
        let state = BptfState::initial(data.dims(), components, hyper, data.total() as f64, rng)?;
        Self::from_state(state, data)
    }

    pub fn from_state(state: BptfState, data: CountTensor) -> Result<Self> {
        let d = data.dims();
        if state.sender.rows() != d.countries || state.action.rows() != d.actions || state.time.rows() != d.steps {
            return Err(Error::DimensionMismatch("BPTF state does not match data".into()));
        }
        Ok(Self {
            tokens: data.tokens(),
            data,
            state,
            held: Vec::new(),
            test_phase: false,
        })
    }

    pub fn state(&self) -> &BptfState {
        &self.state
    }

    pub fn data(&self) -> &CountTensor {
        &self.data
    }

    /// Replaces the data (used by the Geweke harness).
    pub fn set_data(&mut self, data: CountTensor) -> Result<()> {
        if data.dims() != self.data.dims() {
            return Err(Error::DimensionMismatch("replacement data has other dims".into()));
        }
        self.tokens = data.tokens();
        self.data = data;
        Ok(())
    }

    /// Replaces the state (used by the Geweke harness).
    pub fn set_state(&mut self, state: BptfState) {
        self.state = state;
    }

    /// Allocates every token to a component, exactly.
    pub fn allocate(&self, rng: &mut RngStream) -> Result<BptfSources> {
        let s = &self.state;
        let q_n = s.components();
        let mut sources = BptfSources::new(self.data.dims(), q_n);
        let mut w = vec![0.0; q_n];
        for e in &self.tokens {
            let (a, b) = (s.sender.row(e.sender), s.receiver.row(e.receiver));
            let (f, p) = (s.action.row(e.action), s.time.row(e.time));
            let mut total = 0.0;
            for q in 0..q_n {
                w[q] = a[q] * b[q] * f[q] * p[q] * s.lambda[q];
                total += w[q];
            }
            let q = if total.is_finite() && total > 1e-300 && total < 1e300 {
                draw_index(&w, total, rng)
            } else {
                for q in 0..q_n {
                    w[q] = math::ln(a[q]) + math::ln(b[q]) + math::ln(f[q]) + math::ln(p[q]) + math::ln(s.lambda[q]);
                }
                sample_log_categorical(&mut w, rng)?
            };
            sources.add(e, q);
        }
        Ok(sources)
    }

    fn full_sweep(&mut self, rng: &mut RngStream) -> Result<()> {
        let src = self.allocate(rng)?;
        let e = self.state.hyper.eps0;
        let g = self.state.hyper.gamma0;
        let q_n = self.state.components();
        let v = self.state.sender.rows();

        // sender factors
        let f = self.state.action.col_sums();
        let p = self.state.time.col_sums();
        let rs = self.state.receiver.col_sums();
        for i in 0..v {
            for q in 0..q_n {
                let expo = self.state.lambda[q] * f[q] * p[q] * (rs[q] - self.state.receiver.get(i, q)).max(0.0);
                let x = sample_gamma(e + src.sender[i * q_n + q] as f64, e + expo, rng)?;
                self.state.sender.set(i, q, x);
            }
        }
        // receiver factors
        let ss = self.state.sender.col_sums();
        for j in 0..v {
            for q in 0..q_n {
                let expo = self.state.lambda[q] * f[q] * p[q] * (ss[q] - self.state.sender.get(j, q)).max(0.0);
                let x = sample_gamma(e + src.receiver[j * q_n + q] as f64, e + expo, rng)?;
                self.state.receiver.set(j, q, x);
            }
        }

        let x = self.state.pair_mass(&[]);
        for a in 0..self.state.action.rows() {
            for q in 0..q_n {
                let expo = self.state.lambda[q] * p[q] * x[q];
                let v = sample_gamma(e + src.action[a * q_n + q] as f64, e + expo, rng)?;
                self.state.action.set(a, q, v);
            }
        }
        let f = self.state.action.col_sums();
        self.update_time(&src, &x, &f, rng)?;

        let p = self.state.time.col_sums();
        for q in 0..q_n {
            let shape = g / q_n as f64 + src.component[q] as f64;
            self.state.lambda[q] = sample_gamma(shape, self.state.zeta + x[q] * f[q] * p[q], rng)?;
        }
        let sum: f64 = self.state.lambda.iter().sum();
        self.state.zeta = sample_gamma(e + g, e + sum, rng)?;
        Ok(())
    }

    fn update_time(&mut self, src: &BptfSources, x: &[f64], f: &[f64], rng: &mut RngStream) -> Result<()> {
        let e = self.state.hyper.eps0;
        let q_n = self.state.components();
        for t in 0..self.state.time.rows() {
            for q in 0..q_n {
                let expo = self.state.lambda[q] * f[q] * x[q];
                let v = sample_gamma(e + src.time[t * q_n + q] as f64, e + expo, rng)?;
                self.state.time.set(t, q, v);
            }
        }
        Ok(())
    }

    fn time_sweep(&mut self, rng: &mut RngStream) -> Result<()> {
        let src = self.allocate(rng)?;
        let x = self.state.pair_mass(&self.held);
        let f = self.state.action.col_sums();
        self.update_time(&src, &x, &f, rng)
    }
}

impl Sampler for BptfChain {
    fn kind(&self) -> ModelKind {
        ModelKind::Bptf
    }

    fn sweep(&mut self, rng: &mut RngStream) -> Result<()> {
        if self.test_phase {
            self.time_sweep(rng)
        } else {
            self.full_sweep(rng)
        }
    }

    fn rate(&self, i: usize, j: usize, a: usize, t: usize) -> f64 {
        self.state.rate(i, j, a, t)
    }

    fn log_likelihood(&self) -> f64 {
        self.state.log_likelihood(&self.data)
    }

    fn trace(&self) -> TraceRecord {
        TraceRecord {
            model: ModelKind::Bptf,
            log_likelihood: self.log_likelihood(),
            effective_dims: None,
            delta: None,
            zeta: Some(self.state.zeta),
        }
    }

    fn clamp_for_test(&mut self, observed: CountTensor, held: &[(usize, usize)], rng: &mut RngStream) -> Result<()> {
        let d = observed.dims();
        if d.countries != self.state.sender.rows() || d.actions != self.state.action.rows() {
            return Err(Error::DimensionMismatch("test tensor does not match model".into()));
        }
        let e = self.state.hyper.eps0;
        self.state.time = gamma_matrix(d.steps, self.state.components(), e, e, rng)?;
        self.tokens = observed.tokens();
        self.data = observed;
        self.held = held.to_vec();
        self.test_phase = true;
        Ok(())
    }

    fn arrays(&self) -> Vec<NamedArray> {
        let s = &self.state;
        vec![
            NamedArray::matrix("sender", &s.sender),
            NamedArray::matrix("receiver", &s.receiver),
            NamedArray::matrix("action", &s.action),
            NamedArray::matrix("time", &s.time),
            NamedArray::vector("lambda", &s.lambda),
            NamedArray::scalar("zeta", s.zeta),
            NamedArray::vector("hyper", &[s.hyper.eps0, s.hyper.gamma0]),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parity_examples() {
        assert_eq!(bptf_q_for_parity(249, 20, 12, 20, 6, 3), 24);
        assert_eq!(bptf_q_for_parity(1, 1, 1, 1, 1, 1), 1);
        assert_eq!(bptf_q_for_parity(10, 5, 4, 2, 2, 2), 2);
    }

    #[test]
    fn single_component_takes_every_token() {
        let dims = TensorDims::new(4, 2, 2);
        let mut rng = RngStream::new(1);
        let hyper = Hyperparams::new(1.0, 1.0).unwrap();
        let truth = BptfState::sample_prior(dims, 1, hyper, &mut rng).unwrap();
        let data = truth.simulate(&mut rng).unwrap();
        let chain = BptfChain::new(data.clone(), 1, hyper, &mut rng).unwrap();
        let src = chain.allocate(&mut rng).unwrap();
        assert_eq!(src.component, vec![data.total()]);
    }

    #[test]
    fn seeded_chains_agree() {
        let dims = TensorDims::new(5, 3, 3);
        let hyper = Hyperparams::new(0.5, 1.0).unwrap();
        let mut rng = RngStream::new(7);
        let truth = BptfState::sample_prior(dims, 3, hyper, &mut rng).unwrap();
        let data = truth.simulate(&mut rng).unwrap();
        let run = || {
            let mut rng = RngStream::new(99);
            let mut c = BptfChain::new(data.clone(), 3, hyper, &mut rng).unwrap();
            for _ in 0..5 {
                c.sweep(&mut rng).unwrap();
            }
            c.state().clone()
        };
        assert_eq!(run(), run());
    }
}
