//! Joint-distribution tests of the samplers.
//!
//! Marginal-conditional draws (parameters from the prior, then data) are
//! compared against successive-conditional draws (alternate one sampler sweep
//! with re-simulating the data). Both target the same joint distribution when
//! every update is correct. Statistics are taken on log scale because
//! several prior moments are infinite under vague gamma priors.

use alloc::vec;
use alloc::vec::Vec;

use crate::baselines::{BptfChain, BptfState, GpirmChain, GpirmState};
use crate::error::{invalid, Result};
use crate::events::CountTensor;
use crate::gibbs::{allocate_joint, AllocationMode, BptdChain};
use crate::math;
use crate::model::{sample_prior, Hyperparams, ModelDims};
use crate::rng::RngStream;
use crate::sampler::Sampler;

/// A sampler wrapped for the joint-distribution test.
pub trait GewekeSubject {
    fn statistic_names(&self) -> Vec<&'static str>;
    /// Replaces the parameters with a prior draw.
    fn draw_prior(&mut self, rng: &mut RngStream) -> Result<()>;
    /// Replaces the data (and any latent allocation) with a draw given the
    /// current parameters.
    fn simulate_data(&mut self, rng: &mut RngStream) -> Result<()>;
    /// One sweep of the sampler under test.
    fn sweep(&mut self, rng: &mut RngStream) -> Result<()>;
    fn statistics(&self) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GewekeConfig {
    pub forward: usize,
    pub successive: usize,
    /// Successive sweeps discarded before recording.
    pub burn_in: usize,
    /// Number of batches for the batch-means variance.
    pub batches: usize,
}

impl Default for GewekeConfig {
    fn default() -> Self {
        Self {
            forward: 10_000,
            successive: 10_000,
            burn_in: 200,
            batches: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GewekeReport {
    pub names: Vec<&'static str>,
    pub forward_mean: Vec<f64>,
    pub successive_mean: Vec<f64>,
    pub z: Vec<f64>,
}

impl GewekeReport {
    pub fn max_abs_z(&self) -> f64 {
        self.z.iter().fold(0.0, |m, z| m.max(z.abs()))
    }

    pub fn passes(&self, threshold: f64) -> bool {
        self.z.iter().all(|z| z.is_finite() && z.abs() < threshold)
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Runs both samplers and returns one z-score per statistic. The successive
/// chain's variance is estimated by batch means.
pub fn geweke_test(subject: &mut dyn GewekeSubject, cfg: GewekeConfig, rng: &mut RngStream) -> Result<GewekeReport> {
    if cfg.forward < 2 || cfg.batches < 2 || cfg.successive < 2 * cfg.batches {
        return Err(invalid("Geweke test needs at least two draws per batch and two batches"));
    }
    let names = subject.statistic_names();
    let s_n = names.len();
    let mut forward: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.forward); s_n];
    for _ in 0..cfg.forward {
        subject.draw_prior(rng)?;
        subject.simulate_data(rng)?;
        for (col, x) in forward.iter_mut().zip(subject.statistics()) {
            col.push(x);
        }
    }

    let mut successive: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.successive); s_n];
    subject.draw_prior(rng)?;
    subject.simulate_data(rng)?;
    for step in 0..cfg.burn_in + cfg.successive {
        subject.sweep(rng)?;
        subject.simulate_data(rng)?;
        if step >= cfg.burn_in {
            for (col, x) in successive.iter_mut().zip(subject.statistics()) {
                col.push(x);
            }
        }
    }

    let batch = cfg.successive / cfg.batches;
    let mut report = GewekeReport {
        names,
        forward_mean: Vec::with_capacity(s_n),
        successive_mean: Vec::with_capacity(s_n),
        z: Vec::with_capacity(s_n),
    };
    for (f, s) in forward.iter().zip(&successive) {
        let (mf, vf) = mean_var(f);
        let s = &s[..batch * cfg.batches];
        let (ms, _) = mean_var(s);
        let means: Vec<f64> = s.chunks(batch).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        let (_, vb) = mean_var(&means);
        let se = math::sqrt(vf / f.len() as f64 + vb / cfg.batches as f64);
        report.forward_mean.push(mf);
        report.successive_mean.push(ms);
        report.z.push((mf - ms) / se);
    }
    Ok(report)
}

fn ln_mean(xs: &[f64]) -> f64 {
    math::ln(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// BPTD on small dims. Data are simulated together with an exact joint
/// allocation of their tokens.
#[derive(Debug)]
pub struct BptdSubject {
    dims: ModelDims,
    hyper: Hyperparams,
    chain: BptdChain,
}

impl BptdSubject {
    pub fn new(dims: ModelDims, hyper: Hyperparams, mode: AllocationMode, rng: &mut RngStream) -> Result<Self> {
        let state = sample_prior(dims, hyper, rng)?;
        let chain = BptdChain::from_state(state, CountTensor::new(dims.tensor()), mode)?;
        Ok(Self { dims, hyper, chain })
    }

    pub fn chain(&self) -> &BptdChain {
        &self.chain
    }

    pub fn chain_mut(&mut self) -> &mut BptdChain {
        &mut self.chain
    }
}

impl GewekeSubject for BptdSubject {
    fn statistic_names(&self) -> Vec<&'static str> {
        vec![
            "log mean theta",
            "log mean phi",
            "log mean psi",
            "log core sum",
            "log mean alpha",
            "log mean nu",
            "log mean rho",
            "log(1 + total)",
        ]
    }

    fn draw_prior(&mut self, rng: &mut RngStream) -> Result<()> {
        *self.chain.state_mut() = sample_prior(self.dims, self.hyper, rng)?;
        Ok(())
    }

    fn simulate_data(&mut self, rng: &mut RngStream) -> Result<()> {
        let params = &self.chain.state().params;
        let data = params.simulate(rng)?;
        let tokens = data.tokens();
        let (z, _) = allocate_joint(params, &tokens, rng)?;
        self.chain.set_data(data, tokens, z)
    }

    fn sweep(&mut self, rng: &mut RngStream) -> Result<()> {
        self.chain.sweep(rng)
    }

    fn statistics(&self) -> Vec<f64> {
        let s = self.chain.state();
        vec![
            math::ln(s.params.theta.mean()),
            math::ln(s.params.phi.mean()),
            math::ln(s.params.psi.mean()),
            math::ln(s.params.core.sum()),
            ln_mean(&s.alpha),
            ln_mean(&s.nu),
            ln_mean(&s.rho),
            math::ln_1p(self.chain.data().total() as f64),
        ]
    }
}

#[derive(Debug)]
pub struct BptfSubject {
    components: usize,
    hyper: Hyperparams,
    chain: BptfChain,
}

impl BptfSubject {
    pub fn new(dims: ModelDims, components: usize, hyper: Hyperparams, rng: &mut RngStream) -> Result<Self> {
        let chain = BptfChain::new(CountTensor::new(dims.tensor()), components, hyper, rng)?;
        Ok(Self {
            components,
            hyper,
            chain,
        })
    }
}

impl GewekeSubject for BptfSubject {
    fn statistic_names(&self) -> Vec<&'static str> {
        vec![
            "log mean sender",
            "log mean receiver",
            "log mean action",
            "log mean time",
            "log lambda sum",
            "log(1 + total)",
        ]
    }

    fn draw_prior(&mut self, rng: &mut RngStream) -> Result<()> {
        let state = BptfState::sample_prior(self.chain.data().dims(), self.components, self.hyper, rng)?;
        self.chain.set_state(state);
        Ok(())
    }

    fn simulate_data(&mut self, rng: &mut RngStream) -> Result<()> {
        let data = self.chain.state().simulate(rng)?;
        self.chain.set_data(data)
    }

    fn sweep(&mut self, rng: &mut RngStream) -> Result<()> {
        Sampler::sweep(&mut self.chain, rng)
    }

    fn statistics(&self) -> Vec<f64> {
        let s = self.chain.state();
        vec![
            math::ln(s.sender.mean()),
            math::ln(s.receiver.mean()),
            math::ln(s.action.mean()),
            math::ln(s.time.mean()),
            math::ln(s.lambda.iter().sum()),
            math::ln_1p(self.chain.data().total() as f64),
        ]
    }
}

#[derive(Debug)]
pub struct GpirmSubject {
    dims: ModelDims,
    hyper: Hyperparams,
    degree_corrected: bool,
    chain: GpirmChain,
}

impl GpirmSubject {
    pub fn new(dims: ModelDims, hyper: Hyperparams, degree_corrected: bool, rng: &mut RngStream) -> Result<Self> {
        let state = GpirmState::sample_prior(dims, hyper, degree_corrected, rng)?;
        let chain = GpirmChain::from_state(state, CountTensor::new(dims.tensor()))?;
        Ok(Self {
            dims,
            hyper,
            degree_corrected,
            chain,
        })
    }
}

impl GewekeSubject for GpirmSubject {
    fn statistic_names(&self) -> Vec<&'static str> {
        let mut names = vec![
            "log core sum",
            "share of countries in group 0",
            "share of actions in group 0",
            "share of steps in group 0",
            "log(1 + total)",
        ];
        if self.degree_corrected {
            names.extend(["log mean country degree", "log mean action degree"]);
        }
        names
    }

    fn draw_prior(&mut self, rng: &mut RngStream) -> Result<()> {
        let state = GpirmState::sample_prior(self.dims, self.hyper, self.degree_corrected, rng)?;
        self.chain.set_state(state);
        Ok(())
    }

    fn simulate_data(&mut self, rng: &mut RngStream) -> Result<()> {
        let data = self.chain.state().simulate(rng)?;
        self.chain.set_data(data)
    }

    fn sweep(&mut self, rng: &mut RngStream) -> Result<()> {
        Sampler::sweep(&mut self.chain, rng)
    }

    fn statistics(&self) -> Vec<f64> {
        let s = self.chain.state();
        let share = |g: &[usize]| g.iter().filter(|&&x| x == 0).count() as f64 / g.len() as f64;
        let mut out = vec![
            math::ln(s.core.sum()),
            share(&s.country),
            share(&s.action),
            share(&s.time),
            math::ln_1p(self.chain.data().total() as f64),
        ];
        if self.degree_corrected {
            out.extend([ln_mean(&s.country_degree), ln_mean(&s.action_degree)]);
        }
        out
    }
}
