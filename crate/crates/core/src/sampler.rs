//! A common interface over BPTD and the baselines, used by evaluation, the
//! trace writer and checkpoints.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::baselines::{bptf_q_for_parity, BptfChain, GpirmChain};
use crate::error::{invalid, Error, Result};
use crate::events::{CountTensor, EventToken};
use crate::gibbs::{AllocationMode, BptdChain, ChunkRunner};
use crate::linalg::{CoreTensor, Matrix};
use crate::model::{effective_dims, BptdState, Hyperparams, TuckerParams, DEFAULT_ACTIVE_FRACTION};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Bptd,
    Bptf,
    Gpirm,
    Dcgpirm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Bptd, ModelKind::Bptf, ModelKind::Gpirm, ModelKind::Dcgpirm];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Bptd => "bptd",
            ModelKind::Bptf => "bptf",
            ModelKind::Gpirm => "gpirm",
            ModelKind::Dcgpirm => "dcgpirm",
        }
    }

    /// Stable one-byte tag used in checkpoints.
    pub fn tag(self) -> u8 {
        match self {
            ModelKind::Bptd => 1,
            ModelKind::Bptf => 2,
            ModelKind::Gpirm => 3,
            ModelKind::Dcgpirm => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }

    /// True for the models in which a country can belong to several
    /// communities at once.
    pub fn mixed_membership(self) -> bool {
        matches!(self, ModelKind::Bptd | ModelKind::Bptf)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(alloc::format!("unknown model {s:?}")))
    }
}

/// One row of the sampling trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub model: ModelKind,
    pub log_likelihood: f64,
    pub effective_dims: Option<(usize, usize, usize)>,
    pub delta: Option<f64>,
    pub zeta: Option<f64>,
}

/// A named dense array with its shape, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedArray {
    pub fn new(name: &str, shape: &[usize], data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn matrix(name: &str, m: &Matrix) -> Self {
        Self::new(name, &[m.rows(), m.cols()], m.as_slice().to_vec())
    }

    pub fn vector(name: &str, v: &[f64]) -> Self {
        Self::new(name, &[v.len()], v.to_vec())
    }

    pub fn scalar(name: &str, x: f64) -> Self {
        Self::new(name, &[1], vec![x])
    }
}

fn find<'a>(arrays: &'a [NamedArray], name: &'static str) -> Result<&'a NamedArray> {
    arrays
        .iter()
        .find(|a| a.name == name)
        .ok_or_else(|| invalid(alloc::format!("checkpoint lacks array {name:?}")))
}

fn matrix_of(arrays: &[NamedArray], name: &'static str) -> Result<Matrix> {
    let a = find(arrays, name)?;
    match a.shape[..] {
        [r, c] => Matrix::from_vec(r, c, a.data.clone()),
        _ => None,
    }
    .ok_or_else(|| Error::DimensionMismatch(alloc::format!("{name} is not a matrix")))
}

fn vector_of(arrays: &[NamedArray], name: &'static str) -> Result<Vec<f64>> {
    Ok(find(arrays, name)?.data.clone())
}

fn scalar_of(arrays: &[NamedArray], name: &'static str) -> Result<f64> {
    find(arrays, name)?
        .data
        .first()
        .copied()
        .ok_or(Error::Empty("scalar array"))
}

impl BptdState {
    /// Every parameter as a named array. The core is stored with shape
    /// `[R, K, C, C]`, matching its memory order.
    pub fn to_arrays(&self) -> Vec<NamedArray> {
        let p = &self.params;
        let (c, k, r) = (p.core.communities(), p.core.topics(), p.core.regimes());
        vec![
            NamedArray::matrix("theta", &p.theta),
            NamedArray::matrix("phi", &p.phi),
            NamedArray::matrix("psi", &p.psi),
            NamedArray::new("core", &[r, k, c, c], p.core.as_slice().to_vec()),
            NamedArray::vector("eta_within", &self.eta_within),
            NamedArray::vector("eta_between", &self.eta_between),
            NamedArray::vector("nu", &self.nu),
            NamedArray::vector("rho", &self.rho),
            NamedArray::vector("alpha", &self.alpha),
            NamedArray::vector("beta", &self.beta),
            NamedArray::scalar("delta", self.delta),
            NamedArray::scalar("zeta", self.zeta),
            NamedArray::vector("hyper", &[self.hyper.eps0, self.hyper.gamma0]),
        ]
    }

    pub fn from_arrays(arrays: &[NamedArray]) -> Result<Self> {
        let theta = matrix_of(arrays, "theta")?;
        let phi = matrix_of(arrays, "phi")?;
        let psi = matrix_of(arrays, "psi")?;
        let core = find(arrays, "core")?;
        let core = match core.shape[..] {
            [r, k, c, c2] if c == c2 => CoreTensor::from_vec(c, k, r, core.data.clone()),
            _ => None,
        }
        .ok_or_else(|| Error::DimensionMismatch("core must have shape [R, K, C, C]".into()))?;
        let hyper = vector_of(arrays, "hyper")?;
        if hyper.len() != 2 {
            return Err(Error::DimensionMismatch("hyper must hold eps0 and gamma0".into()));
        }
        let state = BptdState {
            params: TuckerParams::new(theta, phi, psi, core)?,
            eta_within: vector_of(arrays, "eta_within")?,
            eta_between: vector_of(arrays, "eta_between")?,
            nu: vector_of(arrays, "nu")?,
            rho: vector_of(arrays, "rho")?,
            alpha: vector_of(arrays, "alpha")?,
            beta: vector_of(arrays, "beta")?,
            delta: scalar_of(arrays, "delta")?,
            zeta: scalar_of(arrays, "zeta")?,
            hyper: Hyperparams::new(hyper[0], hyper[1])?,
        };
        let d = state.dims();
        let ok = state.eta_within.len() == d.communities
            && state.eta_between.len() == d.communities
            && state.nu.len() == d.topics
            && state.rho.len() == d.regimes
            && state.alpha.len() == d.countries
            && state.beta.len() == d.countries;
        if !ok {
            return Err(Error::DimensionMismatch("weight vector lengths disagree with factors".into()));
        }
        state.validate()?;
        Ok(state)
    }
}

/// A Markov chain over one of the four models.
pub trait Sampler: Send {
    fn kind(&self) -> ModelKind;

    /// One sweep. After [`Sampler::clamp_for_test`] only time factors move.
    fn sweep(&mut self, rng: &mut RngStream) -> Result<()>;

    /// Poisson rate of cell `(i → j, a, t)` under the current state.
    fn rate(&self, i: usize, j: usize, a: usize, t: usize) -> f64;

    /// Rates of many cells; `out` must have the same length as `cells`.
    fn rates(&self, cells: &[EventToken], out: &mut [f64]) {
        for (e, o) in cells.iter().zip(out.iter_mut()) {
            *o = self.rate(e.sender, e.receiver, e.action, e.time);
        }
    }

    /// Poisson log-likelihood of the data the chain currently conditions on.
    fn log_likelihood(&self) -> f64;

    fn trace(&self) -> TraceRecord;

    /// Freezes every non-time parameter and switches to `observed` test data,
    /// treating `held` dyads as missing.
    fn clamp_for_test(&mut self, observed: CountTensor, held: &[(usize, usize)], rng: &mut RngStream) -> Result<()>;

    /// The full state as named arrays for checkpoints.
    fn arrays(&self) -> Vec<NamedArray>;

    /// Splits token allocation into `workers` chunks run by `runner`.
    /// Models without chunked allocation ignore it.
    fn set_workers(&mut self, _workers: usize, _runner: Arc<dyn ChunkRunner>) {}
}

impl Sampler for BptdChain {
    fn kind(&self) -> ModelKind {
        ModelKind::Bptd
    }

    fn sweep(&mut self, rng: &mut RngStream) -> Result<()> {
        BptdChain::sweep(self, rng)
    }

    fn rate(&self, i: usize, j: usize, a: usize, t: usize) -> f64 {
        self.state().params.rate_unchecked(i, j, a, t)
    }

    fn rates(&self, cells: &[EventToken], out: &mut [f64]) {
        // θ_i B θ_jᵀ with B cached per (a, t)
        let p = &self.state().params;
        let mut cache: Option<((usize, usize), Matrix)> = None;
        let c_n = p.theta.cols();
        for (e, o) in cells.iter().zip(out.iter_mut()) {
            let key = (e.action, e.time);
            if cache.as_ref().map(|(k, _)| *k != key).unwrap_or(true) {
                cache = Some((key, p.action_time_network(e.action, e.time)));
            }
            let b = &cache.as_ref().expect("filled").1;
            let (ti, tj) = (p.theta.row(e.sender), p.theta.row(e.receiver));
            let mut rate = 0.0;
            for c in 0..c_n {
                let inner: f64 = b.row(c).iter().zip(tj).map(|(x, y)| x * y).sum();
                rate += ti[c] * inner;
            }
            *o = rate;
        }
    }

    fn log_likelihood(&self) -> f64 {
        BptdChain::log_likelihood(self)
    }

    fn trace(&self) -> TraceRecord {
        let s = self.state();
        TraceRecord {
            model: ModelKind::Bptd,
            log_likelihood: self.log_likelihood(),
            effective_dims: effective_dims(s, DEFAULT_ACTIVE_FRACTION).ok(),
            delta: Some(s.delta),
            zeta: Some(s.zeta),
        }
    }

    fn clamp_for_test(&mut self, observed: CountTensor, held: &[(usize, usize)], rng: &mut RngStream) -> Result<()> {
        BptdChain::clamp_for_test(self, observed, held, rng)
    }

    fn arrays(&self) -> Vec<NamedArray> {
        self.state().to_arrays()
    }

    fn set_workers(&mut self, workers: usize, runner: Arc<dyn ChunkRunner>) {
        BptdChain::set_workers(self, workers, runner)
    }
}

/// Settings for building any of the four samplers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub communities: usize,
    pub topics: usize,
    pub regimes: usize,
    pub hyper: Hyperparams,
    pub allocation: AllocationMode,
    /// BPTF components; `None` picks the parameter-parity value.
    pub components: Option<usize>,
}

/// Builds a chain of the given kind on `data`, started from the model's
/// fitting initialization.
pub fn build_sampler(kind: ModelKind, data: CountTensor, cfg: &ModelConfig, rng: &mut RngStream) -> Result<Box<dyn Sampler>> {
    let (c, k, r) = (cfg.communities, cfg.topics, cfg.regimes);
    Ok(match kind {
        ModelKind::Bptd => Box::new(BptdChain::new(data, c, k, r, cfg.hyper, cfg.allocation, rng)?),
        ModelKind::Bptf => {
            let d = data.dims();
            let q = cfg
                .components
                .unwrap_or_else(|| bptf_q_for_parity(d.countries, d.actions, d.steps, c, k, r));
            Box::new(BptfChain::new(data, q, cfg.hyper, rng)?)
        }
        ModelKind::Gpirm => Box::new(GpirmChain::new(data, c, k, r, cfg.hyper, false, rng)?),
        ModelKind::Dcgpirm => Box::new(GpirmChain::new(data, c, k, r, cfg.hyper, true, rng)?),
    })
}
