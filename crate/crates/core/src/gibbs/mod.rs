//! Gibbs sampler for BPTD.
//!
//! One sweep allocates every event token to a latent class `(c, d, k, r)`,
//! aggregates the latent source counts and then draws every parameter block
//! from its complete conditional.

mod allocation;
mod updates;

use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::RngCore;

pub use allocation::{
    allocate_compositional, allocate_joint, allocation_cost, class_probabilities, random_assignments,
    AllocationCost, Allocator,
};
pub use updates::{
    alpha_posterior, beta_posterior, community_involvement, core_posterior, delta_posterior, primary_communities,
    theta_posterior, update_alpha_beta,
    update_core, update_phi, update_psi, update_psi_with, update_theta, update_weights, weight_posterior, zeta_posterior,
};

use crate::error::{invalid, Error, Result};
use crate::events::{CountTensor, EventToken};
use crate::linalg::pair_mass;
use crate::model::{gamma_matrix, initial_state, BptdState, Hyperparams, ModelDims};
use crate::rng::RngStream;

/// Latent class of one event token.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct TokenAssignment {
    pub c: usize,
    pub d: usize,
    pub k: usize,
    pub r: usize,
}

/// How tokens are allocated to latent classes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum AllocationMode {
    /// Exact draw over all `C·C·K·R` classes.
    Joint,
    /// Coordinate-wise draw of `c`, `d`, `k`, `r` in turn.
    #[default]
    Compositional,
}

/// Counts of tokens attributed to each parameter by the current allocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentSources {
    communities: usize,
    topics: usize,
    regimes: usize,
    /// `V × C`: tokens sent by country `i` through community `c`.
    pub send: Vec<u64>,
    /// `V × C`: tokens received by country `j` through community `d`.
    pub recv: Vec<u64>,
    /// `A × K`.
    pub topic: Vec<u64>,
    /// `T × R`.
    pub regime: Vec<u64>,
    /// Indexed like the core tensor.
    pub core: Vec<u64>,
    pub total: u64,
}

impl LatentSources {
    pub fn new(dims: &ModelDims) -> Self {
        let (c, k, r) = (dims.communities, dims.topics, dims.regimes);
        Self {
            communities: c,
            topics: k,
            regimes: r,
            send: alloc::vec![0; dims.countries * c],
            recv: alloc::vec![0; dims.countries * c],
            topic: alloc::vec![0; dims.actions * k],
            regime: alloc::vec![0; dims.steps * r],
            core: alloc::vec![0; c * c * k * r],
            total: 0,
        }
    }

    #[inline]
    pub fn add(&mut self, e: &EventToken, z: &TokenAssignment) {
        let c_n = self.communities;
        self.send[e.sender * c_n + z.c] += 1;
        self.recv[e.receiver * c_n + z.d] += 1;
        self.topic[e.action * self.topics + z.k] += 1;
        self.regime[e.time * self.regimes + z.r] += 1;
        self.core[((z.r * self.topics + z.k) * c_n + z.c) * c_n + z.d] += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        for (a, b) in [
            (&mut self.send, &other.send),
            (&mut self.recv, &other.recv),
            (&mut self.topic, &other.topic),
            (&mut self.regime, &other.regime),
            (&mut self.core, &other.core),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.total += other.total;
    }

    #[inline]
    pub fn send(&self, i: usize, c: usize) -> u64 {
        self.send[i * self.communities + c]
    }

    #[inline]
    pub fn recv(&self, j: usize, d: usize) -> u64 {
        self.recv[j * self.communities + d]
    }

    #[inline]
    pub fn topic(&self, a: usize, k: usize) -> u64 {
        self.topic[a * self.topics + k]
    }

    #[inline]
    pub fn regime(&self, t: usize, r: usize) -> u64 {
        self.regime[t * self.regimes + r]
    }

    #[inline]
    pub fn core(&self, c: usize, d: usize, k: usize, r: usize) -> u64 {
        self.core[((r * self.topics + k) * self.communities + c) * self.communities + d]
    }

    /// True when every marginal count array sums to `total`.
    pub fn is_consistent(&self) -> bool {
        let sum = |xs: &[u64]| xs.iter().sum::<u64>();
        [&self.send, &self.recv, &self.topic, &self.regime, &self.core]
            .iter()
            .all(|xs| sum(xs) == self.total)
    }
}

/// Runs independent allocation jobs, possibly concurrently.
pub trait ChunkRunner: Send + Sync {
    fn run_all(&self, jobs: &mut [&mut (dyn FnMut() + Send)]);
}

/// Runs jobs one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct SerialRunner;

impl ChunkRunner for SerialRunner {
    fn run_all(&self, jobs: &mut [&mut (dyn FnMut() + Send)]) {
        for job in jobs.iter_mut() {
            job();
        }
    }
}

/// A BPTD Markov chain bound to one count tensor.
///
/// Tokens are split into `workers` contiguous chunks; chunk `w` draws from
/// `RngStream::substream(s, w)` where `s` is taken from the chain's stream at
/// the start of each sweep, so results depend on the worker count but not on
/// thread scheduling.
pub struct BptdChain {
    state: BptdState,
    data: CountTensor,
    tokens: Vec<EventToken>,
    assignments: Vec<TokenAssignment>,
    sources: LatentSources,
    mode: AllocationMode,
    workers: usize,
    runner: Arc<dyn ChunkRunner>,
    held: Vec<(usize, usize)>,
    test_phase: bool,
    initialized: bool,
    weight_evals: u64,
}

impl core::fmt::Debug for BptdChain {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("BptdChain")
            .field("dims", &self.state.dims())
            .field("tokens", &self.tokens.len())
            .field("mode", &self.mode)
            .field("workers", &self.workers)
            .field("test_phase", &self.test_phase)
            .finish()
    }
}

impl BptdChain {
    /// Starts a chain from a prior draw.
    pub fn new(
        data: CountTensor,
        communities: usize,
        topics: usize,
        regimes: usize,
        hyper: Hyperparams,
        mode: AllocationMode,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let dims = ModelDims::for_tensor(data.dims(), communities, topics, regimes)?;
        let state = initial_state(dims, hyper, data.total() as f64, rng)?;
        Self::from_state(state, data, mode)
    }

    /// Starts a chain from a given state. Assignments are drawn on the first
    /// sweep.
    pub fn from_state(state: BptdState, data: CountTensor, mode: AllocationMode) -> Result<Self> {
        let dims = state.dims();
        if dims.tensor() != data.dims() {
            return Err(Error::DimensionMismatch(alloc::format!(
                "state expects {:?}, data has {:?}",
                dims.tensor(),
                data.dims()
            )));
        }
        let tokens = data.tokens();
        Ok(Self {
            sources: LatentSources::new(&dims),
            assignments: Vec::new(),
            tokens,
            data,
            state,
            mode,
            workers: 1,
            runner: Arc::new(SerialRunner),
            held: Vec::new(),
            test_phase: false,
            initialized: false,
            weight_evals: 0,
        })
    }

    /// Replaces the data together with a matching allocation, e.g. an exact
    /// joint draw made alongside a simulation.
    pub fn set_data(&mut self, data: CountTensor, tokens: Vec<EventToken>, assignments: Vec<TokenAssignment>) -> Result<()> {
        if data.dims() != self.state.dims().tensor() || tokens.len() != assignments.len() {
            return Err(Error::DimensionMismatch("data, tokens and assignments disagree".into()));
        }
        if tokens.len() as u64 != data.total() {
            return Err(Error::DimensionMismatch("token count differs from tensor total".into()));
        }
        let mut sources = LatentSources::new(&self.state.dims());
        for (e, z) in tokens.iter().zip(&assignments) {
            sources.add(e, z);
        }
        self.data = data;
        self.tokens = tokens;
        self.assignments = assignments;
        self.sources = sources;
        self.initialized = true;
        Ok(())
    }

    pub fn set_workers(&mut self, workers: usize, runner: Arc<dyn ChunkRunner>) {
        self.workers = workers.max(1);
        self.runner = runner;
    }

    pub fn set_mode(&mut self, mode: AllocationMode) {
        self.mode = mode;
    }

    pub fn mode(&self) -> AllocationMode {
        self.mode
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn state(&self) -> &BptdState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut BptdState {
        &mut self.state
    }

    pub fn into_state(self) -> BptdState {
        self.state
    }

    pub fn data(&self) -> &CountTensor {
        &self.data
    }

    pub fn tokens(&self) -> &[EventToken] {
        &self.tokens
    }

    pub fn assignments(&self) -> &[TokenAssignment] {
        &self.assignments
    }

    pub fn sources(&self) -> &LatentSources {
        &self.sources
    }

    /// Categorical weights evaluated by allocation since the chain began.
    pub fn weight_evals(&self) -> u64 {
        self.weight_evals
    }

    pub fn in_test_phase(&self) -> bool {
        self.test_phase
    }

    pub fn held_pairs(&self) -> &[(usize, usize)] {
        &self.held
    }

    /// One full sweep. In the test phase only the time factors move.
    pub fn sweep(&mut self, rng: &mut RngStream) -> Result<()> {
        if self.test_phase {
            return self.sweep_time(rng);
        }
        self.allocate(rng)?;
        update_theta(&mut self.state, &self.sources, rng)?;
        update_alpha_beta(&mut self.state, &self.sources, rng)?;
        update_phi(&mut self.state, &self.sources, rng)?;
        update_psi(&mut self.state, &self.sources, rng)?;
        update_core(&mut self.state, &self.sources, rng)?;
        update_weights(&mut self.state, &self.sources, rng)?;
        Ok(())
    }

    /// Allocation followed by the `ψ` update only, with exposures restricted
    /// to observed dyads.
    pub fn sweep_time(&mut self, rng: &mut RngStream) -> Result<()> {
        self.allocate(rng)?;
        let x = pair_mass(&self.state.params.theta, &self.state.params.theta, &self.held);
        update_psi_with(&mut self.state, &self.sources, &x, rng)
    }

    /// Swaps in test-window data: `ψ` gets fresh prior rows for the new steps,
    /// everything else stays fixed and `held` dyads are treated as missing.
    pub fn clamp_for_test(&mut self, observed: CountTensor, held: &[(usize, usize)], rng: &mut RngStream) -> Result<()> {
        let dims = self.state.dims();
        let od = observed.dims();
        if od.countries != dims.countries || od.actions != dims.actions {
            return Err(Error::DimensionMismatch(alloc::format!(
                "test tensor {:?} does not match model {:?}",
                od,
                dims.tensor()
            )));
        }
        for &(i, j) in held {
            if i >= dims.countries || j >= dims.countries || i == j {
                return Err(invalid(alloc::format!("bad held-out dyad ({i}, {j})")));
            }
        }
        let e = self.state.hyper.eps0;
        self.state.params.psi = gamma_matrix(od.steps, dims.regimes, e, e, rng)?;
        self.tokens = observed.tokens();
        self.data = observed;
        self.sources = LatentSources::new(&self.state.dims());
        self.assignments.clear();
        self.initialized = false;
        self.held = held.to_vec();
        self.test_phase = true;
        Ok(())
    }

    pub fn log_likelihood(&self) -> f64 {
        self.state.params.log_likelihood(&self.data)
    }

    /// Redraws every token's class under the current parameters and rebuilds
    /// the latent source counts.
    pub fn allocate(&mut self, rng: &mut RngStream) -> Result<()> {
        let dims = self.state.dims();
        if !self.initialized {
            if self.mode == AllocationMode::Compositional {
                self.assignments = random_assignments(self.tokens.len(), &dims, rng);
            } else {
                self.assignments = alloc::vec![TokenAssignment::default(); self.tokens.len()];
            }
            self.initialized = true;
        }
        let base = rng.next_u64();
        let n = self.tokens.len();
        let workers = self.workers.min(n.max(1));
        let chunk = n.div_ceil(workers).max(1);
        let params = &self.state.params;
        let mode = self.mode;

        let mut outputs: Vec<(LatentSources, u64, Result<()>)> =
            (0..workers).map(|_| (LatentSources::new(&dims), 0, Ok(()))).collect();
        {
            let mut jobs: Vec<Box<dyn FnMut() + Send + '_>> = self
                .tokens
                .chunks(chunk)
                .zip(self.assignments.chunks_mut(chunk))
                .zip(outputs.iter_mut())
                .enumerate()
                .map(|(w, ((tokens, zs), out))| {
                    Box::new(move || {
                        let mut rng = RngStream::substream(base, w as u64);
                        let mut alloc = Allocator::new(&dims);
                        let mut run = || -> Result<()> {
                            for (e, z) in tokens.iter().zip(zs.iter_mut()) {
                                match mode {
                                    AllocationMode::Joint => *z = alloc.joint(params, e, &mut rng)?,
                                    AllocationMode::Compositional => alloc.compositional(params, e, z, &mut rng)?,
                                }
                                out.0.add(e, z);
                            }
                            Ok(())
                        };
                        out.2 = run();
                        out.1 = alloc.weight_evals;
                    }) as Box<dyn FnMut() + Send + '_>
                })
                .collect();
            let mut refs: Vec<&mut (dyn FnMut() + Send)> = jobs.iter_mut().map(|j| &mut **j as _).collect();
            self.runner.run_all(&mut refs);
        }

        let mut sources = LatentSources::new(&dims);
        for (s, evals, result) in outputs {
            result?;
            sources.merge(&s);
            self.weight_evals += evals;
        }
        self.sources = sources;
        Ok(())
    }
}
