//! Cost and wall-clock comparison of the two token allocation schemes.

use std::io::Write;
use std::time::Instant;

use bptd_core::distributions::sample_gamma;
use bptd_core::gibbs::{allocation_cost, AllocationCost};
use bptd_core::model::{initial_state, ModelDims};
use bptd_core::{AllocationMode, BptdChain, CountTensor, Hyperparams, RngStream};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub communities: usize,
    pub topics: usize,
    pub regimes: usize,
    pub cost: AllocationCost,
    /// Mean seconds per allocation-only sweep.
    pub joint_seconds: f64,
    pub compositional_seconds: f64,
}

impl BenchRow {
    pub fn speedup(&self) -> f64 {
        self.joint_seconds / self.compositional_seconds
    }
}

/// Seconds per sweep of `mode`, averaged over `sweeps` sweeps after one
/// warm-up sweep. Only the allocation runs; the parameters stay fixed.
///
/// The core is redrawn with unit shapes (then scaled to the token count).
/// Prior shapes at large `C` leave almost every cell subnormal, and
/// subnormal arithmetic would dominate the timing.
pub fn time_allocation(
    data: &CountTensor,
    (c, k, r): (usize, usize, usize),
    mode: AllocationMode,
    sweeps: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = RngStream::new(seed);
    let dims = ModelDims::for_tensor(data.dims(), c, k, r)?;
    let hyper = Hyperparams::new(1.0, 1.0)?;
    let mut state = initial_state(dims, hyper, data.total() as f64, &mut rng)?;
    for x in state.params.core.as_mut_slice() {
        *x = sample_gamma(1.0, 1.0, &mut rng)?;
    }
    let scale = data.total() as f64 / state.params.total_rate();
    if scale.is_finite() && scale > 0.0 {
        for x in state.params.core.as_mut_slice() {
            *x *= scale;
        }
    }
    let mut chain = BptdChain::from_state(state, data.clone(), mode)?;
    chain.allocate(&mut rng)?;
    let start = Instant::now();
    for _ in 0..sweeps.max(1) {
        chain.allocate(&mut rng)?;
    }
    Ok(start.elapsed().as_secs_f64() / sweeps.max(1) as f64)
}

pub fn benchmark(data: &CountTensor, grid: &[(usize, usize, usize)], sweeps: usize, seed: u64) -> Result<Vec<BenchRow>> {
    grid.iter()
        .map(|&(c, k, r)| {
            let dims = ModelDims::for_tensor(data.dims(), c, k, r)?;
            let joint_seconds = time_allocation(data, (c, k, r), AllocationMode::Joint, sweeps, seed)?;
            let compositional_seconds = time_allocation(data, (c, k, r), AllocationMode::Compositional, sweeps, seed)?;
            Ok(BenchRow {
                communities: c,
                topics: k,
                regimes: r,
                cost: allocation_cost(&dims),
                joint_seconds,
                compositional_seconds,
            })
        })
        .collect()
}

pub const BENCH_HEADER: &str =
    "communities\ttopics\tregimes\tjoint_classes\tcompositional_weights\tcost_ratio\tjoint_seconds\tcompositional_seconds\tspeedup";

pub fn write_bench<W: Write>(mut out: W, rows: &[BenchRow]) -> Result<()> {
    writeln!(out, "{BENCH_HEADER}")?;
    for b in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:.4}\t{:.6}\t{:.6}\t{:.2}",
            b.communities,
            b.topics,
            b.regimes,
            b.cost.joint_classes,
            b.cost.compositional_weights,
            b.cost.ratio,
            b.joint_seconds,
            b.compositional_seconds,
            b.speedup()
        )?;
    }
    out.flush()?;
    Ok(())
}
