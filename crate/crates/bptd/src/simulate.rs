//! Synthetic tensors drawn from the BPTD generative process.

use bptd_core::model::{sample_prior, ModelDims};
use bptd_core::{BptdState, CountTensor, Hyperparams, ModelKind, RngStream};

use crate::checkpoint::Checkpoint;
use crate::error::{AppError, Result};

/// Draws a state from the prior and a tensor from it.
pub fn simulate_prior(dims: ModelDims, hyper: Hyperparams, seed: u64) -> Result<(BptdState, CountTensor)> {
    let mut rng = RngStream::new(seed);
    let state = sample_prior(dims, hyper, &mut rng).map_err(AppError::numerical)?;
    let tensor = state.params.simulate(&mut rng).map_err(AppError::numerical)?;
    Ok((state, tensor))
}

/// Draws a tensor from the BPTD state stored in `ck`.
pub fn simulate_from_checkpoint(ck: &Checkpoint, seed: u64) -> Result<CountTensor> {
    if ck.model != ModelKind::Bptd {
        return Err(AppError::Usage(format!("can only simulate from a bptd checkpoint, got {}", ck.model)));
    }
    let state = BptdState::from_arrays(&ck.arrays).map_err(|e| AppError::Data(format!("checkpoint: {e}")))?;
    let mut rng = RngStream::new(seed);
    state.params.simulate(&mut rng).map_err(AppError::numerical)
}
