//! Comparison models: a nonparametric CP decomposition (BPTF) and the
//! single-membership block models GPIRM and DCGPIRM.

mod bptf;
mod gpirm;

pub use bptf::{bptf_q_for_parity, BptfChain, BptfState};
pub use gpirm::{GpirmChain, GpirmState};
