//! Held-out comparison of the four models.
//!
//! The last `holdout` time steps form the test window. Each mask picks the
//! held dyads from the activity ranking of the full tensor. Every
//! (mask, model, seed) run trains on the earlier steps, clamps to the
//! observed test dyads and scores the held ones.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use bptd_core::evaluation::{mask_top_active, scale_by_max, split_train_test, strong_generalization, HeldOutMask, Protocol};
use bptd_core::sampler::{build_sampler, ModelConfig};
use bptd_core::{CountTensor, ModelKind, RngStream};

use crate::config::MaskKind;
use crate::error::{AppError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub model: ModelKind,
    pub mask: MaskKind,
    pub seed: u64,
    pub inverse_perplexity: f64,
    /// Inverse perplexity divided by the best run under the same mask.
    pub scaled: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub models: Vec<ModelKind>,
    pub masks: Vec<MaskKind>,
    pub seeds: Vec<u64>,
    pub holdout: usize,
    pub protocol: Protocol,
    pub model_config: ModelConfig,
    /// Runs executed at once.
    pub parallel: usize,
}

pub fn build_mask(full: &CountTensor, kind: MaskKind) -> Result<HeldOutMask> {
    Ok(match kind {
        MaskKind::Top(n) => mask_top_active(full, n, false)?,
        MaskKind::InverseTop(n) => mask_top_active(full, n, true)?,
    })
}

/// Seed of one run. Distinct models and masks get distinct streams.
fn run_seed(seed: u64, model: ModelKind, mask_index: usize) -> RngStream {
    RngStream::substream(seed, (u64::from(model.tag()) << 32) | mask_index as u64)
}

impl Comparison {
    pub fn run(&self, full: &CountTensor) -> Result<Vec<ComparisonRow>> {
        let (train, test) = split_train_test(full, self.holdout)?;
        let masks: Vec<HeldOutMask> = self.masks.iter().map(|&m| build_mask(full, m)).collect::<Result<_>>()?;

        let mut jobs = Vec::new();
        for mi in 0..self.masks.len() {
            for &model in &self.models {
                for &seed in &self.seeds {
                    jobs.push((mi, model, seed));
                }
            }
        }

        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<Result<ComparisonRow>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
        let work = || loop {
            let n = next.fetch_add(1, Ordering::Relaxed);
            let Some(&(mi, model, seed)) = jobs.get(n) else {
                break;
            };
            let start = Instant::now();
            let row = (|| {
                let mut rng = run_seed(seed, model, mi);
                let mut sampler = build_sampler(model, train.clone(), &self.model_config, &mut rng)?;
                let res = strong_generalization(sampler.as_mut(), &test, &masks[mi], &self.protocol, &mut rng)?;
                Ok(ComparisonRow {
                    model,
                    mask: self.masks[mi],
                    seed,
                    inverse_perplexity: res.inverse_perplexity,
                    scaled: 0.0,
                    seconds: start.elapsed().as_secs_f64(),
                })
            })()
            .map_err(|e: bptd_core::Error| AppError::from(e));
            log::info!("{} {} seed {} done in {:.1}s", model, self.masks[mi], seed, start.elapsed().as_secs_f64());
            results.lock().expect("no poisoned lock")[n] = Some(row);
        };
        let threads = self.parallel.clamp(1, jobs.len().max(1));
        std::thread::scope(|s| {
            for _ in 1..threads {
                s.spawn(work);
            }
            work();
        });

        let mut rows = results
            .into_inner()
            .expect("no poisoned lock")
            .into_iter()
            .map(|r| r.expect("every job ran"))
            .collect::<Result<Vec<_>>>()?;
        for mask in &self.masks {
            let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].mask == *mask).collect();
            let vals: Vec<f64> = idx.iter().map(|&i| rows[i].inverse_perplexity).collect();
            for (&i, s) in idx.iter().zip(scale_by_max(&vals)) {
                rows[i].scaled = s;
            }
        }
        Ok(rows)
    }
}

pub const COMPARISON_HEADER: &str = "model\tmask\tseed\tinverse_perplexity\tscaled_value\twall_clock_seconds";

pub fn write_comparison<W: Write>(mut out: W, rows: &[ComparisonRow]) -> Result<()> {
    writeln!(out, "{COMPARISON_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:.3}",
            r.model, r.mask, r.seed, r.inverse_perplexity, r.scaled, r.seconds
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Mean inverse perplexity of `model` under `mask`.
pub fn mean_score(rows: &[ComparisonRow], model: ModelKind, mask: MaskKind) -> Option<f64> {
    let v: Vec<f64> = rows
        .iter()
        .filter(|r| r.model == model && r.mask == mask)
        .map(|r| r.inverse_perplexity)
        .collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}
