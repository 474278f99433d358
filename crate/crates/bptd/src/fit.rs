//! Running a chain: trace, periodic checkpoints, and for BPTD the posterior
//! mean over the second half of the sweeps.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use bptd_core::sampler::{build_sampler, NamedArray, Sampler};
use bptd_core::{CountTensor, ModelKind, RngStream};

use crate::checkpoint::{save_checkpoint, Checkpoint};
use crate::config::RunConfig;
use crate::error::{AppError, Result};
use crate::runner::runner_for;
use crate::trace::TraceWriter;

pub const TRACE_FILE: &str = "trace.tsv";
pub const FINAL_CHECKPOINT: &str = "checkpoint.bin";
pub const MEAN_CHECKPOINT: &str = "posterior_mean.bin";
pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug, Clone)]
pub struct FitSummary {
    pub sweeps: usize,
    pub final_log_likelihood: f64,
    pub checkpoints: Vec<PathBuf>,
    pub mean_samples: usize,
}

/// Running elementwise mean of named arrays.
#[derive(Debug, Default)]
struct ArrayMean {
    sums: Vec<NamedArray>,
    n: usize,
}

impl ArrayMean {
    fn add(&mut self, arrays: Vec<NamedArray>) {
        if self.sums.is_empty() {
            self.sums = arrays;
        } else {
            for (s, a) in self.sums.iter_mut().zip(arrays) {
                for (x, y) in s.data.iter_mut().zip(a.data) {
                    *x += y;
                }
            }
        }
        self.n += 1;
    }

    fn mean(&self) -> Vec<NamedArray> {
        let n = self.n as f64;
        self.sums
            .iter()
            .map(|a| NamedArray::new(&a.name, &a.shape, a.data.iter().map(|x| x / n).collect()))
            .collect()
    }
}

fn checkpoint(model: &dyn Sampler, data: &CountTensor, sweep: usize) -> Checkpoint {
    Checkpoint {
        model: model.kind(),
        sweep: sweep as u64,
        dims: data.dims(),
        arrays: model.arrays(),
    }
}

/// Fits `cfg.model` to `data`, writing the trace, the resolved config and
/// checkpoints into `out`.
pub fn fit(cfg: &RunConfig, data: CountTensor, out: &Path) -> Result<FitSummary> {
    std::fs::create_dir_all(out).map_err(AppError::io(format!("creating {}", out.display())))?;
    std::fs::write(out.join(CONFIG_FILE), cfg.to_text())?;

    let mut rng = RngStream::new(cfg.seed);
    let dims = data.dims();
    let mut model = build_sampler(cfg.model, data.clone(), &cfg.model_config()?, &mut rng)?;
    model.set_workers(cfg.workers, runner_for(cfg.workers));

    let trace_path = out.join(TRACE_FILE);
    let f = File::create(&trace_path).map_err(AppError::io(format!("creating {}", trace_path.display())))?;
    let mut trace = TraceWriter::new(BufWriter::new(f))?;
    trace.record(0, &model.trace())?;

    let mut checkpoints = Vec::new();
    let mut mean = ArrayMean::default();
    let keep_mean = cfg.model == ModelKind::Bptd;
    for it in 1..=cfg.sweeps {
        model.sweep(&mut rng).map_err(AppError::numerical)?;
        let rec = model.trace();
        if !rec.log_likelihood.is_finite() {
            return Err(AppError::Numerical(format!("log-likelihood became {} at sweep {it}", rec.log_likelihood)));
        }
        trace.record(it, &rec)?;
        if keep_mean && it > cfg.sweeps / 2 {
            mean.add(model.arrays());
        }
        if cfg.save_every > 0 && it % cfg.save_every == 0 && it < cfg.sweeps {
            let path = out.join(format!("checkpoint-{it:06}.bin"));
            save_checkpoint(&path, &checkpoint(model.as_ref(), &data, it))?;
            checkpoints.push(path);
        }
        if it % 100 == 0 {
            log::info!("sweep {it}/{}: loglik {:.3}", cfg.sweeps, rec.log_likelihood);
        }
    }
    trace.finish()?;

    let path = out.join(FINAL_CHECKPOINT);
    save_checkpoint(&path, &checkpoint(model.as_ref(), &data, cfg.sweeps))?;
    checkpoints.push(path);
    if mean.n > 0 {
        let path = out.join(MEAN_CHECKPOINT);
        let ck = Checkpoint {
            model: cfg.model,
            sweep: cfg.sweeps as u64,
            dims,
            arrays: mean.mean(),
        };
        save_checkpoint(&path, &ck)?;
        checkpoints.push(path);
    }
    Ok(FitSummary {
        sweeps: cfg.sweeps,
        final_log_likelihood: model.log_likelihood(),
        checkpoints,
        mean_samples: mean.n,
    })
}
