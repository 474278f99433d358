use std::sync::Arc;

use bptd_core::gibbs::{ChunkRunner, SerialRunner};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "BPTD_WORKERS";

/// Runs each allocation job on its own scoped thread; the first job runs on
/// the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct ThreadRunner;

impl ChunkRunner for ThreadRunner {
    fn run_all(&self, jobs: &mut [&mut (dyn FnMut() + Send)]) {
        let Some((first, rest)) = jobs.split_first_mut() else {
            return;
        };
        std::thread::scope(|s| {
            for job in rest.iter_mut() {
                let job: &mut (dyn FnMut() + Send) = &mut **job;
                s.spawn(job);
            }
            first();
        });
    }
}

/// Worker count from `BPTD_WORKERS`, defaulting to 1.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

/// The runner for `workers` chunks.
pub fn runner_for(workers: usize) -> Arc<dyn ChunkRunner> {
    if workers > 1 {
        Arc::new(ThreadRunner)
    } else {
        Arc::new(SerialRunner)
    }
}
