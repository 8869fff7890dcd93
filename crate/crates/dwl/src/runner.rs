use std::thread;

use dwl_core::dwl::{step_and_reset, RolloutRunner, SerialRunner, StepOutput};
use dwl_core::env::Environment;
use dwl_core::Result;

/// Steps contiguous chunks of environments on scoped worker threads.
///
/// Each environment owns its RNG stream and actions are drawn by the learner,
/// so results do not depend on the worker count.
#[derive(Debug, Clone, Copy)]
pub struct ThreadedRunner {
    workers: usize,
}

impl ThreadedRunner {
    pub fn new(workers: usize) -> Self {
        Self { workers: workers.max(1) }
    }
}

impl RolloutRunner for ThreadedRunner {
    fn step_all(&mut self, envs: &mut [Box<dyn Environment>], actions: &[Vec<f64>]) -> Result<Vec<StepOutput>> {
        if self.workers == 1 || envs.len() < 2 {
            return SerialRunner.step_all(envs, actions);
        }
        let chunk = envs.len().div_ceil(self.workers);
        let parts: Vec<Result<Vec<StepOutput>>> = thread::scope(|s| {
            let handles: Vec<_> = envs
                .chunks_mut(chunk)
                .zip(actions.chunks(chunk))
                .map(|(es, acts)| {
                    s.spawn(move || es.iter_mut().zip(acts).map(|(e, a)| step_and_reset(e.as_mut(), a)).collect())
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("rollout worker panicked")).collect()
        });
        let mut out = Vec::with_capacity(envs.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }
}
