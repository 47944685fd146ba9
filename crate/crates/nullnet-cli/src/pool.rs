//! A minimal bounded worker pool for independent pipeline jobs.

use std::collections::VecDeque;
use std::sync::Mutex;

pub type Job<'a, T> = Box<dyn FnOnce() -> anyhow::Result<T> + Send + 'a>;

/// Runs every job on a bounded pool (one worker per available core, capped at
/// the job count) and returns results in submission order. The first job
/// error is propagated after all workers drain.
pub fn run_jobs<'a, T: Send + 'a>(jobs: Vec<Job<'a, T>>) -> anyhow::Result<Vec<T>> {
    let n = jobs.len();
    let workers = std::thread::available_parallelism()
        .map(|p| p.get())
        .unwrap_or(1)
        .min(n.max(1));
    let queue: Mutex<VecDeque<(usize, Job<'a, T>)>> =
        Mutex::new(jobs.into_iter().enumerate().collect());
    let results: Mutex<Vec<Option<anyhow::Result<T>>>> =
        Mutex::new((0..n).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let Some((idx, job)) = queue.lock().unwrap().pop_front() else {
                    return;
                };
                let outcome = job();
                results.lock().unwrap()[idx] = Some(outcome);
            });
        }
    });

    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("worker completed every dequeued job"))
        .collect()
}
