//! A small fixed-size worker pool for independent tasks.
//!
//! Tasks are pulled from a shared queue by `workers` threads; results come
//! back indexed by task, so the output is deterministic whenever the task
//! function is, regardless of completion order. A panicking task is isolated
//! to its own slot.

use std::collections::VecDeque;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Mutex;

/// A task that panicked instead of returning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerPanic {
    pub task_index: usize,
    pub message: String,
}

/// Describe a panic payload; used for failed-trial bookkeeping.
pub fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "worker panicked".to_string()
    }
}

/// Run `f` over every task on `workers` threads; results are returned in
/// task order.
pub fn run_pool<T, R, F>(tasks: Vec<T>, workers: usize, f: F) -> Vec<Result<R, WorkerPanic>>
where
    T: Send,
    R: Send,
    F: Fn(usize, T) -> R + Send + Sync,
{
    assert!(workers >= 1, "need at least one worker");
    let n = tasks.len();
    let queue: Mutex<VecDeque<(usize, T)>> = Mutex::new(tasks.into_iter().enumerate().collect());
    let results: Mutex<Vec<Option<Result<R, WorkerPanic>>>> =
        Mutex::new((0..n).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers.min(n.max(1)) {
            scope.spawn(|| loop {
                let next = queue.lock().expect("queue lock").pop_front();
                let Some((index, task)) = next else { break };
                let outcome = catch_unwind(AssertUnwindSafe(|| f(index, task))).map_err(|p| {
                    WorkerPanic {
                        task_index: index,
                        message: panic_message(p.as_ref()),
                    }
                });
                results.lock().expect("results lock")[index] = Some(outcome);
            });
        }
    });

    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every task ran"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn single_worker_runs_tasks_in_order() {
        let order = Mutex::new(Vec::new());
        let results = run_pool(vec![10, 20, 30], 1, |i, t| {
            order.lock().unwrap().push(i);
            t * 2
        });
        assert_eq!(*order.lock().unwrap(), vec![0, 1, 2]);
        assert_eq!(
            results.into_iter().map(Result::unwrap).collect::<Vec<_>>(),
            vec![20, 40, 60]
        );
    }

    #[test]
    fn four_workers_complete_all_tasks() {
        let started = AtomicUsize::new(0);
        let results = run_pool(vec![1u64; 8], 4, |i, t| {
            started.fetch_add(1, Ordering::SeqCst);
            i as u64 + t
        });
        assert_eq!(started.load(Ordering::SeqCst), 8);
        let mut values: Vec<u64> = results.into_iter().map(Result::unwrap).collect();
        assert_eq!(values.len(), 8);
        values.sort_unstable();
        assert_eq!(values, (1..=8).collect::<Vec<u64>>());
    }

    #[test]
    fn results_are_deterministic_across_runs() {
        let run = || run_pool((0..16).collect::<Vec<i64>>(), 4, |_, t| t * t);
        let a: Vec<_> = run().into_iter().map(Result::unwrap).collect();
        let b: Vec<_> = run().into_iter().map(Result::unwrap).collect();
        assert_eq!(a, b);
        assert_eq!(a[3], 9);
    }

    #[test]
    fn a_panicking_task_is_isolated() {
        let results = run_pool(vec![0, 1, 2, 3], 2, |_, t| {
            if t == 2 {
                panic!("boom on {t}");
            }
            t + 100
        });
        assert_eq!(results[0], Ok(100));
        assert_eq!(results[1], Ok(101));
        let err = results[2].as_ref().unwrap_err();
        assert_eq!(err.task_index, 2);
        assert!(err.message.contains("boom"));
        assert_eq!(results[3], Ok(103));
    }

    #[test]
    fn more_workers_than_tasks_is_fine() {
        let results = run_pool(vec![7], 8, |_, t| t);
        assert_eq!(results, vec![Ok(7)]);
        let empty: Vec<Result<i32, _>> = run_pool(Vec::<i32>::new(), 3, |_, t| t);
        assert!(empty.is_empty());
    }
}
