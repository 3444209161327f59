use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use super::{ChatBackend, ChatRequest, ErrorKind, InferenceError};

/// Applies `f` to every item on at most `limit` worker threads and returns
/// the results in input order.
pub fn bounded_map<T, R, F>(items: &[T], limit: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let workers = limit.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = f(i, item);
                slots.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every index visited"))
        .collect()
}

/// Completes every request with at most `max_in_flight` outstanding calls.
/// Failures are returned in place; the batch never stops early.
pub fn run_batch(
    backend: &(impl ChatBackend + ?Sized),
    requests: &[ChatRequest],
    max_in_flight: usize,
) -> Result<Vec<(usize, Result<String, InferenceError>)>, InferenceError> {
    if max_in_flight == 0 {
        return Err(InferenceError::new("-", ErrorKind::Config("max_in_flight must be at least 1".into())));
    }
    Ok(bounded_map(requests, max_in_flight, |i, req| (i, backend.complete(req))))
}
