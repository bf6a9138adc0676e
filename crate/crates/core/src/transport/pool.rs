use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use super::types::{CompletionRequest, TokenDistribution};
use super::{CompletionModel, TransportError};

pub type CompletionResult = Result<Vec<TokenDistribution>, TransportError>;

/// Runs every request with at most `max_in_flight` outstanding at once.
///
/// Results come back in request order regardless of completion order. After
/// a fatal error (see [`TransportError::is_fatal`]) no new requests are
/// started and the unstarted ones report a copy of that error.
pub fn complete_all<M: CompletionModel + ?Sized>(
    model: &M,
    requests: &[CompletionRequest],
    max_in_flight: usize,
) -> Vec<CompletionResult> {
    let workers = max_in_flight.max(1).min(requests.len().max(1));
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let mut slots: Vec<Option<CompletionResult>> = (0..requests.len()).map(|_| None).collect();
    let (tx, rx) = mpsc::channel::<(usize, CompletionResult)>();

    std::thread::scope(|s| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, stop) = (&next, &stop);
            s.spawn(move || loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(req) = requests.get(i) else { break };
                let result = model.complete(req);
                if result.as_ref().is_err_and(TransportError::is_fatal) {
                    stop.store(true, Ordering::SeqCst);
                }
                if tx.send((i, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, result) in rx {
            slots[i] = Some(result);
        }
    });

    let fatal = slots
        .iter()
        .flatten()
        .find_map(|r| r.as_ref().err().filter(|e| e.is_fatal()))
        .map(|e| e.to_string());
    slots
        .into_iter()
        .map(|r| {
            r.unwrap_or_else(|| {
                Err(TransportError::Endpoint(format!(
                    "not attempted after fatal error: {}",
                    fatal.as_deref().unwrap_or("unknown")
                )))
            })
        })
        .collect()
}
