//! Slab decomposition, transports, collectives and the per-rank engine.

pub mod comm;
pub mod partition;
pub mod scaling;
pub mod transport;
pub mod worker;

use std::thread;
use std::time::Duration;

pub use comm::{Comm, MessageStats};
pub use partition::{SlabExtent, SlabPartition};
pub use scaling::{scaling_estimate, ScalingEstimate};
pub use transport::{inproc_mesh, Direction, Frame, InProcTransport, MessageKind, TcpTransport, Transport};
pub use worker::{gather_slab, scatter_field, slab_from_planes, Worker};

use crate::error::{Error, Result};

/// Runs `body` on `workers` in-process ranks (threads) and returns the
/// per-rank results in rank order.
///
/// When ranks fail, the reported error is the root cause: errors other than
/// transport failures (which are usually a consequence of another rank
/// bailing out) take precedence.
pub fn run_inproc<R: Send>(workers: usize, timeout: Duration, body: impl Fn(Comm) -> Result<R> + Sync) -> Result<Vec<R>> {
    if workers <= 1 {
        return Ok(vec![body(Comm::solo())?]);
    }
    let body = &body;
    let results: Vec<Result<R>> = thread::scope(|s| {
        let handles: Vec<_> = inproc_mesh(workers)
            .into_iter()
            .enumerate()
            .map(|(rank, t)| {
                thread::Builder::new()
                    .name(format!("rank-{rank}"))
                    .spawn_scoped(s, move || body(Comm::new(Box::new(t), timeout)))
                    .expect("spawn worker thread")
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Transport("worker thread panicked".into()))))
            .collect()
    });
    let mut ok = Vec::with_capacity(workers);
    let mut first_err: Option<Error> = None;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                let replace = match &first_err {
                    None => true,
                    Some(prev) => is_secondary(prev) && !is_secondary(&e),
                };
                if replace {
                    first_err = Some(e);
                }
            }
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(ok),
    }
}

fn is_secondary(e: &Error) -> bool {
    matches!(e, Error::Transport(_))
}
