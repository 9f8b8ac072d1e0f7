//! Rank-level collective operations over a [`Transport`].

use std::time::Duration;

use crate::error::{Error, Result};
use crate::parallel::transport::{Direction, Frame, MessageKind, Transport};
use crate::scalar::Real;

/// Frames sent by this rank, by kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MessageStats {
    pub halo: u64,
    pub partial: u64,
    pub broadcast: u64,
    pub mirror: u64,
    pub bulk: u64,
}

impl MessageStats {
    fn count(&mut self, kind: MessageKind) {
        match kind {
            MessageKind::Halo => self.halo += 1,
            MessageKind::Partial => self.partial += 1,
            MessageKind::Broadcast => self.broadcast += 1,
            MessageKind::Mirror => self.mirror += 1,
            MessageKind::Bulk => self.bulk += 1,
            MessageKind::Hello => {}
        }
    }

    pub fn total(&self) -> u64 {
        self.halo + self.partial + self.broadcast + self.mirror + self.bulk
    }
}

/// One rank's view of the worker group. A solo communicator (`M = 1`) sends
/// nothing and its collectives reduce to local arithmetic.
pub struct Comm {
    rank: usize,
    size: usize,
    transport: Option<Box<dyn Transport>>,
    timeout: Duration,
    epoch: u32,
    stats: MessageStats,
}

impl Comm {
    pub fn solo() -> Self {
        Self { rank: 0, size: 1, transport: None, timeout: Duration::from_secs(60), epoch: 0, stats: MessageStats::default() }
    }

    pub fn new(transport: Box<dyn Transport>, timeout: Duration) -> Self {
        Self {
            rank: transport.rank(),
            size: transport.size(),
            transport: Some(transport),
            timeout,
            epoch: 0,
            stats: MessageStats::default(),
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn is_root(&self) -> bool {
        self.rank == 0
    }

    pub fn stats(&self) -> MessageStats {
        self.stats
    }

    pub fn send<T: Real>(&mut self, to: usize, kind: MessageKind, tag: u32, direction: Direction, data: &[T]) -> Result<()> {
        let frame = Frame {
            sender: self.rank as u32,
            step_tag: tag,
            kind,
            direction,
            payload: data.iter().map(|v| v.as_f64()).collect(),
        };
        self.send_frame(to, frame)
    }

    pub fn send_frame(&mut self, to: usize, frame: Frame) -> Result<()> {
        let kind = frame.kind;
        let t = self.transport.as_mut().ok_or_else(|| Error::Transport("solo communicator cannot send".into()))?;
        t.send(to, frame)?;
        self.stats.count(kind);
        Ok(())
    }

    /// Receives the next `kind` frame from `from`, which must carry `tag`.
    pub fn recv(&mut self, from: usize, kind: MessageKind, tag: u32) -> Result<Frame> {
        let timeout = self.timeout;
        let t = self.transport.as_mut().ok_or_else(|| Error::Transport("solo communicator cannot receive".into()))?;
        let f = t.recv(from, kind, timeout)?;
        if f.step_tag != tag {
            return Err(Error::Protocol { peer: from, expected: tag, found: f.step_tag });
        }
        Ok(f)
    }

    /// Receives into `out`, checking the payload length.
    pub fn recv_into<T: Real>(&mut self, from: usize, kind: MessageKind, tag: u32, out: &mut [T]) -> Result<()> {
        let f = self.recv(from, kind, tag)?;
        if f.payload.len() != out.len() {
            return Err(Error::Transport(format!(
                "rank {from} sent {} values, expected {}",
                f.payload.len(),
                out.len()
            )));
        }
        for (o, v) in out.iter_mut().zip(f.payload) {
            *o = T::lit(v);
        }
        Ok(())
    }

    /// Sums `quantities` blocks of per-plane partials across ranks.
    ///
    /// `partials` holds this rank's blocks back to back, quantity-major. Rank 0
    /// appends the blocks of every rank in rank order and adds them up
    /// sequentially, so each total is accumulated in global plane order and is
    /// the same for any number of ranks. Totals are broadcast to all ranks.
    pub fn allreduce_planes<T: Real>(&mut self, partials: &[T], quantities: usize) -> Result<Vec<T>> {
        assert!(quantities > 0 && partials.len().is_multiple_of(quantities), "partials not divisible into blocks");
        let tag = self.epoch;
        self.epoch = self.epoch.wrapping_add(1);
        if self.rank != 0 {
            self.send(0, MessageKind::Partial, tag, Direction::Left, partials)?;
            let mut totals = vec![T::zero(); quantities];
            self.recv_into(0, MessageKind::Broadcast, tag, &mut totals)?;
            return Ok(totals);
        }
        let mut blocks: Vec<Vec<T>> = vec![partials.to_vec()];
        for r in 1..self.size {
            let f = self.recv(r, MessageKind::Partial, tag)?;
            if f.payload.len() % quantities != 0 {
                return Err(Error::Transport(format!("rank {r} sent a malformed partial block")));
            }
            blocks.push(f.payload.into_iter().map(T::lit).collect());
        }
        let mut totals = vec![T::zero(); quantities];
        for (q, total) in totals.iter_mut().enumerate() {
            for b in &blocks {
                let w = b.len() / quantities;
                for &v in &b[q * w..(q + 1) * w] {
                    *total = *total + v;
                }
            }
        }
        for r in 1..self.size {
            self.send(r, MessageKind::Broadcast, tag, Direction::Right, &totals)?;
        }
        Ok(totals)
    }

    /// Sum of one partial per rank, accumulated in ascending rank order.
    pub fn reduce_broadcast<T: Real>(&mut self, partial: T) -> Result<T> {
        Ok(self.allreduce_planes(&[partial], 1)?[0])
    }

    /// Rank 0's `values` delivered to every rank.
    pub fn broadcast<T: Real>(&mut self, values: &mut [T]) -> Result<()> {
        let tag = self.epoch;
        self.epoch = self.epoch.wrapping_add(1);
        if self.rank == 0 {
            for r in 1..self.size {
                self.send(r, MessageKind::Broadcast, tag, Direction::Right, values)?;
            }
            Ok(())
        } else {
            self.recv_into(0, MessageKind::Broadcast, tag, values)
        }
    }

    /// Collects every rank's `local` buffer at rank 0, in rank order.
    pub fn gather<T: Real>(&mut self, local: &[T]) -> Result<Option<Vec<Vec<T>>>> {
        let tag = self.epoch;
        self.epoch = self.epoch.wrapping_add(1);
        if self.rank != 0 {
            self.send(0, MessageKind::Bulk, tag, Direction::Left, local)?;
            return Ok(None);
        }
        let mut out = vec![local.to_vec()];
        for r in 1..self.size {
            let f = self.recv(r, MessageKind::Bulk, tag)?;
            out.push(f.payload.into_iter().map(T::lit).collect());
        }
        Ok(Some(out))
    }

    /// Inverse of [`Comm::gather`]: rank 0 supplies one buffer per rank.
    pub fn scatter<T: Real>(&mut self, parts: Option<Vec<Vec<T>>>) -> Result<Vec<T>> {
        let tag = self.epoch;
        self.epoch = self.epoch.wrapping_add(1);
        if self.rank != 0 {
            let f = self.recv(0, MessageKind::Bulk, tag)?;
            return Ok(f.payload.into_iter().map(T::lit).collect());
        }
        let mut parts = parts.ok_or_else(|| Error::Transport("rank 0 scatter without data".into()))?;
        if parts.len() != self.size {
            return Err(Error::Transport(format!("scatter of {} parts to {} ranks", parts.len(), self.size)));
        }
        for (r, part) in parts.iter().enumerate().skip(1) {
            self.send(r, MessageKind::Bulk, tag, Direction::Right, part)?;
        }
        Ok(parts.swap_remove(0))
    }

    pub fn barrier(&mut self) -> Result<()> {
        self.reduce_broadcast(0.0f64).map(|_| ())
    }
}
