//! Message transports between workers: in-process channels and TCP sockets.
//!
//! Both deliver [`Frame`]s reliably and in order per sender. Receivers select
//! by sender and message kind; frames that arrive early for a different
//! (sender, kind) pair are stashed until asked for.
//!
//! TCP frames are little-endian:
//!
//! ```text
//! magic "QHLO" | u32 version | u32 sender | u32 step_tag | u8 kind | u8 direction
//! | u16 reserved | u64 payload bytes | f64 payload...
//! ```

use std::collections::{HashMap, HashSet, VecDeque};
use std::io::{BufReader, BufWriter, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

pub const FRAME_MAGIC: [u8; 4] = *b"QHLO";
pub const PROTOCOL_VERSION: u32 = 1;
pub const FRAME_HEADER_LEN: usize = 28;

/// Largest payload accepted from the wire (2^31 doubles).
const MAX_PAYLOAD_BYTES: u64 = 1 << 34;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageKind {
    Halo = 0,
    Partial = 1,
    Broadcast = 2,
    Mirror = 3,
    /// Whole planes moved to or from rank 0 (gather, scatter).
    Bulk = 4,
    /// First frame on a TCP connection, identifying the connecting rank.
    Hello = 5,
}

impl MessageKind {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => Self::Halo,
            1 => Self::Partial,
            2 => Self::Broadcast,
            3 => Self::Mirror,
            4 => Self::Bulk,
            5 => Self::Hello,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Direction {
    /// Toward the lower rank.
    Left = 0,
    /// Toward the higher rank.
    Right = 1,
    None = 2,
}

impl Direction {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => Self::Left,
            1 => Self::Right,
            2 => Self::None,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub sender: u32,
    pub step_tag: u32,
    pub kind: MessageKind,
    pub direction: Direction,
    pub payload: Vec<f64>,
}

impl Frame {
    pub fn encode(&self, out: &mut Vec<u8>) {
        out.reserve(FRAME_HEADER_LEN + 8 * self.payload.len());
        out.extend_from_slice(&FRAME_MAGIC);
        out.extend_from_slice(&PROTOCOL_VERSION.to_le_bytes());
        out.extend_from_slice(&self.sender.to_le_bytes());
        out.extend_from_slice(&self.step_tag.to_le_bytes());
        out.push(self.kind as u8);
        out.push(self.direction as u8);
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&((self.payload.len() * 8) as u64).to_le_bytes());
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    /// Parses a fixed-size header, returning the frame (empty payload) and the
    /// payload length in bytes.
    pub fn decode_header(h: &[u8; FRAME_HEADER_LEN]) -> Result<(Frame, usize)> {
        if h[0..4] != FRAME_MAGIC {
            return Err(Error::Transport("bad frame magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(h[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != PROTOCOL_VERSION {
            return Err(Error::Transport(format!("unsupported protocol version {version}")));
        }
        let kind = MessageKind::from_u8(h[16]).ok_or_else(|| Error::Transport(format!("unknown kind {}", h[16])))?;
        let direction =
            Direction::from_u8(h[17]).ok_or_else(|| Error::Transport(format!("unknown direction {}", h[17])))?;
        let len = u64::from_le_bytes(h[20..28].try_into().unwrap());
        if len % 8 != 0 || len > MAX_PAYLOAD_BYTES {
            return Err(Error::Transport(format!("bad payload length {len}")));
        }
        let frame = Frame { sender: u32_at(8), step_tag: u32_at(12), kind, direction, payload: Vec::new() };
        Ok((frame, len as usize))
    }

    pub fn read_from(r: &mut impl Read) -> Result<Frame> {
        let mut h = [0u8; FRAME_HEADER_LEN];
        r.read_exact(&mut h)?;
        let (mut frame, len) = Self::decode_header(&h)?;
        let mut bytes = vec![0u8; len];
        r.read_exact(&mut bytes)?;
        frame.payload = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(frame)
    }
}

/// Point-to-point messaging between ranks `0..size`.
pub trait Transport: Send {
    fn rank(&self) -> usize;
    fn size(&self) -> usize;
    /// Queues a frame for `to` without waiting for delivery.
    fn send(&mut self, to: usize, frame: Frame) -> Result<()>;
    /// Next frame from `from` with the given kind, waiting at most `timeout`.
    fn recv(&mut self, from: usize, kind: MessageKind, timeout: Duration) -> Result<Frame>;
}

enum Envelope {
    Frame(Frame),
    Closed(usize),
}

/// Receive side shared by both transports.
struct Mailbox {
    inbox: Receiver<Envelope>,
    stash: HashMap<(usize, MessageKind), VecDeque<Frame>>,
    closed: HashSet<usize>,
}

impl Mailbox {
    fn new(inbox: Receiver<Envelope>) -> Self {
        Self { inbox, stash: HashMap::new(), closed: HashSet::new() }
    }

    fn recv(&mut self, from: usize, kind: MessageKind, timeout: Duration) -> Result<Frame> {
        if let Some(f) = self.stash.get_mut(&(from, kind)).and_then(VecDeque::pop_front) {
            return Ok(f);
        }
        let deadline = Instant::now() + timeout;
        loop {
            if self.closed.contains(&from) {
                return Err(Error::Transport(format!("rank {from} disconnected")));
            }
            let left = deadline.saturating_duration_since(Instant::now());
            match self.inbox.recv_timeout(left) {
                Ok(Envelope::Frame(f)) => {
                    let key = (f.sender as usize, f.kind);
                    if key == (from, kind) {
                        return Ok(f);
                    }
                    self.stash.entry(key).or_default().push_back(f);
                }
                Ok(Envelope::Closed(r)) => {
                    self.closed.insert(r);
                }
                Err(RecvTimeoutError::Timeout) => {
                    return Err(Error::Transport(format!("timed out after {timeout:?} waiting for rank {from}")))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::Transport("all peers disconnected".into()))
                }
            }
        }
    }
}

/// Channel-backed transport for workers that are threads of one process.
pub struct InProcTransport {
    rank: usize,
    peers: Vec<Sender<Envelope>>,
    mailbox: Mailbox,
}

/// Fully connected set of `size` in-process endpoints, indexed by rank.
pub fn inproc_mesh(size: usize) -> Vec<InProcTransport> {
    let (senders, receivers): (Vec<_>, Vec<_>) = (0..size).map(|_| mpsc::channel()).unzip();
    receivers
        .into_iter()
        .enumerate()
        .map(|(rank, rx)| InProcTransport { rank, peers: senders.clone(), mailbox: Mailbox::new(rx) })
        .collect()
}

impl Transport for InProcTransport {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.peers.len()
    }

    fn send(&mut self, to: usize, frame: Frame) -> Result<()> {
        self.peers[to]
            .send(Envelope::Frame(frame))
            .map_err(|_| Error::Transport(format!("rank {to} is gone")))
    }

    fn recv(&mut self, from: usize, kind: MessageKind, timeout: Duration) -> Result<Frame> {
        self.mailbox.recv(from, kind, timeout)
    }
}

impl Drop for InProcTransport {
    fn drop(&mut self) {
        for (r, p) in self.peers.iter().enumerate() {
            if r != self.rank {
                let _ = p.send(Envelope::Closed(self.rank));
            }
        }
    }
}

/// Ranks a TCP worker keeps a connection to: rank 0, its x-neighbors and its
/// mirror partner `size - 1 - rank`. Rank 0 connects to everyone.
pub fn tcp_peers(rank: usize, size: usize) -> Vec<usize> {
    let mut peers: Vec<usize> = if rank == 0 {
        (1..size).collect()
    } else {
        let mut v = vec![0, rank - 1, size - 1 - rank];
        if rank + 1 < size {
            v.push(rank + 1);
        }
        v
    };
    peers.retain(|&p| p != rank);
    peers.sort_unstable();
    peers.dedup();
    peers
}

/// Socket transport for workers in separate processes.
///
/// Every rank listens on its own endpoint; for each needed pair the higher
/// rank connects to the lower one and announces itself with a hello frame.
pub struct TcpTransport {
    rank: usize,
    size: usize,
    writers: HashMap<usize, Sender<Vec<u8>>>,
    flushers: Vec<thread::JoinHandle<()>>,
    mailbox: Mailbox,
}

impl TcpTransport {
    pub fn connect(rank: usize, endpoints: &[SocketAddr], timeout: Duration) -> Result<Self> {
        let size = endpoints.len();
        if rank >= size {
            return Err(Error::Config(format!("rank {rank} outside {size} endpoints")));
        }
        let listener = TcpListener::bind(endpoints[rank])
            .map_err(|e| Error::Transport(format!("bind {}: {e}", endpoints[rank])))?;
        Self::establish(rank, endpoints, listener, timeout)
    }

    /// Like [`TcpTransport::connect`] with an already bound listener.
    pub fn establish(rank: usize, endpoints: &[SocketAddr], listener: TcpListener, timeout: Duration) -> Result<Self> {
        let size = endpoints.len();
        let peers = tcp_peers(rank, size);
        let deadline = Instant::now() + timeout;
        let (tx, rx) = mpsc::channel();
        let mut streams: HashMap<usize, TcpStream> = HashMap::new();

        for &p in peers.iter().filter(|&&p| p < rank) {
            let mut stream = loop {
                match TcpStream::connect_timeout(&endpoints[p], Duration::from_millis(500)) {
                    Ok(s) => break s,
                    Err(e) if Instant::now() >= deadline => {
                        return Err(Error::Transport(format!("connect to rank {p} at {}: {e}", endpoints[p])))
                    }
                    Err(_) => thread::sleep(Duration::from_millis(50)),
                }
            };
            let hello = Frame {
                sender: rank as u32,
                step_tag: 0,
                kind: MessageKind::Hello,
                direction: Direction::None,
                payload: Vec::new(),
            };
            let mut bytes = Vec::new();
            hello.encode(&mut bytes);
            stream.write_all(&bytes)?;
            streams.insert(p, stream);
        }

        let expected = peers.iter().filter(|&&p| p > rank).count();
        listener.set_nonblocking(true)?;
        while streams.len() < peers.len() {
            match listener.accept() {
                Ok((mut stream, _)) => {
                    stream.set_nonblocking(false)?;
                    stream.set_read_timeout(Some(deadline.saturating_duration_since(Instant::now()).max(Duration::from_millis(1))))?;
                    let hello = Frame::read_from(&mut stream)?;
                    stream.set_read_timeout(None)?;
                    let from = hello.sender as usize;
                    if hello.kind != MessageKind::Hello || from <= rank || from >= size {
                        return Err(Error::Transport(format!("unexpected handshake from rank {from}")));
                    }
                    streams.insert(from, stream);
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Err(Error::Transport(format!(
                            "rank {rank}: only {} of {expected} peers connected before timeout",
                            streams.len() - (peers.len() - expected)
                        )));
                    }
                    thread::sleep(Duration::from_millis(20));
                }
                Err(e) => return Err(e.into()),
            }
        }

        let mut writers = HashMap::new();
        let mut flushers = Vec::new();
        for (peer, stream) in streams {
            stream.set_nodelay(true)?;
            let read_half = stream.try_clone()?;
            let inbox = tx.clone();
            thread::spawn(move || {
                let mut r = BufReader::new(read_half);
                while let Ok(f) = Frame::read_from(&mut r) {
                    if inbox.send(Envelope::Frame(f)).is_err() {
                        return;
                    }
                }
                let _ = inbox.send(Envelope::Closed(peer));
            });
            let (wtx, wrx) = mpsc::channel::<Vec<u8>>();
            flushers.push(thread::spawn(move || {
                let mut w = BufWriter::new(&stream);
                for bytes in wrx {
                    if w.write_all(&bytes).and_then(|_| w.flush()).is_err() {
                        break;
                    }
                }
                drop(w);
                let _ = stream.shutdown(Shutdown::Write);
            }));
            writers.insert(peer, wtx);
        }
        Ok(Self { rank, size, writers, flushers, mailbox: Mailbox::new(rx) })
    }
}

impl Transport for TcpTransport {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.size
    }

    fn send(&mut self, to: usize, frame: Frame) -> Result<()> {
        let w = self
            .writers
            .get(&to)
            .ok_or_else(|| Error::Transport(format!("rank {} has no connection to rank {to}", self.rank)))?;
        let mut bytes = Vec::new();
        frame.encode(&mut bytes);
        w.send(bytes).map_err(|_| Error::Transport(format!("connection to rank {to} closed")))
    }

    fn recv(&mut self, from: usize, kind: MessageKind, timeout: Duration) -> Result<Frame> {
        self.mailbox.recv(from, kind, timeout)
    }
}

impl Drop for TcpTransport {
    /// Waits until queued frames are on the wire, so a process may exit right
    /// after its last send.
    fn drop(&mut self) {
        self.writers.clear();
        for h in self.flushers.drain(..) {
            let _ = h.join();
        }
    }
}
