//! Deterministic message exchange between the two parties.
//!
//! A frame is `[byte length: u32 LE][tag: u8][step: u64 LE][payload: u64 LE...]`
//! where the length covers everything after itself. The socket transport and
//! the in-process channel transport both move exactly these bytes, so a
//! protocol run produces the same byte transcript on either backend.
//!
//! Both endpoints send before blocking on receive at every exchange point,
//! which keeps the symmetric protocol deadlock-free without any concurrency
//! inside a session.

use std::io::{BufReader, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{channel, Receiver, Sender};

use crate::error::{Error, Result};

/// Frame kinds, in the order they may appear in a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Tag {
    /// Symmetric opening of masked values.
    Open = 1,
    /// Session handshake and control signals.
    Sync = 2,
    /// A party feeding an input sharing to its peer.
    ShareIn = 3,
    /// One-directional reveal of an output.
    Result = 4,
    /// Session teardown with an error code.
    Abort = 5,
}

impl Tag {
    fn from_byte(b: u8) -> Result<Tag> {
        Ok(match b {
            1 => Tag::Open,
            2 => Tag::Sync,
            3 => Tag::ShareIn,
            4 => Tag::Result,
            5 => Tag::Abort,
            other => {
                return Err(Error::BadTag {
                    expected: "known frame tag",
                    got: other,
                })
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Tag::Open => "OPEN",
            Tag::Sync => "SYNC",
            Tag::ShareIn => "SHARE_IN",
            Tag::Result => "RESULT",
            Tag::Abort => "ABORT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub tag: Tag,
    pub step: u64,
    pub payload: Vec<u64>,
}

impl Frame {
    pub fn new(tag: Tag, step: u64, payload: Vec<u64>) -> Self {
        Frame { tag, step, payload }
    }

    /// Serializes the frame, length prefix included.
    pub fn encode(&self) -> Vec<u8> {
        let body_len = 1 + 8 + 8 * self.payload.len();
        let mut out = Vec::with_capacity(4 + body_len);
        out.extend_from_slice(&(body_len as u32).to_le_bytes());
        out.push(self.tag as u8);
        out.extend_from_slice(&self.step.to_le_bytes());
        for &w in &self.payload {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    /// Parses a frame body (everything after the length prefix).
    pub fn decode_body(body: &[u8]) -> Result<Frame> {
        if body.len() < 9 || (body.len() - 9) % 8 != 0 {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("bad frame body length {}", body.len()),
            )));
        }
        let tag = Tag::from_byte(body[0])?;
        let step = u64::from_le_bytes(body[1..9].try_into().unwrap());
        let payload = body[9..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Frame { tag, step, payload })
    }
}

/// Frame and byte counters plus a running FNV-1a digest of the transcript.
///
/// The digest folds in every sent and received byte in order (with a
/// direction marker), so two runs with equal digests moved identical
/// traffic.
#[derive(Debug, Clone, Default)]
pub struct TransportStats {
    pub frames_sent: u64,
    pub frames_received: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    digest: Fnv,
}

impl TransportStats {
    pub fn transcript_digest(&self) -> u64 {
        self.digest.state
    }

    fn record(&mut self, direction: u8, bytes: &[u8], capture: &mut Option<Vec<u8>>) {
        self.digest.update(&[direction]);
        self.digest.update(bytes);
        if direction == b'S' {
            self.frames_sent += 1;
            self.bytes_sent += bytes.len() as u64;
        } else {
            self.frames_received += 1;
            self.bytes_received += bytes.len() as u64;
        }
        if let Some(buf) = capture {
            buf.push(direction);
            buf.extend_from_slice(bytes);
        }
    }
}

#[derive(Debug, Clone)]
struct Fnv {
    state: u64,
}

impl Default for Fnv {
    fn default() -> Self {
        Fnv {
            state: 0xcbf2_9ce4_8422_2325,
        }
    }
}

impl Fnv {
    fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.state ^= b as u64;
            self.state = self.state.wrapping_mul(0x100_0000_01b3);
        }
    }
}

/// A byte-stream endpoint able to move frames to and from the peer.
pub trait Transport: Send {
    fn send(&mut self, frame: &Frame) -> Result<()>;
    fn recv(&mut self) -> Result<Frame>;
    fn stats(&self) -> &TransportStats;
    /// Start keeping the raw transcript bytes (tests compare backends).
    fn enable_capture(&mut self);
    fn captured(&self) -> Option<&[u8]>;
}

/// In-process transport over a pair of byte channels.
pub struct ChannelTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    stats: TransportStats,
    capture: Option<Vec<u8>>,
}

/// Creates two connected in-process endpoints.
pub fn channel_pair() -> (ChannelTransport, ChannelTransport) {
    let (tx_a, rx_b) = channel();
    let (tx_b, rx_a) = channel();
    (
        ChannelTransport {
            tx: tx_a,
            rx: rx_a,
            stats: TransportStats::default(),
            capture: None,
        },
        ChannelTransport {
            tx: tx_b,
            rx: rx_b,
            stats: TransportStats::default(),
            capture: None,
        },
    )
}

impl Transport for ChannelTransport {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        let bytes = frame.encode();
        self.stats.record(b'S', &bytes, &mut self.capture);
        self.tx.send(bytes).map_err(|_| {
            Error::Io(std::io::Error::new(
                std::io::ErrorKind::BrokenPipe,
                "peer channel closed",
            ))
        })
    }

    fn recv(&mut self) -> Result<Frame> {
        let bytes = self.rx.recv().map_err(|_| {
            Error::Io(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "peer channel closed",
            ))
        })?;
        self.stats.record(b'R', &bytes, &mut self.capture);
        Frame::decode_body(&bytes[4..])
    }

    fn stats(&self) -> &TransportStats {
        &self.stats
    }

    fn enable_capture(&mut self) {
        self.capture = Some(Vec::new());
    }

    fn captured(&self) -> Option<&[u8]> {
        self.capture.as_deref()
    }
}

/// Frames larger than this are treated as stream corruption.
const MAX_FRAME_BYTES: u32 = 1 << 30;

/// Socket transport; framing identical to [`ChannelTransport`].
pub struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    stats: TransportStats,
    capture: Option<Vec<u8>>,
}

impl TcpTransport {
    pub fn from_stream(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        let writer = stream.try_clone()?;
        Ok(TcpTransport {
            reader: BufReader::new(stream),
            writer,
            stats: TransportStats::default(),
            capture: None,
        })
    }

    /// Dials the peer (modeler side).
    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self> {
        Self::from_stream(TcpStream::connect(addr)?)
    }

    /// Binds, accepts a single peer connection (regulator side).
    pub fn listen<A: ToSocketAddrs>(addr: A) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let (stream, _peer) = listener.accept()?;
        Self::from_stream(stream)
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        let bytes = frame.encode();
        self.stats.record(b'S', &bytes, &mut self.capture);
        self.writer.write_all(&bytes)?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame> {
        let mut len_buf = [0u8; 4];
        self.reader.read_exact(&mut len_buf)?;
        let len = u32::from_le_bytes(len_buf);
        if len > MAX_FRAME_BYTES {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("frame length {len} exceeds limit"),
            )));
        }
        let mut body = vec![0u8; len as usize];
        self.reader.read_exact(&mut body)?;
        let mut bytes = len_buf.to_vec();
        bytes.extend_from_slice(&body);
        self.stats.record(b'R', &bytes, &mut self.capture);
        Frame::decode_body(&body)
    }

    fn stats(&self) -> &TransportStats {
        &self.stats
    }

    fn enable_capture(&mut self) {
        self.capture = Some(Vec::new());
    }

    fn captured(&self) -> Option<&[u8]> {
        self.capture.as_deref()
    }
}
