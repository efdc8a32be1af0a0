use std::io::{ErrorKind, Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use super::wire::{FRAME_OVERHEAD, LEN_PREFIX, MAX_FRAME_LEN};
use super::ChannelError;

/// Moves whole encoded frames (length prefix included).
pub trait Transport: Send {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), ChannelError>;
    /// Returns [`ChannelError::Closed`] on a clean end of stream between frames.
    fn recv_frame(&mut self) -> Result<Vec<u8>, ChannelError>;
    /// Signals that no further frames will be sent.
    fn close_write(&mut self) {}
}

pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn new(stream: TcpStream, read_timeout: Option<Duration>) -> Result<Self, ChannelError> {
        stream.set_nodelay(true).map_err(io_err)?;
        stream.set_read_timeout(read_timeout).map_err(io_err)?;
        Ok(Self { stream })
    }

    pub fn connect(addr: &str, read_timeout: Option<Duration>) -> Result<Self, ChannelError> {
        Self::new(TcpStream::connect(addr).map_err(io_err)?, read_timeout)
    }

    pub fn shutdown(&self) {
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
    }
}

fn io_err(e: std::io::Error) -> ChannelError {
    ChannelError::Io(e.to_string())
}

/// Fills `buf`; `Ok(false)` if the stream ended before the first byte.
fn fill(stream: &mut TcpStream, buf: &mut [u8]) -> Result<bool, ChannelError> {
    let mut got = 0;
    while got < buf.len() {
        match stream.read(&mut buf[got..]) {
            Ok(0) if got == 0 => return Ok(false),
            Ok(0) => return Err(ChannelError::MalformedFrame("stream ended inside a frame".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                return Err(if got == 0 {
                    ChannelError::Io("read timed out".into())
                } else {
                    ChannelError::MalformedFrame("timed out inside a frame".into())
                });
            }
            Err(e) if matches!(e.kind(), ErrorKind::ConnectionReset | ErrorKind::ConnectionAborted) && got == 0 => {
                return Ok(false)
            }
            Err(e) => return Err(io_err(e)),
        }
    }
    Ok(true)
}

impl Transport for TcpTransport {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), ChannelError> {
        self.stream.write_all(frame).map_err(|e| match e.kind() {
            ErrorKind::BrokenPipe | ErrorKind::ConnectionReset | ErrorKind::ConnectionAborted => ChannelError::Closed,
            _ => io_err(e),
        })
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>, ChannelError> {
        let mut len = [0u8; LEN_PREFIX];
        if !fill(&mut self.stream, &mut len)? {
            return Err(ChannelError::Closed);
        }
        let body = u32::from_le_bytes(len) as usize;
        if body > MAX_FRAME_LEN || body + LEN_PREFIX < FRAME_OVERHEAD {
            return Err(ChannelError::MalformedFrame(format!("implausible frame length {body}")));
        }
        let mut out = vec![0u8; LEN_PREFIX + body];
        out[..LEN_PREFIX].copy_from_slice(&len);
        if !fill(&mut self.stream, &mut out[LEN_PREFIX..])? {
            return Err(ChannelError::MalformedFrame("stream ended inside a frame".into()));
        }
        Ok(out)
    }

    fn close_write(&mut self) {
        let _ = self.stream.shutdown(std::net::Shutdown::Write);
    }
}

/// In-process transport over a pair of channels.
pub struct MemTransport {
    tx: Option<Sender<Vec<u8>>>,
    rx: Receiver<Vec<u8>>,
    timeout: Option<Duration>,
}

impl MemTransport {
    pub fn pair() -> (MemTransport, MemTransport) {
        let (a_tx, b_rx) = channel();
        let (b_tx, a_rx) = channel();
        (
            MemTransport { tx: Some(a_tx), rx: a_rx, timeout: None },
            MemTransport { tx: Some(b_tx), rx: b_rx, timeout: None },
        )
    }

    pub fn with_timeout(mut self, t: Duration) -> Self {
        self.timeout = Some(t);
        self
    }
}

impl Transport for MemTransport {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), ChannelError> {
        match &self.tx {
            Some(tx) => tx.send(frame.to_vec()).map_err(|_| ChannelError::Closed),
            None => Err(ChannelError::Closed),
        }
    }

    fn close_write(&mut self) {
        self.tx = None;
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>, ChannelError> {
        match self.timeout {
            None => self.rx.recv().map_err(|_| ChannelError::Closed),
            Some(t) => self.rx.recv_timeout(t).map_err(|e| match e {
                RecvTimeoutError::Timeout => ChannelError::Io("read timed out".into()),
                RecvTimeoutError::Disconnected => ChannelError::Closed,
            }),
        }
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), ChannelError> {
        (**self).send_frame(frame)
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>, ChannelError> {
        (**self).recv_frame()
    }

    fn close_write(&mut self) {
        (**self).close_write()
    }
}
