//! Single-client TCP service: connections are served one after another,
//! each with a fresh session.

use log::{info, warn};
use std::io::{BufReader, BufWriter, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};

use super::protocol::{write_error, ProtocolError, Request, Response};
use super::session::StreamSession;
use super::RuntimeError;
use crate::features::TrackerFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConnectionStats {
    pub frames: u64,
    pub held: u64,
    /// The peer vanished mid-frame.
    pub truncated: bool,
}

/// Answers requests until the peer closes the stream. A bad header gets an
/// error frame and ends the connection with an error; a truncated frame
/// ends it quietly.
pub fn serve_connection<S: Read + Write>(stream: S, session: &mut StreamSession) -> Result<ConnectionStats, RuntimeError> {
    let mut stream = BufReader::new(stream);
    let mut stats = ConnectionStats::default();
    loop {
        let req = match Request::read(&mut stream) {
            Ok(Some(r)) => r,
            Ok(None) => return Ok(stats),
            Err(ProtocolError::ShortRead { expected, got }) => {
                warn!("client closed mid-frame ({got}/{expected} bytes)");
                stats.truncated = true;
                return Ok(stats);
            }
            Err(e @ (ProtocolError::BadMagic(_) | ProtocolError::BadVersion(_))) => {
                let _ = write_error(stream.get_mut(), &e.to_string());
                return Err(e.into());
            }
            Err(e) => return Err(e.into()),
        };
        let out = match req.frame() {
            Some(f) => session.step(&f)?,
            None => session.hold(),
        };
        if out.status == super::Status::Held {
            stats.held += 1;
        }
        let w = stream.get_mut();
        w.write_all(&Response::from_output(req.id, &out).encode())?;
        w.flush()?;
        stats.frames += 1;
    }
}

/// Accepts connections until `max_connections` have been served (forever
/// when `None`). Connection failures are logged, not fatal.
pub fn serve<F>(listener: TcpListener, mut new_session: F, max_connections: Option<usize>) -> Result<(), RuntimeError>
where
    F: FnMut() -> Result<StreamSession, RuntimeError>,
{
    let mut served = 0;
    while max_connections.is_none_or(|m| served < m) {
        let (stream, peer) = listener.accept()?;
        served += 1;
        let _ = stream.set_nodelay(true);
        info!("client {peer} connected");
        let mut session = new_session()?;
        match serve_connection(stream, &mut session) {
            Ok(s) => info!("client {peer} done: {} frames, {} held", s.frames, s.held),
            Err(e) => warn!("client {peer} dropped: {e}"),
        }
    }
    Ok(())
}

/// Blocking client, one request in flight at a time.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl Client {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self, RuntimeError> {
        let s = TcpStream::connect(addr)?;
        let _ = s.set_nodelay(true);
        Ok(Self {
            reader: BufReader::new(s.try_clone()?),
            writer: BufWriter::new(s),
        })
    }

    pub fn send_raw(&mut self, bytes: &[u8]) -> Result<(), RuntimeError> {
        self.writer.write_all(bytes)?;
        self.writer.flush()?;
        Ok(())
    }

    pub fn request(&mut self, id: u32, frame: &TrackerFrame) -> Result<Response, RuntimeError> {
        self.send_raw(&Request::from_frame(id, frame).encode())?;
        self.receive()
    }

    pub fn receive(&mut self) -> Result<Response, RuntimeError> {
        Ok(Response::read(&mut self.reader)?)
    }
}
