//! Binary wire format, little-endian throughout.
//!
//! Request (153 bytes): `"LBST"`, version `u8`, frame id `u32`, then 36
//! `f32`: position and forward/up axes for head, left hand, right hand and
//! pelvis.
//!
//! Response (215 bytes): frame id `u32`, status `u8` (0 ok, 1 warm-up,
//! 2 held), 48 `f32` pose values, 4 `f32` contact probabilities and two
//! contact bytes.
//!
//! Error frame: id `u32` (0), status 255, message length `u16`, UTF-8
//! message. The server closes the connection after sending one.

use std::io::{self, Read, Write};

use super::session::{SessionOutput, Status};
use crate::features::{TrackerFrame, TRACKER_COUNT, TRACKER_DIM};
use crate::motion::POSE_DIM;

pub const MAGIC: &[u8; 4] = b"LBST";
pub const VERSION: u8 = 1;
pub const ERROR_STATUS: u8 = 255;
const HEADER_LEN: usize = 5;
const VALUES: usize = TRACKER_COUNT * TRACKER_DIM;
pub const REQUEST_LEN: usize = HEADER_LEN + 4 + VALUES * 4;
pub const RESPONSE_LEN: usize = 4 + 1 + POSE_DIM * 4 + 4 * 4 + 2;

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("connection closed mid-frame after {got} of {expected} bytes")]
    ShortRead { expected: usize, got: usize },
    #[error("unknown status byte {0}")]
    BadStatus(u8),
    #[error("server error: {0}")]
    Remote(String),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub id: u32,
    pub values: [f32; VALUES],
}

impl Request {
    pub fn from_frame(id: u32, frame: &TrackerFrame) -> Self {
        Self {
            id,
            values: frame.to_array().map(|v| v as f32),
        }
    }

    /// The tracker frame, or `None` when the values do not describe one
    /// (non-finite or degenerate axes).
    pub fn frame(&self) -> Option<TrackerFrame> {
        let v: Vec<f64> = self.values.iter().map(|x| *x as f64).collect();
        TrackerFrame::from_slice(&v, 0.0).ok()
    }

    pub fn encode(&self) -> [u8; REQUEST_LEN] {
        let mut b = [0u8; REQUEST_LEN];
        b[..4].copy_from_slice(MAGIC);
        b[4] = VERSION;
        b[5..9].copy_from_slice(&self.id.to_le_bytes());
        for (k, v) in self.values.iter().enumerate() {
            b[9 + 4 * k..13 + 4 * k].copy_from_slice(&v.to_le_bytes());
        }
        b
    }

    /// Reads one request. `Ok(None)` on a clean end of stream before the
    /// first byte; magic and version are checked before the body is read.
    pub fn read<R: Read>(r: &mut R) -> Result<Option<Self>, ProtocolError> {
        let mut head = [0u8; HEADER_LEN];
        if !read_full(r, &mut head, REQUEST_LEN, 0)? {
            return Ok(None);
        }
        let magic: [u8; 4] = head[..4].try_into().expect("4 bytes");
        if &magic != MAGIC {
            return Err(ProtocolError::BadMagic(magic));
        }
        if head[4] != VERSION {
            return Err(ProtocolError::BadVersion(head[4]));
        }
        let mut body = [0u8; REQUEST_LEN - HEADER_LEN];
        read_full(r, &mut body, REQUEST_LEN, HEADER_LEN)?;
        let id = u32::from_le_bytes(body[..4].try_into().expect("4 bytes"));
        let mut values = [0f32; VALUES];
        for (k, v) in values.iter_mut().enumerate() {
            *v = f32::from_le_bytes(body[4 + 4 * k..8 + 4 * k].try_into().expect("4 bytes"));
        }
        Ok(Some(Self { id, values }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub id: u32,
    pub status: Status,
    pub pose: [f32; POSE_DIM],
    pub contact_probabilities: [f32; 4],
    pub contacts: [bool; 2],
}

fn status_byte(s: Status) -> u8 {
    match s {
        Status::Ok => 0,
        Status::WarmUp => 1,
        Status::Held => 2,
    }
}

impl Response {
    pub fn from_output(id: u32, out: &SessionOutput) -> Self {
        Self {
            id,
            status: out.status,
            pose: out.pose.map(|v| v as f32),
            contact_probabilities: out.contact_probabilities.map(|v| v as f32),
            contacts: out.contacts,
        }
    }

    pub fn encode(&self) -> [u8; RESPONSE_LEN] {
        let mut b = [0u8; RESPONSE_LEN];
        b[..4].copy_from_slice(&self.id.to_le_bytes());
        b[4] = status_byte(self.status);
        let mut at = 5;
        for v in self.pose.iter().chain(&self.contact_probabilities) {
            b[at..at + 4].copy_from_slice(&v.to_le_bytes());
            at += 4;
        }
        b[at] = self.contacts[0] as u8;
        b[at + 1] = self.contacts[1] as u8;
        b
    }

    /// Reads a response, turning an error frame into [`ProtocolError::Remote`].
    pub fn read<R: Read>(r: &mut R) -> Result<Self, ProtocolError> {
        let mut head = [0u8; 5];
        if !read_full(r, &mut head, RESPONSE_LEN, 0)? {
            return Err(ProtocolError::ShortRead {
                expected: RESPONSE_LEN,
                got: 0,
            });
        }
        let id = u32::from_le_bytes(head[..4].try_into().expect("4 bytes"));
        let status = match head[4] {
            0 => Status::Ok,
            1 => Status::WarmUp,
            2 => Status::Held,
            ERROR_STATUS => {
                let mut len = [0u8; 2];
                read_full(r, &mut len, 7, 5)?;
                let n = u16::from_le_bytes(len) as usize;
                let mut msg = vec![0u8; n];
                read_full(r, &mut msg, 7 + n, 7)?;
                return Err(ProtocolError::Remote(String::from_utf8_lossy(&msg).into_owned()));
            }
            s => return Err(ProtocolError::BadStatus(s)),
        };
        let mut body = [0u8; RESPONSE_LEN - 5];
        read_full(r, &mut body, RESPONSE_LEN, 5)?;
        let f = |k: usize| f32::from_le_bytes(body[4 * k..4 * k + 4].try_into().expect("4 bytes"));
        let n = POSE_DIM + 4;
        Ok(Self {
            id,
            status,
            pose: std::array::from_fn(f),
            contact_probabilities: std::array::from_fn(|k| f(POSE_DIM + k)),
            contacts: [body[4 * n] != 0, body[4 * n + 1] != 0],
        })
    }
}

pub fn write_error<W: Write>(w: &mut W, message: &str) -> io::Result<()> {
    let msg = &message.as_bytes()[..message.len().min(u16::MAX as usize)];
    let mut b = Vec::with_capacity(7 + msg.len());
    b.extend_from_slice(&0u32.to_le_bytes());
    b.push(ERROR_STATUS);
    b.extend_from_slice(&(msg.len() as u16).to_le_bytes());
    b.extend_from_slice(msg);
    w.write_all(&b)?;
    w.flush()
}

/// Fills `buf`. Returns `false` if the stream ended before any byte was read
/// and `offset` is zero; a partial fill is a [`ProtocolError::ShortRead`].
fn read_full<R: Read>(r: &mut R, buf: &mut [u8], frame_len: usize, offset: usize) -> Result<bool, ProtocolError> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => {
                if got == 0 && offset == 0 {
                    return Ok(false);
                }
                return Err(ProtocolError::ShortRead {
                    expected: frame_len,
                    got: offset + got,
                });
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(true)
}
