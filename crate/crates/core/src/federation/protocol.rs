//! Framed binary messages exchanged between sites and the coordinator.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "FKBP"
//! 4       1     version (1)
//! 5       1     message type
//! 6       4     round, u32 LE
//! 10      2     site_id, u16 LE
//! 12      8     payload_len, u64 LE
//! 20      ..    payload
//! ```
//!
//! A parameter block is `u32 LE manifest length | manifest text | f32 LE values`.
//! `ROUND_UPDATE` appends `n: u64 LE` and `train_loss: f64 LE` to its block.
//! Header fields a message type does not use must be zero.

use std::io::Read;

use crate::datamodel::{Manifest, ParamVector};
use crate::dataset::{f32_from_le_bytes, f32_le_bytes};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"FKBP";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 20;
/// Frames larger than this are rejected before allocating.
pub const MAX_PAYLOAD: u64 = 1 << 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageType {
    Join = 1,
    RoundBegin = 2,
    RoundUpdate = 3,
    RoundCommit = 4,
}

impl TryFrom<u8> for MessageType {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        Ok(match v {
            1 => MessageType::Join,
            2 => MessageType::RoundBegin,
            3 => MessageType::RoundUpdate,
            4 => MessageType::RoundCommit,
            other => return Err(Error::Protocol(format!("unknown message type {other}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Join { site_id: u16 },
    RoundBegin { round: u32, params: ParamVector },
    RoundUpdate { round: u32, site_id: u16, params: ParamVector, n: u64, train_loss: f64 },
    RoundCommit { round: u32, params: ParamVector },
}

impl Message {
    pub fn message_type(&self) -> MessageType {
        match self {
            Message::Join { .. } => MessageType::Join,
            Message::RoundBegin { .. } => MessageType::RoundBegin,
            Message::RoundUpdate { .. } => MessageType::RoundUpdate,
            Message::RoundCommit { .. } => MessageType::RoundCommit,
        }
    }
}

fn put_params(out: &mut Vec<u8>, params: &ParamVector) {
    let text = params.manifest().to_text();
    out.extend((text.len() as u32).to_le_bytes());
    out.extend(text.as_bytes());
    out.extend(f32_le_bytes(params.data()));
}

pub fn encode_message(msg: &Message) -> Vec<u8> {
    let (round, site_id) = match msg {
        Message::Join { site_id } => (0, *site_id),
        Message::RoundBegin { round, .. } | Message::RoundCommit { round, .. } => (*round, 0),
        Message::RoundUpdate { round, site_id, .. } => (*round, *site_id),
    };
    let mut payload = Vec::new();
    match msg {
        Message::Join { .. } => {}
        Message::RoundBegin { params, .. } | Message::RoundCommit { params, .. } => put_params(&mut payload, params),
        Message::RoundUpdate { params, n, train_loss, .. } => {
            put_params(&mut payload, params);
            payload.extend(n.to_le_bytes());
            payload.extend(train_loss.to_le_bytes());
        }
    }
    let mut frame = Vec::with_capacity(HEADER_LEN + payload.len());
    frame.extend(MAGIC);
    frame.push(VERSION);
    frame.push(msg.message_type() as u8);
    frame.extend(round.to_le_bytes());
    frame.extend(site_id.to_le_bytes());
    frame.extend((payload.len() as u64).to_le_bytes());
    frame.extend(payload);
    frame
}

#[derive(Clone, Copy, Debug)]
struct Header {
    kind: MessageType,
    round: u32,
    site_id: u16,
    payload_len: u64,
}

fn parse_header(h: &[u8; HEADER_LEN]) -> Result<Header> {
    if h[0..4] != MAGIC {
        return Err(Error::Protocol(format!("bad magic {:?}", String::from_utf8_lossy(&h[0..4]))));
    }
    if h[4] != VERSION {
        return Err(Error::Protocol(format!("unsupported version {}", h[4])));
    }
    let kind = MessageType::try_from(h[5])?;
    let round = u32::from_le_bytes(h[6..10].try_into().unwrap());
    let site_id = u16::from_le_bytes(h[10..12].try_into().unwrap());
    let payload_len = u64::from_le_bytes(h[12..20].try_into().unwrap());
    if payload_len > MAX_PAYLOAD {
        return Err(Error::Protocol(format!("payload length {payload_len} exceeds limit")));
    }
    Ok(Header { kind, round, site_id, payload_len })
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Protocol(format!("payload truncated reading {what}")));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn params(&mut self) -> Result<ParamVector> {
        let len = self.u32("manifest length")? as usize;
        let text = std::str::from_utf8(self.take(len, "manifest")?)
            .map_err(|_| Error::Protocol("manifest is not UTF-8".into()))?;
        let manifest = Manifest::from_text(text).map_err(|e| Error::Protocol(e.to_string()))?;
        let count = manifest.numel();
        let bytes = self.take(count * 4, "parameter values")?;
        ParamVector::new(manifest, f32_from_le_bytes(bytes)).map_err(|e| Error::Protocol(e.to_string()))
    }
}

fn decode_body(h: Header, payload: &[u8]) -> Result<Message> {
    let mut c = Cursor { buf: payload };
    let unused = |cond: bool, field: &str| {
        if cond {
            Err(Error::Protocol(format!("{field} must be zero for {:?}", h.kind)))
        } else {
            Ok(())
        }
    };
    let msg = match h.kind {
        MessageType::Join => {
            unused(h.round != 0, "round")?;
            Message::Join { site_id: h.site_id }
        }
        MessageType::RoundBegin => {
            unused(h.site_id != 0, "site_id")?;
            Message::RoundBegin { round: h.round, params: c.params()? }
        }
        MessageType::RoundCommit => {
            unused(h.site_id != 0, "site_id")?;
            Message::RoundCommit { round: h.round, params: c.params()? }
        }
        MessageType::RoundUpdate => {
            let params = c.params()?;
            let n = c.u64("n")?;
            let train_loss = f64::from_bits(c.u64("train_loss")?);
            Message::RoundUpdate { round: h.round, site_id: h.site_id, params, n, train_loss }
        }
    };
    if !c.buf.is_empty() {
        return Err(Error::Protocol(format!("{} trailing payload bytes", c.buf.len())));
    }
    Ok(msg)
}

/// Decodes exactly one frame; the buffer must hold nothing else.
pub fn decode_message(frame: &[u8]) -> Result<Message> {
    if frame.len() < HEADER_LEN {
        return Err(Error::Protocol(format!("frame of {} bytes is shorter than the header", frame.len())));
    }
    let h = parse_header(frame[..HEADER_LEN].try_into().unwrap())?;
    let payload = &frame[HEADER_LEN..];
    if payload.len() as u64 != h.payload_len {
        return Err(Error::Protocol(format!(
            "payload_len says {} bytes, frame carries {}",
            h.payload_len,
            payload.len()
        )));
    }
    decode_body(h, payload)
}

/// Reads one frame from a byte stream. `Ok(None)` on clean end-of-stream
/// before a header starts.
pub fn read_frame(reader: &mut impl Read) -> Result<Option<Message>> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match reader.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::Protocol("stream ended inside a frame header".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(Error::Protocol(format!("stream read failed: {e}"))),
        }
    }
    let h = parse_header(&header)?;
    let mut payload = vec![0u8; h.payload_len as usize];
    reader.read_exact(&mut payload).map_err(|_| Error::Protocol("stream ended inside a frame payload".into()))?;
    decode_body(h, &payload).map(Some)
}
