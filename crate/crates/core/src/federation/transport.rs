//! Site/coordinator links.
//!
//! `InProcess` passes [`Message`] values over a channel. `Loopback` encodes
//! every message into its wire frame, ships the bytes over a channel and
//! parses them back out of a byte stream on the receiving side. Both must
//! yield identical runs.

use std::io::Read;
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, Sender};

use serde::{Deserialize, Serialize};

use super::protocol::{encode_message, read_frame, Message};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    #[default]
    InProcess,
    Loopback,
}

impl FromStr for Transport {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inprocess" | "in-process" => Ok(Transport::InProcess),
            "loopback" => Ok(Transport::Loopback),
            _ => Err(Error::Config(format!("unknown transport {s:?} (expected inprocess or loopback)"))),
        }
    }
}

#[derive(Clone, Debug)]
enum SenderKind {
    Value(Sender<Message>),
    Bytes(Sender<Vec<u8>>),
}

/// Sending half; cheap to clone for many producers.
#[derive(Clone, Debug)]
pub struct LinkSender(SenderKind);

impl LinkSender {
    pub fn send(&self, msg: Message) -> Result<()> {
        let sent = match &self.0 {
            SenderKind::Value(tx) => tx.send(msg).is_ok(),
            // one chunk per frame keeps concurrent writers from interleaving
            SenderKind::Bytes(tx) => tx.send(encode_message(&msg)).is_ok(),
        };
        if sent {
            Ok(())
        } else {
            Err(Error::Protocol("link closed by receiver".into()))
        }
    }
}

/// Byte stream assembled from the chunks a [`LinkSender`] pushed.
struct ChunkReader {
    rx: Receiver<Vec<u8>>,
    buf: Vec<u8>,
    pos: usize,
    blocking: bool,
}

impl Read for ChunkReader {
    fn read(&mut self, out: &mut [u8]) -> std::io::Result<usize> {
        while self.pos == self.buf.len() {
            let next = if self.blocking { self.rx.recv().ok() } else { self.rx.try_recv().ok() };
            match next {
                Some(chunk) => {
                    self.buf = chunk;
                    self.pos = 0;
                }
                None => return Ok(0),
            }
        }
        let n = out.len().min(self.buf.len() - self.pos);
        out[..n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

enum ReceiverKind {
    Value(Receiver<Message>),
    Bytes(ChunkReader),
}

pub struct LinkReceiver(ReceiverKind);

impl LinkReceiver {
    /// Blocks until a message arrives; errors once every sender is gone.
    pub fn recv(&mut self) -> Result<Message> {
        match &mut self.0 {
            ReceiverKind::Value(rx) => {
                rx.recv().map_err(|_| Error::Protocol("link closed before a message arrived".into()))
            }
            ReceiverKind::Bytes(r) => {
                r.blocking = true;
                read_frame(r)?.ok_or_else(|| Error::Protocol("link closed before a message arrived".into()))
            }
        }
    }

    /// Next message if one is already queued.
    pub fn try_recv(&mut self) -> Result<Option<Message>> {
        match &mut self.0 {
            ReceiverKind::Value(rx) => Ok(rx.try_recv().ok()),
            ReceiverKind::Bytes(r) => {
                r.blocking = false;
                read_frame(r)
            }
        }
    }
}

pub fn link(transport: Transport) -> (LinkSender, LinkReceiver) {
    match transport {
        Transport::InProcess => {
            let (tx, rx) = mpsc::channel();
            (LinkSender(SenderKind::Value(tx)), LinkReceiver(ReceiverKind::Value(rx)))
        }
        Transport::Loopback => {
            let (tx, rx) = mpsc::channel();
            (
                LinkSender(SenderKind::Bytes(tx)),
                LinkReceiver(ReceiverKind::Bytes(ChunkReader { rx, buf: Vec::new(), pos: 0, blocking: true })),
            )
        }
    }
}
