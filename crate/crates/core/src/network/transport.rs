//! Inter-agent messages and the in-process transport.
//!
//! Wire format (little endian):
//! `magic "CLMS" | sender_id: u64 | round: u64 | weight: f64 | fingerprint: u64 | payload`
//! where `payload` is the parameter-vector encoding (which repeats the
//! fingerprint and carries the length).

use std::collections::VecDeque;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nn::{decode_params, encode_params, ByteReader, ModelArchitecture, ParameterVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MessageHeader {
    pub sender_id: usize,
    pub round: u64,
    /// Sender's `|D_j|`.
    pub weight: f64,
    pub fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub header: MessageHeader,
    pub params: Arc<ParameterVector>,
}

const MESSAGE_MAGIC: &[u8; 4] = b"CLMS";

pub fn encode_message(msg: &Message, arch: &ModelArchitecture) -> Vec<u8> {
    let h = &msg.header;
    let mut out = Vec::new();
    out.extend_from_slice(MESSAGE_MAGIC);
    out.extend_from_slice(&(h.sender_id as u64).to_le_bytes());
    out.extend_from_slice(&h.round.to_le_bytes());
    out.extend_from_slice(&h.weight.to_le_bytes());
    out.extend_from_slice(&h.fingerprint.to_le_bytes());
    out.extend_from_slice(&encode_params(&msg.params, arch));
    out
}

pub fn decode_message(bytes: &[u8], arch: &ModelArchitecture) -> Result<Message> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != MESSAGE_MAGIC {
        return Err(Error::Codec("bad message magic".into()));
    }
    let sender_id = r.u64()? as usize;
    let round = r.u64()?;
    let weight = r.f64()?;
    let fingerprint = r.u64()?;
    if fingerprint != arch.fingerprint() {
        return Err(Error::Architecture(format!(
            "message from agent {sender_id} has fingerprint {fingerprint:016x}, expected {:016x}",
            arch.fingerprint()
        )));
    }
    let (params, used) = decode_params(&bytes[r.position()..], arch)?;
    if r.position() + used != bytes.len() {
        return Err(Error::Codec("trailing bytes after message payload".into()));
    }
    Ok(Message {
        header: MessageHeader {
            sender_id,
            round,
            weight,
            fingerprint,
        },
        params: Arc::new(params),
    })
}

/// Delivery of parameter messages between agents.
pub trait Transport: Send {
    fn send(&mut self, receiver: usize, msg: Message);

    /// Removes and returns everything delivered to `receiver` so far, in
    /// arrival order.
    fn drain(&mut self, receiver: usize) -> Vec<Message>;
}

/// Reliable, ordered, per-receiver queues.
#[derive(Debug, Default)]
pub struct InProcessTransport {
    queues: Vec<VecDeque<Message>>,
}

impl InProcessTransport {
    pub fn new(num_agents: usize) -> Self {
        Self {
            queues: vec![VecDeque::new(); num_agents],
        }
    }

    pub fn pending(&self, receiver: usize) -> usize {
        self.queues[receiver].len()
    }
}

impl Transport for InProcessTransport {
    fn send(&mut self, receiver: usize, msg: Message) {
        self.queues[receiver].push_back(msg);
    }

    fn drain(&mut self, receiver: usize) -> Vec<Message> {
        self.queues[receiver].drain(..).collect()
    }
}
