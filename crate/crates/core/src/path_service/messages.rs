//! Server-to-server records. Only their encoded sizes matter to the
//! simulation; the codec is exact so sizes are well defined.

use super::segment::PathSegment;
use crate::dataplane::ScmpMessage;
use crate::topology::AsId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PsMessage {
    Request { src: AsId, dst: AsId },
    Reply { segments: Vec<PathSegment> },
    Register { segments: Vec<PathSegment> },
    Revoke { notice: ScmpMessage },
}

const TAG_REQUEST: u8 = 1;
const TAG_REPLY: u8 = 2;
const TAG_REGISTER: u8 = 3;
const TAG_REVOKE: u8 = 4;

fn put_segments(out: &mut Vec<u8>, segs: &[PathSegment]) {
    out.extend_from_slice(&(segs.len() as u16).to_be_bytes());
    for s in segs {
        let b = s.encode();
        out.extend_from_slice(&(b.len() as u32).to_be_bytes());
        out.extend_from_slice(&b);
    }
}

fn get_segments(b: &[u8]) -> Option<Vec<PathSegment>> {
    let n = u16::from_be_bytes(b.get(0..2)?.try_into().ok()?) as usize;
    let mut at = 2;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let len = u32::from_be_bytes(b.get(at..at + 4)?.try_into().ok()?) as usize;
        at += 4;
        out.push(PathSegment::decode(b.get(at..at + len)?)?);
        at += len;
    }
    (at == b.len()).then_some(out)
}

impl PsMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            PsMessage::Request { src, dst } => {
                out.push(TAG_REQUEST);
                out.extend_from_slice(&src.to_bytes());
                out.extend_from_slice(&dst.to_bytes());
            }
            PsMessage::Reply { segments } => {
                out.push(TAG_REPLY);
                put_segments(&mut out, segments);
            }
            PsMessage::Register { segments } => {
                out.push(TAG_REGISTER);
                put_segments(&mut out, segments);
            }
            PsMessage::Revoke { notice } => {
                out.push(TAG_REVOKE);
                out.extend_from_slice(&notice.encode());
            }
        }
        out
    }

    pub fn decode(b: &[u8]) -> Option<Self> {
        let (&tag, rest) = b.split_first()?;
        match tag {
            TAG_REQUEST if rest.len() == 12 => Some(PsMessage::Request {
                src: AsId::from_bytes(rest[..6].try_into().ok()?)?,
                dst: AsId::from_bytes(rest[6..].try_into().ok()?)?,
            }),
            TAG_REPLY => Some(PsMessage::Reply {
                segments: get_segments(rest)?,
            }),
            TAG_REGISTER => Some(PsMessage::Register {
                segments: get_segments(rest)?,
            }),
            TAG_REVOKE => Some(PsMessage::Revoke {
                notice: ScmpMessage::decode(rest)?,
            }),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PsMessage::Request { .. } => "request",
            PsMessage::Reply { .. } => "reply",
            PsMessage::Register { .. } => "register",
            PsMessage::Revoke { .. } => "revoke",
        }
    }
}
