//! Packet header codec.
//!
//! ```text
//! byte 0     version (4) | source address type (4)
//! byte 1     destination address type (4) | reserved (4)
//! bytes 2-3  total length, header through payload (big endian)
//! byte 4     current InfoField offset  (8-byte units from path start)
//! byte 5     current opaque field offset (8-byte units from path start)
//! byte 6     path length (8-byte units)
//! byte 7     reserved
//! path       1-3 x (InfoField, hop_count x OpaqueField), in travel order
//! addresses  source then destination, lengths given by their types
//! payload
//! ```
//!
//! InfoField: timestamp (32) | ISD (16) | flags (8) | hop count (8).
//! Opaque fields of each segment are stored in the order the packet visits
//! them; `CONS_DIR` tells whether that order matches construction order.

use std::cell::Cell;

use thiserror::Error;

use super::opaque::{OpaqueField, OF_LEN};

pub const HEADER_VERSION: u8 = 1;
pub const COMMON_HEADER_LEN: usize = 8;
pub const INFO_LEN: usize = 8;
pub const MAX_SEGMENTS: usize = 3;
pub const MAX_HOPS: usize = 64;

pub const INFO_CONS_DIR: u8 = 0x01;
pub const INFO_SHORTCUT: u8 = 0x02;
pub const INFO_PEERING: u8 = 0x04;
const INFO_KIND_SHIFT: u8 = 3;
const INFO_KIND_MASK: u8 = 0x18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SegmentKind {
    Up,
    Down,
    Core,
}

impl SegmentKind {
    fn code(self) -> u8 {
        match self {
            SegmentKind::Up => 0,
            SegmentKind::Down => 1,
            SegmentKind::Core => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(SegmentKind::Up),
            1 => Some(SegmentKind::Down),
            2 => Some(SegmentKind::Core),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SegmentKind::Up => "up",
            SegmentKind::Down => "down",
            SegmentKind::Core => "core",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InfoField {
    pub timestamp: u32,
    pub isd: u16,
    pub cons_dir: bool,
    pub shortcut: bool,
    pub peering: bool,
    pub kind: SegmentKind,
}

impl InfoField {
    pub fn flags(&self) -> u8 {
        let mut f = self.kind.code() << INFO_KIND_SHIFT;
        if self.cons_dir {
            f |= INFO_CONS_DIR;
        }
        if self.shortcut {
            f |= INFO_SHORTCUT;
        }
        if self.peering {
            f |= INFO_PEERING;
        }
        f
    }

    fn encode(&self, hop_count: u8) -> [u8; INFO_LEN] {
        let mut b = [0u8; INFO_LEN];
        b[0..4].copy_from_slice(&self.timestamp.to_be_bytes());
        b[4..6].copy_from_slice(&self.isd.to_be_bytes());
        b[6] = self.flags();
        b[7] = hop_count;
        b
    }

    fn decode(b: &[u8]) -> Result<(Self, u8), HeaderError> {
        let flags = b[6];
        if flags & !(INFO_CONS_DIR | INFO_SHORTCUT | INFO_PEERING | INFO_KIND_MASK) != 0 {
            return Err(HeaderError::Malformed("reserved InfoField flag set"));
        }
        let kind = SegmentKind::from_code((flags & INFO_KIND_MASK) >> INFO_KIND_SHIFT)
            .ok_or(HeaderError::Malformed("unknown segment kind"))?;
        Ok((
            InfoField {
                timestamp: u32::from_be_bytes([b[0], b[1], b[2], b[3]]),
                isd: u16::from_be_bytes([b[4], b[5]]),
                cons_dir: flags & INFO_CONS_DIR != 0,
                shortcut: flags & INFO_SHORTCUT != 0,
                peering: flags & INFO_PEERING != 0,
                kind,
            },
            b[7],
        ))
    }
}

/// One segment of a forwarding path: its InfoField and opaque fields in
/// travel order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SegmentFields {
    pub info: InfoField,
    pub ofs: Vec<OpaqueField>,
}

impl SegmentFields {
    /// Reverse the travel direction.
    pub fn reversed(&self) -> Self {
        let mut info = self.info;
        info.cons_dir = !info.cons_dir;
        SegmentFields {
            info,
            ofs: self.ofs.iter().rev().copied().collect(),
        }
    }

    /// The field whose MAC chains into `ofs[idx]`: the nearest earlier
    /// non-peering field in construction order.
    pub fn prior_of(&self, idx: usize) -> Option<&OpaqueField> {
        if self.info.cons_dir {
            self.ofs[..idx].iter().rev().find(|o| !o.is_peering())
        } else {
            self.ofs[idx + 1..].iter().find(|o| !o.is_peering())
        }
    }

    /// Cut segments (shortcut or peering) carry exactly one verify-only
    /// field, first in construction order, anchoring the MAC chain; whole
    /// segments carry none.
    pub fn verify_only_placement_ok(&self) -> bool {
        let first_cons = if self.info.cons_dir { 0 } else { self.ofs.len() - 1 };
        let cut = self.info.shortcut || self.info.peering;
        self.ofs
            .iter()
            .enumerate()
            .all(|(i, o)| o.is_verify_only() == (cut && i == first_cons))
    }

    pub fn first_usable(&self) -> Option<usize> {
        self.ofs.iter().position(|o| !o.is_verify_only())
    }

    pub fn last_usable(&self) -> Option<usize> {
        self.ofs.iter().rposition(|o| !o.is_verify_only())
    }

    pub fn next_usable(&self, after: usize) -> Option<usize> {
        (after + 1..self.ofs.len()).find(|&i| !self.ofs[i].is_verify_only())
    }
}

/// The path region of a header.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ForwardingPath {
    pub segments: Vec<SegmentFields>,
}

impl ForwardingPath {
    pub fn hop_fields(&self) -> usize {
        self.segments.iter().map(|s| s.ofs.len()).sum()
    }

    /// Size in bytes of the encoded path region.
    pub fn region_len(&self) -> usize {
        INFO_LEN * self.segments.len() + OF_LEN * self.hop_fields()
    }

    pub fn validate(&self) -> Result<(), HeaderError> {
        if self.segments.is_empty() || self.segments.len() > MAX_SEGMENTS {
            return Err(HeaderError::TooManySegments(self.segments.len()));
        }
        if self.hop_fields() > MAX_HOPS {
            return Err(HeaderError::TooManyHops(self.hop_fields()));
        }
        if self.segments.iter().any(|s| s.ofs.is_empty()) {
            return Err(HeaderError::Malformed("empty segment"));
        }
        Ok(())
    }

    pub fn reversed(&self) -> Self {
        ForwardingPath {
            segments: self.segments.iter().rev().map(SegmentFields::reversed).collect(),
        }
    }

    /// Position of the first field a router must process.
    pub fn start(&self) -> Option<(usize, usize)> {
        self.segments
            .iter()
            .enumerate()
            .find_map(|(si, s)| s.first_usable().map(|oi| (si, oi)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HostAddr {
    None,
    V4([u8; 4]),
    Mac([u8; 6]),
    V6([u8; 16]),
    /// 20-byte identifier (e.g. a hash of a host key).
    Long([u8; 20]),
}

impl HostAddr {
    pub fn type_code(&self) -> u8 {
        match self {
            HostAddr::None => 0,
            HostAddr::V4(_) => 1,
            HostAddr::Mac(_) => 2,
            HostAddr::V6(_) => 3,
            HostAddr::Long(_) => 4,
        }
    }

    pub fn len_for(code: u8) -> Option<usize> {
        match code {
            0 => Some(0),
            1 => Some(4),
            2 => Some(6),
            3 => Some(16),
            4 => Some(20),
            _ => None,
        }
    }

    pub fn bytes(&self) -> &[u8] {
        match self {
            HostAddr::None => &[],
            HostAddr::V4(b) => b,
            HostAddr::Mac(b) => b,
            HostAddr::V6(b) => b,
            HostAddr::Long(b) => b,
        }
    }

    fn decode(code: u8, b: &[u8]) -> Self {
        match code {
            1 => HostAddr::V4(b.try_into().expect("length checked")),
            2 => HostAddr::Mac(b.try_into().expect("length checked")),
            3 => HostAddr::V6(b.try_into().expect("length checked")),
            4 => HostAddr::Long(b.try_into().expect("length checked")),
            _ => HostAddr::None,
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum HeaderError {
    #[error("path has {0} segments (1 to 3 allowed)")]
    TooManySegments(usize),
    #[error("path has {0} hop fields (at most 64)")]
    TooManyHops(usize),
    #[error("packet exceeds 65535 bytes")]
    TooLong,
    #[error("truncated packet")]
    Truncated,
    #[error("malformed header: {0}")]
    Malformed(&'static str),
}

/// A packet: header fields plus payload. Addresses are only reachable through
/// the accessors, which count reads so tests can show that transit routers
/// never look at them.
#[derive(Debug, Clone)]
pub struct Packet {
    pub version: u8,
    pub path: ForwardingPath,
    /// Current segment and opaque-field index.
    pub cur_seg: usize,
    pub cur_of: usize,
    src: HostAddr,
    dst: HostAddr,
    pub payload: Vec<u8>,
    address_reads: Cell<u32>,
}

impl PartialEq for Packet {
    fn eq(&self, other: &Self) -> bool {
        self.version == other.version
            && self.path == other.path
            && self.cur_seg == other.cur_seg
            && self.cur_of == other.cur_of
            && self.src == other.src
            && self.dst == other.dst
            && self.payload == other.payload
    }
}

impl Eq for Packet {}

impl Packet {
    /// New packet positioned at the path's first usable field.
    pub fn new(path: ForwardingPath, src: HostAddr, dst: HostAddr, payload: Vec<u8>) -> Result<Self, HeaderError> {
        path.validate()?;
        let (cur_seg, cur_of) = path.start().ok_or(HeaderError::Malformed("no usable hop field"))?;
        let p = Packet {
            version: HEADER_VERSION,
            path,
            cur_seg,
            cur_of,
            src,
            dst,
            payload,
            address_reads: Cell::new(0),
        };
        if p.encoded_len() > u16::MAX as usize {
            return Err(HeaderError::TooLong);
        }
        Ok(p)
    }

    pub fn src_addr(&self) -> HostAddr {
        self.address_reads.set(self.address_reads.get() + 1);
        self.src
    }

    pub fn dst_addr(&self) -> HostAddr {
        self.address_reads.set(self.address_reads.get() + 1);
        self.dst
    }

    pub fn address_reads(&self) -> u32 {
        self.address_reads.get()
    }

    pub fn encoded_len(&self) -> usize {
        COMMON_HEADER_LEN
            + self.path.region_len()
            + self.src.bytes().len()
            + self.dst.bytes().len()
            + self.payload.len()
    }

    pub fn current_segment(&self) -> &SegmentFields {
        &self.path.segments[self.cur_seg]
    }

    pub fn current_of(&self) -> &OpaqueField {
        &self.path.segments[self.cur_seg].ofs[self.cur_of]
    }

    /// Reply packet: path reversed, addresses swapped, positioned at the
    /// mirror image of the current field.
    pub fn reversed_at_current(&self, payload: Vec<u8>) -> Packet {
        let path = self.path.reversed();
        let cur_seg = path.segments.len() - 1 - self.cur_seg;
        let cur_of = path.segments[cur_seg].ofs.len() - 1 - self.cur_of;
        Packet {
            version: self.version,
            path,
            cur_seg,
            cur_of,
            src: self.dst,
            dst: self.src,
            payload,
            address_reads: Cell::new(0),
        }
    }

    /// Reply packet starting at the reversed path's first usable field.
    pub fn reply(&self, payload: Vec<u8>) -> Packet {
        let path = self.path.reversed();
        let (cur_seg, cur_of) = path.start().expect("validated path has a usable field");
        Packet {
            version: self.version,
            path,
            cur_seg,
            cur_of,
            src: self.dst,
            dst: self.src,
            payload,
            address_reads: Cell::new(0),
        }
    }

    fn offsets(&self) -> (u8, u8) {
        let mut units = 0usize;
        for s in &self.path.segments[..self.cur_seg] {
            units += 1 + s.ofs.len();
        }
        (units as u8, (units + 1 + self.cur_of) as u8)
    }

    pub fn encode(&self) -> Vec<u8> {
        let total = self.encoded_len();
        let mut out = Vec::with_capacity(total);
        let (info_off, of_off) = self.offsets();
        out.push((self.version << 4) | self.src.type_code());
        out.push(self.dst.type_code() << 4);
        out.extend_from_slice(&(total as u16).to_be_bytes());
        out.push(info_off);
        out.push(of_off);
        out.push((self.path.region_len() / 8) as u8);
        out.push(0);
        for seg in &self.path.segments {
            out.extend_from_slice(&seg.info.encode(seg.ofs.len() as u8));
            for of in &seg.ofs {
                out.extend_from_slice(&of.to_bytes());
            }
        }
        out.extend_from_slice(self.src.bytes());
        out.extend_from_slice(self.dst.bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Strict decoding: every byte string accepted re-encodes to itself.
    pub fn decode(b: &[u8]) -> Result<Packet, HeaderError> {
        if b.len() < COMMON_HEADER_LEN {
            return Err(HeaderError::Truncated);
        }
        let version = b[0] >> 4;
        if version != HEADER_VERSION {
            return Err(HeaderError::Malformed("unsupported version"));
        }
        let src_type = b[0] & 0x0f;
        let dst_type = b[1] >> 4;
        if b[1] & 0x0f != 0 || b[7] != 0 {
            return Err(HeaderError::Malformed("reserved bits set"));
        }
        let total = u16::from_be_bytes([b[2], b[3]]) as usize;
        if total != b.len() {
            return Err(HeaderError::Malformed("length mismatch"));
        }
        let (info_off, of_off, path_units) = (b[4] as usize, b[5] as usize, b[6] as usize);
        let src_len = HostAddr::len_for(src_type).ok_or(HeaderError::Malformed("address type"))?;
        let dst_len = HostAddr::len_for(dst_type).ok_or(HeaderError::Malformed("address type"))?;
        let path_end = COMMON_HEADER_LEN + path_units * 8;
        if path_end + src_len + dst_len > b.len() {
            return Err(HeaderError::Truncated);
        }

        let mut segments = Vec::new();
        let mut unit = 0;
        let mut cur = None;
        while unit < path_units {
            if segments.len() == MAX_SEGMENTS {
                return Err(HeaderError::TooManySegments(MAX_SEGMENTS + 1));
            }
            let at = COMMON_HEADER_LEN + unit * 8;
            let (info, hops) = InfoField::decode(&b[at..at + INFO_LEN])?;
            let hops = hops as usize;
            if hops == 0 || unit + 1 + hops > path_units {
                return Err(HeaderError::Malformed("hop count"));
            }
            let ofs = (0..hops)
                .map(|i| {
                    let s = at + INFO_LEN + i * OF_LEN;
                    OpaqueField::from_bytes(b[s..s + OF_LEN].try_into().expect("8 bytes"))
                })
                .collect();
            if unit == info_off && of_off > unit && of_off <= unit + hops {
                cur = Some((segments.len(), of_off - unit - 1));
            }
            segments.push(SegmentFields { info, ofs });
            unit += 1 + hops;
        }
        let path = ForwardingPath { segments };
        path.validate()?;
        let (cur_seg, cur_of) = cur.ok_or(HeaderError::Malformed("offsets outside path"))?;

        let src = HostAddr::decode(src_type, &b[path_end..path_end + src_len]);
        let dst_at = path_end + src_len;
        let dst = HostAddr::decode(dst_type, &b[dst_at..dst_at + dst_len]);
        Ok(Packet {
            version,
            path,
            cur_seg,
            cur_of,
            src,
            dst,
            payload: b[dst_at + dst_len..].to_vec(),
            address_reads: Cell::new(0),
        })
    }
}
