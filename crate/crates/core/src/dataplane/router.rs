//! Border-router forwarding. The decision uses only the packet header, the
//! arrival interface, the AS's own MAC key and the liveness of its own
//! interfaces; there is no routing table.

use thiserror::Error;

use super::header::Packet;
use super::opaque::{verify_of, ArrivalCheck, OfReject};
use crate::crypto::SymmetricKey;
use crate::time::SimTime;

/// Where a packet entered the AS.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arrival {
    /// From a host inside the AS (including locally generated control messages).
    Local,
    Interface(u16),
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DropReason {
    #[error("parse")]
    Parse,
    #[error("{0}")]
    Of(OfReject),
    #[error("path structure")]
    Structure,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Parse => "parse",
            DropReason::Of(r) => r.as_str(),
            DropReason::Structure => "structure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Forward(u16),
    Deliver,
    Drop(DropReason),
    /// The egress link is down. The packet is dropped; `notice` is the
    /// reversed header positioned at this AS, ready to carry an SCMP
    /// revocation back to the source.
    LinkDown { egress: u16, notice: Packet },
}

pub struct RouterContext<'a> {
    pub key: &'a SymmetricKey,
    pub link_up: &'a dyn Fn(u16) -> bool,
}

fn check(ctx: &RouterContext<'_>, pkt: &Packet, now: SimTime, arrival: Arrival) -> Result<(), DropReason> {
    let seg = pkt.current_segment();
    if !seg.verify_only_placement_ok() {
        return Err(DropReason::Structure);
    }
    let arrival = match arrival {
        Arrival::Local => None,
        Arrival::Interface(i) => Some(ArrivalCheck {
            arrival: i,
            cons_dir: seg.info.cons_dir,
        }),
    };
    verify_of(
        ctx.key,
        pkt.current_of(),
        seg.prior_of(pkt.cur_of),
        now,
        seg.info.timestamp,
        arrival,
    )
    .map_err(DropReason::Of)
}

fn out_interface(pkt: &Packet) -> u16 {
    let of = pkt.current_of();
    if pkt.current_segment().info.cons_dir {
        of.egress
    } else {
        of.ingress
    }
}

fn at_destination(pkt: &Packet) -> bool {
    pkt.cur_seg + 1 == pkt.path.segments.len()
        && pkt.current_segment().last_usable() == Some(pkt.cur_of)
}

/// Process `pkt` at the router of the AS owning `ctx.key`. On `Forward`, the
/// packet's pointers already address the next AS's field.
pub fn forward(ctx: &RouterContext<'_>, pkt: &mut Packet, arrival: Arrival, now: SimTime) -> Action {
    if let Err(r) = check(ctx, pkt, now, arrival) {
        return Action::Drop(r);
    }
    if at_destination(pkt) {
        // Addresses are consulted only here, by the destination AS.
        let _ = pkt.dst_addr();
        return Action::Deliver;
    }
    let mut out = out_interface(pkt);
    let seg = pkt.current_segment();
    let last_in_seg = seg.last_usable() == Some(pkt.cur_of);
    if out == 0 || (seg.info.shortcut && !seg.info.peering && last_in_seg) {
        // Segment change inside this AS.
        if !last_in_seg || pkt.cur_seg + 1 >= pkt.path.segments.len() {
            return Action::Drop(DropReason::Structure);
        }
        let Some(first) = pkt.path.segments[pkt.cur_seg + 1].first_usable() else {
            return Action::Drop(DropReason::Structure);
        };
        pkt.cur_seg += 1;
        pkt.cur_of = first;
        if let Err(r) = check(ctx, pkt, now, Arrival::Local) {
            return Action::Drop(r);
        }
        if at_destination(pkt) {
            let _ = pkt.dst_addr();
            return Action::Deliver;
        }
        out = out_interface(pkt);
        if out == 0 {
            return Action::Drop(DropReason::Structure);
        }
    }
    if !(ctx.link_up)(out) {
        return Action::LinkDown {
            egress: out,
            notice: pkt.reversed_at_current(Vec::new()),
        };
    }
    match pkt.current_segment().next_usable(pkt.cur_of) {
        Some(next) => pkt.cur_of = next,
        None => {
            let next_seg = pkt.cur_seg + 1;
            let Some(first) = pkt.path.segments.get(next_seg).and_then(|s| s.first_usable()) else {
                return Action::Drop(DropReason::Structure);
            };
            pkt.cur_seg = next_seg;
            pkt.cur_of = first;
        }
    }
    Action::Forward(out)
}

/// Byte-level entry point: decode, forward, re-encode.
pub fn forward_bytes(
    ctx: &RouterContext<'_>,
    bytes: &[u8],
    arrival: Arrival,
    now: SimTime,
) -> (Action, Option<Vec<u8>>) {
    match Packet::decode(bytes) {
        Ok(mut pkt) => {
            let action = forward(ctx, &mut pkt, arrival, now);
            let out = matches!(action, Action::Forward(_)).then(|| pkt.encode());
            (action, out)
        }
        Err(_) => (Action::Drop(DropReason::Parse), None),
    }
}
