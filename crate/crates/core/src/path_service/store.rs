use std::cmp::Reverse;
use std::collections::BTreeMap;

use super::segment::PathSegment;
use crate::beaconing::HopKey;
use crate::time::SimTime;
use crate::topology::AsId;

pub const STORE_CAPACITY: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stored {
    pub segment: PathSegment,
    pub inserted: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Insert {
    Added,
    /// A newer copy of an already stored hop sequence.
    Replaced,
    /// Same hop sequence with an older or equal timestamp.
    Ignored,
    /// Added, and the earliest-expiring segment of the key was evicted.
    Evicted,
    /// Already expired on arrival.
    Expired,
}

/// Segments grouped by a key AS, at most `capacity` per key.
#[derive(Debug, Clone)]
pub struct SegmentStore {
    by_key: BTreeMap<AsId, Vec<Stored>>,
    capacity: usize,
}

impl Default for SegmentStore {
    fn default() -> Self {
        SegmentStore::new(STORE_CAPACITY)
    }
}

/// Reply order: fewer hops, then later expiry, then hop sequence.
pub fn rank_key(s: &PathSegment) -> (usize, Reverse<SimTime>, Vec<HopKey>) {
    (s.hop_count(), Reverse(s.expiry()), s.pcb.identity())
}

impl SegmentStore {
    pub fn new(capacity: usize) -> Self {
        SegmentStore {
            by_key: BTreeMap::new(),
            capacity,
        }
    }

    pub fn insert(&mut self, key: AsId, segment: PathSegment, now: SimTime) -> Insert {
        if segment.expiry() <= now {
            return Insert::Expired;
        }
        let entries = self.by_key.entry(key).or_default();
        entries.retain(|e| e.segment.expiry() > now);
        let id = segment.pcb.identity();
        if let Some(e) = entries.iter_mut().find(|e| e.segment.pcb.identity() == id) {
            if segment.pcb.info.timestamp > e.segment.pcb.info.timestamp {
                *e = Stored { segment, inserted: now };
                return Insert::Replaced;
            }
            return Insert::Ignored;
        }
        entries.push(Stored { segment, inserted: now });
        if entries.len() <= self.capacity {
            return Insert::Added;
        }
        let victim = entries
            .iter()
            .enumerate()
            .min_by_key(|(_, e)| (e.segment.expiry(), e.inserted, e.segment.pcb.identity()))
            .map(|(i, _)| i)
            .expect("non-empty");
        entries.remove(victim);
        Insert::Evicted
    }

    /// Unexpired segments under `key`, best first.
    pub fn get(&self, key: AsId, now: SimTime) -> Vec<&PathSegment> {
        let mut v: Vec<&PathSegment> = self
            .by_key
            .get(&key)
            .map(|es| es.iter().map(|e| &e.segment).filter(|s| s.expiry() > now).collect())
            .unwrap_or_default();
        v.sort_by_cached_key(|s| rank_key(s));
        v
    }

    pub fn len_at(&self, key: AsId) -> usize {
        self.by_key.get(&key).map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.by_key.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn keys(&self) -> impl Iterator<Item = AsId> + '_ {
        self.by_key.iter().filter(|(_, v)| !v.is_empty()).map(|(k, _)| *k)
    }

    pub fn iter(&self) -> impl Iterator<Item = (AsId, &PathSegment)> {
        self.by_key
            .iter()
            .flat_map(|(k, v)| v.iter().map(move |e| (*k, &e.segment)))
    }

    /// Remove every segment that uses the interface; returns how many.
    pub fn purge_interface(&mut self, as_id: AsId, interface: u16) -> usize {
        let mut n = 0;
        for v in self.by_key.values_mut() {
            let before = v.len();
            v.retain(|e| !e.segment.uses_interface(as_id, interface));
            n += before - v.len();
        }
        n
    }

    pub fn prune(&mut self, now: SimTime) {
        for v in self.by_key.values_mut() {
            v.retain(|e| e.segment.expiry() > now);
        }
        self.by_key.retain(|_, v| !v.is_empty());
    }
}
