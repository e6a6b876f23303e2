//! AS-level world model: isolation domains, ASes, typed inter-AS links and
//! per-AS interface identifiers.
//!
//! Topologies are loaded from a line-oriented text format:
//!
//! ```text
//! # comment
//! isd 1
//! as 1-1 core=1
//! as 1-10 member=1,2
//! link 1-1 1 1-10 1 P2C          # for P2C the first AS is the provider
//! link 1-10 2 1-11 7 PEER labels=low-latency
//! ```
//!
//! A loaded [`Topology`] is immutable and validated; serializing it with
//! [`std::fmt::Display`] and reloading yields an identical structure.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Isolation domain number. Never zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IsdId(u16);

impl IsdId {
    pub fn new(value: u16) -> Option<Self> {
        (value != 0).then_some(Self(value))
    }

    pub fn value(self) -> u16 {
        self.0
    }
}

impl fmt::Display for IsdId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for IsdId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: u16 = s.parse().map_err(|_| format!("invalid ISD number '{s}'"))?;
        IsdId::new(v).ok_or_else(|| "ISD number must be nonzero".to_string())
    }
}

/// AS identifier: home ISD plus a 32-bit local number, written `<isd>-<local>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AsId {
    pub isd: IsdId,
    pub local: u32,
}

impl AsId {
    pub fn new(isd: u16, local: u32) -> Self {
        Self {
            isd: IsdId::new(isd).expect("ISD number must be nonzero"),
            local,
        }
    }

    /// Fixed 6-byte wire form: ISD (2, big endian) then local number (4).
    pub fn to_bytes(self) -> [u8; 6] {
        let mut out = [0u8; 6];
        out[..2].copy_from_slice(&self.isd.0.to_be_bytes());
        out[2..].copy_from_slice(&self.local.to_be_bytes());
        out
    }

    pub fn from_bytes(b: [u8; 6]) -> Option<Self> {
        let isd = IsdId::new(u16::from_be_bytes([b[0], b[1]]))?;
        Some(Self {
            isd,
            local: u32::from_be_bytes([b[2], b[3], b[4], b[5]]),
        })
    }
}

impl fmt::Display for AsId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.isd, self.local)
    }
}

impl FromStr for AsId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (isd, local) = s
            .split_once('-')
            .ok_or_else(|| format!("invalid AS identifier '{s}', expected <isd>-<local>"))?;
        let isd = isd.parse()?;
        let local = local
            .parse()
            .map_err(|_| format!("invalid AS number in '{s}'"))?;
        Ok(AsId { isd, local })
    }
}

/// Interface identifier, local to the owning AS. Valid range is 1..=4095 so
/// that it fits the 12-bit hop-field slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InterfaceId(u16);

impl InterfaceId {
    pub const MAX: u16 = 4095;

    pub fn new(value: u16) -> Option<Self> {
        (1..=Self::MAX).contains(&value).then_some(Self(value))
    }

    pub fn value(self) -> u16 {
        self.0
    }
}

impl fmt::Display for InterfaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for InterfaceId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: u16 = s
            .parse()
            .map_err(|_| format!("invalid interface id '{s}'"))?;
        InterfaceId::new(v).ok_or_else(|| format!("interface id {v} outside 1..=4095"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LinkType {
    Core,
    ProviderToCustomer,
    Peering,
}

impl LinkType {
    fn keyword(self) -> &'static str {
        match self {
            LinkType::Core => "CORE",
            LinkType::ProviderToCustomer => "P2C",
            LinkType::Peering => "PEER",
        }
    }
}

impl fmt::Display for LinkType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

impl FromStr for LinkType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "CORE" => Ok(LinkType::Core),
            "P2C" => Ok(LinkType::ProviderToCustomer),
            "PEER" => Ok(LinkType::Peering),
            other => Err(format!("unknown link type '{other}'")),
        }
    }
}

/// Opaque link identifier: 1-based declaration order in the topology file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId(pub u32);

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An inter-AS link. For [`LinkType::ProviderToCustomer`], `a` is the provider.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Link {
    pub id: LinkId,
    pub a: AsId,
    pub a_if: InterfaceId,
    pub b: AsId,
    pub b_if: InterfaceId,
    pub kind: LinkType,
    /// Static property labels (e.g. `low-latency`) used by beacon selection.
    pub labels: BTreeSet<String>,
}

impl Link {
    /// The endpoint opposite `as_id`, as `(remote AS, remote interface)`.
    pub fn remote(&self, as_id: AsId) -> Option<(AsId, InterfaceId)> {
        if self.a == as_id {
            Some((self.b, self.b_if))
        } else if self.b == as_id {
            Some((self.a, self.a_if))
        } else {
            None
        }
    }

    pub fn local_if(&self, as_id: AsId) -> Option<InterfaceId> {
        if self.a == as_id {
            Some(self.a_if)
        } else if self.b == as_id {
            Some(self.b_if)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsNode {
    pub id: AsId,
    pub core_in: BTreeSet<IsdId>,
    pub member_of: BTreeSet<IsdId>,
    pub interfaces: BTreeMap<InterfaceId, LinkId>,
}

impl AsNode {
    pub fn is_core(&self) -> bool {
        !self.core_in.is_empty()
    }
}

/// One incident link as seen from a given AS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Neighbor {
    pub remote: AsId,
    pub local_if: InterfaceId,
    pub remote_if: InterfaceId,
    pub link: LinkId,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("unknown AS {0}")]
    UnknownAs(AsId),
}

fn invalid(msg: impl Into<String>) -> TopologyError {
    TopologyError::Validation(msg.into())
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Topology {
    pub isds: BTreeSet<IsdId>,
    pub ases: BTreeMap<AsId, AsNode>,
    pub links: Vec<Link>,
    /// Non-fatal findings, e.g. an AS that is core in one ISD but a regular
    /// member of another.
    pub warnings: Vec<String>,
}

impl Topology {
    /// Parse and validate a topology document.
    pub fn parse(source: &str) -> Result<Self, TopologyError> {
        let mut builder = TopologyBuilder::default();
        for (idx, raw) in source.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            builder
                .line(line)
                .map_err(|msg| TopologyError::Parse { line: line_no, msg })?;
        }
        builder.finish()
    }

    pub fn node(&self, id: AsId) -> Result<&AsNode, TopologyError> {
        self.ases.get(&id).ok_or(TopologyError::UnknownAs(id))
    }

    pub fn link(&self, id: LinkId) -> Option<&Link> {
        let idx = (id.0 as usize).checked_sub(1)?;
        self.links.get(idx)
    }

    pub fn contains(&self, id: AsId) -> bool {
        self.ases.contains_key(&id)
    }

    pub fn is_core(&self, id: AsId) -> bool {
        self.ases.get(&id).is_some_and(AsNode::is_core)
    }

    pub fn is_core_in(&self, id: AsId, isd: IsdId) -> bool {
        self.ases.get(&id).is_some_and(|n| n.core_in.contains(&isd))
    }

    pub fn is_member(&self, id: AsId, isd: IsdId) -> bool {
        self.ases.get(&id).is_some_and(|n| n.member_of.contains(&isd))
    }

    pub fn core_ases(&self, isd: IsdId) -> Vec<AsId> {
        self.ases
            .values()
            .filter(|n| n.core_in.contains(&isd))
            .map(|n| n.id)
            .collect()
    }

    pub fn all_core_ases(&self) -> Vec<AsId> {
        self.ases.values().filter(|n| n.is_core()).map(|n| n.id).collect()
    }

    /// The link attached to `(as_id, interface)`, if any.
    pub fn link_at(&self, as_id: AsId, ifid: InterfaceId) -> Option<&Link> {
        let link = *self.ases.get(&as_id)?.interfaces.get(&ifid)?;
        self.link(link)
    }

    /// Exactly the links of type `kind` incident to `as_id`.
    pub fn neighbors(&self, as_id: AsId, kind: LinkType) -> Result<Vec<Neighbor>, TopologyError> {
        let node = self.node(as_id)?;
        let mut out: Vec<Neighbor> = node
            .interfaces
            .iter()
            .filter_map(|(&local_if, &lid)| {
                let link = self.link(lid)?;
                if link.kind != kind {
                    return None;
                }
                let (remote, remote_if) = link.remote(as_id)?;
                Some(Neighbor {
                    remote,
                    local_if,
                    remote_if,
                    link: lid,
                })
            })
            .collect();
        out.sort();
        Ok(out)
    }

    /// Provider-to-customer links on which `as_id` is the provider.
    pub fn customers(&self, as_id: AsId) -> Result<Vec<Neighbor>, TopologyError> {
        Ok(self
            .neighbors(as_id, LinkType::ProviderToCustomer)?
            .into_iter()
            .filter(|n| self.link(n.link).is_some_and(|l| l.a == as_id))
            .collect())
    }

    /// Provider-to-customer links on which `as_id` is the customer.
    pub fn providers(&self, as_id: AsId) -> Result<Vec<Neighbor>, TopologyError> {
        Ok(self
            .neighbors(as_id, LinkType::ProviderToCustomer)?
            .into_iter()
            .filter(|n| self.link(n.link).is_some_and(|l| l.b == as_id))
            .collect())
    }

    /// Pairs of distinct ISDs joined by at least one link, where a link joins
    /// every ISD its endpoints are members of.
    pub fn isd_adjacency(&self) -> BTreeMap<IsdId, BTreeSet<IsdId>> {
        let mut adj: BTreeMap<IsdId, BTreeSet<IsdId>> =
            self.isds.iter().map(|&i| (i, BTreeSet::new())).collect();
        for link in &self.links {
            let (Some(na), Some(nb)) = (self.ases.get(&link.a), self.ases.get(&link.b)) else {
                continue;
            };
            for &ia in &na.member_of {
                for &ib in &nb.member_of {
                    if ia != ib {
                        adj.entry(ia).or_default().insert(ib);
                        adj.entry(ib).or_default().insert(ia);
                    }
                }
            }
        }
        adj
    }

    /// Shortest hop count between two ASes over links accepted by `usable`,
    /// ignoring link types. Used as the latency model for control messages.
    pub fn hop_distance(
        &self,
        from: AsId,
        to: AsId,
        usable: impl Fn(LinkId) -> bool,
    ) -> Option<u32> {
        if from == to {
            return self.contains(from).then_some(0);
        }
        let mut seen = BTreeSet::from([from]);
        let mut queue = VecDeque::from([(from, 0u32)]);
        while let Some((cur, d)) = queue.pop_front() {
            let node = self.ases.get(&cur)?;
            for &lid in node.interfaces.values() {
                if !usable(lid) {
                    continue;
                }
                let Some((next, _)) = self.link(lid).and_then(|l| l.remote(cur)) else {
                    continue;
                };
                if next == to {
                    return Some(d + 1);
                }
                if seen.insert(next) {
                    queue.push_back((next, d + 1));
                }
            }
        }
        None
    }

    /// Length of the longest provider chain from a core AS, over all ISDs.
    pub fn max_depth(&self) -> usize {
        let mut best = 0;
        for &isd in &self.isds {
            let mut depth: BTreeMap<AsId, usize> =
                self.core_ases(isd).into_iter().map(|c| (c, 0)).collect();
            // The customer relation is a DAG per ISD, so relaxing |V| times converges.
            for _ in 0..self.ases.len() {
                let mut changed = false;
                for link in self.p2c_links_in(isd) {
                    if let Some(&d) = depth.get(&link.a) {
                        let entry = depth.entry(link.b).or_insert(0);
                        if *entry < d + 1 {
                            *entry = d + 1;
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            best = best.max(depth.values().copied().max().unwrap_or(0));
        }
        best
    }

    fn p2c_links_in(&self, isd: IsdId) -> impl Iterator<Item = &Link> {
        self.links.iter().filter(move |l| {
            l.kind == LinkType::ProviderToCustomer
                && self.is_member(l.a, isd)
                && self.is_member(l.b, isd)
        })
    }

    fn validate(&mut self) -> Result<(), TopologyError> {
        for node in self.ases.values() {
            for isd in node.member_of.iter().chain(node.core_in.iter()) {
                if !self.isds.contains(isd) {
                    return Err(invalid(format!("AS {} references undeclared ISD {isd}", node.id)));
                }
            }
            if !node.core_in.is_subset(&node.member_of) {
                return Err(invalid(format!(
                    "AS {} is core in an ISD it is not a member of",
                    node.id
                )));
            }
        }

        for link in &self.links {
            let na = &self.ases[&link.a];
            let nb = &self.ases[&link.b];
            match link.kind {
                LinkType::Core => {
                    if !na.is_core() || !nb.is_core() {
                        return Err(invalid(format!(
                            "CORE link {} joins non-core AS ({} - {})",
                            link.id, link.a, link.b
                        )));
                    }
                }
                LinkType::ProviderToCustomer => {
                    let shared: BTreeSet<_> = na.member_of.intersection(&nb.member_of).collect();
                    if shared.is_empty() {
                        return Err(invalid(format!(
                            "P2C link {} joins ASes without a common ISD ({} - {})",
                            link.id, link.a, link.b
                        )));
                    }
                    if nb.core_in.iter().any(|i| shared.contains(i)) {
                        return Err(invalid(format!(
                            "P2C link {}: customer {} is core in a shared ISD",
                            link.id, link.b
                        )));
                    }
                }
                LinkType::Peering => {}
            }
        }

        for &isd in &self.isds {
            let cores = self.core_ases(isd);
            if cores.is_empty() {
                return Err(invalid(format!("ISD {isd} has no core AS")));
            }
            self.check_customer_dag(isd)?;
            // Every non-core member must hang below the ISD core.
            let mut reached: BTreeSet<AsId> = cores.iter().copied().collect();
            let mut queue: VecDeque<AsId> = cores.into_iter().collect();
            while let Some(cur) = queue.pop_front() {
                for link in self.p2c_links_in(isd).filter(|l| l.a == cur) {
                    if reached.insert(link.b) {
                        queue.push_back(link.b);
                    }
                }
            }
            for node in self.ases.values().filter(|n| n.member_of.contains(&isd)) {
                if !reached.contains(&node.id) {
                    return Err(invalid(format!(
                        "AS {} is not reachable from the core of ISD {isd}",
                        node.id
                    )));
                }
            }
        }

        if self.ases.len() > 1 {
            for node in self.ases.values().filter(|n| n.is_core()) {
                let has = node.interfaces.values().any(|&lid| {
                    matches!(
                        self.link(lid).map(|l| l.kind),
                        Some(LinkType::Core | LinkType::ProviderToCustomer)
                    )
                });
                if !has {
                    return Err(invalid(format!(
                        "core AS {} has no CORE or P2C link",
                        node.id
                    )));
                }
            }
        }

        let mut warnings = Vec::new();
        for node in self.ases.values() {
            if node.is_core() && node.member_of.len() > node.core_in.len() {
                let regular: Vec<String> = node
                    .member_of
                    .difference(&node.core_in)
                    .map(|i| i.to_string())
                    .collect();
                warnings.push(format!(
                    "AS {} is core in some ISDs but a regular member of ISD {}",
                    node.id,
                    regular.join(",")
                ));
            }
        }
        self.warnings = warnings;
        Ok(())
    }

    fn check_customer_dag(&self, isd: IsdId) -> Result<(), TopologyError> {
        // Kahn's algorithm over the provider->customer edges inside the ISD.
        let members: Vec<AsId> = self
            .ases
            .values()
            .filter(|n| n.member_of.contains(&isd))
            .map(|n| n.id)
            .collect();
        let mut indegree: BTreeMap<AsId, usize> = members.iter().map(|&a| (a, 0)).collect();
        let edges: Vec<(AsId, AsId)> = self.p2c_links_in(isd).map(|l| (l.a, l.b)).collect();
        for &(_, c) in &edges {
            *indegree.get_mut(&c).expect("member") += 1;
        }
        let mut queue: VecDeque<AsId> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&a, _)| a)
            .collect();
        let mut sorted = 0;
        while let Some(cur) = queue.pop_front() {
            sorted += 1;
            for &(p, c) in &edges {
                if p == cur {
                    let d = indegree.get_mut(&c).expect("member");
                    *d -= 1;
                    if *d == 0 {
                        queue.push_back(c);
                    }
                }
            }
        }
        if sorted != members.len() {
            return Err(invalid(format!("customer DAG violated in ISD {isd}")));
        }
        Ok(())
    }
}

impl FromStr for Topology {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Topology::parse(s)
    }
}

fn join_isds(set: &BTreeSet<IsdId>) -> String {
    set.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for isd in &self.isds {
            writeln!(f, "isd {isd}")?;
        }
        for node in self.ases.values() {
            write!(f, "as {}", node.id)?;
            if !node.core_in.is_empty() {
                write!(f, " core={}", join_isds(&node.core_in))?;
            }
            let extra: BTreeSet<IsdId> = node
                .member_of
                .iter()
                .copied()
                .filter(|&i| i != node.id.isd)
                .collect();
            if !extra.is_empty() {
                write!(f, " member={}", join_isds(&extra))?;
            }
            writeln!(f)?;
        }
        for link in &self.links {
            write!(
                f,
                "link {} {} {} {} {}",
                link.a, link.a_if, link.b, link.b_if, link.kind
            )?;
            if !link.labels.is_empty() {
                let labels: Vec<&str> = link.labels.iter().map(String::as_str).collect();
                write!(f, " labels={}", labels.join(","))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Default)]
struct TopologyBuilder {
    topo: Topology,
}

fn parse_isd_list(s: &str) -> Result<BTreeSet<IsdId>, String> {
    s.split(',').map(str::parse).collect()
}

impl TopologyBuilder {
    fn line(&mut self, line: &str) -> Result<(), String> {
        let mut words = line.split_whitespace();
        let keyword = words.next().unwrap_or_default();
        let args: Vec<&str> = words.collect();
        match keyword {
            "isd" => {
                let [id] = args[..] else {
                    return Err("expected `isd <isd-id>`".into());
                };
                let isd: IsdId = id.parse()?;
                if !self.topo.isds.insert(isd) {
                    return Err(format!("duplicate ISD {isd}"));
                }
            }
            "as" => {
                let (id, opts) = args.split_first().ok_or("expected `as <isd>-<local> ...`")?;
                let id: AsId = id.parse()?;
                let mut core_in = BTreeSet::new();
                let mut member_of = BTreeSet::from([id.isd]);
                for opt in opts {
                    match opt.split_once('=') {
                        Some(("core", v)) => core_in = parse_isd_list(v)?,
                        Some(("member", v)) => member_of.extend(parse_isd_list(v)?),
                        _ => return Err(format!("unknown AS option '{opt}'")),
                    }
                }
                if self.topo.ases.contains_key(&id) {
                    return Err(format!("duplicate AS {id}"));
                }
                self.topo.ases.insert(
                    id,
                    AsNode {
                        id,
                        core_in,
                        member_of,
                        interfaces: BTreeMap::new(),
                    },
                );
            }
            "link" => {
                if args.len() != 5 && args.len() != 6 {
                    return Err("expected `link <asA> <ifA> <asB> <ifB> <CORE|P2C|PEER>`".into());
                }
                let a: AsId = args[0].parse()?;
                let a_if: InterfaceId = args[1].parse()?;
                let b: AsId = args[2].parse()?;
                let b_if: InterfaceId = args[3].parse()?;
                let kind: LinkType = args[4].parse()?;
                let labels = match args.get(5) {
                    Some(opt) => match opt.split_once('=') {
                        Some(("labels", v)) => v.split(',').map(str::to_string).collect(),
                        _ => return Err(format!("unknown link option '{opt}'")),
                    },
                    None => BTreeSet::new(),
                };
                if a == b {
                    return Err(format!("link joins AS {a} to itself"));
                }
                let id = LinkId(self.topo.links.len() as u32 + 1);
                for (asid, ifid) in [(a, a_if), (b, b_if)] {
                    let node = self
                        .topo
                        .ases
                        .get_mut(&asid)
                        .ok_or_else(|| format!("link references undeclared AS {asid}"))?;
                    if node.interfaces.insert(ifid, id).is_some() {
                        return Err(format!("duplicate interface {ifid} on AS {asid}"));
                    }
                }
                self.topo.links.push(Link {
                    id,
                    a,
                    a_if,
                    b,
                    b_if,
                    kind,
                    labels,
                });
            }
            other => return Err(format!("unknown declaration '{other}'")),
        }
        Ok(())
    }

    fn finish(mut self) -> Result<Topology, TopologyError> {
        self.topo.validate()?;
        Ok(self.topo)
    }
}
