//! Scenario files: topology, seed, duration, tunables, a timed event script
//! and host flows.

use std::collections::BTreeMap;
use std::net::IpAddr;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::world::TrcConfig;
use crate::dataplane::HostAddr;
use crate::time::SimTime;
use crate::topology::{AsId, InterfaceId, IsdId, LinkId, Topology};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
}

impl ScenarioError {
    /// I/O failures are runtime errors; everything else is invalid input.
    pub fn is_io(&self) -> bool {
        matches!(self, ScenarioError::Io { .. })
    }
}

/// How the successor TRC of a `trc-update` is signed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrcFixture {
    /// Signed by every root of the current TRC.
    Quorum,
    /// Signed by one root fewer than the update quorum.
    Insufficient,
    /// Signed by the listed root indices.
    Signers(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Attack {
    /// Beacons claiming adjacencies that do not exist.
    ForgePcb { adversary: AsId },
    /// Re-signed, truncated beacons.
    Hijack { adversary: AsId },
    /// Packets with random MACs from a host in `adversary`.
    ForgeOf { adversary: AsId, dst: AsId, count: u64 },
    /// A revocation of `(victim, interface)` tagged without the victim's key.
    ForgeScmp { adversary: AsId, victim: AsId, interface: InterfaceId },
}

impl Attack {
    pub fn adversary(&self) -> AsId {
        match self {
            Attack::ForgePcb { adversary }
            | Attack::Hijack { adversary }
            | Attack::ForgeOf { adversary, .. }
            | Attack::ForgeScmp { adversary, .. } => *adversary,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Attack::ForgePcb { .. } => "forge_pcb",
            Attack::Hijack { .. } => "hijack",
            Attack::ForgeOf { .. } => "forge_of",
            Attack::ForgeScmp { .. } => "forge_scmp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Directive {
    FailLink { link: LinkId, restore: Option<SimTime> },
    RestoreLink { link: LinkId },
    Attack(Attack),
    TrcUpdate { isd: IsdId, fixture: TrcFixture },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptEntry {
    pub at: SimTime,
    pub directive: Directive,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowSpec {
    pub src: AsId,
    pub src_host: HostAddr,
    pub dst: AsId,
    pub dst_host: HostAddr,
    /// Packets per second.
    pub rate: u32,
    pub paths: usize,
    pub start: SimTime,
    pub stop: SimTime,
    pub line: usize,
}

/// Engine tunables a scenario may override.
#[derive(Debug, Clone, PartialEq)]
pub struct Tunables {
    pub k_intra: Option<usize>,
    pub k_inter: Option<usize>,
    pub interval_intra: SimTime,
    pub interval_inter: SimTime,
    /// Reply limit per segment category at path servers.
    pub ps_k: Option<usize>,
    /// Segments kept per key at path servers.
    pub ps_capacity: Option<usize>,
    pub caching: bool,
    pub link_latency: SimTime,
    pub intra_latency: SimTime,
    pub ack_timeout: SimTime,
}

impl Default for Tunables {
    fn default() -> Self {
        Tunables {
            k_intra: Some(5),
            k_inter: Some(3),
            interval_intra: SimTime::from_secs(15),
            interval_inter: SimTime::from_secs(60),
            ps_k: Some(5),
            ps_capacity: Some(crate::path_service::STORE_CAPACITY),
            caching: true,
            link_latency: SimTime::from_millis(10),
            intra_latency: SimTime::from_millis(1),
            ack_timeout: SimTime::from_millis(500),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub topology: Topology,
    pub topology_path: Option<PathBuf>,
    pub seed: u64,
    pub duration: SimTime,
    pub tunables: Tunables,
    pub trc_configs: BTreeMap<IsdId, TrcConfig>,
    /// Host that receives address-free packets, per AS.
    pub default_hosts: BTreeMap<AsId, HostAddr>,
    pub script: Vec<ScriptEntry>,
    pub flows: Vec<FlowSpec>,
}

impl Scenario {
    /// A scenario with an empty script over `topology`.
    pub fn new(topology: Topology, seed: u64, duration: SimTime) -> Self {
        Scenario {
            topology,
            topology_path: None,
            seed,
            duration,
            tunables: Tunables::default(),
            trc_configs: BTreeMap::new(),
            default_hosts: BTreeMap::new(),
            script: Vec::new(),
            flows: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, |p| {
            let full = base.join(p);
            read(&full).map(|t| (t, full))
        })
    }

    /// Parse scenario text. `load_topology` resolves the `topology` line.
    pub fn parse(
        text: &str,
        mut load_topology: impl FnMut(&str) -> Result<(String, PathBuf), ScenarioError>,
    ) -> Result<Self, ScenarioError> {
        let mut topo: Option<(Topology, PathBuf)> = None;
        let mut seed = 0u64;
        let mut duration: Option<SimTime> = None;
        let mut tunables = Tunables::default();
        let mut trc_configs = BTreeMap::new();
        let mut default_hosts = BTreeMap::new();
        let mut pending: Vec<(usize, Vec<String>)> = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = strip_comment(raw).trim();
            if content.is_empty() {
                continue;
            }
            let toks: Vec<String> = content.split_whitespace().map(str::to_string).collect();
            let err = |msg: String| ScenarioError::Line { line, msg };
            let arg = |n: usize| toks.get(n).map(String::as_str).ok_or_else(|| err(format!("'{}' needs more arguments", toks[0])));
            match toks[0].as_str() {
                "topology" => {
                    let (src, path) = load_topology(arg(1)?)?;
                    let t = Topology::parse(&src).map_err(|e| err(format!("topology {}: {e}", path.display())))?;
                    topo = Some((t, path));
                }
                "seed" => seed = arg(1)?.parse().map_err(|_| err("invalid seed".into()))?,
                "duration" => duration = Some(parse_time(arg(1)?).map_err(err)?),
                "k-intra" => tunables.k_intra = parse_limit(arg(1)?).map_err(err)?,
                "k-inter" => tunables.k_inter = parse_limit(arg(1)?).map_err(err)?,
                "ps-k" => tunables.ps_k = parse_limit(arg(1)?).map_err(err)?,
                "ps-capacity" => tunables.ps_capacity = parse_limit(arg(1)?).map_err(err)?,
                "interval-intra" => tunables.interval_intra = parse_positive(arg(1)?).map_err(err)?,
                "interval-inter" => tunables.interval_inter = parse_positive(arg(1)?).map_err(err)?,
                "link-latency" => tunables.link_latency = parse_time(arg(1)?).map_err(err)?,
                "intra-latency" => tunables.intra_latency = parse_time(arg(1)?).map_err(err)?,
                "ack-timeout" => tunables.ack_timeout = parse_positive(arg(1)?).map_err(err)?,
                "caching" => {
                    tunables.caching = match arg(1)? {
                        "on" => true,
                        "off" => false,
                        o => return Err(err(format!("caching must be on or off, got '{o}'"))),
                    }
                }
                "trc" => {
                    // trc <isd> roots <n> quorum-cert <q> quorum-trc <q>
                    let isd: IsdId = arg(1)?.parse().map_err(err)?;
                    let mut cfg = TrcConfig::default();
                    let mut j = 2;
                    while j < toks.len() {
                        let v = arg(j + 1)?;
                        let bad = |_| err(format!("invalid value '{v}'"));
                        match toks[j].as_str() {
                            "roots" => cfg.roots = v.parse().map_err(bad)?,
                            "quorum-cert" => cfg.quorum_cert = v.parse().map_err(bad)?,
                            "quorum-trc" => cfg.quorum_trc = v.parse().map_err(bad)?,
                            o => return Err(err(format!("unknown trc option '{o}'"))),
                        }
                        j += 2;
                    }
                    if cfg.roots == 0
                        || cfg.quorum_cert == 0
                        || cfg.quorum_trc == 0
                        || cfg.quorum_cert > cfg.roots as u32
                        || cfg.quorum_trc > cfg.roots as u32
                    {
                        return Err(err("quorums must lie in 1..=roots".into()));
                    }
                    trc_configs.insert(isd, cfg);
                }
                "default-host" => {
                    let a: AsId = arg(1)?.parse().map_err(err)?;
                    default_hosts.insert(a, parse_host(arg(2)?).map_err(err)?);
                }
                "at" | "flow" => pending.push((line, toks)),
                other => return Err(err(format!("unknown directive '{other}'"))),
            }
        }

        let (topology, topology_path) = topo.ok_or_else(|| ScenarioError::Invalid("missing 'topology' line".into()))?;
        let duration = duration.ok_or_else(|| ScenarioError::Invalid("missing 'duration' line".into()))?;
        for a in default_hosts.keys() {
            if !topology.contains(*a) {
                return Err(ScenarioError::Invalid(format!("default-host names unknown AS {a}")));
            }
        }
        let mut script = Vec::new();
        let mut flows = Vec::new();
        for (line, toks) in pending {
            let err = |msg: String| ScenarioError::Line { line, msg };
            if toks[0] == "flow" {
                flows.push(parse_flow(&toks, line, &topology, &default_hosts, duration).map_err(err)?);
            } else {
                script.extend(parse_at(&toks, line, &topology).map_err(err)?);
            }
        }
        script.sort_by_key(|e| (e.at, e.line));
        Ok(Scenario {
            topology,
            topology_path: Some(topology_path),
            seed,
            duration,
            tunables,
            trc_configs,
            default_hosts,
            script,
            flows,
        })
    }
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

/// Seconds (`12`, `0.5`) or milliseconds (`500ms`).
pub fn parse_time(s: &str) -> Result<SimTime, String> {
    let (num, scale) = match s.strip_suffix("ms") {
        Some(n) => (n, 1_000.0),
        None => (s.strip_suffix('s').unwrap_or(s), 1_000_000.0),
    };
    let v: f64 = num.parse().map_err(|_| format!("invalid time '{s}'"))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("invalid time '{s}'"));
    }
    Ok(SimTime::from_micros((v * scale).round() as u64))
}

fn parse_positive(s: &str) -> Result<SimTime, String> {
    let t = parse_time(s)?;
    if t == SimTime::ZERO {
        return Err(format!("'{s}' must be positive"));
    }
    Ok(t)
}

fn parse_limit(s: &str) -> Result<Option<usize>, String> {
    if s == "none" {
        return Ok(None);
    }
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("expected a positive number or 'none', got '{s}'")),
        Ok(n) => Ok(Some(n)),
    }
}

pub fn parse_host(s: &str) -> Result<HostAddr, String> {
    if let Ok(ip) = s.parse::<IpAddr>() {
        return Ok(match ip {
            IpAddr::V4(v) => HostAddr::V4(v.octets()),
            IpAddr::V6(v) => HostAddr::V6(v.octets()),
        });
    }
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 6 {
        let mut b = [0u8; 6];
        for (i, p) in parts.iter().enumerate() {
            b[i] = u8::from_str_radix(p, 16).map_err(|_| format!("invalid host address '{s}'"))?;
        }
        return Ok(HostAddr::Mac(b));
    }
    if s.len() == 40 {
        if let Ok(v) = hex::decode(s) {
            return Ok(HostAddr::Long(v.try_into().expect("40 hex digits")));
        }
    }
    Err(format!("invalid host address '{s}'"))
}

/// A link by 1-based id or by `<as>#<interface>`.
/// Text before a `#` that starts a token; `1-2#3` is a link, not a comment.
fn strip_comment(raw: &str) -> &str {
    let mut prev_space = true;
    for (i, c) in raw.char_indices() {
        if c == '#' && prev_space {
            return &raw[..i];
        }
        prev_space = c.is_whitespace();
    }
    raw
}

fn parse_link(s: &str, topo: &Topology) -> Result<LinkId, String> {
    if let Some((a, i)) = s.split_once('#') {
        let a: AsId = a.parse()?;
        let i: InterfaceId = i.parse()?;
        return topo.link_at(a, i).map(|l| l.id).ok_or_else(|| format!("no link at {a}#{i}"));
    }
    let n: u32 = s.parse().map_err(|_| format!("invalid link '{s}'"))?;
    topo.link(LinkId(n)).map(|l| l.id).ok_or_else(|| format!("unknown link {n}"))
}

fn known(topo: &Topology, s: &str) -> Result<AsId, String> {
    let a: AsId = s.parse()?;
    if !topo.contains(a) {
        return Err(format!("unknown AS {a}"));
    }
    Ok(a)
}

fn parse_at(toks: &[String], line: usize, topo: &Topology) -> Result<Vec<ScriptEntry>, String> {
    let need = |n: usize| toks.get(n).map(String::as_str).ok_or_else(|| format!("'{}' needs more arguments", toks.join(" ")));
    let at = parse_time(need(1)?)?;
    let entry = |at, directive| ScriptEntry { at, directive, line };
    match need(2)? {
        "fail-link" => {
            let link = parse_link(need(3)?, topo)?;
            let restore = match toks.get(4).map(String::as_str) {
                None => None,
                Some("restore") => {
                    let r = parse_time(need(5)?)?;
                    if r <= at {
                        return Err("restore time must follow the failure".into());
                    }
                    Some(r)
                }
                Some(o) => return Err(format!("unexpected '{o}'")),
            };
            let mut out = vec![entry(at, Directive::FailLink { link, restore })];
            if let Some(r) = restore {
                out.push(entry(r, Directive::RestoreLink { link }));
            }
            Ok(out)
        }
        "restore-link" => Ok(vec![entry(at, Directive::RestoreLink { link: parse_link(need(3)?, topo)? })]),
        "attack" => {
            let adversary = known(topo, need(4)?)?;
            let attack = match need(3)? {
                "forge-pcb" => Attack::ForgePcb { adversary },
                "hijack" => Attack::Hijack { adversary },
                "forge-of" => {
                    let dst = known(topo, need(5)?)?;
                    let count = match toks.get(6).map(String::as_str) {
                        None => 100_000,
                        Some("count") => need(7)?.parse().map_err(|_| "invalid count".to_string())?,
                        Some(o) => return Err(format!("unexpected '{o}'")),
                    };
                    Attack::ForgeOf { adversary, dst, count }
                }
                "forge-scmp" => Attack::ForgeScmp {
                    adversary,
                    victim: known(topo, need(5)?)?,
                    interface: need(6)?.parse()?,
                },
                o => return Err(format!("unknown attack '{o}'")),
            };
            Ok(vec![entry(at, Directive::Attack(attack))])
        }
        "trc-update" => {
            let isd: IsdId = need(3)?.parse()?;
            if !topo.isds.contains(&isd) {
                return Err(format!("unknown ISD {isd}"));
            }
            let fixture = match need(4)? {
                "quorum" => TrcFixture::Quorum,
                "insufficient" => TrcFixture::Insufficient,
                s => match s.strip_prefix("signers=") {
                    Some(list) => TrcFixture::Signers(
                        list.split(',')
                            .map(|x| x.parse().map_err(|_| format!("invalid root index '{x}'")))
                            .collect::<Result<_, _>>()?,
                    ),
                    None => return Err(format!("unknown TRC fixture '{s}'")),
                },
            };
            Ok(vec![entry(at, Directive::TrcUpdate { isd, fixture })])
        }
        o => Err(format!("unknown event '{o}'")),
    }
}

fn split_endpoint(s: &str) -> (&str, Option<&str>) {
    match s.split_once('/') {
        Some((a, h)) => (a, Some(h)),
        None => (s, None),
    }
}

fn parse_flow(
    toks: &[String],
    line: usize,
    topo: &Topology,
    defaults: &BTreeMap<AsId, HostAddr>,
    duration: SimTime,
) -> Result<FlowSpec, String> {
    let need = |n: usize| toks.get(n).map(String::as_str).ok_or_else(|| "incomplete flow".to_string());
    let (src, src_host) = split_endpoint(need(1)?);
    let src = known(topo, src)?;
    let src_host = parse_host(src_host.ok_or("flow source needs <as>/<host>")?)?;
    let (dst, dst_host) = split_endpoint(need(2)?);
    let dst = known(topo, dst)?;
    let dst_host = match dst_host {
        Some(h) => parse_host(h)?,
        None if defaults.contains_key(&dst) => HostAddr::None,
        None => return Err(format!("flow destination {dst} has no host and no default-host")),
    };
    let mut rate = None;
    let mut paths = 2;
    let mut start = SimTime::ZERO;
    let mut stop = duration;
    let mut j = 3;
    while j < toks.len() {
        let v = need(j + 1)?;
        match toks[j].as_str() {
            "rate" => rate = Some(v.parse::<u32>().ok().filter(|r| *r > 0).ok_or("rate must be a positive integer")?),
            "paths" => paths = v.parse::<usize>().ok().filter(|n| *n > 0).ok_or("paths must be a positive integer")?,
            "start" => start = parse_time(v)?,
            "stop" => stop = parse_time(v)?,
            o => return Err(format!("unknown flow option '{o}'")),
        }
        j += 2;
    }
    if src == dst {
        return Err("flow source and destination coincide".into());
    }
    if stop <= start {
        return Err("flow stop must follow start".into());
    }
    Ok(FlowSpec {
        src,
        src_host,
        dst,
        dst_host,
        rate: rate.ok_or("flow needs 'rate'")?,
        paths,
        start,
        stop,
        line,
    })
}
