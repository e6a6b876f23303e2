//! `scion-sim`: validate topologies, run scenarios, list paths and dump
//! packet headers.
//!
//! Exit status: 0 on success, 1 on invalid input, 2 on runtime errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use scion_sim::combiner::EndToEndPath;
use scion_sim::dataplane::{HostAddr, Packet};
use scion_sim::sim::scenario::parse_time;
use scion_sim::sim::{Engine, Metrics, Scenario};
use scion_sim::time::SimTime;
use scion_sim::topology::{AsId, LinkType, Topology};

#[derive(Parser)]
#[command(name = "scion-sim", version, about = "Deterministic path-aware network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum, Default, PartialEq, Eq)]
enum Format {
    #[default]
    Text,
    Records,
}

#[derive(clap::Args)]
struct Source {
    /// Topology file (a scenario with default settings is built around it).
    #[arg(long, conflicts_with = "scenario")]
    topo: Option<PathBuf>,
    /// Scenario file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(clap::Args)]
struct PathQuery {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    from: String,
    #[arg(long)]
    to: String,
    /// Simulated time at which to query, e.g. `90` or `1500ms`.
    #[arg(long, default_value = "90")]
    after: String,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a topology file and summarize it.
    CheckTopo {
        #[arg(long)]
        topo: PathBuf,
    },
    /// Run a scenario; prints the metrics and their digest as the last line.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the metrics export to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// List end-to-end paths between two ASes.
    Paths {
        #[command(flatten)]
        query: PathQuery,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Print the header of one listed path as hex and check it decodes back.
    DumpHeader {
        #[command(flatten)]
        query: PathQuery,
        #[arg(long, default_value_t = 0)]
        paths_index: usize,
    },
    /// Run a scenario and print a readable report.
    Report {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure of a command: invalid input (1) or runtime error (2).
enum Failure {
    Invalid(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Runtime(m) => m,
        }
    }
}

type Outcome = Result<String, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn load_topology(path: &Path) -> Result<Topology, Failure> {
    let text = read(path)?;
    Topology::parse(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario, Failure> {
    let mut s = Scenario::load(path).map_err(|e| {
        let msg = format!("{}: {e}", path.display());
        if e.is_io() {
            Failure::Runtime(msg)
        } else {
            Failure::Invalid(msg)
        }
    })?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    Ok(s)
}

fn scenario_from(source: &Source, until: SimTime) -> Result<Scenario, Failure> {
    match (&source.topo, &source.scenario) {
        (Some(t), None) => {
            let topo = load_topology(t)?;
            // Run a little past the query time so events at `until` are processed.
            Ok(Scenario::new(topo, source.seed.unwrap_or(1), until + SimTime::from_secs(1)))
        }
        (None, Some(s)) => {
            let mut s = load_scenario(s, source.seed)?;
            s.duration = s.duration.max(until + SimTime::from_secs(1));
            Ok(s)
        }
        _ => Err(Failure::Invalid("give exactly one of --topo or --scenario".into())),
    }
}

fn check_topo(path: &Path) -> Outcome {
    let t = load_topology(path)?;
    let mut out = String::new();
    for isd in &t.isds {
        let cores: Vec<String> = t.core_ases(*isd).iter().map(AsId::to_string).collect();
        let members = t.ases.keys().filter(|a| t.is_member(**a, *isd)).count();
        writeln!(out, "ISD {isd}: {members} ASes, core {}", cores.join(" ")).unwrap();
    }
    for (kind, name) in [
        (LinkType::Core, "core"),
        (LinkType::ProviderToCustomer, "provider-customer"),
        (LinkType::Peering, "peering"),
    ] {
        let n = t.links.iter().filter(|l| l.kind == kind).count();
        writeln!(out, "{name} links: {n}").unwrap();
    }
    for w in &t.warnings {
        writeln!(out, "warning: {w}").unwrap();
    }
    writeln!(out, "{} ISDs, {} ASes, OK", t.isds.len(), t.ases.len()).unwrap();
    Ok(out)
}

fn export(m: &Metrics, format: Format) -> String {
    match format {
        Format::Records => m.export(),
        Format::Text => {
            let recs = m.records();
            let width = recs.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
            recs.iter().map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
        }
    }
}

fn run(path: &Path, seed: Option<u64>, out: Option<&Path>, format: Format) -> Outcome {
    let s = load_scenario(path, seed)?;
    let m = Engine::new(&s).run();
    if let Some(p) = out {
        write(p, &m.export())?;
    }
    Ok(format!("{}digest {}\n", export(&m, format), m.digest()))
}

fn parse_as(topo: &Topology, s: &str) -> Result<AsId, Failure> {
    let a: AsId = s.parse().map_err(Failure::Invalid)?;
    if !topo.contains(a) {
        return Err(Failure::Invalid(format!("unknown AS {a}")));
    }
    Ok(a)
}

fn query(q: &PathQuery) -> Result<Vec<EndToEndPath>, Failure> {
    let after = parse_time(&q.after).map_err(|e| Failure::Invalid(format!("--after: {e}")))?;
    let s = scenario_from(&q.source, after)?;
    let src = parse_as(&s.topology, &q.from)?;
    let dst = parse_as(&s.topology, &q.to)?;
    let mut e = Engine::new(&s);
    e.run_until(after);
    match e.paths(src, dst) {
        Ok((paths, _)) => Ok(paths),
        Err(err) => Err(Failure::Runtime(format!("lookup {src} -> {dst}: {err}"))),
    }
}

fn paths(q: &PathQuery, format: Format) -> Outcome {
    let paths = query(q)?;
    let mut out = String::new();
    for (i, p) in paths.iter().enumerate() {
        let seq: Vec<String> = p.ases().iter().map(AsId::to_string).collect();
        match format {
            Format::Text => writeln!(
                out,
                "{i} {} {} hops={} header={}",
                p.case.as_str(),
                seq.join(" "),
                p.links(),
                p.header_len()
            ),
            Format::Records => writeln!(
                out,
                "path.{i}.case={}\npath.{i}.ases={}\npath.{i}.hops={}\npath.{i}.header_bytes={}",
                p.case.as_str(),
                seq.join(","),
                p.links(),
                p.header_len()
            ),
        }
        .unwrap();
    }
    if paths.is_empty() {
        out.push_str("no paths\n");
    }
    Ok(out)
}

/// Field-by-field description of a packet header.
fn describe(p: &Packet) -> String {
    let mut out = format!("version {} at segment {} field {}\n", p.version, p.cur_seg, p.cur_of);
    for (i, seg) in p.path.segments.iter().enumerate() {
        let f = &seg.info;
        writeln!(
            out,
            "segment {i}: {:?} isd {} timestamp {} cons_dir={} shortcut={} peering={}",
            f.kind, f.isd, f.timestamp, f.cons_dir, f.shortcut, f.peering
        )
        .unwrap();
        for of in &seg.ofs {
            writeln!(
                out,
                "  field flags={:#04x} expiry={} ingress={} egress={} mac={:06x}",
                of.flags, of.expiry, of.ingress, of.egress, of.mac
            )
            .unwrap();
        }
    }
    out
}

fn dump_header(q: &PathQuery, index: usize) -> Outcome {
    let paths = query(q)?;
    let p = paths
        .get(index)
        .ok_or_else(|| Failure::Invalid(format!("--paths-index {index}: only {} paths", paths.len())))?;
    let pkt = Packet::new(p.forwarding.clone(), HostAddr::None, HostAddr::None, Vec::new())
        .map_err(|e| Failure::Runtime(format!("header: {e}")))?;
    let bytes = pkt.encode();
    let back = Packet::decode(&bytes).map_err(|e| Failure::Runtime(format!("re-decode failed: {e}")))?;
    let (a, b) = (describe(&pkt), describe(&back));
    if a != b || back.encode() != bytes {
        return Err(Failure::Runtime("re-decoded header differs".into()));
    }
    Ok(format!(
        "{}\n{}\n{a}path region: {} bytes\nheader: {} bytes\nround-trip: identical\n",
        p.summary(),
        hex::encode(&bytes),
        p.path_region_len(),
        bytes.len()
    ))
}

fn report(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Outcome {
    let s = load_scenario(path, seed)?;
    let m = Engine::new(&s).run();
    if let Some(p) = out {
        write(p, &m.export())?;
    }
    let c = |k: &str| m.counter(k);
    let mut r = String::new();
    writeln!(r, "scenario {} (seed {}, {} s)", path.display(), s.seed, s.duration.as_secs_f64()).unwrap();
    writeln!(
        r,
        "beacons: {} sent, {} received, {} rounds, {} rate violations",
        c("beacon.pcb.sent"),
        c("beacon.pcb.received"),
        c("beacon.rate.rounds"),
        c("beacon.rate.violations")
    )
    .unwrap();
    writeln!(
        r,
        "beacons rejected: {}",
        m.sum_prefix("beacon.pcb.rejected.")
    )
    .unwrap();
    writeln!(
        r,
        "path service: {} segments stored, {} lookups, {} cache hits, {} registrations rejected",
        c("ps.segments.stored"),
        c("ps.lookup.requests"),
        c("ps.lookup.cache_hits"),
        m.sum_prefix("ps.register.rejected.")
    )
    .unwrap();
    writeln!(
        r,
        "revocations: {} accepted, {} rejected, {} segments purged",
        c("ps.revocations.accepted"),
        c("ps.revocations.rejected"),
        c("ps.revocations.purged")
    )
    .unwrap();
    for (i, f) in s.flows.iter().enumerate() {
        let p = format!("flow.{i}.");
        let sent = c(&format!("{p}sent"));
        let delivered = c(&format!("{p}delivered"));
        let ratio = if sent == 0 { 0.0 } else { 100.0 * delivered as f64 / sent as f64 };
        writeln!(
            r,
            "flow {i} {} -> {}: {delivered}/{sent} delivered ({ratio:.2}%), max gap {:.3} s, {} switchovers",
            f.src,
            f.dst,
            c(&format!("{p}max_gap_us")) as f64 / 1e6,
            c(&format!("{p}switchovers"))
        )
        .unwrap();
    }
    for (k, v) in m.records() {
        if k.starts_with("trc.") || k.starts_with("attack.") {
            writeln!(r, "{k} = {v}").unwrap();
        }
    }
    writeln!(r, "audit: {} segments checked, {} invalid", c("audit.segments"), c("audit.forged")).unwrap();
    writeln!(r, "digest {}", m.digest()).unwrap();
    Ok(r)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::CheckTopo { topo } => check_topo(topo),
        Command::Run {
            scenario,
            seed,
            out,
            format,
        } => run(scenario, *seed, out.as_deref(), *format),
        Command::Paths { query, format } => paths(query, *format),
        Command::DumpHeader { query, paths_index } => dump_header(query, *paths_index),
        Command::Report { scenario, seed, out } => report(scenario, *seed, out.as_deref()),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
