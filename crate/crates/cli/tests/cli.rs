use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scion-sim")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn tmp(name: &str, text: &str) -> String {
    let dir = std::env::temp_dir().join(format!("scion-sim-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn check_topo_summarizes_and_classifies_errors() {
    let o = cli(&["check-topo", "--topo", &fixture("fig.topo")]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().last(), Some("4 ISDs, 15 ASes, OK"));
    assert!(out.contains("peering links: 2"));

    let cyclic = tmp(
        "cyclic.topo",
        "isd 1\nas 1-1 core=1\nas 1-2\nas 1-3\nlink 1-1 1 1-2 1 P2C\nlink 1-2 2 1-3 1 P2C\nlink 1-3 2 1-2 3 P2C\n",
    );
    let o = cli(&["check-topo", "--topo", &cyclic]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cycl"));

    let o = cli(&["check-topo", "--topo", "/does/not/exist.topo"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_prints_digest_last_and_is_deterministic() {
    let out_file = std::env::temp_dir().join(format!("scion-sim-run-{}.txt", std::process::id()));
    let a = cli(&["run", "--scenario", &fixture("failover.scn"), "--format", "records", "--out", out_file.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0));
    let b = cli(&["run", "--scenario", &fixture("failover.scn"), "--format", "records"]);
    let (a, b) = (stdout(&a), stdout(&b));
    assert_eq!(a, b);
    let last = a.lines().last().unwrap();
    assert!(last.starts_with("digest ") && last.len() == 7 + 64, "{last}");
    let written = std::fs::read_to_string(&out_file).unwrap();
    assert_eq!(format!("{written}{last}\n"), a);
    let c = stdout(&cli(&["run", "--scenario", &fixture("failover.scn"), "--seed", "99"]));
    assert_ne!(c.lines().last().unwrap(), last);
}

#[test]
fn invalid_scenario_line_exits_1_naming_the_line() {
    let topo = fixture("fig.topo");
    let s = tmp("bad.scn", &format!("topology {topo}\nduration 10\nat 5 explode\n"));
    let o = cli(&["run", "--scenario", &s]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    let o = cli(&["run", "--scenario", "/does/not/exist.scn"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn paths_listing() {
    let topo = fixture("fig.topo");
    let o = cli(&["paths", "--topo", &topo, "--from", "1-13", "--to", "1-16"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1);
    assert!(out.starts_with("0 IMMEDIATE 1-13 1-12 1-2 1-16 hops=3 "), "{out}");

    let out = stdout(&cli(&["paths", "--topo", &topo, "--from", "1-11", "--to", "1-13"]));
    let tags: Vec<&str> = out.lines().map(|l| l.split(' ').nth(1).unwrap()).collect();
    assert_eq!(tags[0], "PEERING_SHORTCUT");
    assert!(tags[1..].contains(&"CORE_COMBINED"));

    let o = cli(&["paths", "--topo", &topo, "--from", "1-13", "--to", "9-9"]);
    assert_eq!(o.status.code(), Some(1));
    let o = cli(&["paths", "--topo", &topo, "--from", "1-13", "--to", "1-16", "--after", "soon"]);
    assert_eq!(o.status.code(), Some(1));
    let o = cli(&["paths", "--topo", &topo, "--from", "1-13"]);
    assert_eq!(o.status.code(), Some(1));

    let out = stdout(&cli(&["paths", "--scenario", &fixture("fig.scn"), "--from", "1-13", "--to", "1-16", "--format", "records"]));
    assert!(out.contains("path.0.case=IMMEDIATE\n"));
    assert!(out.contains("path.0.ases=1-13,1-12,1-2,1-16\n"));
}

#[test]
fn dump_header_round_trips() {
    let topo = fixture("fig.topo");
    let o = cli(&["dump-header", "--topo", &topo, "--from", "1-16", "--to", "1-15", "--paths-index", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    let bytes = hex::decode(lines[1]).unwrap();
    assert_eq!(bytes.len(), 8 + 48);
    assert!(out.contains("path region: 48 bytes"));
    assert!(out.ends_with("round-trip: identical\n"));
    let o = cli(&["dump-header", "--topo", &topo, "--from", "1-16", "--to", "1-15", "--paths-index", "7"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn report_ends_with_digest() {
    let o = cli(&["report", "--scenario", &fixture("failover.scn")]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("flow 0 1-10 -> 1-20"));
    let run = stdout(&cli(&["run", "--scenario", &fixture("failover.scn")]));
    assert_eq!(out.lines().last(), run.lines().last());
}
