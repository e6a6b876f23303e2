//! With truncation disabled, the up segments registered at every AS are
//! exactly the valley-free chains to the cores of its ISD.

mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use common::up_oracle::up_segments;
use scion_sim::sim::random::random_topology;
use scion_sim::sim::{Engine, Scenario};
use scion_sim::time::SimTime;

#[test]
fn up_segments_match_valley_free_enumeration() {
    let started = Instant::now();
    for seed in 0..100 {
        let topo = random_topology(seed, 12);
        let mut s = Scenario::new(topo.clone(), seed, SimTime::from_secs(300));
        s.tunables.k_intra = None;
        s.tunables.k_inter = None;
        s.tunables.ps_k = None;
        s.tunables.ps_capacity = None;
        let mut e = Engine::new(&s);
        e.run_until(s.duration);
        for &a in topo.ases.keys() {
            let got: BTreeSet<_> = e.ps.server(a).up.iter().map(|(_, seg)| seg.pcb.identity()).collect();
            let want = up_segments(&topo, a);
            assert_eq!(got, want, "seed {seed}, AS {a}");
        }
    }
    assert!(started.elapsed().as_secs() < 60, "took {:?}", started.elapsed());
}
