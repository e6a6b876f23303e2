//! Brute-force enumeration of valley-free up segments, written against the
//! topology alone.

use std::collections::BTreeSet;

use scion_sim::topology::{AsId, LinkType, Topology};

/// Hop (AS, ingress, egress) in beacon order: core first, `leaf` last.
pub type Hop = (AsId, u16, u16);

/// Every loop-free chain of customer-to-provider links from `leaf` up to a
/// core AS of the leaf's ISD, in beacon order.
pub fn up_segments(topo: &Topology, leaf: AsId) -> BTreeSet<Vec<Hop>> {
    let mut out = BTreeSet::new();
    let mut stack = vec![(leaf, 0u16, 0u16)];
    climb(topo, leaf, &mut stack, &mut out);
    out
}

fn climb(topo: &Topology, leaf: AsId, stack: &mut Vec<Hop>, out: &mut BTreeSet<Vec<Hop>>) {
    let here = stack.last().expect("non-empty").0;
    for link in topo.links.iter().filter(|l| l.kind == LinkType::ProviderToCustomer && l.b == here) {
        let up = link.a;
        if stack.iter().any(|h| h.0 == up) || !topo.is_member(up, leaf.isd) {
            continue;
        }
        // The current top hop leaves through the customer-side interface.
        stack.last_mut().expect("non-empty").1 = link.b_if.value();
        stack.push((up, 0, link.a_if.value()));
        if topo.is_core_in(up, leaf.isd) {
            // Stack hops are (AS, provider-side if, customer-side if), which in
            // beacon order is (AS, ingress, egress).
            out.insert(stack.iter().rev().copied().collect());
        } else {
            climb(topo, leaf, stack, out);
        }
        stack.pop();
        stack.last_mut().expect("non-empty").1 = 0;
    }
}
