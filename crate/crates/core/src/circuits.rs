//! Synchronous simulator for agents communicating over reconfigurable
//! circuits.
//!
//! Agents sit on the nodes of a [`PortGraph`]. Every link between two ports
//! carries `c` external links whose endpoints are pins. In each round every
//! agent reads the beeps it received in the previous round, updates its
//! state, chooses a new pin configuration (a partition of its pins into
//! labelled partition sets) and beeps on some of its partition sets. Circuits
//! are then formed on the new configurations and every partition set of a
//! circuit containing a beeping set hears the beep in the next round.
//!
//! Amoebots are one kind of agent (six ports, one per grid direction). The
//! same machinery runs on boundary occurrences, portal trees and Euler tours,
//! where an agent stands for a group of amoebots that act in unison.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::grid::{AmoebotStructure, Direction, GridPoint};
use crate::split::UnionFind;

/// Maximum number of partition-set labels per agent.
pub const MAX_LABELS: usize = 128;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("agent {agent}: pin configuration has {got} pins, expected {expected}")]
    PinCount { agent: usize, got: usize, expected: usize },
    #[error("agent {agent}: partition label {label} out of range")]
    BadLabel { agent: usize, label: u8 },
    #[error("round budget of {budget} exhausted")]
    Timeout { budget: u64 },
    #[error("contract violation: {0}")]
    Contract(String),
}

/// Undirected port graph. `links[a][p]` is the port on the other side of
/// port `p` of agent `a`, if any. Ports may link back to the same agent.
#[derive(Debug, Clone, Default)]
pub struct PortGraph {
    links: Vec<Vec<Option<(usize, usize)>>>,
    /// Stable identity of each agent, used to derive its random stream.
    keys: Vec<u64>,
}

impl PortGraph {
    pub fn new() -> PortGraph {
        PortGraph::default()
    }

    pub fn add_agent(&mut self, ports: usize, key: u64) -> usize {
        self.links.push(vec![None; ports]);
        self.keys.push(key);
        self.links.len() - 1
    }

    pub fn connect(&mut self, a: usize, pa: usize, b: usize, pb: usize) {
        debug_assert!(self.links[a][pa].is_none() && self.links[b][pb].is_none());
        self.links[a][pa] = Some((b, pb));
        self.links[b][pb] = Some((a, pa));
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn ports(&self, a: usize) -> usize {
        self.links[a].len()
    }

    pub fn link(&self, a: usize, p: usize) -> Option<(usize, usize)> {
        self.links[a][p]
    }

    pub fn key(&self, a: usize) -> u64 {
        self.keys[a]
    }

    /// Linked ports of `a` in port order.
    pub fn linked_ports(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.ports(a)).filter(move |&p| self.links[a][p].is_some())
    }

    /// Connected components as agent lists, in order of smallest agent.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut uf = UnionFind::new(self.len());
        for a in 0..self.len() {
            for (b, _) in self.links[a].iter().flatten() {
                uf.union(a, *b);
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for a in 0..self.len() {
            groups.entry(uf.find(a)).or_default().push(a);
        }
        let mut out: Vec<Vec<usize>> = groups.into_values().collect();
        out.sort_by_key(|g| g[0]);
        out
    }

    /// Disjoint union; returns the agent offset of `other` inside `self`.
    pub fn absorb(&mut self, other: &PortGraph) -> usize {
        let off = self.len();
        for (a, ports) in other.links.iter().enumerate() {
            self.links.push(ports.iter().map(|l| l.map(|(b, q)| (b + off, q))).collect());
            self.keys.push(other.keys[a]);
        }
        off
    }

    /// A path of `n` agents; port 0 leads to the predecessor, port 1 to the
    /// successor.
    pub fn path(n: usize, key_base: u64) -> PortGraph {
        let mut g = PortGraph::new();
        for i in 0..n {
            g.add_agent(2, key_base.wrapping_add(i as u64));
        }
        for i in 1..n {
            g.connect(i - 1, 1, i, 0);
        }
        g
    }
}

/// Amoebot port graph of a structure: agent `i` is the `i`-th node in
/// sorted order and port `d` is direction `d`.
pub fn amoebot_graph(structure: &AmoebotStructure) -> (PortGraph, Vec<GridPoint>) {
    let nodes: Vec<GridPoint> = structure.iter().collect();
    let index: BTreeMap<GridPoint, usize> = nodes.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    let mut g = PortGraph::new();
    for p in &nodes {
        g.add_agent(6, point_key(*p));
    }
    for (i, p) in nodes.iter().enumerate() {
        for d in [Direction::E, Direction::NNE, Direction::NNW] {
            if let Some(&j) = index.get(&p.neighbor(d)) {
                g.connect(i, d.index(), j, d.opposite().index());
            }
        }
    }
    (g, nodes)
}

/// Stable 64-bit identity of a grid point.
pub fn point_key(p: GridPoint) -> u64 {
    mix((p.a as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (p.b as u64).rotate_left(32))
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Partition of an agent's pins. `labels[p * c + k]` is the partition set of
/// pin `k` on port `p`. Labels need not be contiguous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PinConfig {
    pub labels: Vec<u8>,
}

impl PinConfig {
    /// Label of a pin that forms a partition set on its own. Such sets use
    /// no label space and can be neither beeped on nor heard.
    pub const SOLO: u8 = u8::MAX;

    /// Every pin in its own partition set.
    pub fn isolated(ports: usize, c: usize) -> PinConfig {
        PinConfig { labels: (0..ports * c).map(|i| i as u8).collect() }
    }

    /// All pins in partition set 0.
    pub fn global(ports: usize, c: usize) -> PinConfig {
        PinConfig { labels: vec![0; ports * c] }
    }

    /// Every pin on its own, for any number of ports.
    pub fn solo(ports: usize, c: usize) -> PinConfig {
        PinConfig { labels: vec![Self::SOLO; ports * c] }
    }

    pub fn set(&mut self, c: usize, port: usize, pin: usize, label: u8) {
        self.labels[port * c + pin] = label;
    }
}

/// Pin index on the far side of a link: pin `k` meets pin `c - 1 - k`.
pub fn mirror(c: usize, k: usize) -> usize {
    c - 1 - k
}

/// Beeps received by one agent, as a bit set over labels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Inbox(pub u128);

impl Inbox {
    pub fn heard(self, label: u8) -> bool {
        self.0 >> label & 1 == 1
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

/// Output of one activation.
#[derive(Debug, Clone)]
pub struct Activation {
    pub pins: PinConfig,
    pub beeps: Vec<u8>,
}

/// Read-only context for one activation.
pub struct Ctx<'a> {
    pub agent: usize,
    pub round: u64,
    pub graph: &'a PortGraph,
    pub c: usize,
}

impl Ctx<'_> {
    pub fn ports(&self) -> usize {
        self.graph.ports(self.agent)
    }

    pub fn linked(&self, p: usize) -> bool {
        self.graph.link(self.agent, p).is_some()
    }
}

/// A protocol is a per-agent state machine plus a global termination test.
pub trait Protocol {
    type State: Clone;

    /// Pins per link.
    fn pins(&self) -> usize;

    fn init(&self, ctx: &Ctx, rng: &mut ChaCha8Rng) -> Self::State;

    /// One activation: reads only the agent's own state and last round's
    /// inbox.
    fn activate(&self, ctx: &Ctx, state: &mut Self::State, inbox: Inbox, rng: &mut ChaCha8Rng) -> Activation;

    /// Checked before every round; the run stops once it holds.
    fn done(&self, states: &[Self::State], round: u64) -> bool;

    /// Register words held by a state, for the memory audit.
    fn register_words(&self, _state: &Self::State) -> usize {
        0
    }

    /// Declared per-agent register allowance; larger observations are
    /// reported as warnings.
    fn register_allowance(&self) -> usize {
        8
    }
}

/// A circuit: connected partition sets, as (agent, label) pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Circuit {
    pub sets: Vec<(usize, u8)>,
}

impl Circuit {
    pub fn agents(&self) -> Vec<usize> {
        let mut a: Vec<usize> = self.sets.iter().map(|s| s.0).collect();
        a.dedup();
        a
    }
}

/// Connected components of the partition-set graph, ordered by their
/// smallest (agent, label) pair.
pub fn circuits_of(graph: &PortGraph, c: usize, pins: &[PinConfig]) -> Result<Vec<Circuit>, SimError> {
    let (mut uf, sets) = partition_sets(graph, c, pins)?;
    let mut groups: BTreeMap<usize, Vec<(usize, u8)>> = BTreeMap::new();
    for (i, s) in sets.iter().enumerate() {
        groups.entry(uf.find(i)).or_default().push(*s);
    }
    let mut out: Vec<Circuit> = groups.into_values().map(|sets| Circuit { sets }).collect();
    out.sort_by_key(|c| c.sets[0]);
    Ok(out)
}

/// Union-find over all partition sets plus the (agent, label) of each index.
fn partition_sets(graph: &PortGraph, c: usize, pins: &[PinConfig]) -> Result<(UnionFind, Vec<(usize, u8)>), SimError> {
    let mut sets = Vec::new();
    let mut pin_set: Vec<Vec<usize>> = Vec::with_capacity(graph.len());
    for (a, cfg) in pins.iter().enumerate() {
        let expected = graph.ports(a) * c;
        if cfg.labels.len() != expected {
            return Err(SimError::PinCount { agent: a, got: cfg.labels.len(), expected });
        }
        let mut m = BTreeMap::new();
        let mut of_pin = Vec::with_capacity(expected);
        for &l in &cfg.labels {
            if l == PinConfig::SOLO {
                sets.push((a, l));
                of_pin.push(sets.len() - 1);
                continue;
            }
            if l as usize >= MAX_LABELS {
                return Err(SimError::BadLabel { agent: a, label: l });
            }
            let i = *m.entry(l).or_insert_with(|| {
                sets.push((a, l));
                sets.len() - 1
            });
            of_pin.push(i);
        }
        pin_set.push(of_pin);
    }
    let mut uf = UnionFind::new(sets.len());
    for a in 0..graph.len() {
        for p in 0..graph.ports(a) {
            let Some((b, q)) = graph.link(a, p) else { continue };
            if (b, q) < (a, p) {
                continue;
            }
            for k in 0..c {
                uf.union(pin_set[a][p * c + k], pin_set[b][q * c + mirror(c, k)]);
            }
        }
    }
    Ok((uf, sets))
}

/// Deliver beeps: each agent hears every label whose circuit carries a beep.
fn deliver(graph: &PortGraph, c: usize, pins: &[PinConfig], beeps: &[Vec<u8>]) -> Result<Vec<Inbox>, SimError> {
    let (mut uf, sets) = partition_sets(graph, c, pins)?;
    let lookup: BTreeMap<(usize, u8), usize> =
        sets.iter().enumerate().filter(|(_, s)| s.1 != PinConfig::SOLO).map(|(i, s)| (*s, i)).collect();
    let mut hot = vec![false; sets.len()];
    for (a, bs) in beeps.iter().enumerate() {
        for &l in bs {
            match lookup.get(&(a, l)) {
                Some(&i) => {
                    let r = uf.find(i);
                    hot[r] = true;
                }
                // A set without pins only reaches the agent itself.
                None => {
                    if l as usize >= MAX_LABELS {
                        return Err(SimError::BadLabel { agent: a, label: l });
                    }
                }
            }
        }
    }
    let mut inbox = vec![Inbox::default(); graph.len()];
    for (i, &(a, l)) in sets.iter().enumerate() {
        if l != PinConfig::SOLO && hot[uf.find(i)] {
            inbox[a].0 |= 1u128 << l;
        }
    }
    for (a, bs) in beeps.iter().enumerate() {
        for &l in bs {
            if !lookup.contains_key(&(a, l)) {
                inbox[a].0 |= 1u128 << l;
            }
        }
    }
    Ok(inbox)
}

/// Round log entry: which agents beeped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoundLog {
    pub round: u64,
    pub beepers: Vec<usize>,
}

/// The state of a running simulation.
pub struct World<'g, P: Protocol> {
    pub graph: &'g PortGraph,
    pub protocol: P,
    pub states: Vec<P::State>,
    pub inbox: Vec<Inbox>,
    pub round: u64,
    rngs: Vec<ChaCha8Rng>,
    pub max_register_words: usize,
    pub log: Option<Vec<RoundLog>>,
}

impl<'g, P: Protocol> World<'g, P> {
    pub fn new(graph: &'g PortGraph, protocol: P, seed: u64) -> World<'g, P> {
        let c = protocol.pins();
        let mut rngs: Vec<ChaCha8Rng> = (0..graph.len())
            .map(|a| ChaCha8Rng::seed_from_u64(mix(seed ^ graph.key(a))))
            .collect();
        let states = (0..graph.len())
            .map(|a| protocol.init(&Ctx { agent: a, round: 0, graph, c }, &mut rngs[a]))
            .collect();
        World {
            graph,
            protocol,
            states,
            inbox: vec![Inbox::default(); graph.len()],
            round: 0,
            rngs,
            max_register_words: 0,
            log: None,
        }
    }

    /// One synchronous round.
    pub fn step(&mut self) -> Result<(), SimError> {
        let c = self.protocol.pins();
        let mut pins = Vec::with_capacity(self.graph.len());
        let mut beeps = Vec::with_capacity(self.graph.len());
        for a in 0..self.graph.len() {
            let ctx = Ctx { agent: a, round: self.round, graph: self.graph, c };
            let act = self.protocol.activate(&ctx, &mut self.states[a], self.inbox[a], &mut self.rngs[a]);
            self.max_register_words = self.max_register_words.max(self.protocol.register_words(&self.states[a]));
            pins.push(act.pins);
            beeps.push(act.beeps);
        }
        self.inbox = deliver(self.graph, c, &pins, &beeps)?;
        if let Some(log) = &mut self.log {
            let beepers = (0..beeps.len()).filter(|&a| !beeps[a].is_empty()).collect();
            log.push(RoundLog { round: self.round, beepers });
        }
        self.round += 1;
        Ok(())
    }

    pub fn done(&self) -> bool {
        self.protocol.done(&self.states, self.round)
    }
}

/// Outcome of a finished run.
#[derive(Debug, Clone)]
pub struct RunResult<S> {
    pub states: Vec<S>,
    pub rounds: u64,
    pub max_register_words: usize,
    pub memory_warning: bool,
    pub log: Option<Vec<RoundLog>>,
}

/// Step until the protocol's termination test holds.
pub fn run_protocol<P: Protocol>(graph: &PortGraph, protocol: P, seed: u64, budget: u64) -> Result<RunResult<P::State>, SimError> {
    run_protocol_logged(graph, protocol, seed, budget, false)
}

pub fn run_protocol_logged<P: Protocol>(
    graph: &PortGraph,
    protocol: P,
    seed: u64,
    budget: u64,
    log: bool,
) -> Result<RunResult<P::State>, SimError> {
    let mut world = World::new(graph, protocol, seed);
    if log {
        world.log = Some(Vec::new());
    }
    while !world.done() {
        if world.round >= budget {
            return Err(SimError::Timeout { budget });
        }
        world.step()?;
    }
    let allowance = world.protocol.register_allowance();
    Ok(RunResult {
        rounds: world.round,
        memory_warning: world.max_register_words > allowance,
        max_register_words: world.max_register_words,
        states: world.states,
        log: world.log,
    })
}

/// Round counts of a multi-phase computation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SimulationTrace {
    pub seed: u64,
    /// Upper bound on n supplied by the harness.
    pub n_hat: u64,
    pub phases: Vec<PhaseRounds>,
    pub total_rounds: u64,
    /// Steps performed, in order, with their round counts.
    pub events: Vec<TraceEvent>,
    pub memory_warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhaseRounds {
    pub phase: String,
    pub rounds: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub phase: String,
    pub step: String,
    pub rounds: u64,
}

impl SimulationTrace {
    pub fn new(seed: u64, n_hat: u64) -> SimulationTrace {
        SimulationTrace { seed, n_hat, ..Default::default() }
    }

    /// Record a step of the current phase (the last one opened).
    pub fn record(&mut self, step: &str, rounds: u64) {
        let phase = self.phases.last_mut().expect("open a phase first");
        phase.rounds += rounds;
        self.total_rounds += rounds;
        self.events.push(TraceEvent { phase: phase.phase.clone(), step: step.to_string(), rounds });
    }

    pub fn open_phase(&mut self, name: &str) {
        self.phases.push(PhaseRounds { phase: name.to_string(), rounds: 0 });
    }

    pub fn warn(&mut self, msg: String) {
        self.memory_warnings.push(msg);
    }

    /// Plain-text export with per-phase round counts.
    pub fn to_text(&self, with_events: bool) -> String {
        let mut s = format!("seed {} n_hat {}\n", self.seed, self.n_hat);
        for p in &self.phases {
            s.push_str(&format!("phase {} rounds {}\n", p.phase, p.rounds));
        }
        s.push_str(&format!("total {}\n", self.total_rounds));
        if with_events {
            for e in &self.events {
                s.push_str(&format!("  {} {} {}\n", e.phase, e.step, e.rounds));
            }
        }
        for w in &self.memory_warnings {
            s.push_str(&format!("warning {w}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::hexagon;

    /// Beeps once from agent 0 on a global circuit, then listens.
    struct BeepWave {
        global: bool,
    }

    impl Protocol for BeepWave {
        type State = (bool, u8);

        fn pins(&self) -> usize {
            1
        }

        fn init(&self, _: &Ctx, _: &mut ChaCha8Rng) -> (bool, u8) {
            (false, 0)
        }

        fn activate(&self, ctx: &Ctx, st: &mut (bool, u8), inbox: Inbox, _: &mut ChaCha8Rng) -> Activation {
            st.0 |= !inbox.is_empty();
            st.1 += 1;
            let pins = if self.global {
                PinConfig::global(ctx.ports(), 1)
            } else {
                PinConfig::isolated(ctx.ports(), 1)
            };
            let beeps = if ctx.agent == 0 && ctx.round == 0 { vec![0] } else { vec![] };
            Activation { pins, beeps }
        }

        fn done(&self, states: &[(bool, u8)], _: u64) -> bool {
            states.iter().all(|s| s.1 >= 2)
        }
    }

    #[test]
    fn global_beep_reaches_everyone_in_one_round() {
        let s = AmoebotStructure::new(hexagon(GridPoint::new(0, 0), 3)).unwrap();
        let (g, _) = amoebot_graph(&s);
        let r = run_protocol(&g, BeepWave { global: true }, 1, 10).unwrap();
        assert_eq!(r.rounds, 2);
        assert!(r.states.iter().all(|s| s.0));
    }

    #[test]
    fn isolated_pins_reach_only_direct_neighbors() {
        let s = AmoebotStructure::new(hexagon(GridPoint::new(0, 0), 2)).unwrap();
        let (g, nodes) = amoebot_graph(&s);
        let r = run_protocol(&g, BeepWave { global: false }, 1, 10).unwrap();
        // Agent 0 beeps on label 0, which is the pin on port E only.
        let heard: Vec<GridPoint> = (0..g.len()).filter(|&a| r.states[a].0).map(|a| nodes[a]).collect();
        let expect: Vec<GridPoint> = [nodes[0], nodes[0].neighbor(Direction::E)]
            .into_iter()
            .filter(|p| s.contains(*p))
            .collect();
        let mut expect = expect;
        expect.sort();
        assert_eq!(heard, expect);
    }

    #[test]
    fn single_link_circuits_with_isolated_pins() {
        let g = PortGraph::path(4, 0);
        let pins: Vec<PinConfig> = (0..4).map(|a| PinConfig::isolated(g.ports(a), 1)).collect();
        let cs = circuits_of(&g, 1, &pins).unwrap();
        // Three links plus the two dangling end pins.
        assert_eq!(cs.len(), 5);
        assert_eq!(cs.iter().filter(|c| c.sets.len() == 2).count(), 3);
    }

    #[test]
    fn bad_labels_are_faults() {
        let g = PortGraph::path(2, 0);
        let pins = vec![PinConfig { labels: vec![0, 200] }, PinConfig::global(2, 1)];
        assert!(matches!(circuits_of(&g, 1, &pins), Err(SimError::BadLabel { .. })));
        let pins = vec![PinConfig { labels: vec![0] }, PinConfig::global(2, 1)];
        assert!(matches!(circuits_of(&g, 1, &pins), Err(SimError::PinCount { .. })));
    }

    #[test]
    fn timeout_is_reported() {
        struct Never;
        impl Protocol for Never {
            type State = ();
            fn pins(&self) -> usize {
                1
            }
            fn init(&self, _: &Ctx, _: &mut ChaCha8Rng) {}
            fn activate(&self, ctx: &Ctx, _: &mut (), _: Inbox, _: &mut ChaCha8Rng) -> Activation {
                Activation { pins: PinConfig::global(ctx.ports(), 1), beeps: vec![] }
            }
            fn done(&self, _: &[()], _: u64) -> bool {
                false
            }
        }
        let g = PortGraph::path(3, 0);
        assert_eq!(run_protocol(&g, Never, 0, 5).unwrap_err(), SimError::Timeout { budget: 5 });
    }

    #[test]
    fn trace_totals_add_up() {
        let mut t = SimulationTrace::new(3, 100);
        t.open_phase("a");
        t.record("x", 4);
        t.record("y", 5);
        t.open_phase("b");
        t.record("z", 1);
        assert_eq!(t.total_rounds, t.phases.iter().map(|p| p.rounds).sum::<u64>());
        assert_eq!(t.total_rounds, 10);
    }
}
