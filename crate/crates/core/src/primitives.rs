//! Distributed subroutines as protocols on the circuit simulator: leader
//! election, boundary test, PASC distance streaming, root and prune, degree
//! check, region and portal queries, and global maxima.
//!
//! Multiple independent instances run in the same rounds whenever their
//! agents form separate components of one port graph.

use std::cmp::Ordering;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::circuits::{
    mirror, run_protocol, Activation, Ctx, Inbox, PinConfig, PortGraph, Protocol, RunResult, SimError,
};
use crate::grid::{next_occurrence, occurrences_at, AmoebotStructure, BoundaryOccurrence, Compass, HoleKind};

/// Iterations of the coin-toss election per ⌈log₂ n̂⌉.
pub const ELECTION_FACTOR: u64 = 3;

/// Generous budget for protocols whose length is known to be logarithmic.
const BUDGET: u64 = 1 << 20;

/// Output of a primitive with its round count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimitiveResult<T> {
    pub output: T,
    pub rounds: u64,
    pub max_register_words: usize,
    pub memory_warning: bool,
}

impl<T> PrimitiveResult<T> {
    fn from_run<S>(run: &RunResult<S>, output: T) -> PrimitiveResult<T> {
        PrimitiveResult {
            output,
            rounds: run.rounds,
            max_register_words: run.max_register_words,
            memory_warning: run.memory_warning,
        }
    }

    fn plain(output: T, rounds: u64) -> PrimitiveResult<T> {
        PrimitiveResult { output, rounds, max_register_words: 0, memory_warning: false }
    }
}

pub fn log2_ceil(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

/// Compare two LSB-first bit streams with constant state: the last
/// differing position decides.
pub fn compare_streams(a: &[bool], b: &[bool]) -> Ordering {
    let mut ord = Ordering::Equal;
    for i in 0..a.len().max(b.len()) {
        let x = a.get(i).copied().unwrap_or(false);
        let y = b.get(i).copied().unwrap_or(false);
        if x != y {
            ord = if x { Ordering::Greater } else { Ordering::Less };
        }
    }
    ord
}

/// Value of an LSB-first stream. Harness-side decoding only.
pub fn stream_value(bits: &[bool]) -> u64 {
    bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| 1u64 << i).sum()
}

/// Bit `i` of `p - n` in `width`-bit two's complement, computed from the
/// LSB-first streams with a single borrow bit.
pub fn difference_bit(p: &[bool], n: &[bool], i: usize) -> bool {
    let mut borrow = false;
    let mut bit = false;
    for k in 0..=i {
        let x = p.get(k).copied().unwrap_or(false);
        let y = n.get(k).copied().unwrap_or(false);
        bit = x ^ y ^ borrow;
        borrow = (!x && y) || (!(x ^ y) && borrow);
    }
    bit
}

/// Whether the low `k` bits of a stream are all zero.
pub fn low_bits_zero(bits: &[bool], k: usize) -> bool {
    bits.iter().take(k).all(|b| !b)
}

// ---------------------------------------------------------------------------
// Leader election

struct Election<'a> {
    candidates: &'a [bool],
    iterations: u64,
}

#[derive(Clone)]
struct ElectionState {
    candidate: bool,
    heads: bool,
    iter: u64,
}

impl Protocol for Election<'_> {
    type State = ElectionState;

    fn pins(&self) -> usize {
        1
    }

    fn init(&self, ctx: &Ctx, _: &mut ChaCha8Rng) -> ElectionState {
        ElectionState { candidate: self.candidates[ctx.agent], heads: false, iter: 0 }
    }

    fn activate(&self, ctx: &Ctx, st: &mut ElectionState, inbox: Inbox, rng: &mut ChaCha8Rng) -> Activation {
        // Tails hearing some heads withdraw.
        if st.iter > 0 && st.candidate && !st.heads && inbox.heard(0) {
            st.candidate = false;
        }
        let mut beeps = Vec::new();
        if st.iter < self.iterations {
            st.heads = st.candidate && rng.gen_bool(0.5);
            if st.heads {
                beeps.push(0);
            }
        }
        st.iter += 1;
        Activation { pins: PinConfig::global(ctx.ports(), 1), beeps }
    }

    fn done(&self, states: &[ElectionState], _: u64) -> bool {
        states.iter().all(|s| s.iter > self.iterations)
    }

    fn register_words(&self, _: &ElectionState) -> usize {
        2
    }
}

/// Coin-toss tournament on each component's global circuit, for
/// `ELECTION_FACTOR · ⌈log₂ n̂⌉` iterations. Returns the surviving
/// candidates; a component may end with several survivors with small
/// probability.
pub fn leader_election(graph: &PortGraph, candidates: &[bool], n_hat: u64, seed: u64) -> Result<PrimitiveResult<Vec<bool>>, SimError> {
    let iterations = ELECTION_FACTOR * u64::from(log2_ceil(n_hat).max(1));
    leader_election_with(graph, candidates, iterations, seed)
}

pub fn leader_election_with(
    graph: &PortGraph,
    candidates: &[bool],
    iterations: u64,
    seed: u64,
) -> Result<PrimitiveResult<Vec<bool>>, SimError> {
    let run = run_protocol(graph, Election { candidates, iterations }, seed, BUDGET)?;
    let out = run.states.iter().map(|s| s.candidate).collect();
    Ok(PrimitiveResult::from_run(&run, out))
}

/// Number of survivors per component that had candidates.
pub fn leaders_per_component(graph: &PortGraph, flags: &[bool]) -> Vec<usize> {
    graph
        .components()
        .iter()
        .map(|c| c.iter().filter(|&&a| flags[a]).count())
        .collect()
}

// ---------------------------------------------------------------------------
// PASC

/// Input of a PASC run on a rooted forest.
#[derive(Debug, Clone)]
pub struct PascInput {
    /// Port leading to the parent; `None` marks a root.
    pub parent: Vec<Option<usize>>,
    /// Per stream, per agent unit weight in 0..=2. Roots count as 0.
    pub weights: Vec<Vec<u8>>,
    /// Agents whose stream-0 value is broadcast to their whole tree.
    pub broadcast: Vec<bool>,
    /// Stop after this many bits even if units remain.
    pub max_bits: Option<u32>,
}

impl PascInput {
    /// Unit weights on every non-root agent, a single stream.
    pub fn distances(parent: Vec<Option<usize>>) -> PascInput {
        let w = parent.iter().map(|p| u8::from(p.is_some())).collect();
        let n = parent.len();
        PascInput { parent, weights: vec![w], broadcast: vec![false; n], max_bits: None }
    }
}

/// Per agent and stream: prefix value bits excluding (`before`) and
/// including (`after`) the agent's own units, LSB first.
#[derive(Debug, Clone, Default)]
pub struct PascOutput {
    pub before: Vec<Vec<Vec<bool>>>,
    pub after: Vec<Vec<Vec<bool>>>,
    /// Bits of the broadcast value heard by each agent.
    pub broadcast: Vec<Vec<bool>>,
    pub bits: u32,
}

struct Pasc<'a> {
    input: &'a PascInput,
}

#[derive(Clone)]
struct PascState {
    units: Vec<[bool; 2]>,
    stage: u8,
    before: Vec<Vec<bool>>,
    after: Vec<Vec<bool>>,
    heard: Vec<bool>,
}

impl Pasc<'_> {
    fn streams(&self) -> usize {
        self.input.weights.len()
    }

    fn roles(&self) -> usize {
        2 * self.streams() + 2
    }

    fn config(&self, ctx: &Ctx, st: &PascState) -> PinConfig {
        let c = self.roles();
        let k = self.streams();
        let mut cfg = PinConfig::solo(ctx.ports(), c);
        let parent = self.input.parent[ctx.agent];
        for port in 0..ctx.ports() {
            let is_parent = parent == Some(port);
            for s in 0..k {
                let crossed = !is_parent && (st.units[s][0] ^ st.units[s][1]);
                let (lp, ls) = if crossed { (2 * s + 1, 2 * s) } else { (2 * s, 2 * s + 1) };
                let (pp, ps) = if is_parent { (2 * s, 2 * s + 1) } else { (mirror(c, 2 * s), mirror(c, 2 * s + 1)) };
                cfg.set(c, port, pp, lp as u8);
                cfg.set(c, port, ps, ls as u8);
            }
            for g in [2 * k, 2 * k + 1] {
                let pin = if is_parent { g } else { mirror(c, g) };
                cfg.set(c, port, pin, g as u8);
            }
        }
        cfg
    }
}

impl Protocol for Pasc<'_> {
    type State = PascState;

    fn pins(&self) -> usize {
        self.roles()
    }

    fn init(&self, ctx: &Ctx, _: &mut ChaCha8Rng) -> PascState {
        let root = self.input.parent[ctx.agent].is_none();
        let units = self
            .input
            .weights
            .iter()
            .map(|w| {
                let w = if root { 0 } else { w[ctx.agent] };
                [w >= 1, w >= 2]
            })
            .collect();
        let k = self.streams();
        PascState { units, stage: 0, before: vec![Vec::new(); k], after: vec![Vec::new(); k], heard: Vec::new() }
    }

    fn activate(&self, ctx: &Ctx, st: &mut PascState, inbox: Inbox, _: &mut ChaCha8Rng) -> Activation {
        let k = self.streams();
        let idle = Activation { pins: PinConfig::solo(ctx.ports(), self.roles()), beeps: vec![] };
        if st.stage == 2 {
            return idle;
        }
        let root = self.input.parent[ctx.agent].is_none();
        let t = ctx.round;
        if t >= 2 {
            st.heard.push(inbox.heard((2 * k + 1) as u8));
        }
        if st.stage == 1 {
            st.stage = 2;
            return idle;
        }
        if t >= 1 {
            for s in 0..k {
                let p = !root && inbox.heard((2 * s + 1) as u8);
                let [a1, a2] = st.units[s];
                let b1 = p ^ a1;
                let b2 = b1 ^ a2;
                st.before[s].push(p);
                st.after[s].push(b2);
                if a1 && b1 {
                    st.units[s][0] = false;
                }
                if a2 && b2 {
                    st.units[s][1] = false;
                }
            }
            let limit = self.input.max_bits.is_some_and(|m| t >= u64::from(m));
            if !inbox.heard((2 * k) as u8) || limit {
                st.stage = 1;
            }
        }
        let mut beeps = Vec::new();
        if st.stage == 0 {
            if root {
                beeps.extend((0..k).map(|s| (2 * s) as u8));
            }
            if st.units.iter().any(|u| u[0] || u[1]) {
                beeps.push((2 * k) as u8);
            }
        }
        if t >= 1 && self.input.broadcast[ctx.agent] && st.after[0].last() == Some(&true) {
            beeps.push((2 * k + 1) as u8);
        }
        Activation { pins: self.config(ctx, st), beeps }
    }

    fn done(&self, states: &[PascState], _: u64) -> bool {
        states.iter().all(|s| s.stage == 2)
    }

    fn register_words(&self, st: &PascState) -> usize {
        // Unit flags and the stage; emitted bits are streamed out.
        st.units.len() + 1
    }
}

/// Run PASC on a rooted forest (one root per component).
pub fn pasc(graph: &PortGraph, input: &PascInput, seed: u64) -> Result<PrimitiveResult<PascOutput>, SimError> {
    check_forest(graph, &input.parent)?;
    let run = run_protocol(graph, Pasc { input }, seed, BUDGET)?;
    let out = PascOutput {
        bits: run.states.iter().map(|s| s.after[0].len() as u32).max().unwrap_or(0),
        before: run.states.iter().map(|s| s.before.clone()).collect(),
        after: run.states.iter().map(|s| s.after.clone()).collect(),
        broadcast: run.states.iter().map(|s| s.heard.clone()).collect(),
    };
    Ok(PrimitiveResult::from_run(&run, out))
}

fn check_forest(graph: &PortGraph, parent: &[Option<usize>]) -> Result<(), SimError> {
    for comp in graph.components() {
        let roots = comp.iter().filter(|&&a| parent[a].is_none()).count();
        let edges: usize = comp.iter().map(|&a| graph.linked_ports(a).count()).sum::<usize>() / 2;
        if roots != 1 {
            return Err(SimError::Contract(format!("component with {roots} roots")));
        }
        if edges + 1 != comp.len() {
            return Err(SimError::Contract("PASC needs a tree".into()));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Consensus on a global circuit

/// Pipelined MSB-first maximum consensus: candidate `a` holds
/// `bits[a]` (MSB first, all of equal length). After the run, exactly the
/// candidates with the largest value remain in each component.
struct Consensus<'a> {
    bits: &'a [Vec<bool>],
    candidates: &'a [bool],
}

#[derive(Clone)]
struct ConsensusState {
    candidate: bool,
    step: usize,
}

impl Protocol for Consensus<'_> {
    type State = ConsensusState;

    fn pins(&self) -> usize {
        1
    }

    fn init(&self, ctx: &Ctx, _: &mut ChaCha8Rng) -> ConsensusState {
        ConsensusState { candidate: self.candidates[ctx.agent], step: 0 }
    }

    fn activate(&self, ctx: &Ctx, st: &mut ConsensusState, inbox: Inbox, _: &mut ChaCha8Rng) -> Activation {
        let width = self.bits.iter().map(Vec::len).max().unwrap_or(0);
        let my = &self.bits[ctx.agent];
        if st.step > 0 && st.candidate && inbox.heard(0) && !my.get(st.step - 1).copied().unwrap_or(false) {
            st.candidate = false;
        }
        let mut beeps = Vec::new();
        if st.step < width && st.candidate && my.get(st.step).copied().unwrap_or(false) {
            beeps.push(0);
        }
        st.step += 1;
        Activation { pins: PinConfig::global(ctx.ports(), 1), beeps }
    }

    fn done(&self, states: &[ConsensusState], _: u64) -> bool {
        let width = self.bits.iter().map(Vec::len).max().unwrap_or(0);
        states.iter().all(|s| s.step > width)
    }

    fn register_words(&self, _: &ConsensusState) -> usize {
        2
    }

    fn register_allowance(&self) -> usize {
        // Block representatives hold one stored distance each.
        8 + self.bits.iter().map(Vec::len).max().unwrap_or(0) / 16
    }
}

fn consensus(graph: &PortGraph, bits: &[Vec<bool>], candidates: &[bool], seed: u64) -> Result<PrimitiveResult<Vec<bool>>, SimError> {
    let run = run_protocol(graph, Consensus { bits, candidates }, seed, BUDGET)?;
    let out = run.states.iter().map(|s| s.candidate).collect();
    Ok(PrimitiveResult::from_run(&run, out))
}

// ---------------------------------------------------------------------------
// Constant-round queries

struct AnyBeep<'a> {
    beepers: &'a [bool],
}

impl Protocol for AnyBeep<'_> {
    type State = Option<bool>;

    fn pins(&self) -> usize {
        1
    }

    fn init(&self, _: &Ctx, _: &mut ChaCha8Rng) -> Option<bool> {
        None
    }

    fn activate(&self, ctx: &Ctx, st: &mut Option<bool>, inbox: Inbox, _: &mut ChaCha8Rng) -> Activation {
        let beeps = if ctx.round == 0 && self.beepers[ctx.agent] { vec![0] } else { vec![] };
        if ctx.round == 1 {
            *st = Some(inbox.heard(0));
        }
        Activation { pins: PinConfig::global(ctx.ports(), 1), beeps }
    }

    fn done(&self, states: &[Option<bool>], _: u64) -> bool {
        states.iter().all(Option::is_some)
    }
}

/// Each agent learns whether its component (a region, a portal, ...)
/// contains a member of `set`.
pub fn region_has(graph: &PortGraph, set: &[bool], seed: u64) -> Result<PrimitiveResult<Vec<bool>>, SimError> {
    let run = run_protocol(graph, AnyBeep { beepers: set }, seed, BUDGET)?;
    let out = run.states.iter().map(|s| s.unwrap_or(false)).collect();
    Ok(PrimitiveResult::from_run(&run, out))
}

struct Closest<'a> {
    set: &'a [bool],
}

impl Protocol for Closest<'_> {
    type State = Option<bool>;

    fn pins(&self) -> usize {
        1
    }

    fn init(&self, _: &Ctx, _: &mut ChaCha8Rng) -> Option<bool> {
        None
    }

    fn activate(&self, ctx: &Ctx, st: &mut Option<bool>, inbox: Inbox, _: &mut ChaCha8Rng) -> Activation {
        let head = !ctx.linked(0);
        let member = self.set[ctx.agent];
        // Members cut the chain: the predecessor side listens on 0, the
        // successor side is detached on 1.
        let pins = PinConfig { labels: if member { vec![0, 1] } else { vec![0, 0] } };
        let beeps = if ctx.round == 0 && head && !member { vec![0] } else { vec![] };
        if ctx.round == 1 {
            *st = Some(member && (head || inbox.heard(0)));
        }
        Activation { pins, beeps }
    }

    fn done(&self, states: &[Option<bool>], _: u64) -> bool {
        states.iter().all(Option::is_some)
    }
}

/// On chains given as paths (the head is the chosen endpoint `u`), flag the
/// member closest to the head.
pub fn closest_on_portal(chains: &PortGraph, set: &[bool], seed: u64) -> Result<PrimitiveResult<Vec<bool>>, SimError> {
    let run = run_protocol(chains, Closest { set }, seed, BUDGET)?;
    let out = run.states.iter().map(|s| s.unwrap_or(false)).collect();
    Ok(PrimitiveResult::from_run(&run, out))
}

struct DegreeCount<'a> {
    starts: &'a [u8],
    threshold: usize,
}

impl Protocol for DegreeCount<'_> {
    type State = (u8, Option<bool>);

    fn pins(&self) -> usize {
        self.threshold + 2
    }

    fn init(&self, _: &Ctx, _: &mut ChaCha8Rng) -> (u8, Option<bool>) {
        (0, None)
    }

    fn activate(&self, ctx: &Ctx, st: &mut (u8, Option<bool>), inbox: Inbox, _: &mut ChaCha8Rng) -> Activation {
        let thr = self.threshold;
        let c = thr + 2;
        let s = self.starts[ctx.agent] as usize;
        let mut pins = PinConfig::isolated(2, c);
        // Lane k arriving from the predecessor leaves as lane min(k+s, thr).
        // Lanes not reachable from the predecessor get their own labels.
        for lane in 0..=thr {
            pins.set(c, 0, mirror(c, lane), (lane + s).min(thr) as u8);
            let label = if lane < s.min(thr) { (thr + 2 + lane) as u8 } else { lane as u8 };
            pins.set(c, 1, lane, label);
        }
        let global = (thr + 1) as u8;
        pins.set(c, 0, mirror(c, thr + 1), global);
        pins.set(c, 1, thr + 1, global);
        let head = !ctx.linked(0);
        let tail = !ctx.linked(1);
        let mut beeps = Vec::new();
        match ctx.round {
            0 if head => beeps.push(s.min(thr) as u8),
            1 => {
                let count = (0..=thr).rev().find(|&l| inbox.heard(l as u8)).unwrap_or(0);
                st.0 = count as u8;
                if tail && count >= thr {
                    beeps.push(global);
                }
            }
            2 => st.1 = Some(inbox.heard(global)),
            _ => {}
        }
        Activation { pins, beeps }
    }

    fn done(&self, states: &[(u8, Option<bool>)], _: u64) -> bool {
        states.iter().all(|s| s.1.is_some())
    }
}

/// Degree check on portal chains. Each chain is a path of a portal's
/// amoebots; `starts[a]` counts the neighbor-portal contacts that begin at
/// amoebot `a` (at most one per side). Every amoebot learns whether its
/// portal has at least `threshold` neighbors.
pub fn degree_check(chains: &PortGraph, starts: &[u8], threshold: usize, seed: u64) -> Result<PrimitiveResult<Vec<bool>>, SimError> {
    if threshold == 0 {
        return Ok(PrimitiveResult::plain(vec![true; chains.len()], 0));
    }
    let run = run_protocol(chains, DegreeCount { starts, threshold }, seed, BUDGET)?;
    let out = run.states.iter().map(|s| s.1.unwrap_or(false)).collect();
    Ok(PrimitiveResult::from_run(&run, out))
}

// ---------------------------------------------------------------------------
// Boundary test

/// Occurrence-level port graph of all boundary cycles: agent `i` is
/// `occurrences[i]`, port 0 leads to the predecessor and port 1 to the
/// successor along the wall-following walk. Built from local neighborhoods
/// only.
pub fn boundary_graph(structure: &AmoebotStructure) -> (PortGraph, Vec<BoundaryOccurrence>) {
    let mut occs = Vec::new();
    for p in structure.iter() {
        occs.extend(occurrences_at(p, structure.occupied_dirs(p)));
    }
    occs.sort();
    let index: std::collections::BTreeMap<BoundaryOccurrence, usize> =
        occs.iter().enumerate().map(|(i, o)| (*o, i)).collect();
    let mut g = PortGraph::new();
    for o in &occs {
        g.add_agent(2, crate::circuits::point_key(o.node) ^ (o.start.index() as u64) << 56);
    }
    for (i, o) in occs.iter().enumerate() {
        let j = index[&next_occurrence(structure, o)];
        g.connect(i, 1, j, 0);
    }
    (g, occs)
}

const LANES: usize = 8;

struct TurnSum<'a> {
    turns: &'a [i32],
    leader: &'a [bool],
}

impl Protocol for TurnSum<'_> {
    type State = Option<bool>;

    fn pins(&self) -> usize {
        LANES + 1
    }

    fn init(&self, _: &Ctx, _: &mut ChaCha8Rng) -> Option<bool> {
        None
    }

    fn activate(&self, ctx: &Ctx, st: &mut Option<bool>, inbox: Inbox, _: &mut ChaCha8Rng) -> Activation {
        let c = LANES + 1;
        let t = self.turns[ctx.agent].rem_euclid(LANES as i32) as usize;
        let leader = self.leader[ctx.agent];
        let mut pins = PinConfig::isolated(2, c);
        for lane in 0..LANES {
            // Incoming lane k continues as lane k + turn (mod 8). The leader
            // separates its outgoing lanes so that the walk is a chain.
            pins.set(c, 0, mirror(c, lane), lane as u8);
            let out = if leader { (LANES + 1 + lane) as u8 } else { ((lane + LANES - t) % LANES) as u8 };
            pins.set(c, 1, lane, out);
        }
        let cycle = LANES as u8;
        pins.set(c, 0, mirror(c, LANES), cycle);
        pins.set(c, 1, LANES, cycle);
        let mut beeps = Vec::new();
        match ctx.round {
            0 if leader => beeps.push((LANES + 1 + t) as u8),
            1 if leader => {
                // Total turning is +6 on the outer cycle and -6 = 2 (mod 8)
                // around a hole.
                if inbox.heard(2) {
                    beeps.push(cycle);
                }
            }
            2 => *st = Some(inbox.heard(cycle)),
            _ => {}
        }
        Activation { pins, beeps }
    }

    fn done(&self, states: &[Option<bool>], _: u64) -> bool {
        states.iter().all(Option::is_some)
    }
}

/// Classification of every boundary occurrence's cycle.
#[derive(Debug, Clone)]
pub struct BoundaryTest {
    pub graph: PortGraph,
    pub occurrences: Vec<BoundaryOccurrence>,
    pub kind: Vec<HoleKind>,
    /// Elected leader per cycle; the walk starts here when a cycle is used
    /// as a chain.
    pub leader: Vec<bool>,
    pub election_ok: bool,
}

/// Elect a leader per boundary cycle, then sum turning angles modulo 8 on
/// eight lanes: the leader injects a beep and reads the lane it returns on.
pub fn boundary_test(structure: &AmoebotStructure, n_hat: u64, seed: u64) -> Result<PrimitiveResult<BoundaryTest>, SimError> {
    let (graph, occurrences) = boundary_graph(structure);
    let all = vec![true; graph.len()];
    let election = leader_election(&graph, &all, n_hat, seed)?;
    let leader = election.output;
    let election_ok = leaders_per_component(&graph, &leader).iter().all(|&k| k == 1);
    let turns: Vec<i32> = occurrences.iter().map(|o| o.turn()).collect();
    let run = run_protocol(&graph, TurnSum { turns: &turns, leader: &leader }, seed ^ 0x5EED, BUDGET)?;
    let kind = run
        .states
        .iter()
        .map(|s| if s.unwrap_or(false) { HoleKind::Inner } else { HoleKind::Outer })
        .collect();
    Ok(PrimitiveResult {
        rounds: election.rounds + run.rounds,
        max_register_words: election.max_register_words.max(run.max_register_words),
        memory_warning: election.memory_warning || run.memory_warning,
        output: BoundaryTest { graph, occurrences, kind, leader, election_ok },
    })
}

/// Chains obtained from cycles (port 0 prev, port 1 next) by dropping the
/// link into every head.
pub fn cut_at(graph: &PortGraph, heads: &[bool]) -> PortGraph {
    let mut g = PortGraph::new();
    for a in 0..graph.len() {
        g.add_agent(graph.ports(a), graph.key(a));
    }
    for a in 0..graph.len() {
        if let Some((b, 0)) = graph.link(a, 1) {
            if !heads[b] {
                g.connect(a, 1, b, 0);
            }
        }
    }
    g
}

impl BoundaryTest {
    /// Boundary cycles cut at their leaders, with key increments for `dir`.
    pub fn carrier(&self, dir: Compass) -> Carrier {
        let chains = cut_at(&self.graph, &self.leader);
        let steps = self
            .occurrences
            .iter()
            .enumerate()
            .map(|(a, o)| match o.entry() {
                Some(d) if !self.leader[a] => dir.step(d.opposite()) as i8,
                _ => 0,
            })
            .collect();
        Carrier { chains, steps }
    }
}

// ---------------------------------------------------------------------------
// Root and prune

/// Euler tour of a forest as a set of chains. Agent `a` of the tree with
/// linked ports `l_0 .. l_{k-1}` has one tour step per port: step `i` arrives
/// via `l_i` and leaves via `l_{i+1}`. At a root the step arriving via the
/// last port is split into a chain end, and the step leaving via `l_0`
/// starts the chain.
#[derive(Debug, Clone)]
pub struct EulerTour {
    pub chains: PortGraph,
    /// Tree agent of each tour step.
    pub owner: Vec<usize>,
    /// Tour step leaving via each (agent, port).
    pub leaving: Vec<Vec<Option<usize>>>,
    /// Tour step arriving via each (agent, port).
    pub arriving: Vec<Vec<Option<usize>>>,
    /// First step of each agent (carries the agent's unit weight).
    pub first: Vec<usize>,
}

pub fn euler_tour(tree: &PortGraph, roots: &[bool]) -> EulerTour {
    let n = tree.len();
    let mut chains = PortGraph::new();
    let mut owner = Vec::new();
    let mut leaving = vec![Vec::new(); n];
    let mut arriving = vec![Vec::new(); n];
    let mut first = vec![0; n];
    let mut ports_of = Vec::with_capacity(n);
    for a in 0..n {
        let ports: Vec<usize> = tree.linked_ports(a).collect();
        leaving[a] = vec![None; tree.ports(a)];
        arriving[a] = vec![None; tree.ports(a)];
        let k = ports.len();
        let steps = if k == 0 { 1 } else { k };
        first[a] = chains.len();
        for i in 0..steps {
            let id = chains.add_agent(2, crate::circuits::mix(tree.key(a) ^ i as u64));
            owner.push(a);
            if k > 0 {
                arriving[a][ports[i]] = Some(id);
                leaving[a][ports[(i + 1) % k]] = Some(id);
            }
        }
        if roots[a] && k > 0 {
            // Separate chain end receiving the last arrival.
            let end = chains.add_agent(2, crate::circuits::mix(tree.key(a) ^ 0xE0D));
            owner.push(a);
            arriving[a][ports[k - 1]] = Some(end);
            // The step that used to arrive via l_{k-1} now only starts.
            first[a] = leaving[a][ports[0]].unwrap();
        }
        ports_of.push(ports);
    }
    for a in 0..n {
        for &p in &ports_of[a] {
            let (b, q) = tree.link(a, p).unwrap();
            let from = leaving[a][p].unwrap();
            let to = arriving[b][q].unwrap();
            chains.connect(from, 1, to, 0);
        }
    }
    EulerTour { chains, owner, leaving, arriving, first }
}

/// Result of root and prune on a forest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootPrune {
    pub survivor: Vec<bool>,
    /// Parent port of each surviving non-root agent.
    pub parent: Vec<Option<usize>>,
    /// Ports leading to surviving children.
    pub children: Vec<Vec<usize>>,
}

/// Root each tree of `tree` at its agent flagged in `root` and prune all
/// subtrees without a member of `q`. Runs PASC along the Euler tour with a
/// unit at the first step of every `q` agent, so only O(log |Q|) bits are
/// streamed. An agent compares, per port, the count after leaving with the
/// count before returning: a child subtree holds members iff the count
/// grows, and the parent port is the one where the order is reversed.
pub fn root_and_prune(tree: &PortGraph, q: &[bool], root: &[bool], seed: u64) -> Result<PrimitiveResult<RootPrune>, SimError> {
    for a in 0..tree.len() {
        if root[a] && !q[a] {
            return Err(SimError::Contract("root must belong to Q".into()));
        }
    }
    for comp in tree.components() {
        if comp.iter().filter(|&&a| root[a]).count() != 1 {
            return Err(SimError::Contract("every tree needs exactly one root".into()));
        }
    }
    let tour = euler_tour(tree, root);
    let steps = tour.chains.len();
    let parent: Vec<Option<usize>> = (0..steps).map(|s| tour.chains.link(s, 0).map(|_| 0)).collect();
    let mut weights = vec![0u8; steps];
    for a in 0..tree.len() {
        if q[a] {
            weights[tour.first[a]] = 1;
        }
    }
    let input = PascInput { parent, weights: vec![weights], broadcast: vec![false; steps], max_bits: None };
    let run = pasc(&tour.chains, &input, seed)?;
    let out = &run.output;
    let mut survivor = vec![false; tree.len()];
    let mut parent = vec![None; tree.len()];
    let mut children = vec![Vec::new(); tree.len()];
    for a in 0..tree.len() {
        survivor[a] = root[a];
        for p in tree.linked_ports(a) {
            let hi = &out.after[tour.leaving[a][p].unwrap()][0];
            let lo = &out.before[tour.arriving[a][p].unwrap()][0];
            match compare_streams(hi, lo) {
                Ordering::Greater if !root[a] => {
                    survivor[a] = true;
                    parent[a] = Some(p);
                }
                Ordering::Less => {
                    survivor[a] = true;
                    children[a].push(p);
                }
                _ => {}
            }
        }
        if !survivor[a] {
            children[a].clear();
        }
    }
    Ok(PrimitiveResult {
        rounds: run.rounds,
        max_register_words: run.max_register_words,
        memory_warning: run.memory_warning,
        output: RootPrune { survivor, parent, children },
    })
}

// ---------------------------------------------------------------------------
// Global maxima

/// Chains carrying a key: `steps[a]` is the key increment from the
/// predecessor of `a` (0 at chain heads). Keys relative to the head are the
/// prefix sums.
#[derive(Debug, Clone)]
pub struct Carrier {
    pub chains: PortGraph,
    pub steps: Vec<i8>,
}

impl Carrier {
    fn parents(&self) -> Vec<Option<usize>> {
        (0..self.chains.len()).map(|a| self.chains.link(a, 0).map(|_| 0)).collect()
    }

    fn signed_streams(&self) -> Vec<Vec<u8>> {
        let pos = self.steps.iter().map(|&s| s.max(0) as u8).collect();
        let neg = self.steps.iter().map(|&s| (-s).max(0) as u8).collect();
        vec![pos, neg]
    }

    /// Build a carrier for chains of grid points walked with direction key
    /// `dir`: `dirs[a]` is the direction from the predecessor to `a`.
    pub fn from_dirs(chains: PortGraph, dirs: &[Option<crate::grid::Direction>], dir: Compass) -> Carrier {
        let steps = dirs.iter().map(|d| d.map_or(0, |d| dir.step(d) as i8)).collect();
        Carrier { chains, steps }
    }
}

/// Width of signed offsets on chains of at most `len` agents.
pub fn offset_width(len: u64) -> u32 {
    log2_ceil(4 * len + 2) + 1
}

/// Sign-adjusted bit `i` (MSB = `width - 1`) of the offset, so that larger
/// offsets compare larger as unsigned numbers.
fn ordered_bit(p: &[bool], n: &[bool], i: u32, width: u32) -> bool {
    let b = difference_bit(p, n, i as usize);
    if i == width - 1 {
        !b
    } else {
        b
    }
}

/// Global maxima of the members on each chain. The offset to the chain head
/// is streamed LSB first by a two-stream PASC, while consensus needs it MSB
/// first, so the offset is recomputed up to bit `i` for every consensus
/// step: O(width²) rounds.
pub fn global_maxima_general(carrier: &Carrier, members: &[bool], width: u32, seed: u64) -> Result<PrimitiveResult<Vec<bool>>, SimError> {
    let n = carrier.chains.len();
    let parent = carrier.parents();
    let weights = carrier.signed_streams();
    let mut cand = members.to_vec();
    let mut rounds = 0;
    let mut words = 0;
    let mut warn = false;
    for i in (0..width).rev() {
        let input = PascInput {
            parent: parent.clone(),
            weights: weights.clone(),
            broadcast: vec![false; n],
            max_bits: Some(i + 1),
        };
        let run = pasc(&carrier.chains, &input, seed ^ u64::from(i))?;
        rounds += run.rounds;
        words = words.max(run.max_register_words);
        let bits: Vec<Vec<bool>> = (0..n)
            .map(|a| {
                let o = &run.output;
                vec![cand[a] && ordered_bit(&o.after[a][0], &o.after[a][1], i, width)]
            })
            .collect();
        let step = consensus(&carrier.chains, &bits, &cand, seed)?;
        rounds += step.rounds;
        warn |= step.memory_warning || run.memory_warning;
        cand = step.output;
    }
    Ok(PrimitiveResult { output: cand, rounds, max_register_words: words, memory_warning: warn })
}

/// Result of the boundary-set global maxima.
#[derive(Debug, Clone)]
pub struct BoundaryMaxima {
    pub flags: Vec<bool>,
    /// Block index of every agent, numbered along each chain.
    pub block_of: Vec<usize>,
    pub block_len: u64,
}

/// Global maxima on chains obtained by splitting boundary cycles at a
/// leader. The chains are cut into blocks of Θ(log n̂) agents, each block
/// computes its maxima with the general algorithm on short offsets, the
/// block maxima store their full offset across their block, and a single
/// MSB-first consensus over the stored offsets finishes in O(log n) rounds.
pub fn global_maxima_boundary(carrier: &Carrier, members: &[bool], n_hat: u64, seed: u64) -> Result<PrimitiveResult<BoundaryMaxima>, SimError> {
    let n = carrier.chains.len();
    let block_len = u64::from(log2_ceil(n_hat).max(1)).next_power_of_two();
    let shift = block_len.trailing_zeros() as usize;
    let parent = carrier.parents();
    let mut rounds = 0;
    let mut words = 0;
    let mut warn = false;

    // Positions along the chains, streamed; a block starts where the low
    // bits vanish.
    let pos = pasc(&carrier.chains, &PascInput::distances(parent.clone()), seed)?;
    rounds += pos.rounds;
    words = words.max(pos.max_register_words);
    let starts: Vec<bool> = (0..n)
        .map(|a| parent[a].is_none() || low_bits_zero(&pos.output.after[a][0], shift))
        .collect();

    let blocks = cut_at(&carrier.chains, &starts);
    let mut block_of = vec![0; n];
    let mut next_block = 0;
    for comp in blocks.components() {
        for a in comp {
            block_of[a] = next_block;
        }
        next_block += 1;
    }
    let block_steps: Vec<i8> = (0..n).map(|a| if starts[a] { 0 } else { carrier.steps[a] }).collect();
    let local = Carrier { chains: blocks, steps: block_steps };
    let local_max = global_maxima_general(&local, members, offset_width(block_len), seed ^ 0xB10C)?;
    rounds += local_max.rounds;
    words = words.max(local_max.max_register_words);
    warn |= local_max.memory_warning;

    // Offsets to the chain head, stored by the block maxima.
    let width = offset_width(6 * n_hat.max(1));
    let full = pasc(
        &carrier.chains,
        &PascInput { parent, weights: carrier.signed_streams(), broadcast: vec![false; n], max_bits: None },
        seed ^ 0xF011,
    )?;
    rounds += full.rounds;
    let stored: Vec<Vec<bool>> = (0..n)
        .map(|a| {
            if !local_max.output[a] {
                return Vec::new();
            }
            let o = &full.output;
            (0..width).rev().map(|i| ordered_bit(&o.after[a][0], &o.after[a][1], i, width)).collect()
        })
        .collect();
    let fin = consensus(&carrier.chains, &stored, &local_max.output, seed ^ 0xF1)?;
    rounds += fin.rounds;
    words = words.max(fin.max_register_words);
    warn |= fin.memory_warning;
    Ok(PrimitiveResult {
        output: BoundaryMaxima { flags: fin.output, block_of, block_len },
        rounds,
        max_register_words: words,
        memory_warning: warn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    use std::collections::{BTreeMap, BTreeSet, VecDeque};

    use rand::SeedableRng;

    use crate::generate::generate_random;
    use crate::grid::{find_holes, GridPoint};
    use crate::oracle::global_maxima_oracle;

    fn random_tree(n: usize, seed: u64) -> PortGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = PortGraph::new();
        let mut used = vec![0usize; n];
        for a in 0..n {
            g.add_agent(n.max(1), a as u64 * 7919 + 1);
        }
        for a in 1..n {
            let b = rng.gen_range(0..a);
            g.connect(a, used[a], b, used[b]);
            used[a] += 1;
            used[b] += 1;
        }
        g
    }

    fn bfs(g: &PortGraph, root: usize) -> (Vec<usize>, Vec<Option<usize>>) {
        let mut depth = vec![usize::MAX; g.len()];
        let mut up = vec![None; g.len()];
        depth[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(a) = queue.pop_front() {
            for p in g.linked_ports(a) {
                let (b, q) = g.link(a, p).unwrap();
                if depth[b] == usize::MAX {
                    depth[b] = depth[a] + 1;
                    up[b] = Some(q);
                    queue.push_back(b);
                }
            }
        }
        (depth, up)
    }

    #[test]
    fn single_leader_per_component() {
        for seed in 0..10 {
            let mut g = PortGraph::path(40, 0);
            g.absorb(&random_tree(30, seed));
            let all = vec![true; g.len()];
            let r = leader_election(&g, &all, 128, seed).unwrap();
            assert_eq!(leaders_per_component(&g, &r.output), vec![1, 1]);
            assert_eq!(r.rounds, 3 * 7 + 1);
        }
    }

    #[test]
    fn pasc_matches_bfs_depths() {
        for seed in 0..6 {
            let g = random_tree(60, seed);
            let (depth, up) = bfs(&g, 0);
            let r = pasc(&g, &PascInput::distances(up), seed).unwrap();
            for a in 0..g.len() {
                assert_eq!(stream_value(&r.output.after[a][0]), depth[a] as u64);
            }
            // O(log depth) bits
            let max = *depth.iter().max().unwrap() as u64;
            assert!(u64::from(r.output.bits) <= u64::from(log2_ceil(max + 1)) + 1);
        }
    }

    #[test]
    fn pasc_weighted_prefix_sums() {
        let g = PortGraph::path(25, 0);
        let parent = (0..25).map(|a| (a > 0).then_some(0)).collect();
        let w: Vec<u8> = (0..25).map(|a| (a * 7 % 3) as u8).collect();
        let input = PascInput { parent, weights: vec![w.clone()], broadcast: vec![false; 25], max_bits: None };
        let r = pasc(&g, &input, 3).unwrap();
        let mut sum = 0;
        for a in 0..25 {
            assert_eq!(stream_value(&r.output.before[a][0]), sum);
            sum += u64::from(w[a]);
            assert_eq!(stream_value(&r.output.after[a][0]), sum);
        }
    }

    #[test]
    fn boundary_test_matches_holes() {
        for (n, holes, seed) in [(1, 0, 1), (2, 0, 2), (80, 2, 3), (300, 5, 4)] {
            let s = generate_random(n, holes, seed);
            let (outer, inner) = find_holes(&s);
            let mut kind_of: BTreeMap<GridPoint, HoleKind> = BTreeMap::new();
            for h in std::iter::once(&outer).chain(inner.iter()) {
                for &c in &h.cells {
                    kind_of.insert(c, h.kind);
                }
            }
            let r = boundary_test(&s, n as u64, seed).unwrap().output;
            assert!(r.election_ok);
            for (i, o) in r.occurrences.iter().enumerate() {
                let expect = kind_of.get(&o.node.neighbor(o.start)).copied().unwrap_or(HoleKind::Outer);
                assert_eq!(r.kind[i], expect, "{o:?}");
            }
        }
    }

    #[test]
    fn root_and_prune_keeps_union_of_paths() {
        for seed in 0..8 {
            let n = 50;
            let g = random_tree(n, 100 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q: Vec<bool> = (0..n).map(|a| a == 5 || rng.gen_bool(0.1)).collect();
            let root: Vec<bool> = (0..n).map(|a| a == 5).collect();
            let r = root_and_prune(&g, &q, &root, seed).unwrap().output;
            let (_, up) = bfs(&g, 5);
            let mut expect = BTreeSet::from([5]);
            for a in (0..n).filter(|&a| q[a]) {
                let mut x = a;
                while expect.insert(x) {
                    let (b, _) = g.link(x, up[x].unwrap()).unwrap();
                    x = b;
                }
            }
            for a in 0..n {
                assert_eq!(r.survivor[a], expect.contains(&a), "agent {a}");
                if r.survivor[a] && a != 5 {
                    assert_eq!(r.parent[a], up[a]);
                }
                for &p in &r.children[a] {
                    let (b, _) = g.link(a, p).unwrap();
                    assert!(expect.contains(&b) && up[b].is_some() && g.link(b, up[b].unwrap()).unwrap().0 == a);
                }
            }
        }
    }

    fn check_maxima(n: usize, holes: usize, seed: u64, blocks: bool) {
        let s = generate_random(n, holes, seed);
        let test = boundary_test(&s, n as u64, seed).unwrap().output;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let members: Vec<bool> = (0..test.occurrences.len()).map(|_| rng.gen_bool(0.3)).collect();
        for dir in Compass::ALL {
            let carrier = test.carrier(dir);
            let flags = if blocks {
                global_maxima_boundary(&carrier, &members, n as u64, seed).unwrap().output.flags
            } else {
                global_maxima_general(&carrier, &members, offset_width(6 * n as u64), seed).unwrap().output
            };
            for comp in carrier.chains.components() {
                let set: BTreeSet<GridPoint> = comp.iter().filter(|&&a| members[a]).map(|&a| test.occurrences[a].node).collect();
                let got: BTreeSet<GridPoint> = comp.iter().filter(|&&a| flags[a]).map(|&a| test.occurrences[a].node).collect();
                assert_eq!(got, global_maxima_oracle(&set, dir), "{dir:?}");
                for &a in &comp {
                    // duplicates at pinches must agree
                    if members[a] {
                        assert_eq!(flags[a], got.contains(&test.occurrences[a].node));
                    } else {
                        assert!(!flags[a]);
                    }
                }
            }
        }
    }

    #[test]
    fn global_maxima_general_matches_oracle() {
        check_maxima(60, 1, 11, false);
    }

    #[test]
    fn global_maxima_boundary_matches_oracle() {
        check_maxima(60, 1, 11, true);
        check_maxima(250, 4, 12, true);
    }

    #[test]
    fn stream_helpers() {
        let five = [true, false, true];
        let six = [false, true, true];
        assert_eq!(stream_value(&five), 5);
        assert_eq!(compare_streams(&five, &six), Ordering::Less);
        assert_eq!(compare_streams(&five, &[true, false, true, false]), Ordering::Equal);
        // 3 - 5 = -2 = ...11110
        let p = [true, true];
        let n = [true, false, true];
        let bits: Vec<bool> = (0..5).map(|i| difference_bit(&p, &n, i)).collect();
        assert_eq!(bits, vec![false, true, true, true, true]);
        assert!(low_bits_zero(&[false, false, true], 2));
        assert_eq!(log2_ceil(1), 0);
        assert_eq!(log2_ceil(2), 1);
        assert_eq!(log2_ceil(5), 3);
        assert_eq!(log2_ceil(8), 3);
    }
}
