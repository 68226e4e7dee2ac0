//! Distributed decomposition on reconfigurable circuits.
//!
//! Every decision of the centralized pipeline (which portals to cut, which
//! nodes to split) is taken here by circuit primitives run on simulated
//! agents. The resulting cuts are enacted with the shared split engine, which
//! stands in for the per-amoebot flag bookkeeping. Independent instances
//! (all regions, all tunnels) run in one simulation as a disjoint union.
//!
//! Agents come in three flavors: region copies of amoebots (one per region
//! the amoebot belongs to, ports are the retained directions), portal chains
//! (amoebots of one portal, head first) and portal-level agents standing for
//! a whole portal, whose ports are the adjacent portals.

use std::collections::{BTreeMap, BTreeSet};

use crate::circuits::{mix, point_key, PortGraph, SimError, SimulationTrace};
use crate::decompose::{
    cut_family, finalize, AxisCase, Decomposition, DecomposeError, HoleSplitNode, MedianSplit, MiddleData,
    MiddlePlan, TunnelCaseData, TunnelPlan,
};
use crate::grid::{AmoebotStructure, Axis, Compass, DirSet, Direction, GridPoint, HoleKind, Side};
use crate::portals::{compute_portals, portal_graph, Portal, PortalGraph};
use crate::primitives::{
    boundary_test, closest_on_portal, degree_check, difference_bit, global_maxima_boundary, leader_election,
    pasc, region_has, root_and_prune, PascInput, PrimitiveResult, RootPrune,
};
use crate::split::{Cut, Region};

#[derive(Debug, thiserror::Error)]
pub enum DistError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error("leader election failed in {0}")]
    Election(String),
}

/// What the amoebots know after the run: for every amoebot, one entry per
/// region copy with the region id and the retained neighbor directions.
pub type Knowledge = BTreeMap<GridPoint, Vec<(u64, DirSet)>>;

#[derive(Debug, Clone)]
pub struct DistributedOutcome {
    pub decomposition: Decomposition,
    pub knowledge: Knowledge,
    pub trace: SimulationTrace,
}

/// Reassemble explicit regions from per-amoebot knowledge.
pub fn reassemble(knowledge: &Knowledge) -> Vec<Region> {
    let mut by_id: BTreeMap<u64, BTreeMap<GridPoint, DirSet>> = BTreeMap::new();
    for (&p, copies) in knowledge {
        for &(id, dirs) in copies {
            by_id.entry(id).or_default().insert(p, dirs);
        }
    }
    by_id.into_iter().map(|(id, adj)| Region::from_dirs(id, adj)).collect()
}

fn knowledge_of(regions: &[Region]) -> Knowledge {
    let mut k: Knowledge = BTreeMap::new();
    for r in regions {
        for p in r.nodes() {
            k.entry(p).or_default().push((r.id, r.dirs(p)));
        }
    }
    k
}

// ---------------------------------------------------------------------------
// Bookkeeping

struct Engine {
    seed: u64,
    n_hat: u64,
    steps: u64,
    trace: SimulationTrace,
}

impl Engine {
    fn next_seed(&mut self) -> u64 {
        self.steps += 1;
        mix(self.seed ^ self.steps.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    fn take<T>(&mut self, step: &str, r: PrimitiveResult<T>) -> T {
        self.trace.record(step, r.rounds);
        if r.memory_warning {
            self.trace.warn(format!("{step}: register use above the constant allowance"));
        }
        r.output
    }

    /// Leader election whose outcome must be unique per component.
    fn elect(&mut self, step: &str, graph: &PortGraph, candidates: &[bool]) -> Result<Vec<bool>, DistError> {
        let seed = self.next_seed();
        let leaders = leader_election(graph, candidates, self.n_hat, seed)?;
        let leaders = self.take(step, leaders);
        for comp in graph.components() {
            let any = comp.iter().any(|&a| candidates[a]);
            let k = comp.iter().filter(|&&a| leaders[a]).count();
            if any && k != 1 {
                return Err(DistError::Election(step.to_string()));
            }
        }
        Ok(leaders)
    }

    fn has(&mut self, step: &str, graph: &PortGraph, set: &[bool]) -> Result<Vec<bool>, DistError> {
        let seed = self.next_seed();
        let r = region_has(graph, set, seed)?;
        Ok(self.take(step, r))
    }

    fn closest(&mut self, step: &str, chains: &Chains, set: &[bool]) -> Result<Vec<bool>, DistError> {
        let seed = self.next_seed();
        let r = closest_on_portal(&chains.graph, set, seed)?;
        Ok(self.take(step, r))
    }
}

// ---------------------------------------------------------------------------
// Agent graphs

/// Region copies of amoebots: one agent per (region, node), ports indexed by
/// direction, links along retained edges.
struct Copies {
    graph: PortGraph,
    agents: Vec<(usize, GridPoint)>,
    index: BTreeMap<(usize, GridPoint), usize>,
}

impl Copies {
    fn new(regions: &[&Region]) -> Copies {
        let mut graph = PortGraph::new();
        let mut agents = Vec::new();
        let mut index = BTreeMap::new();
        for (r, region) in regions.iter().enumerate() {
            for p in region.nodes() {
                let a = graph.add_agent(6, mix(point_key(p) ^ (r as u64) << 40));
                agents.push((r, p));
                index.insert((r, p), a);
            }
        }
        for (r, region) in regions.iter().enumerate() {
            for p in region.nodes() {
                for (d, q) in region.neighbors(p) {
                    if (r, p) < (r, q) {
                        graph.connect(index[&(r, p)], d.index(), index[&(r, q)], d.opposite().index());
                    }
                }
            }
        }
        Copies { graph, agents, index }
    }

    fn flags(&self, f: impl Fn(usize, GridPoint) -> bool) -> Vec<bool> {
        self.agents.iter().map(|&(r, p)| f(r, p)).collect()
    }
}

/// Disjoint chains of amoebots; each chain is a path whose head is its
/// first node (port 0 towards the head).
struct Chains {
    graph: PortGraph,
    /// Chain and node of every agent.
    agents: Vec<(usize, GridPoint)>,
    starts: Vec<usize>,
}

impl Chains {
    fn new(chains: &[Vec<GridPoint>]) -> Chains {
        let mut graph = PortGraph::new();
        let mut agents = Vec::new();
        let mut starts = Vec::new();
        for (c, nodes) in chains.iter().enumerate() {
            starts.push(graph.len());
            let base = mix(c as u64 ^ 0xC4A1);
            graph.absorb(&PortGraph::path(nodes.len(), base));
            agents.extend(nodes.iter().map(|&p| (c, p)));
        }
        Chains { graph, agents, starts }
    }

    fn flags(&self, f: impl Fn(usize, GridPoint) -> bool) -> Vec<bool> {
        self.agents.iter().map(|&(c, p)| f(c, p)).collect()
    }

    /// Per chain, the first flagged node.
    fn picks(&self, flags: &[bool], chains: usize) -> Vec<Option<GridPoint>> {
        let mut out = vec![None; chains];
        for (a, &(c, p)) in self.agents.iter().enumerate() {
            if flags[a] && out[c].is_none() {
                out[c] = Some(p);
            }
        }
        out
    }

    /// Per chain, whether any agent is flagged.
    fn any(&self, flags: &[bool], chains: usize) -> Vec<bool> {
        let mut out = vec![false; chains];
        for (a, &(c, _)) in self.agents.iter().enumerate() {
            out[c] |= flags[a];
        }
        out
    }
}

/// Portal-level agents of several portal graphs; port `i` of a portal leads
/// to its `i`-th neighbor in the adjacency list.
struct Forest {
    graph: PortGraph,
    offset: Vec<usize>,
    agents: Vec<(usize, usize)>,
}

impl Forest {
    fn new(graphs: &[&PortalGraph]) -> Forest {
        let mut graph = PortGraph::new();
        let mut offset = Vec::new();
        let mut agents = Vec::new();
        for (g, pg) in graphs.iter().enumerate() {
            offset.push(graph.len());
            for p in &pg.portals {
                graph.add_agent(pg.adjacency[p.id].len(), mix(point_key(p.first()) ^ (g as u64) << 40 ^ 0xF0));
                agents.push((g, p.id));
            }
        }
        for (g, pg) in graphs.iter().enumerate() {
            for (i, ns) in pg.adjacency.iter().enumerate() {
                for (pi, &j) in ns.iter().enumerate() {
                    if i < j {
                        let pj = pg.adjacency[j].iter().position(|&x| x == i).unwrap();
                        graph.connect(offset[g] + i, pi, offset[g] + j, pj);
                    }
                }
            }
        }
        Forest { graph, offset, agents }
    }

    fn agent(&self, g: usize, portal: usize) -> usize {
        self.offset[g] + portal
    }

    /// Sub-forest induced by the flagged agents, with the map back.
    fn induced(&self, keep: &[bool]) -> (PortGraph, Vec<usize>, Vec<Option<usize>>) {
        let mut graph = PortGraph::new();
        let mut back = Vec::new();
        let mut fwd = vec![None; self.graph.len()];
        for a in 0..self.graph.len() {
            if keep[a] {
                fwd[a] = Some(graph.add_agent(self.graph.ports(a), self.graph.key(a)));
                back.push(a);
            }
        }
        for a in 0..self.graph.len() {
            let Some(x) = fwd[a] else { continue };
            for p in self.graph.linked_ports(a) {
                let (b, q) = self.graph.link(a, p).unwrap();
                if let Some(y) = fwd[b] {
                    if (x, p) < (y, q) {
                        graph.connect(x, p, y, q);
                    }
                }
            }
        }
        (graph, back, fwd)
    }
}

/// Side of `portal` on which the neighbor portal `other` lies.
fn side_towards(portal: &Portal, other: &Portal) -> Side {
    if other.line_index() > portal.line_index() {
        Side::High
    } else {
        Side::Low
    }
}

fn free_on_side(region: &Region, p: GridPoint, axis: Axis, side: Side) -> bool {
    axis.side_dirs(side).iter().any(|d| !region.has_edge(p, d))
}

/// Portal nodes ordered from the westernmost end.
fn from_west(portal: &Portal) -> Vec<GridPoint> {
    let mut nodes = portal.nodes.clone();
    if nodes.first().map(|p| p.west_key()) > nodes.last().map(|p| p.west_key()) {
        nodes.reverse();
    }
    nodes
}

/// Portal nodes ordered from the end at `u`.
fn from_end(portal: &Portal, u: GridPoint) -> Vec<GridPoint> {
    let mut nodes = portal.nodes.clone();
    if nodes.first() != Some(&u) {
        nodes.reverse();
    }
    nodes
}

/// `2k - d` if it lies in {-1, 0, 1}, i.e. `k` is a median position for
/// distance `d`. Computed from bit streams (LSB first) with constant state.
pub fn median_offset(k: &[bool], d: &[bool]) -> Option<i8> {
    let twice: Vec<bool> = std::iter::once(false).chain(k.iter().copied()).collect();
    let width = twice.len().max(d.len()) + 1;
    let bits: Vec<bool> = (0..width).map(|i| difference_bit(&twice, d, i)).collect();
    if bits[1..].iter().all(|b| !b) {
        Some(i8::from(bits[0]))
    } else if bits.iter().all(|&b| b) {
        Some(-1)
    } else {
        None
    }
}

/// Whether removing `u` locally disconnects its neighbors in `set`: the
/// members around `u` form at least two separate runs.
pub fn local_cut(region: &Region, set: &BTreeSet<GridPoint>, u: GridPoint) -> bool {
    let ring: Vec<bool> = Direction::ALL
        .iter()
        .map(|&d| region.has_edge(u, d) && set.contains(&u.neighbor(d)))
        .collect();
    let mut runs = 0;
    for k in 0..6 {
        let prev = Direction::ALL[(k + 5) % 6];
        let joined = ring[(k + 5) % 6] && region.has_edge(u.neighbor(prev), prev.rotate(2));
        if ring[k] && !joined {
            runs += 1;
        }
    }
    runs >= 2
}

// ---------------------------------------------------------------------------
// Phase 1

/// Split nodes of all inner holes from boundary primitives, and the y-cut.
fn dist_phase1(eng: &mut Engine, structure: &AmoebotStructure) -> Result<(Cut, Vec<HoleSplitNode>, usize), DistError> {
    eng.trace.open_phase("simple");
    let seed = eng.next_seed();
    let test = boundary_test(structure, eng.n_hat, seed)?;
    let test = eng.take("boundary test", test);
    if !test.election_ok {
        return Err(DistError::Election("boundary test".into()));
    }
    let inner: Vec<bool> = test.kind.iter().map(|k| *k == HoleKind::Inner).collect();
    let holes = (0..inner.len()).filter(|&a| inner[a] && test.leader[a]).count();
    let cycles = test.graph.components();
    let mut cycle_of = vec![0; inner.len()];
    for (c, comp) in cycles.iter().enumerate() {
        for &a in comp {
            cycle_of[a] = c;
        }
    }

    let mut nodes = Vec::new();
    for (dir, side, prefs) in [
        (Compass::WNW, Side::High, [Direction::E, Direction::SSE]),
        (Compass::ESE, Side::Low, [Direction::W, Direction::NNW]),
    ] {
        let seed = eng.next_seed();
        let first = global_maxima_boundary(&test.carrier(dir), &inner, eng.n_hat, seed)?;
        let first = eng.take(&format!("global maxima {dir:?}"), first).flags;
        let seed = eng.next_seed();
        let tie = global_maxima_boundary(&test.carrier(Compass::NNE), &first, eng.n_hat, seed)?;
        let tie = eng.take("global maxima NNE", tie).flags;
        // Empty directions of each chosen node towards its hole.
        let mut runs: BTreeMap<(usize, GridPoint), Vec<Direction>> = BTreeMap::new();
        for (a, o) in test.occurrences.iter().enumerate() {
            if tie[a] {
                runs.entry((cycle_of[a], o.node)).or_default().extend(o.dirs());
            }
        }
        for ((_, node), dirs) in runs {
            let empty = *prefs.iter().find(|d| dirs.contains(d)).expect("extremal node faces its hole");
            nodes.push(HoleSplitNode { node, side, empty });
        }
    }
    nodes.sort();
    nodes.dedup();

    // Mark the y-portals through split nodes.
    let full = Region::from_structure(structure);
    let portals = compute_portals(&full, Axis::Y);
    let lists: Vec<Vec<GridPoint>> = portals.iter().map(|p| p.nodes.clone()).collect();
    let chains = Chains::new(&lists);
    let split: BTreeSet<GridPoint> = nodes.iter().map(|n| n.node).collect();
    let marked = eng.has("mark y-portals", &chains.graph, &chains.flags(|_, p| split.contains(&p)))?;
    let mut cut = Cut::new(Axis::Y);
    for (a, &(_, p)) in chains.agents.iter().enumerate() {
        if marked[a] {
            cut.portal_nodes.insert(p);
        }
    }
    for n in &nodes {
        cut.add_subsplit(n.node, n.side);
    }
    Ok((cut, nodes, holes))
}

// ---------------------------------------------------------------------------
// Phase 2

/// Y-portals of the given regions as chains (SSW end first), with their
/// portal graphs and a per-portal gate flag learned on the chains.
fn gate_portals(
    eng: &mut Engine,
    regions: &[Region],
    split_y: &BTreeSet<GridPoint>,
) -> Result<(Vec<PortalGraph>, Forest, Chains, Vec<bool>), DistError> {
    let graphs: Vec<PortalGraph> = regions.iter().map(|r| portal_graph(r, Axis::Y)).collect();
    let forest = Forest::new(&graphs.iter().collect::<Vec<_>>());
    let lists: Vec<Vec<GridPoint>> = forest.agents.iter().map(|&(g, i)| graphs[g].portals[i].nodes.clone()).collect();
    let chains = Chains::new(&lists);
    let on_gate = eng.has("gate portals", &chains.graph, &chains.flags(|_, p| split_y.contains(&p)))?;
    let is_gate = chains.any(&on_gate, lists.len());
    Ok((graphs, forest, chains, is_gate))
}

/// Root and prune on every tree of `forest` that holds a member of `q`,
/// rooted at the flagged `root`. Agents of other trees do not survive.
fn prune_forest(eng: &mut Engine, step: &str, forest: &Forest, q: &[bool], root: &[bool]) -> Result<RootPrune, DistError> {
    let n = forest.graph.len();
    let mut keep = vec![false; n];
    for comp in forest.graph.components() {
        if comp.iter().any(|&a| q[a]) {
            for a in comp {
                keep[a] = true;
            }
        }
    }
    let (graph, back, _) = forest.induced(&keep);
    let sub_q: Vec<bool> = back.iter().map(|&a| q[a]).collect();
    let sub_root: Vec<bool> = back.iter().map(|&a| root[a]).collect();
    let seed = eng.next_seed();
    let r = root_and_prune(&graph, &sub_q, &sub_root, seed)?;
    let r = eng.take(step, r);
    let mut out = RootPrune { survivor: vec![false; n], parent: vec![None; n], children: vec![Vec::new(); n] };
    for (x, &a) in back.iter().enumerate() {
        out.survivor[a] = r.survivor[x];
        out.parent[a] = r.parent[x];
        out.children[a] = r.children[x].clone();
    }
    Ok(out)
}

/// Split simple regions into tunnel regions.
fn dist_phase2(
    eng: &mut Engine,
    regions: Vec<Region>,
    split_y: &BTreeSet<GridPoint>,
) -> Result<(Vec<Region>, BTreeSet<GridPoint>), DistError> {
    eng.trace.open_phase("tunnel");
    let (graphs, forest, chains, is_gate) = gate_portals(eng, &regions, split_y)?;
    let leader = eng.elect("gate leader", &forest.graph, &is_gate)?;
    let rp = prune_forest(eng, "root and prune", &forest, &is_gate, &leader)?;

    // Degree of every surviving portal within the pruned tree, counted by
    // contact starts along the portal's amoebots.
    let mut starts = vec![0u8; chains.graph.len()];
    for (c, &(g, i)) in forest.agents.iter().enumerate() {
        if !rp.survivor[c] {
            continue;
        }
        let mut seen = BTreeSet::new();
        for (k, &u) in graphs[g].portals[i].nodes.iter().enumerate() {
            for (d, v) in regions[g].neighbors(u) {
                let j = graphs[g].portal_of(v).unwrap();
                if d.axis() != Axis::Y && rp.survivor[forest.agent(g, j)] && seen.insert(j) {
                    starts[chains.starts[c] + k] += 1;
                }
            }
        }
    }
    let seed = eng.next_seed();
    let deg = degree_check(&chains.graph, &starts, 3, seed)?;
    let deg = eng.take("degree check", deg);
    let high = chains.any(&deg, forest.agents.len());
    let mut cut = Cut::new(Axis::Y);
    let mut pruned = BTreeSet::new();
    for (c, &(g, i)) in forest.agents.iter().enumerate() {
        let nodes = &graphs[g].portals[i].nodes;
        if !rp.survivor[c] {
            pruned.extend(nodes.iter().copied());
        } else if !is_gate[c] && high[c] {
            cut.add_portal(nodes.iter().copied());
        }
    }
    let mut split_y = split_y.clone();
    split_y.extend(cut.portal_nodes.iter().copied());
    let mid = finalize(cut_family(regions, &cut).map_err(DecomposeError::from)?, &split_y);

    // Gate splitting: each gate marks its northernmost amoebot adjacent to
    // every unpruned neighbor portal and splits at all marks but the
    // northernmost one.
    let (graphs, forest, _, is_gate) = gate_portals(eng, &mid, &split_y)?;
    let mut lists = Vec::new();
    let mut sides = Vec::new();
    for (c, &(g, i)) in forest.agents.iter().enumerate() {
        if !is_gate[c] {
            continue;
        }
        let r = &mid[g];
        let gate = &graphs[g].portals[i];
        let mut marks: BTreeMap<usize, (GridPoint, Side)> = BTreeMap::new();
        for &u in &gate.nodes {
            for (d, v) in r.neighbors(u) {
                if d.axis() == Axis::Y || pruned.contains(&v) {
                    continue;
                }
                let side = Axis::Y.side_of(d).unwrap();
                let e = marks.entry(graphs[g].portal_of(v).unwrap()).or_insert((u, side));
                if u.b > e.0.b {
                    *e = (u, side);
                }
            }
        }
        let mut side_of: BTreeMap<GridPoint, Side> = BTreeMap::new();
        for (u, side) in marks.into_values() {
            side_of.entry(u).or_insert(side);
        }
        let mut nodes = gate.nodes.clone();
        nodes.reverse();
        lists.push(nodes);
        sides.push(side_of);
    }
    let chains = Chains::new(&lists);
    let marked = chains.flags(|c, p| sides[c].contains_key(&p));
    let north = eng.closest("northernmost mark", &chains, &marked)?;
    let mut ncut = Cut::new(Axis::Y);
    for (a, &(c, p)) in chains.agents.iter().enumerate() {
        if marked[a] && !north[a] {
            ncut.add_subsplit(p, sides[c][&p]);
        }
    }
    let out = finalize(cut_family(mid, &ncut).map_err(DecomposeError::from)?, &split_y);
    Ok((out, split_y))
}

// ---------------------------------------------------------------------------
// Phase 3

/// A tunnel with two gates; `first` is the elected gate.
struct Job<'a> {
    t: &'a Region,
    first: crate::split::Gate,
    second: crate::split::Gate,
}

impl Engine {
    /// Per chain, whether one of its amoebots is in the set.
    fn portal_any(&mut self, step: &str, chains: &Chains, set: &[bool]) -> Result<Vec<bool>, DistError> {
        let heard = self.has(step, &chains.graph, set)?;
        Ok(chains.any(&heard, chains.starts.len()))
    }
}

/// Case analysis of one axis for all jobs, with the resulting cuts.
fn dist_axis_cases(eng: &mut Engine, jobs: &[Job], axis: Axis) -> Result<Vec<(AxisCase, Cut)>, DistError> {
    let q = axis.name();
    let graphs: Vec<PortalGraph> = jobs.iter().map(|j| portal_graph(j.t, axis)).collect();
    let forest = Forest::new(&graphs.iter().collect::<Vec<_>>());
    let portal = |c: usize| &graphs[forest.agents[c].0].portals[forest.agents[c].1];
    let job_of = |c: usize| forest.agents[c].0;
    let count = forest.agents.len();
    let chains = Chains::new(&(0..count).map(|c| portal(c).nodes.clone()).collect::<Vec<_>>());

    let set = chains.flags(|c, p| jobs[job_of(c)].first.nodes.contains(&p));
    let in_first = eng.portal_any(&format!("{q}-portals meeting G"), &chains, &set)?;
    let set = chains.flags(|c, p| jobs[job_of(c)].second.nodes.contains(&p));
    let in_second = eng.portal_any(&format!("{q}-portals meeting G'"), &chains, &set)?;
    let common: Vec<bool> = (0..count).map(|c| in_first[c] && in_second[c]).collect();
    let copies = Copies::new(&jobs.iter().map(|j| j.t).collect::<Vec<_>>());
    let on_common = copies.flags(|j, p| common[forest.agent(j, graphs[j].portal_of(p).unwrap())]);
    let heard = eng.has(&format!("{q} spanning test"), &copies.graph, &on_common)?;
    let spanning: Vec<bool> = jobs.iter().enumerate().map(|(j, job)| heard[copies.index[&(j, job.first.nodes[0])]]).collect();

    // Case 1: the northernmost and southernmost spanning portals are found
    // along G, then cut with a split at their westernmost free amoebot.
    let ends = |north: bool| -> Vec<Vec<GridPoint>> {
        jobs.iter()
            .map(|j| {
                let mut nodes = j.first.nodes.clone();
                if north {
                    nodes.reverse();
                }
                nodes
            })
            .collect()
    };
    let mut extreme = Vec::new();
    for north in [true, false] {
        let along = Chains::new(&ends(north));
        let set = along.flags(|j, p| spanning[j] && common[forest.agent(j, graphs[j].portal_of(p).unwrap())]);
        let pick = eng.closest(&format!("{q} extreme spanning portal"), &along, &set)?;
        let picks = along.picks(&pick, jobs.len());
        let set = chains.flags(|c, p| picks[job_of(c)] == Some(p));
        extreme.push(eng.portal_any(&format!("{q} extreme portal marks"), &chains, &set)?);
    }
    let west = Chains::new(&(0..count).map(|c| from_west(portal(c))).collect::<Vec<_>>());
    let mut b_extreme = Vec::new();
    for (k, side) in [Side::High, Side::Low].into_iter().enumerate() {
        let set = west.flags(|c, u| {
            let j = &jobs[job_of(c)];
            extreme[k][c] && !j.first.nodes.contains(&u) && !j.second.nodes.contains(&u) && free_on_side(j.t, u, axis, side)
        });
        let pick = eng.closest(&format!("{q} spanning split node"), &west, &set)?;
        b_extreme.push(west.picks(&pick, count));
    }

    // Case 2: root and prune on the portal tree with the portals meeting
    // either gate; the near portal of a gate is its only member with a
    // pruned-tree neighbor outside.
    let north_end: Vec<GridPoint> = jobs.iter().map(|j| *j.first.nodes.last().unwrap()).collect();
    let set = chains.flags(|c, p| !spanning[job_of(c)] && north_end[job_of(c)] == p);
    let root = eng.portal_any(&format!("{q} root portal"), &chains, &set)?;
    let members: Vec<bool> = (0..count).map(|c| !spanning[job_of(c)] && (in_first[c] || in_second[c])).collect();
    let rp = prune_forest(eng, &format!("{q} root and prune"), &forest, &members, &root)?;
    let mut near: Vec<[Option<(usize, Side)>; 2]> = vec![[None, None]; jobs.len()];
    for c in 0..count {
        if !rp.survivor[c] {
            continue;
        }
        for (k, mark) in [&in_first, &in_second].into_iter().enumerate() {
            if !mark[c] {
                continue;
            }
            let ports = rp.parent[c].iter().chain(&rp.children[c]);
            for &p in ports {
                let (o, _) = forest.graph.link(c, p).unwrap();
                if !mark[o] {
                    near[job_of(c)][k] = Some((c, side_towards(portal(c), portal(o))));
                }
            }
        }
    }
    let mut lists = Vec::new();
    let mut owners = Vec::new();
    for (j, job) in jobs.iter().enumerate() {
        for (k, gate) in [&job.first, &job.second].into_iter().enumerate() {
            if let Some((c, side)) = near[j][k] {
                let meet = *portal(c).nodes.iter().find(|u| gate.nodes.contains(u)).unwrap();
                lists.push(from_end(portal(c), meet));
                owners.push((j, k, side));
            }
        }
    }
    let from_gate = Chains::new(&lists);
    let set = from_gate.flags(|c, u| {
        let (j, k, side) = owners[c];
        let gate = if k == 0 { &jobs[j].first } else { &jobs[j].second };
        !gate.nodes.contains(&u) && free_on_side(jobs[j].t, u, axis, side)
    });
    let pick = eng.closest(&format!("{q} near split node"), &from_gate, &set)?;
    let picks = from_gate.picks(&pick, lists.len());
    let mut b_near: Vec<[Option<GridPoint>; 2]> = vec![[None, None]; jobs.len()];
    for (c, &(j, k, _)) in owners.iter().enumerate() {
        b_near[j][k] = picks[c];
    }

    let mut out = Vec::new();
    for (j, _) in jobs.iter().enumerate() {
        let mut cut = Cut::new(axis);
        let chains_of = |flags: &[bool]| (0..count).find(|&c| job_of(c) == j && flags[c]);
        if spanning[j] {
            let north = chains_of(&extreme[0]).expect("spanning portal");
            let south = chains_of(&extreme[1]).expect("spanning portal");
            let (b_north, b_south) = (b_extreme[0][north], b_extreme[1][south]);
            cut.add_portal(portal(north).nodes.iter().copied());
            cut.add_portal(portal(south).nodes.iter().copied());
            if let Some(u) = b_north {
                cut.add_subsplit(u, Side::High);
            }
            if let Some(u) = b_south {
                cut.add_subsplit(u, Side::Low);
            }
            let case = AxisCase::Spanning {
                north: portal(north).nodes.clone(),
                south: portal(south).nodes.clone(),
                b_north,
                b_south,
            };
            out.push((case, cut));
            continue;
        }
        let mut nears = Vec::new();
        for k in 0..2 {
            let (c, side) = near[j][k].ok_or_else(|| DecomposeError::Invariant("gate without a near portal".into()))?;
            cut.add_portal(portal(c).nodes.iter().copied());
            if let Some(u) = b_near[j][k] {
                cut.add_subsplit(u, side);
            }
            nears.push(portal(c).nodes.clone());
        }
        let near_second = nears.pop().unwrap();
        let near_first = nears.pop().unwrap();
        let case = AxisCase::Separate { near_first, near_second, b_first: b_near[j][0], b_second: b_near[j][1] };
        out.push((case, cut));
    }
    Ok(out)
}

/// A middle region of a tunnel with its point gates.
struct Middle {
    job: usize,
    region: Region,
    g: GridPoint,
    g2: GridPoint,
}

/// Point gates of all middle regions. On each side, the closest node of the
/// near x-portal inside the middle region, or of the near z-portal if the
/// x-portal misses it.
fn point_gates(
    eng: &mut Engine,
    jobs: &[Job],
    found: &[(usize, Region)],
    nears: &[[[Vec<GridPoint>; 2]; 2]],
) -> Result<Vec<Middle>, DistError> {
    // One chain per (middle, side, axis), walked from the gate.
    let mut lists = Vec::new();
    for (j, _) in found {
        for side in 0..2 {
            let gate = if side == 0 { &jobs[*j].first } else { &jobs[*j].second };
            for axis in 0..2 {
                let nodes = &nears[*j][axis][side];
                let meet = *nodes.iter().find(|u| gate.nodes.contains(u)).unwrap();
                let mut list = nodes.clone();
                if list[0] != meet {
                    list.reverse();
                }
                lists.push(list);
            }
        }
    }
    let chains = Chains::new(&lists);
    let set = chains.flags(|c, p| found[c / 4].1.contains(p));
    let pick = eng.closest("point gate candidates", &chains, &set)?;
    let picks = chains.picks(&pick, lists.len());
    // The middle region learns on which side an x-candidate exists.
    let copies = Copies::new(&found.iter().map(|(_, m)| m).collect::<Vec<_>>());
    let mut has_x = Vec::new();
    for side in 0..2 {
        let set = copies.flags(|m, p| picks[4 * m + 2 * side] == Some(p));
        has_x.push(eng.has("point gate choice", &copies.graph, &set)?);
    }
    let mut out = Vec::new();
    for (m, (j, region)) in found.iter().enumerate() {
        let a = copies.index[&(m, region.nodes().next().unwrap())];
        let choose = |side: usize| {
            let axis = if has_x[side][a] { 0 } else { 1 };
            picks[4 * m + 2 * side + axis]
        };
        let g = choose(0).ok_or_else(|| DecomposeError::Invariant("no point gate on the first side".into()))?;
        let g2 = choose(1).ok_or_else(|| DecomposeError::Invariant("no point gate on the second side".into()))?;
        out.push(Middle { job: *j, region: region.clone(), g, g2 });
    }
    Ok(out)
}

/// Median cuts of all middle regions.
fn dist_medians(eng: &mut Engine, middles: &[Middle]) -> Result<Vec<(Vec<Cut>, Vec<MedianSplit>)>, DistError> {
    let mut graphs = Vec::new();
    for m in middles {
        for axis in Axis::ALL {
            graphs.push(portal_graph(&m.region, axis));
        }
    }
    let forest = Forest::new(&graphs.iter().collect::<Vec<_>>());
    let count = forest.agents.len();
    let portal = |c: usize| &graphs[forest.agents[c].0].portals[forest.agents[c].1];
    let middle_of = |c: usize| forest.agents[c].0 / 3;
    let chains = Chains::new(&(0..count).map(|c| portal(c).nodes.clone()).collect::<Vec<_>>());
    let set = chains.flags(|c, p| middles[middle_of(c)].g == p);
    let root = eng.portal_any("portal of g", &chains, &set)?;
    let set = chains.flags(|c, p| middles[middle_of(c)].g2 == p);
    let other = eng.portal_any("portal of g'", &chains, &set)?;
    let q: Vec<bool> = (0..count).map(|c| root[c] || other[c]).collect();
    let rp = prune_forest(eng, "root and prune g to g'", &forest, &q, &root)?;

    // Distances along the pruned paths, with the length broadcast by the
    // far end.
    let (path, back, _) = forest.induced(&rp.survivor);
    let input = PascInput {
        parent: back.iter().map(|&c| rp.parent[c]).collect(),
        weights: vec![back.iter().map(|&c| u8::from(rp.parent[c].is_some())).collect()],
        broadcast: back.iter().map(|&c| other[c]).collect(),
        max_bits: None,
    };
    let seed = eng.next_seed();
    let run = pasc(&path, &input, seed)?;
    let dist = eng.take("distances g to g'", run);
    let mut median = vec![false; count];
    let mut length = vec![0usize; graphs.len()];
    for (x, &c) in back.iter().enumerate() {
        length[forest.agents[c].0] = crate::primitives::stream_value(&dist.broadcast[x]) as usize;
        // For odd distances the two candidates are neighbours on the path;
        // the one with the smaller portal index keeps the cut.
        let other = match median_offset(&dist.after[x][0], &dist.broadcast[x]) {
            None => continue,
            Some(0) => {
                median[c] = true;
                continue;
            }
            Some(1) => rp.parent[c],
            Some(_) => rp.children[c].first().copied(),
        };
        let (o, _) = forest.graph.link(c, other.expect("odd-distance candidates are adjacent")).unwrap();
        median[c] = side_towards(portal(c), portal(o)) == Side::High;
    }

    // Shortest-path set and its cut nodes, all local.
    let mut blocking: Vec<BTreeSet<GridPoint>> = Vec::new();
    for (mi, m) in middles.iter().enumerate() {
        let s_m: BTreeSet<GridPoint> = m
            .region
            .nodes()
            .filter(|&u| {
                (0..3).all(|k| {
                    let g = 3 * mi + k;
                    rp.survivor[forest.agent(g, graphs[g].portal_of(u).unwrap())]
                })
            })
            .collect();
        blocking.push(s_m.iter().copied().filter(|&u| local_cut(&m.region, &s_m, u)).collect());
    }

    // Median portals through which the path continues on one side need a
    // split at their westernmost blocking amoebot.
    let mut sides = vec![None; count];
    for c in 0..count {
        if !median[c] || rp.parent[c].is_none() || rp.children[c].is_empty() {
            continue;
        }
        let (up, _) = forest.graph.link(c, rp.parent[c].unwrap()).unwrap();
        let (down, _) = forest.graph.link(c, rp.children[c][0]).unwrap();
        let before = side_towards(portal(c), portal(up));
        if before == side_towards(portal(c), portal(down)) {
            sides[c] = Some(before);
        }
    }
    let west = Chains::new(&(0..count).map(|c| from_west(portal(c))).collect::<Vec<_>>());
    let set = west.flags(|c, u| sides[c].is_some() && blocking[middle_of(c)].contains(&u));
    let pick = eng.closest("median split node", &west, &set)?;
    let picks = west.picks(&pick, count);

    let mut out = Vec::new();
    for (mi, _) in middles.iter().enumerate() {
        let mut cuts = Vec::new();
        let mut info = Vec::new();
        for (k, axis) in Axis::ALL.into_iter().enumerate() {
            let g = 3 * mi + k;
            let d = length[g];
            let mut cut = Cut::new(axis);
            let mut split = MedianSplit { axis, distance: d, portals: Vec::new(), split_nodes: Vec::new() };
            // Exactly one portal on the path sits at position ⌈d/2⌉.
            for c in (0..count).filter(|&c| forest.agents[c].0 == g && median[c]) {
                cut.add_portal(portal(c).nodes.iter().copied());
                split.portals.push(portal(c).nodes.clone());
                if let (Some(side), Some(b)) = (sides[c], picks[c]) {
                    cut.add_subsplit(b, side);
                    split.split_nodes.push(b);
                }
            }
            cuts.push(cut);
            info.push(split);
        }
        out.push((cuts, info));
    }
    Ok(out)
}

/// Split every two-gate tunnel into convex regions.
fn dist_phase3(eng: &mut Engine, tunnels: &[Region]) -> Result<(Vec<Region>, Vec<TunnelCaseData>), DistError> {
    eng.trace.open_phase("convex");
    for t in tunnels {
        if t.gates.len() > 2 {
            return Err(DecomposeError::TooManyGates(t.gates.len()).into());
        }
    }
    // Gate leader election per tunnel; gates of one tunnel share a circuit.
    let mut graph = PortGraph::new();
    let mut gate_agents = Vec::new();
    for (ti, t) in tunnels.iter().enumerate() {
        let k = t.gates.len();
        let start = graph.len();
        if k > 0 {
            graph.absorb(&PortGraph::path(k, mix(ti as u64 ^ 0x6A7E)));
        }
        gate_agents.extend((0..k).map(|g| (ti, g, start + g)));
    }
    let leader = eng.elect("gate leader", &graph, &vec![true; graph.len()])?;
    let copies = Copies::new(&tunnels.iter().collect::<Vec<_>>());
    let mut elected = vec![None; tunnels.len()];
    for &(ti, g, a) in &gate_agents {
        if leader[a] {
            elected[ti] = Some(g);
        }
    }
    let set = copies.flags(|ti, p| {
        elected[ti].is_some_and(|g| tunnels[ti].gates.iter().enumerate().any(|(h, gate)| h != g && gate.nodes.contains(&p)))
    });
    let heard = eng.has("second gate", &copies.graph, &set)?;
    let mut jobs = Vec::new();
    let mut job_of = vec![None; tunnels.len()];
    for (ti, t) in tunnels.iter().enumerate() {
        let two = t.nodes().next().is_some_and(|p| heard[copies.index[&(ti, p)]]);
        if let (true, Some(g)) = (two, elected[ti]) {
            job_of[ti] = Some(jobs.len());
            jobs.push(Job { t, first: t.gates[g].clone(), second: t.gates[1 - g].clone() });
        }
    }

    let xs = dist_axis_cases(eng, &jobs, Axis::X)?;
    let zs = dist_axis_cases(eng, &jobs, Axis::Z)?;

    // Middle regions of tunnels where both axes fall into the separate case.
    let mut families = Vec::new();
    let mut nears = Vec::new();
    let mut sides = Vec::new();
    for (j, job) in jobs.iter().enumerate() {
        let mut family = vec![job.t.clone()];
        for cut in [&xs[j].1, &zs[j].1] {
            family = cut_family(family, cut).map_err(DecomposeError::from)?;
        }
        let near = match (&xs[j].0, &zs[j].0) {
            (
                AxisCase::Separate { near_first: fx, near_second: sx, .. },
                AxisCase::Separate { near_first: fz, near_second: sz, .. },
            ) => Some([[fx.clone(), sx.clone()], [fz.clone(), sz.clone()]]),
            _ => None,
        };
        let (first, second): (BTreeSet<GridPoint>, BTreeSet<GridPoint>) = match &near {
            Some(n) => (n[0][0].iter().chain(&n[1][0]).copied().collect(), n[0][1].iter().chain(&n[1][1]).copied().collect()),
            None => Default::default(),
        };
        families.push(family);
        nears.push(near.unwrap_or_default());
        sides.push((first, second));
    }
    let flat: Vec<(usize, usize)> = families
        .iter()
        .enumerate()
        .flat_map(|(j, f)| (0..f.len()).map(move |i| (j, i)))
        .collect();
    let family_copies = Copies::new(&flat.iter().map(|&(j, i)| &families[j][i]).collect::<Vec<_>>());
    let set = family_copies.flags(|r, p| sides[flat[r].0].0.contains(&p));
    let has_first = eng.has("middle test G", &family_copies.graph, &set)?;
    let set = family_copies.flags(|r, p| sides[flat[r].0].1.contains(&p));
    let has_second = eng.has("middle test G'", &family_copies.graph, &set)?;
    let mut found = Vec::new();
    for (r, &(j, i)) in flat.iter().enumerate() {
        let region = &families[j][i];
        let a = family_copies.index[&(r, region.nodes().next().unwrap())];
        if has_first[a] && has_second[a] {
            found.push((j, region.clone()));
        }
    }
    let middles = point_gates(eng, &jobs, &found, &nears)?;
    let medians = dist_medians(eng, &middles)?;

    let mut plans: Vec<TunnelPlan> = jobs
        .iter()
        .enumerate()
        .map(|(j, _)| TunnelPlan { cuts: vec![xs[j].1.clone(), zs[j].1.clone()], middle: None })
        .collect();
    let mut data: Vec<TunnelCaseData> = jobs
        .iter()
        .enumerate()
        .map(|(j, job)| TunnelCaseData {
            gates: vec![job.first.clone(), job.second.clone()],
            x: xs[j].0.clone(),
            z: zs[j].0.clone(),
            middles: Vec::new(),
        })
        .collect();
    for (j, (first, second)) in sides.iter().enumerate() {
        if !nears[j][0][0].is_empty() {
            plans[j].middle = Some(MiddlePlan { first_side: first.clone(), second_side: second.clone(), cuts: Vec::new() });
        }
    }
    for (m, (cuts, info)) in middles.iter().zip(medians) {
        plans[m.job].middle.as_mut().unwrap().cuts.push(cuts);
        data[m.job].middles.push(MiddleData { nodes: m.region.nodes().collect(), g: m.g, g_prime: m.g2, medians: info });
    }

    let mut regions = Vec::new();
    for (ti, t) in tunnels.iter().enumerate() {
        match job_of[ti] {
            Some(j) => regions.extend(crate::decompose::apply_tunnel_plan(t, &plans[j])?),
            None => regions.push(t.clone()),
        }
    }
    Ok((regions, data))
}

/// Run the distributed pipeline. `n_hat` is the upper bound on the number
/// of amoebots that sizes the leader election and the block length.
pub fn run_distributed(structure: &AmoebotStructure, seed: u64, n_hat: u64) -> Result<DistributedOutcome, (DistError, SimulationTrace)> {
    let mut eng = Engine { seed, n_hat: n_hat.max(structure.len() as u64), steps: 0, trace: SimulationTrace::new(seed, n_hat) };
    match pipeline(&mut eng, structure) {
        Ok(decomposition) => Ok(DistributedOutcome {
            knowledge: knowledge_of(&decomposition.regions),
            decomposition,
            trace: eng.trace,
        }),
        Err(e) => Err((e, eng.trace)),
    }
}

fn pipeline(eng: &mut Engine, structure: &AmoebotStructure) -> Result<Decomposition, DistError> {
    let (cut1, _, holes) = dist_phase1(eng, structure)?;
    let (phase1_regions, split_y) = crate::decompose::phase1_apply(structure, &cut1)?;
    let gates = phase1_regions.iter().flat_map(|r| r.gates.clone()).collect();
    let (phase2_regions, split_y) = dist_phase2(eng, phase1_regions.clone(), &split_y)?;
    let (regions, tunnels) = dist_phase3(eng, &phase2_regions)?;
    Ok(Decomposition {
        regions: finalize(regions, &split_y),
        phase1_regions,
        phase2_regions,
        gates,
        holes,
        tunnels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::{articulation_nodes, decompose};
    use crate::generate::generate_random;
    use crate::grid::{hexagon, parallelogram};

    fn to_bits(mut v: u64) -> Vec<bool> {
        let mut out = Vec::new();
        while v > 0 {
            out.push(v & 1 == 1);
            v >>= 1;
        }
        out
    }

    #[test]
    fn median_offsets() {
        for d in 0..40u64 {
            for k in 0..=d {
                let diff = 2 * k as i64 - d as i64;
                let expect = (diff.abs() <= 1).then_some(diff as i8);
                assert_eq!(median_offset(&to_bits(k), &to_bits(d)), expect, "k {k} d {d}");
            }
        }
    }

    #[test]
    fn local_cut_matches_articulation_on_blobs() {
        let s = AmoebotStructure::new(hexagon(GridPoint::new(0, 0), 3)).unwrap();
        let r = Region::from_structure(&s);
        // A thin zigzag band inside the hexagon.
        let set: BTreeSet<GridPoint> = r.nodes().filter(|p| (p.a + 2 * p.b).rem_euclid(5) < 2).collect();
        let exact = articulation_nodes(&r, &set);
        let local: BTreeSet<GridPoint> = set.iter().copied().filter(|&u| local_cut(&r, &set, u)).collect();
        assert_eq!(local, exact);
    }

    #[test]
    fn single_node() {
        let s = AmoebotStructure::new(vec![GridPoint::new(0, 0)]).unwrap();
        let out = run_distributed(&s, 1, 1).unwrap();
        assert_eq!(out.decomposition.regions.len(), 1);
        assert!(out.trace.total_rounds > 0 && out.trace.total_rounds < 600, "{}", out.trace.total_rounds);
    }

    #[test]
    fn annulus_matches_centralized() {
        let mut pts = hexagon(GridPoint::new(0, 0), 3);
        pts.retain(|p| *p != GridPoint::new(0, 0));
        let s = AmoebotStructure::new(pts).unwrap();
        let central = decompose(&s).unwrap();
        for seed in 0..4 {
            let out = run_distributed(&s, seed, 64).unwrap();
            assert_eq!(out.decomposition.phase1_regions, central.phase1_regions);
            assert_eq!(out.decomposition.shapes(), central.shapes());
            assert_eq!(out.trace.phases.len(), 3);
        }
    }

    #[test]
    fn random_structures_match_centralized() {
        for seed in 0..12 {
            let s = generate_random(150, 1 + seed as usize % 4, seed);
            let central = decompose(&s).unwrap();
            let out = run_distributed(&s, seed, s.len() as u64).unwrap();
            assert_eq!(out.decomposition.phase2_regions, central.phase2_regions, "seed {seed}");
            assert_eq!(out.decomposition.shapes(), central.shapes(), "seed {seed}");
            assert_eq!(out.decomposition.holes, central.holes);
        }
    }

    #[test]
    fn knowledge_reassembles_into_regions() {
        let s = generate_random(120, 2, 5);
        let out = run_distributed(&s, 5, 128).unwrap();
        let back = reassemble(&out.knowledge);
        let mut a: Vec<_> = back.iter().map(Region::shape).collect();
        a.sort();
        assert_eq!(a, out.decomposition.shapes());
        assert!(back.iter().all(Region::is_connected));
    }

    #[test]
    fn hole_free_structure_has_no_splits() {
        let s = AmoebotStructure::new(parallelogram(6, 4)).unwrap();
        let out = run_distributed(&s, 3, 24).unwrap();
        assert_eq!(out.decomposition.regions.len(), 1);
        assert!(out.decomposition.gates.is_empty());
    }

    #[test]
    fn same_seed_same_trace() {
        let s = generate_random(100, 2, 9);
        let a = run_distributed(&s, 42, 100).unwrap().trace;
        let b = run_distributed(&s, 42, 100).unwrap().trace;
        assert_eq!(a, b);
    }
}
